#include "ksp/recon.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "ksp/errors.hpp"
#include "ksp/fft.hpp"

namespace ksp {
namespace {

void check_shapes(int num_coils, int num_pe, int num_ro,
                  const CoilSensitivityMaps& sens, const SamplingMask& mask,
                  const char* op) {
  if (sens.num_coils != num_coils || sens.num_pe != num_pe || sens.num_ro != num_ro)
    throw shape_error(fmt::format("{}: sensitivity maps {}x{}x{} do not match data {}x{}x{}",
                                  op, sens.num_coils, sens.num_pe, sens.num_ro,
                                  num_coils, num_pe, num_ro));
  if (mask.num_pe != num_pe)
    throw shape_error(fmt::format("{}: mask num_pe {} != data num_pe {}", op,
                                  mask.num_pe, num_pe));
}

using Buf = std::vector<cdouble>;

Buf to_double(const std::vector<cfloat>& src) {
  Buf out(src.size());
  for (std::size_t i = 0; i < src.size(); ++i)
    out[i] = {src[i].real(), src[i].imag()};
  return out;
}

// One coil plane of a coil-major buffer.
cdouble* plane(Buf& buf, int coil, std::size_t plane_size) {
  return buf.data() + static_cast<std::size_t>(coil) * plane_size;
}
const cdouble* plane(const Buf& buf, int coil, std::size_t plane_size) {
  return buf.data() + static_cast<std::size_t>(coil) * plane_size;
}

void zero_skipped_lines(cdouble* coil_plane, const SamplingMask& mask, int num_ro) {
  for (int pe = 0; pe < mask.num_pe; ++pe) {
    if (mask.is_acquired(pe)) continue;
    std::fill_n(coil_plane + static_cast<std::size_t>(pe) * num_ro, num_ro,
                cdouble{0.0, 0.0});
  }
}

// Double-precision A: image -> masked multi-coil k-space.
Buf forward_d(const Buf& x, const Buf& sens, const SamplingMask& mask,
              int num_coils, int num_pe, int num_ro) {
  const std::size_t ps = static_cast<std::size_t>(num_pe) * num_ro;
  Buf out(static_cast<std::size_t>(num_coils) * ps);
  std::vector<cdouble> tmp(ps);
  for (int c = 0; c < num_coils; ++c) {
    const cdouble* s = plane(sens, c, ps);
    for (std::size_t i = 0; i < ps; ++i) tmp[i] = s[i] * x[i];
    detail::fft2c_inplace(tmp, num_pe, num_ro, FftDirection::forward);
    zero_skipped_lines(tmp.data(), mask, num_ro);
    std::copy(tmp.begin(), tmp.end(), plane(out, c, ps));
  }
  return out;
}

// Double-precision A^H: masked multi-coil k-space -> image.
Buf adjoint_d(const Buf& f, const Buf& sens, const SamplingMask& mask,
              int num_coils, int num_pe, int num_ro) {
  const std::size_t ps = static_cast<std::size_t>(num_pe) * num_ro;
  Buf acc(ps, cdouble{0.0, 0.0});
  std::vector<cdouble> tmp(ps);
  for (int c = 0; c < num_coils; ++c) {
    std::copy_n(plane(f, c, ps), ps, tmp.begin());
    zero_skipped_lines(tmp.data(), mask, num_ro);
    detail::fft2c_inplace(tmp, num_pe, num_ro, FftDirection::inverse);
    const cdouble* s = plane(sens, c, ps);
    for (std::size_t i = 0; i < ps; ++i) acc[i] += std::conj(s[i]) * tmp[i];
  }
  return acc;
}

std::vector<cfloat> to_float(const Buf& src) {
  std::vector<cfloat> out(src.size());
  for (std::size_t i = 0; i < src.size(); ++i)
    out[i] = {static_cast<float>(src[i].real()), static_cast<float>(src[i].imag())};
  return out;
}

double dot_real(const Buf& a, const Buf& b) {
  double re = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    re += a[i].real() * b[i].real() + a[i].imag() * b[i].imag();
  return re;
}

bool all_finite(const Buf& a) {
  for (const auto& v : a)
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
  return true;
}

}  // namespace

KSpaceSlice forward_operator(const ComplexImage& x, const CoilSensitivityMaps& sens,
                             const SamplingMask& mask) {
  check_shapes(sens.num_coils, x.rows, x.cols, sens, mask, "forward_operator");
  const Buf xf = to_double(x.pixels);
  const Buf sf = to_double(sens.data);
  Buf out = forward_d(xf, sf, mask, sens.num_coils, x.rows, x.cols);
  KSpaceSlice f;
  f.slice_index = x.slice_index;
  f.num_coils = sens.num_coils;
  f.num_pe = x.rows;
  f.num_ro = x.cols;
  f.data = to_float(out);
  return f;
}

ComplexImage adjoint_operator(const KSpaceSlice& f, const CoilSensitivityMaps& sens,
                              const SamplingMask& mask) {
  check_shapes(f.num_coils, f.num_pe, f.num_ro, sens, mask, "adjoint_operator");
  const Buf ff = to_double(f.data);
  const Buf sf = to_double(sens.data);
  Buf img = adjoint_d(ff, sf, mask, f.num_coils, f.num_pe, f.num_ro);
  ComplexImage out;
  out.slice_index = f.slice_index;
  out.rows = f.num_pe;
  out.cols = f.num_ro;
  out.pixels = to_float(img);
  return out;
}

MagnitudeImage rss_combine(const std::vector<ComplexImage>& coil_images) {
  if (coil_images.empty())
    throw shape_error("rss_combine: empty coil image list");
  const int rows = coil_images.front().rows;
  const int cols = coil_images.front().cols;
  for (const auto& img : coil_images)
    if (img.rows != rows || img.cols != cols)
      throw shape_error("rss_combine: coil image shapes differ");
  MagnitudeImage out;
  out.slice_index = coil_images.front().slice_index;
  out.rows = rows;
  out.cols = cols;
  out.pixels.resize(static_cast<std::size_t>(rows) * cols);
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    double ss = 0.0;
    for (const auto& img : coil_images) {
      const cfloat v = img.pixels[i];
      ss += static_cast<double>(v.real()) * v.real() +
            static_cast<double>(v.imag()) * v.imag();
    }
    out.pixels[i] = static_cast<float>(std::sqrt(ss));
  }
  return out;
}

MagnitudeImage zero_fill_recon(const KSpaceSlice& f, const SamplingMask& mask) {
  if (mask.num_pe != f.num_pe)
    throw shape_error(fmt::format("zero_fill_recon: mask num_pe {} != data num_pe {}",
                                  mask.num_pe, f.num_pe));
  const KSpaceSlice masked = [&] {
    KSpaceSlice m = f;
    for (int c = 0; c < f.num_coils; ++c)
      for (int pe = 0; pe < f.num_pe; ++pe)
        if (!mask.is_acquired(pe))
          std::fill_n(m.data.begin() + m.index(c, pe, 0), f.num_ro, cfloat{0, 0});
    return m;
  }();
  std::vector<ComplexImage> coil_images;
  coil_images.reserve(f.num_coils);
  for (int c = 0; c < f.num_coils; ++c) {
    ComplexImage k;
    k.slice_index = f.slice_index;
    k.rows = f.num_pe;
    k.cols = f.num_ro;
    k.pixels.assign(masked.data.begin() + masked.index(c, 0, 0),
                    masked.data.begin() + masked.index(c, 0, 0) +
                        static_cast<std::size_t>(f.num_pe) * f.num_ro);
    coil_images.push_back(fft2c(k, FftDirection::inverse));
  }
  return rss_combine(coil_images);
}

CoilSensitivityMaps estimate_sensitivities(const KSpaceSlice& f, const SamplingMask& mask) {
  if (mask.num_pe != f.num_pe)
    throw shape_error(fmt::format("estimate_sensitivities: mask num_pe {} != data num_pe {}",
                                  mask.num_pe, f.num_pe));
  if (!mask.acs || mask.acs->count() < 4)
    throw estimation_error(fmt::format("estimate_sensitivities: need >= 4 ACS lines, have {}",
                                       mask.acs ? mask.acs->count() : 0));
  const int acs_lo = mask.acs->lo;
  const int acs_len = mask.acs->count();
  const std::size_t ps = static_cast<std::size_t>(f.num_pe) * f.num_ro;

  // Keep only the ACS block, apodized along phase-encode with a Hann window.
  Buf imgs(static_cast<std::size_t>(f.num_coils) * ps, cdouble{0.0, 0.0});
  std::vector<cdouble> tmp(ps);
  for (int c = 0; c < f.num_coils; ++c) {
    std::fill(tmp.begin(), tmp.end(), cdouble{0.0, 0.0});
    for (int j = 0; j < acs_len; ++j) {
      const int pe = acs_lo + j;
      const double w = 0.5 * (1.0 - std::cos(2.0 * M_PI * j / (acs_len - 1)));
      for (int ro = 0; ro < f.num_ro; ++ro) {
        const cfloat v = f.data[f.index(c, pe, ro)];
        tmp[static_cast<std::size_t>(pe) * f.num_ro + ro] =
            cdouble{v.real(), v.imag()} * w;
      }
    }
    detail::fft2c_inplace(tmp, f.num_pe, f.num_ro, FftDirection::inverse);
    std::copy(tmp.begin(), tmp.end(), plane(imgs, c, ps));
  }

  std::vector<double> rss(ps, 0.0);
  double max_rss = 0.0;
  for (std::size_t i = 0; i < ps; ++i) {
    double ss = 0.0;
    for (int c = 0; c < f.num_coils; ++c) {
      const cdouble v = imgs[c * ps + i];
      ss += v.real() * v.real() + v.imag() * v.imag();
    }
    rss[i] = std::sqrt(ss);
    max_rss = std::max(max_rss, rss[i]);
  }

  CoilSensitivityMaps maps;
  maps.num_coils = f.num_coils;
  maps.num_pe = f.num_pe;
  maps.num_ro = f.num_ro;
  maps.data.assign(imgs.size(), cfloat{0.0f, 0.0f});
  if (max_rss > 0.0) {
    const double eps = 1e-8 * max_rss;
    for (std::size_t i = 0; i < ps; ++i) {
      const double d = rss[i] + eps;
      for (int c = 0; c < f.num_coils; ++c) {
        const cdouble v = imgs[c * ps + i] / d;
        maps.data[c * ps + i] = {static_cast<float>(v.real()),
                                 static_cast<float>(v.imag())};
      }
    }
  }
  return maps;
}

std::pair<ComplexImage, CgTrace> cg_sense(const KSpaceSlice& f, const SamplingMask& mask,
                                          const CoilSensitivityMaps& sens,
                                          const CgConfig& cfg) {
  check_shapes(f.num_coils, f.num_pe, f.num_ro, sens, mask, "cg_sense");
  if (!(cfg.lambda >= 0.0))
    throw parameter_error("cg_sense: lambda must be non-negative");
  if (cfg.max_iters < 1 || cfg.max_iters > 10000)
    throw parameter_error("cg_sense: max_iters must be in [1, 10000]");
  if (!(cfg.rel_tol > 0.0 && cfg.rel_tol < 1.0))
    throw parameter_error("cg_sense: rel_tol must be in (0, 1)");

  const int nc = f.num_coils, npe = f.num_pe, nro = f.num_ro;
  const std::size_t ps = static_cast<std::size_t>(npe) * nro;
  const Buf fd = to_double(f.data);
  const Buf sd = to_double(sens.data);

  auto normal = [&](const Buf& x) {
    Buf k = forward_d(x, sd, mask, nc, npe, nro);
    Buf y = adjoint_d(k, sd, mask, nc, npe, nro);
    if (cfg.lambda > 0.0)
      for (std::size_t i = 0; i < ps; ++i) y[i] += cfg.lambda * x[i];
    return y;
  };

  ComplexImage result;
  result.slice_index = f.slice_index;
  result.rows = npe;
  result.cols = nro;

  Buf b = adjoint_d(fd, sd, mask, nc, npe, nro);
  if (!all_finite(b)) throw divergence_error("cg_sense: non-finite right-hand side", 0);

  CgTrace trace;
  Buf x(ps, cdouble{0.0, 0.0});
  const double b_norm = std::sqrt(dot_real(b, b));
  if (b_norm == 0.0) {
    trace.converged = true;
    result.pixels = to_float(x);
    return {result, trace};
  }

  Buf r = b;
  Buf p = r;
  // The CG residual 2-norm is not monotone iteration to iteration; the
  // solver returns the best iterate seen, and the trace records that
  // iterate's residual, which is non-increasing by construction.
  Buf x_best = x;
  double rel_best = 1.0;
  double rr = dot_real(r, r);
  for (int it = 1; it <= cfg.max_iters; ++it) {
    Buf q = normal(p);
    const double pq = dot_real(p, q);
    const double alpha = rr / pq;
    for (std::size_t i = 0; i < ps; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * q[i];
    }
    const double rr_new = dot_real(r, r);
    const double rel = std::sqrt(rr_new) / b_norm;
    if (!std::isfinite(rel) || !all_finite(x))
      throw divergence_error(
          fmt::format("cg_sense: non-finite values at iteration {}", it), it);
    if (rel < rel_best) {
      rel_best = rel;
      x_best = x;
    }
    trace.residual_norms.push_back(rel_best);
    trace.iterations_run = it;
    if (rel_best < cfg.rel_tol) {
      trace.converged = true;
      break;
    }
    const double beta = rr_new / rr;
    for (std::size_t i = 0; i < ps; ++i) p[i] = r[i] + beta * p[i];
    rr = rr_new;
  }

  result.pixels = to_float(x_best);
  return {result, trace};
}

MagnitudeImage magnitude(const ComplexImage& img) {
  MagnitudeImage out;
  out.slice_index = img.slice_index;
  out.rows = img.rows;
  out.cols = img.cols;
  out.pixels.resize(img.pixels.size());
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    out.pixels[i] = std::abs(img.pixels[i]);
  return out;
}

}  // namespace ksp
