#include "ksp/types.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ksp {

int SamplingMask::acquired_count() const {
  int n = 0;
  for (auto a : acquired) n += a ? 1 : 0;
  return n;
}

double SamplingMask::achieved_rate() const {
  int n = acquired_count();
  return n > 0 ? static_cast<double>(num_pe) / n : 0.0;
}

std::string SamplingMask::to_line_string() const {
  std::string s(acquired.size(), '0');
  for (std::size_t i = 0; i < acquired.size(); ++i)
    if (acquired[i]) s[i] = '1';
  return s;
}

float MagnitudeImage::max_pixel() const {
  float m = 0.0f;
  for (float p : pixels) m = std::max(m, p);
  return m;
}

std::optional<std::string> validate_slice(const KSpaceSlice& s) {
  if (s.slice_index < 0) return "negative slice_index";
  if (s.num_coils < 1) return "num_coils must be positive";
  if (s.num_pe < 1) return "num_pe must be positive";
  if (s.num_ro < 1) return "num_ro must be positive";
  const auto expect = static_cast<std::size_t>(s.num_coils) * s.num_pe * s.num_ro;
  if (s.data.size() != expect) return "length mismatch";
  for (const auto& v : s.data)
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
      return "non-finite sample";
  return std::nullopt;
}

std::optional<std::string> validate_mask(const SamplingMask& m) {
  if (m.num_pe < 1) return "num_pe must be positive";
  if (m.acquired.size() != static_cast<std::size_t>(m.num_pe))
    return "acquired length mismatch";
  if (m.acquired_count() == 0) return "no line acquired";
  if (m.acs) {
    if (m.acs->lo < 0 || m.acs->hi >= m.num_pe || m.acs->count() == 0)
      return "acs_range out of bounds";
    for (int i = m.acs->lo; i <= m.acs->hi; ++i)
      if (!m.is_acquired(i)) return "acs line not acquired";
  }
  if (m.nominal_rate > 1.0) {
    const double target = m.num_pe / m.nominal_rate;
    if (std::abs(m.acquired_count() - target) > 1.0)
      return "achieved rate not within one line of nominal_rate";
  }
  return std::nullopt;
}

std::optional<std::string> validate_maps(const CoilSensitivityMaps& m) {
  if (m.num_coils < 1 || m.num_pe < 1 || m.num_ro < 1)
    return "dimensions must be positive";
  const auto expect = static_cast<std::size_t>(m.num_coils) * m.num_pe * m.num_ro;
  if (m.data.size() != expect) return "length mismatch";
  for (const auto& v : m.data)
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
      return "non-finite sample";
  const std::size_t plane = static_cast<std::size_t>(m.num_pe) * m.num_ro;
  for (std::size_t p = 0; p < plane; ++p) {
    double ss = 0.0;
    for (int c = 0; c < m.num_coils; ++c) {
      const auto v = m.data[c * plane + p];
      ss += static_cast<double>(v.real()) * v.real() +
            static_cast<double>(v.imag()) * v.imag();
    }
    if (std::sqrt(ss) > 1.0 + 1e-3) return "rss above 1 + 1e-3";
  }
  return std::nullopt;
}

std::optional<std::string> validate_magnitude(const MagnitudeImage& img) {
  if (img.rows < 1 || img.cols < 1) return "dimensions must be positive";
  if (img.pixels.size() != static_cast<std::size_t>(img.rows) * img.cols)
    return "length mismatch";
  for (float p : img.pixels) {
    if (!std::isfinite(p)) return "non-finite pixel";
    if (p < 0.0f) return "negative pixel";
  }
  return std::nullopt;
}

KSpaceSlice make_kspace_slice(int slice_index, int num_coils, int num_pe,
                              int num_ro, std::vector<cfloat> data) {
  KSpaceSlice s{slice_index, num_coils, num_pe, num_ro, std::move(data)};
  if (auto bad = validate_slice(s))
    throw std::invalid_argument("KSpaceSlice: " + *bad);
  return s;
}

MagnitudeImage make_magnitude_image(int slice_index, int rows, int cols,
                                    std::vector<float> pixels) {
  MagnitudeImage img{slice_index, rows, cols, std::move(pixels)};
  if (auto bad = validate_magnitude(img))
    throw std::invalid_argument("MagnitudeImage: " + *bad);
  return img;
}

MagnitudeImage normalize_magnitude(const MagnitudeImage& img) {
  const float m = img.max_pixel();
  if (m <= 0.0f) return img;
  MagnitudeImage out = img;
  // Divide rather than multiply by 1/m so the max lands on exactly 1.0
  // and a second pass is a bit-exact no-op.
  for (float& p : out.pixels) p /= m;
  return out;
}

}  // namespace ksp
