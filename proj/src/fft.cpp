#include "ksp/fft.hpp"

#include <cmath>
#include <cstddef>
#include <stdexcept>

namespace ksp {
namespace {

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// Iterative radix-2 FFT over a power-of-two length. sign = -1 for the
// forward transform, +1 for the unnormalized inverse.
struct Radix2Plan {
  std::size_t n = 1;
  std::vector<std::size_t> rev;
  std::vector<cdouble> twiddle;  // exp(-2*pi*i*k/n), k < n/2

  explicit Radix2Plan(std::size_t len) : n(len) {
    rev.assign(n, 0);
    std::size_t bits = 0;
    while ((std::size_t{1} << bits) < n) ++bits;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t r = 0;
      for (std::size_t b = 0; b < bits; ++b)
        if (i & (std::size_t{1} << b)) r |= std::size_t{1} << (bits - 1 - b);
      rev[i] = r;
    }
    twiddle.resize(n / 2);
    for (std::size_t k = 0; k < n / 2; ++k) {
      const double a = -2.0 * M_PI * static_cast<double>(k) / static_cast<double>(n);
      twiddle[k] = {std::cos(a), std::sin(a)};
    }
  }

  void run(cdouble* x, int sign) const {
    for (std::size_t i = 0; i < n; ++i)
      if (rev[i] > i) std::swap(x[i], x[rev[i]]);
    for (std::size_t len = 2; len <= n; len <<= 1) {
      const std::size_t step = n / len;
      for (std::size_t start = 0; start < n; start += len) {
        for (std::size_t k = 0; k < len / 2; ++k) {
          cdouble w = twiddle[k * step];
          if (sign > 0) w = std::conj(w);
          const cdouble u = x[start + k];
          const cdouble t = w * x[start + k + len / 2];
          x[start + k] = u + t;
          x[start + k + len / 2] = u - t;
        }
      }
    }
  }
};

// Arbitrary-length DFT: radix-2 directly for powers of two, Bluestein's
// chirp-z convolution otherwise.
struct Fft1dPlan {
  std::size_t n;
  bool pow2;
  Radix2Plan base;                // over n (pow2) or over m (Bluestein)
  std::size_t m = 0;              // convolution length
  std::vector<cdouble> chirp;     // exp(-i*pi*j^2/n), forward sign
  std::vector<cdouble> bfft_fwd;  // FFT_m of the chirp kernel, sign -1
  std::vector<cdouble> bfft_inv;  // sign +1

  static std::size_t conv_len(std::size_t n) {
    std::size_t m = 1;
    while (m < 2 * n - 1) m <<= 1;
    return m;
  }

  explicit Fft1dPlan(std::size_t len)
      : n(len), pow2(is_pow2(len)), base(pow2 ? len : conv_len(len)) {
    if (pow2) return;
    m = conv_len(n);
    chirp.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
      // j^2 mod 2n keeps the phase argument small.
      const std::size_t q = (j * j) % (2 * n);
      const double a = -M_PI * static_cast<double>(q) / static_cast<double>(n);
      chirp[j] = {std::cos(a), std::sin(a)};
    }
    bfft_fwd = kernel_fft(-1);
    bfft_inv = kernel_fft(+1);
  }

  std::vector<cdouble> kernel_fft(int sign) const {
    std::vector<cdouble> b(m, cdouble{0.0, 0.0});
    for (std::size_t j = 0; j < n; ++j) {
      const cdouble v = sign < 0 ? std::conj(chirp[j]) : chirp[j];
      b[j] = v;
      if (j != 0) b[m - j] = v;
    }
    base.run(b.data(), -1);
    return b;
  }

  void run(cdouble* x, int sign) const {
    if (n == 1) return;
    if (pow2) {
      base.run(x, sign);
      return;
    }
    const auto& bfft = sign < 0 ? bfft_fwd : bfft_inv;
    std::vector<cdouble> a(m, cdouble{0.0, 0.0});
    for (std::size_t j = 0; j < n; ++j) {
      const cdouble c = sign < 0 ? chirp[j] : std::conj(chirp[j]);
      a[j] = x[j] * c;
    }
    base.run(a.data(), -1);
    for (std::size_t j = 0; j < m; ++j) a[j] *= bfft[j];
    base.run(a.data(), +1);
    const double scale = 1.0 / static_cast<double>(m);
    for (std::size_t k = 0; k < n; ++k) {
      const cdouble c = sign < 0 ? chirp[k] : std::conj(chirp[k]);
      x[k] = a[k] * scale * c;
    }
  }
};

// out[r][c] = in[(r + sr) % rows][(c + sc) % cols]
void rotate2(std::vector<cdouble>& buf, int rows, int cols, int sr, int sc) {
  if (sr == 0 && sc == 0) return;
  std::vector<cdouble> tmp(buf.size());
  for (int r = 0; r < rows; ++r) {
    const int rr = (r + sr) % rows;
    for (int c = 0; c < cols; ++c) {
      const int cc = (c + sc) % cols;
      tmp[static_cast<std::size_t>(r) * cols + c] =
          buf[static_cast<std::size_t>(rr) * cols + cc];
    }
  }
  buf.swap(tmp);
}

}  // namespace

namespace detail {

void fft2c_inplace(std::vector<cdouble>& buf, int rows, int cols, FftDirection dir) {
  if (rows < 1 || cols < 1 ||
      buf.size() != static_cast<std::size_t>(rows) * cols)
    throw std::invalid_argument("fft2c: bad dimensions");
  const int sign = dir == FftDirection::forward ? -1 : +1;

  rotate2(buf, rows, cols, rows / 2, cols / 2);  // ifftshift

  Fft1dPlan row_plan(static_cast<std::size_t>(cols));
  for (int r = 0; r < rows; ++r)
    row_plan.run(buf.data() + static_cast<std::size_t>(r) * cols, sign);

  Fft1dPlan col_plan(static_cast<std::size_t>(rows));
  std::vector<cdouble> col(rows);
  for (int c = 0; c < cols; ++c) {
    for (int r = 0; r < rows; ++r) col[r] = buf[static_cast<std::size_t>(r) * cols + c];
    col_plan.run(col.data(), sign);
    for (int r = 0; r < rows; ++r) buf[static_cast<std::size_t>(r) * cols + c] = col[r];
  }

  const double scale = 1.0 / std::sqrt(static_cast<double>(rows) * cols);
  for (auto& v : buf) v *= scale;

  rotate2(buf, rows, cols, (rows + 1) / 2, (cols + 1) / 2);  // fftshift
}

}  // namespace detail

ComplexImage fft2c(const ComplexImage& img, FftDirection dir) {
  std::vector<cdouble> buf(img.pixels.size());
  for (std::size_t i = 0; i < buf.size(); ++i)
    buf[i] = {img.pixels[i].real(), img.pixels[i].imag()};
  detail::fft2c_inplace(buf, img.rows, img.cols, dir);
  ComplexImage out;
  out.slice_index = img.slice_index;
  out.rows = img.rows;
  out.cols = img.cols;
  out.pixels.resize(buf.size());
  for (std::size_t i = 0; i < buf.size(); ++i)
    out.pixels[i] = {static_cast<float>(buf[i].real()),
                     static_cast<float>(buf[i].imag())};
  return out;
}

}  // namespace ksp
