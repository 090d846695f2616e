#include <doctest.h>

#include <cmath>
#include <random>

#include "ksp/fft.hpp"
#include "oracles.hpp"

using namespace ksp;

namespace {

ComplexImage random_image(std::mt19937_64& rng, int rows, int cols) {
  ComplexImage img;
  img.rows = rows;
  img.cols = cols;
  img.pixels.resize(static_cast<std::size_t>(rows) * cols);
  for (auto& p : img.pixels)
    p = cfloat{static_cast<float>((rng() % 2000) / 1000.0 - 1.0),
               static_cast<float>((rng() % 2000) / 1000.0 - 1.0)};
  return img;
}

double norm2(const ComplexImage& img) {
  double e = 0.0;
  for (const auto& p : img.pixels) e += std::norm(std::complex<double>(p));
  return e;
}

}  // namespace

TEST_CASE("fft2c: centered impulse transforms to a flat modulus") {
  ComplexImage img;
  img.rows = 8;
  img.cols = 8;
  img.pixels.assign(64, cfloat{0.0f, 0.0f});
  img.pixels[img.index(4, 4)] = cfloat{1.0f, 0.0f};
  const auto k = fft2c(img, FftDirection::forward);
  for (const auto& p : k.pixels)
    CHECK(std::abs(std::abs(std::complex<double>(p)) - 1.0 / 8.0) < 1e-6);
}

TEST_CASE("fft2c preserves energy (Parseval)") {
  std::mt19937_64 rng(7);
  const auto img = random_image(rng, 16, 16);
  const auto k = fft2c(img, FftDirection::forward);
  const double before = norm2(img);
  const double after = norm2(k);
  CHECK(std::abs(after - before) <= 1e-6 * before);
}

TEST_CASE("fft2c: inverse(forward(x)) = x within 1e-6 relative") {
  std::mt19937_64 rng(8);
  const auto img = random_image(rng, 16, 16);
  const auto back = fft2c(fft2c(img, FftDirection::forward), FftDirection::inverse);
  double err = 0.0;
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    err += std::norm(std::complex<double>(back.pixels[i]) -
                     std::complex<double>(img.pixels[i]));
  CHECK(std::sqrt(err / norm2(img)) < 1e-6);
}

TEST_CASE("fft2c matches the direct-summation oracle on awkward sizes") {
  std::mt19937_64 rng(9);
  for (const auto [rows, cols] :
       {std::pair{7, 5}, std::pair{12, 9}, std::pair{8, 8}, std::pair{1, 6}, std::pair{15, 1}}) {
    const auto img = random_image(rng, rows, cols);
    std::vector<std::complex<double>> x(img.pixels.size());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::complex<double>(img.pixels[i]);
    for (const bool forward : {true, false}) {
      const auto got =
          fft2c(img, forward ? FftDirection::forward : FftDirection::inverse);
      const auto want = ksptest::naive_fft2c(x, rows, cols, forward);
      double err = 0.0, ref = 0.0;
      for (std::size_t i = 0; i < want.size(); ++i) {
        err += std::norm(std::complex<double>(got.pixels[i]) - want[i]);
        ref += std::norm(want[i]);
      }
      CHECK(std::sqrt(err) <= 1e-5 * std::sqrt(ref) + 1e-9);
    }
  }
}
