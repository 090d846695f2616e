#include <doctest.h>

#include <cmath>
#include <random>

#include "ksp/errors.hpp"
#include "ksp/metrics.hpp"

using namespace ksp;

namespace {

MagnitudeImage constant_image(int rows, int cols, float value) {
  MagnitudeImage img;
  img.rows = rows;
  img.cols = cols;
  img.pixels.assign(static_cast<std::size_t>(rows) * cols, value);
  return img;
}

MagnitudeImage random_image(std::mt19937_64& rng, int rows, int cols) {
  MagnitudeImage img;
  img.rows = rows;
  img.cols = cols;
  img.pixels.resize(static_cast<std::size_t>(rows) * cols);
  for (auto& p : img.pixels) p = static_cast<float>((rng() % 1000) / 1000.0);
  return img;
}

}  // namespace

TEST_CASE("nmse of an image against itself is zero") {
  std::mt19937_64 rng(31);
  const auto img = random_image(rng, 8, 8);
  CHECK(nmse(img, img) == 0.0);
}

TEST_CASE("nmse of a doubled image is one") {
  std::mt19937_64 rng(32);
  auto ref = random_image(rng, 8, 8);
  ref.pixels[0] = 0.5f;  // ensure a nonzero reference
  auto test = ref;
  for (auto& p : test.pixels) p *= 2.0f;
  CHECK(nmse(ref, test) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("nmse matches the double-loop oracle") {
  std::mt19937_64 rng(33);
  const auto ref = random_image(rng, 8, 8);
  const auto test = random_image(rng, 8, 8);
  double num = 0.0, den = 0.0;
  for (int r = 0; r < 8; ++r) {
    for (int c = 0; c < 8; ++c) {
      const double d = static_cast<double>(test.pixels[test.index(r, c)]) -
                       ref.pixels[ref.index(r, c)];
      num += d * d;
      den += static_cast<double>(ref.pixels[ref.index(r, c)]) *
             ref.pixels[ref.index(r, c)];
    }
  }
  CHECK(nmse(ref, test) == doctest::Approx(num / den).epsilon(1e-9));
}

TEST_CASE("nmse rejects a zero reference") {
  const auto zero = constant_image(4, 4, 0.0f);
  const auto test = constant_image(4, 4, 1.0f);
  CHECK_THROWS_AS(nmse(zero, test), undefined_metric_error);
}

TEST_CASE("ssim of an image with itself is one") {
  std::mt19937_64 rng(34);
  const auto img = random_image(rng, 12, 12);
  CHECK(ssim(img, img, SsimParams{7, 0.01, 0.03, 1.0}) ==
        doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("ssim closed form for constant images") {
  // Both variances vanish, so SSIM = (2*0.5 + 1e-4) / (1 + 0.25 + 1e-4).
  const auto ref = constant_image(16, 16, 1.0f);
  const auto test = constant_image(16, 16, 0.5f);
  const double want = 1.0001 / 1.2501;
  CHECK(std::abs(ssim(ref, test, SsimParams{7, 0.01, 0.03, 1.0}) - want) < 1e-9);
}

TEST_CASE("ssim drops strictly below one under noise") {
  std::mt19937_64 rng(35);
  const auto ref = random_image(rng, 16, 16);
  auto noisy = ref;
  for (auto& p : noisy.pixels) p += static_cast<float>((rng() % 100) / 2000.0);
  CHECK(ssim(ref, noisy, SsimParams{7, 0.01, 0.03, 1.0}) < 1.0);
}

TEST_CASE("ssim is symmetric and bounded") {
  std::mt19937_64 rng(36);
  for (int trial = 0; trial < 10; ++trial) {
    const auto a = random_image(rng, 10, 10);
    const auto b = random_image(rng, 10, 10);
    const SsimParams p{7, 0.01, 0.03, 1.0};
    const double ab = ssim(a, b, p);
    const double ba = ssim(b, a, p);
    CHECK(std::abs(ab - ba) < 1e-9);
    CHECK(ab >= -1.0);
    CHECK(ab <= 1.0);
  }
}

TEST_CASE("ssim rejects a window larger than the image") {
  const auto img = constant_image(5, 5, 1.0f);
  CHECK_THROWS_AS(ssim(img, img, SsimParams{7, 0.01, 0.03, 1.0}), parameter_error);
}

TEST_CASE("metrics reject mismatched shapes") {
  const auto a = constant_image(4, 4, 1.0f);
  const auto b = constant_image(4, 5, 1.0f);
  CHECK_THROWS_AS(nmse(a, b), shape_error);
  CHECK_THROWS_AS(ssim(a, b, SsimParams{3, 0.01, 0.03, 1.0}), shape_error);
}
