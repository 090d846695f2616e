#include "ksp/metrics.hpp"

#include <cmath>

#include <fmt/format.h>

#include "ksp/errors.hpp"

namespace ksp {

static void check_same_shape(const MagnitudeImage& a, const MagnitudeImage& b,
                             const char* op) {
  if (a.rows != b.rows || a.cols != b.cols)
    throw shape_error(fmt::format("{}: shapes {}x{} vs {}x{} differ", op, a.rows,
                                  a.cols, b.rows, b.cols));
}

double nmse(const MagnitudeImage& ref, const MagnitudeImage& test) {
  check_same_shape(ref, test, "nmse");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < ref.pixels.size(); ++i) {
    const double d = static_cast<double>(test.pixels[i]) - ref.pixels[i];
    num += d * d;
    den += static_cast<double>(ref.pixels[i]) * ref.pixels[i];
  }
  if (den == 0.0) throw undefined_metric_error("nmse: zero reference");
  return num / den;
}

double ssim(const MagnitudeImage& ref, const MagnitudeImage& test, const SsimParams& p) {
  check_same_shape(ref, test, "ssim");
  if (p.window < 1 || p.window % 2 == 0)
    throw parameter_error(fmt::format("ssim: window must be odd positive, got {}", p.window));
  if (p.window > ref.rows || p.window > ref.cols)
    throw parameter_error(fmt::format("ssim: window {} larger than image {}x{}",
                                      p.window, ref.rows, ref.cols));
  if (!(p.data_range > 0.0))
    throw parameter_error("ssim: data_range must be positive");
  if (!(p.k1 > 0.0 && p.k2 > 0.0))
    throw parameter_error("ssim: k1 and k2 must be positive");

  const double c1 = (p.k1 * p.data_range) * (p.k1 * p.data_range);
  const double c2 = (p.k2 * p.data_range) * (p.k2 * p.data_range);
  const int w = p.window;
  const double n = static_cast<double>(w) * w;
  // Unbiased window statistics, matching the public-challenge convention.
  const double cov_norm = n > 1.0 ? n / (n - 1.0) : 1.0;

  double acc = 0.0;
  long count = 0;
  for (int r0 = 0; r0 + w <= ref.rows; ++r0) {
    for (int c0 = 0; c0 + w <= ref.cols; ++c0) {
      double sx = 0.0, sy = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
      for (int r = r0; r < r0 + w; ++r) {
        for (int c = c0; c < c0 + w; ++c) {
          const double x = ref.pixels[ref.index(r, c)];
          const double y = test.pixels[test.index(r, c)];
          sx += x;
          sy += y;
          sxx += x * x;
          syy += y * y;
          sxy += x * y;
        }
      }
      const double ux = sx / n;
      const double uy = sy / n;
      const double vx = cov_norm * (sxx / n - ux * ux);
      const double vy = cov_norm * (syy / n - uy * uy);
      const double vxy = cov_norm * (sxy / n - ux * uy);
      acc += ((2.0 * ux * uy + c1) * (2.0 * vxy + c2)) /
             ((ux * ux + uy * uy + c1) * (vx + vy + c2));
      ++count;
    }
  }
  return acc / static_cast<double>(count);
}

}  // namespace ksp
