#pragma once

#include "ksp/types.hpp"

namespace ksp {

// Uniform square window; C1 = (k1*data_range)^2, C2 = (k2*data_range)^2.
struct SsimParams {
  int window = 7;
  double k1 = 0.01;
  double k2 = 0.03;
  double data_range = 1.0;
};

// ||test - ref||^2 / ||ref||^2. Throws undefined_metric_error on a zero
// reference, shape_error on mismatched shapes.
double nmse(const MagnitudeImage& ref, const MagnitudeImage& test);

// Mean SSIM over all fully-interior window positions.
double ssim(const MagnitudeImage& ref, const MagnitudeImage& test, const SsimParams& p);

}  // namespace ksp
