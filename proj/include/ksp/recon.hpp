#pragma once

#include <utility>
#include <vector>

#include "ksp/types.hpp"

namespace ksp {

// Tikhonov-regularized least-squares solver settings: minimizes
// ||f - A x||^2 + lambda ||x||^2 by conjugate gradient on the normal
// equations, starting from x0 = 0.
struct CgConfig {
  double lambda = 0.01;
  int max_iters = 50;
  double rel_tol = 1e-6;
};

struct CgTrace {
  // Residual of the best iterate so far, one entry per iteration, relative
  // to ||r0||; non-increasing by construction.
  std::vector<double> residual_norms;
  int iterations_run = 0;
  bool converged = false;
};

// Per coil c: mask * fft2c_forward(sens_c * x); skipped lines exactly zero.
KSpaceSlice forward_operator(const ComplexImage& x, const CoilSensitivityMaps& sens,
                             const SamplingMask& mask);

// sum_c conj(sens_c) * fft2c_inverse(mask * f_c)
ComplexImage adjoint_operator(const KSpaceSlice& f, const CoilSensitivityMaps& sens,
                              const SamplingMask& mask);

// Per pixel sqrt(sum_c |pixel_c|^2).
MagnitudeImage rss_combine(const std::vector<ComplexImage>& coil_images);

// Coil-wise inverse transform of the masked data followed by RSS.
MagnitudeImage zero_fill_recon(const KSpaceSlice& f, const SamplingMask& mask);

// Hann-apodized ACS low-resolution maps normalized by RSS (+ eps).
// Requires at least 4 ACS lines.
CoilSensitivityMaps estimate_sensitivities(const KSpaceSlice& f, const SamplingMask& mask);

// CG on (A^H A + lambda I) x = A^H f. Throws divergence_error with the
// iteration index if non-finite values appear mid-solve.
std::pair<ComplexImage, CgTrace> cg_sense(const KSpaceSlice& f, const SamplingMask& mask,
                                          const CoilSensitivityMaps& sens,
                                          const CgConfig& cfg);

// Magnitude of a complex image.
MagnitudeImage magnitude(const ComplexImage& img);

}  // namespace ksp
