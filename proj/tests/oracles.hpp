#pragma once

// Independent oracles used by the tests: a direct-summation centered DFT, a
// dense normal-equations solve, and an exhaustive detection-assignment
// optimum. These deliberately share no code with the implementation paths
// they check.

#include <cmath>
#include <complex>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "ksp/detection.hpp"
#include "ksp/types.hpp"

namespace ksptest {

// Centered orthonormal 2-D DFT by direct summation:
// Y[k] = (1/sqrt(RC)) sum_n x[n] exp(s*2*pi*i*(kr-cr)(r-cr)/R + ...), s = -1
// forward, +1 inverse, cr = floor(R/2).
inline std::vector<std::complex<double>> naive_fft2c(
    const std::vector<std::complex<double>>& x, int rows, int cols, bool forward) {
  const double sign = forward ? -1.0 : 1.0;
  const int cr = rows / 2, cc = cols / 2;
  const double scale = 1.0 / std::sqrt(static_cast<double>(rows) * cols);
  std::vector<std::complex<double>> out(x.size());
  for (int kr = 0; kr < rows; ++kr) {
    for (int kc = 0; kc < cols; ++kc) {
      std::complex<double> acc{0.0, 0.0};
      for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
          const double phase =
              sign * 2.0 * M_PI *
              (static_cast<double>(kr - cr) * (r - cr) / rows +
               static_cast<double>(kc - cc) * (c - cc) / cols);
          acc += x[static_cast<std::size_t>(r) * cols + c] *
                 std::complex<double>{std::cos(phase), std::sin(phase)};
        }
      }
      out[static_cast<std::size_t>(kr) * cols + kc] = acc * scale;
    }
  }
  return out;
}

// Dense encoding matrix built from first principles: rows indexed by
// (coil, pe, ro), columns by image pixels; entry = mask(pe) * DFT * sens.
inline Eigen::MatrixXcd dense_encoding_matrix(const ksp::CoilSensitivityMaps& sens,
                                              const ksp::SamplingMask& mask) {
  const int rows = sens.num_pe, cols = sens.num_ro, coils = sens.num_coils;
  const int n = rows * cols;
  const int m = coils * n;
  const int cr = rows / 2, cc = cols / 2;
  const double scale = 1.0 / std::sqrt(static_cast<double>(rows) * cols);
  Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(m, n);
  for (int coil = 0; coil < coils; ++coil) {
    for (int pe = 0; pe < rows; ++pe) {
      if (!mask.is_acquired(pe)) continue;
      for (int ro = 0; ro < cols; ++ro) {
        const int out_row = (coil * rows + pe) * cols + ro;
        for (int r = 0; r < rows; ++r) {
          for (int c = 0; c < cols; ++c) {
            const double phase = -2.0 * M_PI *
                                 (static_cast<double>(pe - cr) * (r - cr) / rows +
                                  static_cast<double>(ro - cc) * (c - cc) / cols);
            const std::complex<double> f{std::cos(phase) * scale, std::sin(phase) * scale};
            const auto s = sens.data[sens.index(coil, r, c)];
            a(out_row, r * cols + c) = f * std::complex<double>{s.real(), s.imag()};
          }
        }
      }
    }
  }
  return a;
}

// Exhaustive maximum-cardinality assignment of detections to ground truths
// with IoU >= threshold.
inline int optimal_assignment_tp(const std::vector<ksp::Detection>& dets,
                                 const std::vector<ksp::GroundTruthAnnotation>& gts,
                                 double threshold) {
  std::vector<bool> used(gts.size(), false);
  std::function<int(std::size_t)> best = [&](std::size_t di) -> int {
    if (di == dets.size()) return 0;
    int top = best(di + 1);  // detection left unmatched
    for (std::size_t j = 0; j < gts.size(); ++j) {
      if (used[j]) continue;
      if (dets[di].slice_index != gts[j].slice_index ||
          dets[di].class_id != gts[j].class_id)
        continue;
      if (ksp::iou(dets[di].box, gts[j].box) < threshold) continue;
      used[j] = true;
      top = std::max(top, 1 + best(di + 1));
      used[j] = false;
    }
    return top;
  };
  return best(0);
}

}  // namespace ksptest
