#pragma once

#include <vector>

#include "ksp/types.hpp"

namespace ksp {

enum class FftDirection { forward, inverse };

// Centered orthonormal 2-D DFT: DC at (rows/2, cols/2), unitary scaling.
// forward followed by inverse is the identity.
ComplexImage fft2c(const ComplexImage& img, FftDirection dir);

namespace detail {

// Double-precision in-place kernel behind fft2c; row-major buffer.
void fft2c_inplace(std::vector<cdouble>& buf, int rows, int cols, FftDirection dir);

}  // namespace detail
}  // namespace ksp
