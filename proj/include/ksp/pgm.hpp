#pragma once

#include <string>

#include "ksp/types.hpp"

namespace ksp {

// 16-bit binary PGM (P5, maxval 65535, big-endian samples). Pixels are
// scaled by the image max, which is recorded in a header comment so the
// reader can restore the original range.
void write_pgm16(const std::string& path, const MagnitudeImage& img);
MagnitudeImage read_pgm16(const std::string& path);

}  // namespace ksp
