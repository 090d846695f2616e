#pragma once

#include <cstdint>

#include "ksp/types.hpp"

namespace ksp {

// Retrospective 1-D line-undersampling policy along phase-encode.
struct MaskPolicy {
  double nominal_rate = 1.0;
  double acs_fraction = 0.08;
  std::uint64_t seed = 0;
};

// Default ACS fraction convention: 0.08 below rate 6, 0.04 at and above.
double default_acs_fraction(double nominal_rate);

// Fully sampled center ACS block plus uniformly random non-ACS lines until
// round(num_pe / nominal_rate) lines are acquired. Deterministic in the seed.
// Throws policy_error naming the violated precondition.
SamplingMask generate_mask(int num_pe, const MaskPolicy& policy);

// A full mask (every line acquired) whose ACS block is the centered
// ceil(acs_fraction * num_pe) lines.
SamplingMask full_mask(int num_pe, double acs_fraction = 0.08);

// Copies acquired lines verbatim and zeroes skipped lines across all coils.
KSpaceSlice apply_mask(const KSpaceSlice& slice, const SamplingMask& mask);

}  // namespace ksp
