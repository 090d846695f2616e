#include "ksp/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "ksp/errors.hpp"
#include "ksp/rng.hpp"

namespace ksp {

double default_acs_fraction(double nominal_rate) {
  return nominal_rate >= 6.0 ? 0.04 : 0.08;
}

// ACS block centered at floor(num_pe/2); for even counts the extra line
// falls on the low-index side.
static LineRange centered_acs(int num_pe, int acs_count) {
  const int lo = num_pe / 2 - acs_count / 2;
  return LineRange{lo, lo + acs_count - 1};
}

SamplingMask generate_mask(int num_pe, const MaskPolicy& policy) {
  if (num_pe < 4)
    throw policy_error(fmt::format("generate_mask: num_pe >= 4 violated (num_pe={})", num_pe));
  if (!(policy.nominal_rate >= 1.0))
    throw policy_error(fmt::format("generate_mask: nominal_rate >= 1 violated (rate={})",
                                   policy.nominal_rate));
  if (!(policy.acs_fraction > 0.0 && policy.acs_fraction <= 1.0))
    throw policy_error(fmt::format("generate_mask: acs_fraction in (0,1] violated (acs_fraction={})",
                                   policy.acs_fraction));

  const int acs_count = static_cast<int>(std::ceil(policy.acs_fraction * num_pe));
  const int total = static_cast<int>(std::llround(num_pe / policy.nominal_rate));
  const int budget = static_cast<int>(std::floor(num_pe / policy.nominal_rate));
  if (acs_count > budget)
    throw policy_error(fmt::format(
        "generate_mask: ceil(num_pe * acs_fraction) <= floor(num_pe / nominal_rate) "
        "violated ({} > {})",
        acs_count, budget));

  SamplingMask mask;
  mask.num_pe = num_pe;
  mask.acquired.assign(num_pe, 0);
  mask.acs = centered_acs(num_pe, acs_count);
  mask.nominal_rate = policy.nominal_rate;
  for (int i = mask.acs->lo; i <= mask.acs->hi; ++i) mask.acquired[i] = 1;

  std::vector<int> candidates;
  candidates.reserve(num_pe - acs_count);
  for (int i = 0; i < num_pe; ++i)
    if (!mask.acs->contains(i)) candidates.push_back(i);

  // Partial Fisher-Yates: draw (total - acs_count) lines without replacement.
  std::mt19937_64 rng(policy.seed);
  const int remaining = total - acs_count;
  for (int i = 0; i < remaining; ++i) {
    const std::size_t j =
        i + uniform_below(rng, static_cast<std::uint64_t>(candidates.size() - i));
    std::swap(candidates[i], candidates[j]);
    mask.acquired[candidates[i]] = 1;
  }
  return mask;
}

SamplingMask full_mask(int num_pe, double acs_fraction) {
  SamplingMask mask;
  mask.num_pe = num_pe;
  mask.acquired.assign(num_pe, 1);
  const int acs_count =
      std::max(1, static_cast<int>(std::ceil(acs_fraction * num_pe)));
  mask.acs = centered_acs(num_pe, std::min(acs_count, num_pe));
  mask.nominal_rate = 1.0;
  return mask;
}

KSpaceSlice apply_mask(const KSpaceSlice& slice, const SamplingMask& mask) {
  if (mask.num_pe != slice.num_pe)
    throw shape_error(fmt::format("apply_mask: mask num_pe {} != slice num_pe {}",
                                  mask.num_pe, slice.num_pe));
  KSpaceSlice out = slice;
  for (int c = 0; c < slice.num_coils; ++c) {
    for (int pe = 0; pe < slice.num_pe; ++pe) {
      if (mask.is_acquired(pe)) continue;
      const std::size_t base = out.index(c, pe, 0);
      std::fill_n(out.data.begin() + base, slice.num_ro, cfloat{0.0f, 0.0f});
    }
  }
  return out;
}

}  // namespace ksp
