#include <doctest.h>

#include <cmath>
#include <random>

#include "ksp/types.hpp"

using namespace ksp;

namespace {

KSpaceSlice small_slice() {
  KSpaceSlice s;
  s.slice_index = 0;
  s.num_coils = 2;
  s.num_pe = 8;
  s.num_ro = 8;
  s.data.assign(2 * 8 * 8, cfloat{1.0f, -0.5f});
  return s;
}

}  // namespace

TEST_CASE("validate_slice accepts a well-formed slice") {
  CHECK(!validate_slice(small_slice()).has_value());
}

TEST_CASE("validate_slice names a length mismatch") {
  auto s = small_slice();
  s.data.pop_back();
  auto bad = validate_slice(s);
  REQUIRE(bad.has_value());
  CHECK(*bad == "length mismatch");
}

TEST_CASE("validate_slice names a non-finite sample") {
  auto s = small_slice();
  s.data[13] = cfloat{std::nanf(""), 0.0f};
  auto bad = validate_slice(s);
  REQUIRE(bad.has_value());
  CHECK(*bad == "non-finite sample");
}

TEST_CASE("make_kspace_slice enforces the invariants") {
  auto s = small_slice();
  CHECK_NOTHROW(make_kspace_slice(s.slice_index, s.num_coils, s.num_pe, s.num_ro, s.data));
  s.data[0] = cfloat{INFINITY, 0.0f};
  CHECK_THROWS_AS(
      make_kspace_slice(s.slice_index, s.num_coils, s.num_pe, s.num_ro, s.data),
      std::invalid_argument);
}

TEST_CASE("normalize_magnitude scales the max to one") {
  MagnitudeImage img{0, 1, 3, {0.0f, 2.0f, 4.0f}};
  const auto out = normalize_magnitude(img);
  CHECK(out.pixels[0] == 0.0f);
  CHECK(out.pixels[1] == 0.5f);
  CHECK(out.pixels[2] == 1.0f);
}

TEST_CASE("normalize_magnitude leaves the all-zero image unchanged") {
  MagnitudeImage img{0, 2, 2, {0.0f, 0.0f, 0.0f, 0.0f}};
  const auto out = normalize_magnitude(img);
  CHECK(out.pixels == img.pixels);
}

TEST_CASE("normalize_magnitude is exactly idempotent and keeps the argmax") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    MagnitudeImage img{0, 6, 5, {}};
    img.pixels.resize(30);
    for (auto& p : img.pixels)
      p = static_cast<float>((rng() >> 11) * 0x1.0p-53 * 7.5);
    const auto once = normalize_magnitude(img);
    const auto twice = normalize_magnitude(once);
    CHECK(once.pixels == twice.pixels);

    std::size_t argmax_in = 0, argmax_out = 0;
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
      if (img.pixels[i] > img.pixels[argmax_in]) argmax_in = i;
      if (once.pixels[i] > once.pixels[argmax_out]) argmax_out = i;
    }
    CHECK(argmax_in == argmax_out);
  }
}

TEST_CASE("validate_mask rejects unacquired ACS lines") {
  SamplingMask m;
  m.num_pe = 8;
  m.acquired = {1, 1, 0, 1, 1, 0, 1, 0};
  m.acs = LineRange{3, 5};
  m.nominal_rate = 8.0 / 5.0;
  auto bad = validate_mask(m);
  REQUIRE(bad.has_value());
  CHECK(*bad == "acs line not acquired");
}

TEST_CASE("validate_maps enforces the rss bound") {
  CoilSensitivityMaps maps;
  maps.num_coils = 2;
  maps.num_pe = 2;
  maps.num_ro = 2;
  maps.data.assign(8, cfloat{0.8f, 0.0f});
  auto bad = validate_maps(maps);
  REQUIRE(bad.has_value());
  CHECK(*bad == "rss above 1 + 1e-3");
  maps.data.assign(8, cfloat{0.5f, 0.5f});  // rss = 1 per pixel
  CHECK(!validate_maps(maps).has_value());
}
