#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ksp {

using cfloat = std::complex<float>;
using cdouble = std::complex<double>;

// Multi-coil k-space for one 2-D slice. Samples are coil-major, then
// row-major within a coil: data[(coil * num_pe + pe) * num_ro + ro].
struct KSpaceSlice {
  int slice_index = 0;
  int num_coils = 0;
  int num_pe = 0;  // phase-encode lines (rows)
  int num_ro = 0;  // readout samples (columns)
  std::vector<cfloat> data;

  std::size_t index(int coil, int pe, int ro) const {
    return (static_cast<std::size_t>(coil) * num_pe + pe) * num_ro + ro;
  }
  cfloat at(int coil, int pe, int ro) const { return data[index(coil, pe, ro)]; }
};

// Inclusive interval of phase-encode line indices.
struct LineRange {
  int lo = 0;
  int hi = -1;
  int count() const { return hi >= lo ? hi - lo + 1 : 0; }
  bool contains(int i) const { return i >= lo && i <= hi; }
};

// Per-line acquired/skipped pattern with the fully sampled ACS block.
struct SamplingMask {
  int num_pe = 0;
  std::vector<std::uint8_t> acquired;  // one flag per phase-encode line
  std::optional<LineRange> acs;
  double nominal_rate = 1.0;

  bool is_acquired(int line) const { return acquired[line] != 0; }
  int acquired_count() const;
  double achieved_rate() const;
  // "0"/"1" per line, '1' = acquired, for report serialization.
  std::string to_line_string() const;
};

// Normalized complex coil weightings; same layout as KSpaceSlice.
struct CoilSensitivityMaps {
  int num_coils = 0;
  int num_pe = 0;
  int num_ro = 0;
  std::vector<cfloat> data;

  std::size_t index(int coil, int pe, int ro) const {
    return (static_cast<std::size_t>(coil) * num_pe + pe) * num_ro + ro;
  }
};

struct ComplexImage {
  int slice_index = 0;
  int rows = 0;
  int cols = 0;
  std::vector<cfloat> pixels;  // row-major

  std::size_t index(int r, int c) const {
    return static_cast<std::size_t>(r) * cols + c;
  }
};

struct MagnitudeImage {
  int slice_index = 0;
  int rows = 0;
  int cols = 0;
  std::vector<float> pixels;  // row-major, non-negative

  std::size_t index(int r, int c) const {
    return static_cast<std::size_t>(r) * cols + c;
  }
  float max_pixel() const;
};

// nullopt = ok; otherwise names the first violated invariant.
std::optional<std::string> validate_slice(const KSpaceSlice& slice);
std::optional<std::string> validate_mask(const SamplingMask& mask);
std::optional<std::string> validate_maps(const CoilSensitivityMaps& maps);
std::optional<std::string> validate_magnitude(const MagnitudeImage& img);

// Checked constructors: throw std::invalid_argument naming the violation.
KSpaceSlice make_kspace_slice(int slice_index, int num_coils, int num_pe,
                              int num_ro, std::vector<cfloat> data);
MagnitudeImage make_magnitude_image(int slice_index, int rows, int cols,
                                    std::vector<float> pixels);

// Scales so the max pixel becomes 1; all-zero images pass through unchanged.
MagnitudeImage normalize_magnitude(const MagnitudeImage& img);

}  // namespace ksp
