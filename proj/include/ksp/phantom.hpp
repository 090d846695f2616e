#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ksp/detection.hpp"
#include "ksp/types.hpp"

namespace ksp {

// Hyperintense disc rendered on top of the phantom background.
struct Lesion {
  double center_row = 0.0;
  double center_col = 0.0;
  double radius = 3.0;     // pixels, >= 2
  double contrast = 0.35;  // added on top of the local background, in (0,1]
};

struct PhantomSpec {
  int rows = 128;
  int cols = 128;
  int slice_index = 0;
  int num_ellipses = 3;  // internal structures inside the body ellipse
  std::vector<Lesion> lesions;
  double noise_sigma = 0.0;  // complex-Gaussian std relative to center-line max
  std::uint64_t seed = 0;
};

// Deterministic ellipse phantom with lesions rendered as background+contrast
// discs; returns tight boxes around the rendered lesions.
std::pair<MagnitudeImage, std::vector<GroundTruthAnnotation>> generate_phantom(
    const PhantomSpec& spec);

// Smooth Gaussian-profile coil maps on a ring with linear phase ramps,
// normalized so RSS = 1 everywhere.
CoilSensitivityMaps simulate_coil_maps(int num_coils, int rows, int cols);

// forward_operator on the fully sampled grid, complex Gaussian noise on the
// acquired lines, then apply_mask. Deterministic in the seed.
KSpaceSlice simulate_acquisition(const MagnitudeImage& img, const CoilSensitivityMaps& sens,
                                 const SamplingMask& mask, double noise_sigma,
                                 std::uint64_t seed);

struct DatasetSlice {
  KSpaceSlice kspace;
  SamplingMask mask;
};

// The exact wire byte stream: Config, per-line Acquisitions (ACS/last-line
// flags from the mask), Close.
std::vector<std::uint8_t> dataset_bytes(const std::vector<DatasetSlice>& slices,
                                        const std::string& config_text);
void write_dataset(const std::vector<DatasetSlice>& slices, const std::string& config_text,
                   const std::string& path);

// Desk-scale simulation defaults (CLI `simulate`).
struct SimulationConfig {
  int size = 128;
  int num_coils = 8;
  int num_slices = 16;
  int num_lesions = 8;
  double noise_sigma = 0.002;
  std::uint64_t seed = 1;
  int num_ellipses = 3;
  double lesion_radius = 3.0;
  double lesion_contrast = 0.35;
  double acs_fraction = 0.08;  // ACS flags written into the full-mask stream
};

struct SimulatedDataset {
  std::vector<DatasetSlice> slices;
  std::vector<MagnitudeImage> phantoms;  // per-slice ground-truth images
  std::vector<GroundTruthAnnotation> ground_truth;
  std::string config_text;
};

SimulatedDataset simulate_dataset(const SimulationConfig& cfg);

}  // namespace ksp
