#include "ksp/phantom.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>
#include <json.hpp>

#include "ksp/errors.hpp"
#include "ksp/fileio.hpp"
#include "ksp/recon.hpp"
#include "ksp/rng.hpp"
#include "ksp/sampling.hpp"
#include "ksp/wire.hpp"

namespace ksp {
namespace {

constexpr float kBodyIntensity = 0.35f;
// Internal-structure intensities; all within the [0.2, 0.9] background range
// and at most 0.5 so body-background lesions (0.70) stay the brightest.
constexpr float kInnerIntensity[4] = {0.25f, 0.45f, 0.30f, 0.50f};

struct Ellipse {
  double cr, cc;  // center (row, col)
  double sr, sc;  // semi-axes (row, col)
  double angle;   // radians
  float value;

  bool contains(double r, double c) const {
    const double dr = r - cr;
    const double dc = c - cc;
    const double ca = std::cos(angle), sa = std::sin(angle);
    const double ur = ca * dr + sa * dc;
    const double uc = -sa * dr + ca * dc;
    return (ur * ur) / (sr * sr) + (uc * uc) / (sc * sc) <= 1.0;
  }
};

Ellipse body_ellipse(const PhantomSpec& spec) {
  return Ellipse{0.5 * spec.rows, 0.5 * spec.cols, 0.40 * spec.rows, 0.44 * spec.cols,
                 0.12 * std::sin(0.9 * (spec.slice_index + 1)), kBodyIntensity};
}

std::vector<Ellipse> layout_ellipses(const PhantomSpec& spec) {
  std::vector<Ellipse> out;
  out.push_back(body_ellipse(spec));
  for (int k = 0; k < spec.num_ellipses; ++k) {
    const double phi = 2.0 * M_PI * (k + 0.37) / std::max(1, spec.num_ellipses) +
                       0.35 * spec.slice_index;
    Ellipse e;
    e.cr = 0.5 * spec.rows + 0.16 * spec.rows * std::sin(phi);
    e.cc = 0.5 * spec.cols + 0.20 * spec.cols * std::cos(phi);
    e.sr = 0.10 * spec.rows * (1.0 + 0.25 * std::cos(1.7 * phi + spec.slice_index));
    e.sc = 0.12 * spec.cols * (1.0 + 0.25 * std::sin(2.1 * phi));
    e.angle = phi + 0.2 * spec.slice_index;
    e.value = kInnerIntensity[k % 4];
    out.push_back(e);
  }
  return out;
}

// Base phantom without lesions.
MagnitudeImage render_background(const PhantomSpec& spec) {
  MagnitudeImage img;
  img.slice_index = spec.slice_index;
  img.rows = spec.rows;
  img.cols = spec.cols;
  img.pixels.assign(static_cast<std::size_t>(spec.rows) * spec.cols, 0.0f);
  const auto ellipses = layout_ellipses(spec);
  for (int r = 0; r < spec.rows; ++r) {
    for (int c = 0; c < spec.cols; ++c) {
      float v = 0.0f;
      bool in_body = false;
      for (std::size_t k = 0; k < ellipses.size(); ++k) {
        if (!ellipses[k].contains(r, c)) continue;
        if (k == 0) in_body = true;
        v = ellipses[k].value;  // later ellipses paint over earlier ones
      }
      if (in_body) img.pixels[img.index(r, c)] = v;
    }
  }
  return img;
}

}  // namespace

std::pair<MagnitudeImage, std::vector<GroundTruthAnnotation>> generate_phantom(
    const PhantomSpec& spec) {
  if (spec.rows < 8 || spec.cols < 8)
    throw std::invalid_argument("generate_phantom: image must be at least 8x8");
  MagnitudeImage img = render_background(spec);
  const Ellipse body = body_ellipse(spec);

  std::vector<GroundTruthAnnotation> boxes;
  for (const auto& lesion : spec.lesions) {
    if (lesion.radius < 2.0)
      throw std::invalid_argument("generate_phantom: lesion radius must be >= 2 pixels");
    if (!(lesion.contrast > 0.0 && lesion.contrast <= 1.0))
      throw std::invalid_argument("generate_phantom: lesion contrast must be in (0,1]");
    const int r_lo = static_cast<int>(std::floor(lesion.center_row - lesion.radius));
    const int r_hi = static_cast<int>(std::ceil(lesion.center_row + lesion.radius));
    const int c_lo = static_cast<int>(std::floor(lesion.center_col - lesion.radius));
    const int c_hi = static_cast<int>(std::ceil(lesion.center_col + lesion.radius));
    int min_r = spec.rows, max_r = -1, min_c = spec.cols, max_c = -1;
    for (int r = r_lo; r <= r_hi; ++r) {
      for (int c = c_lo; c <= c_hi; ++c) {
        const double dr = r - lesion.center_row;
        const double dc = c - lesion.center_col;
        if (dr * dr + dc * dc > lesion.radius * lesion.radius) continue;
        if (r < 0 || r >= spec.rows || c < 0 || c >= spec.cols || !body.contains(r, c))
          throw std::invalid_argument(
              fmt::format("generate_phantom: lesion at ({}, {}) outside phantom support",
                          lesion.center_row, lesion.center_col));
        img.pixels[img.index(r, c)] += static_cast<float>(lesion.contrast);
        min_r = std::min(min_r, r);
        max_r = std::max(max_r, r);
        min_c = std::min(min_c, c);
        max_c = std::max(max_c, c);
      }
    }
    if (max_r < 0)
      throw std::invalid_argument("generate_phantom: lesion renders no pixels");
    GroundTruthAnnotation gt;
    gt.slice_index = spec.slice_index;
    gt.box = BoundingBox{static_cast<double>(min_c), static_cast<double>(min_r),
                         static_cast<double>(max_c + 1), static_cast<double>(max_r + 1)};
    gt.class_id = 0;
    boxes.push_back(gt);
  }
  return {std::move(img), std::move(boxes)};
}

CoilSensitivityMaps simulate_coil_maps(int num_coils, int rows, int cols) {
  if (num_coils < 1 || rows < 1 || cols < 1)
    throw std::invalid_argument("simulate_coil_maps: dimensions must be positive");
  const std::size_t ps = static_cast<std::size_t>(rows) * cols;
  std::vector<cdouble> raw(static_cast<std::size_t>(num_coils) * ps);
  const double sigma = 0.9 * std::max(rows, cols);
  for (int c = 0; c < num_coils; ++c) {
    const double theta = 2.0 * M_PI * c / num_coils;
    const double center_r = 0.5 * rows + 0.75 * rows * std::sin(theta);
    const double center_c = 0.5 * cols + 0.75 * cols * std::cos(theta);
    const double ramp_r = 0.4 * std::sin(theta + 0.7);
    const double ramp_c = 0.4 * std::cos(theta + 0.3);
    for (int r = 0; r < rows; ++r) {
      for (int cc = 0; cc < cols; ++cc) {
        const double dr = r - center_r;
        const double dc = cc - center_c;
        const double g = std::exp(-(dr * dr + dc * dc) / (2.0 * sigma * sigma));
        const double phase =
            2.0 * M_PI * (ramp_r * r / rows + ramp_c * cc / cols) + 0.5 * theta;
        raw[c * ps + static_cast<std::size_t>(r) * cols + cc] =
            g * cdouble{std::cos(phase), std::sin(phase)};
      }
    }
  }
  CoilSensitivityMaps maps;
  maps.num_coils = num_coils;
  maps.num_pe = rows;
  maps.num_ro = cols;
  maps.data.resize(raw.size());
  for (std::size_t p = 0; p < ps; ++p) {
    double ss = 0.0;
    for (int c = 0; c < num_coils; ++c) {
      const cdouble v = raw[c * ps + p];
      ss += std::norm(v);
    }
    const double rss = std::sqrt(ss);
    for (int c = 0; c < num_coils; ++c) {
      const cdouble v = raw[c * ps + p] / rss;
      maps.data[c * ps + p] = {static_cast<float>(v.real()), static_cast<float>(v.imag())};
    }
  }
  return maps;
}

KSpaceSlice simulate_acquisition(const MagnitudeImage& img, const CoilSensitivityMaps& sens,
                                 const SamplingMask& mask, double noise_sigma,
                                 std::uint64_t seed) {
  if (sens.num_pe != img.rows || sens.num_ro != img.cols)
    throw shape_error(fmt::format("simulate_acquisition: maps {}x{} vs image {}x{}",
                                  sens.num_pe, sens.num_ro, img.rows, img.cols));
  if (mask.num_pe != img.rows)
    throw shape_error(fmt::format("simulate_acquisition: mask num_pe {} vs image rows {}",
                                  mask.num_pe, img.rows));
  ComplexImage x;
  x.slice_index = img.slice_index;
  x.rows = img.rows;
  x.cols = img.cols;
  x.pixels.resize(img.pixels.size());
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    x.pixels[i] = {img.pixels[i], 0.0f};

  SamplingMask full;
  full.num_pe = img.rows;
  full.acquired.assign(img.rows, 1);
  full.nominal_rate = 1.0;
  KSpaceSlice k = forward_operator(x, sens, full);

  if (noise_sigma > 0.0) {
    // Reference scale: max modulus on the fully sampled center line.
    double ref = 0.0;
    const int center = img.rows / 2;
    for (int c = 0; c < k.num_coils; ++c)
      for (int ro = 0; ro < k.num_ro; ++ro)
        ref = std::max(ref, static_cast<double>(std::abs(k.at(c, center, ro))));
    if (ref > 0.0) {
      const double s = noise_sigma * ref / std::sqrt(2.0);  // per real component
      std::mt19937_64 rng(seed);
      for (int pe = 0; pe < mask.num_pe; ++pe) {
        if (!mask.is_acquired(pe)) continue;
        for (int c = 0; c < k.num_coils; ++c) {
          for (int ro = 0; ro < k.num_ro; ++ro) {
            double z0, z1;
            gaussian_pair(rng, z0, z1);
            auto& v = k.data[k.index(c, pe, ro)];
            v = {static_cast<float>(v.real() + s * z0),
                 static_cast<float>(v.imag() + s * z1)};
          }
        }
      }
    }
  }
  return apply_mask(k, mask);
}

std::vector<std::uint8_t> dataset_bytes(const std::vector<DatasetSlice>& slices,
                                        const std::string& config_text) {
  std::vector<std::uint8_t> out;
  auto append = [&out](const GadgetMessage& msg) {
    const auto bytes = encode_message(msg);
    out.insert(out.end(), bytes.begin(), bytes.end());
  };
  append(ConfigMsg{config_text});
  std::uint32_t scan = 1;
  for (const auto& ds : slices) {
    const auto& k = ds.kspace;
    if (ds.mask.num_pe != k.num_pe)
      throw shape_error("dataset_bytes: mask/slice num_pe mismatch");
    std::vector<int> lines;
    for (int pe = 0; pe < ds.mask.num_pe; ++pe)
      if (ds.mask.is_acquired(pe)) lines.push_back(pe);
    for (std::size_t li = 0; li < lines.size(); ++li) {
      const int pe = lines[li];
      AcquisitionMsg m;
      m.scan_counter = scan++;
      m.slice_index = static_cast<std::uint16_t>(k.slice_index);
      m.line_index = static_cast<std::uint16_t>(pe);
      m.num_coils = static_cast<std::uint16_t>(k.num_coils);
      m.flags = 0;
      if (ds.mask.acs && ds.mask.acs->contains(pe)) m.flags |= kFlagAcsLine;
      if (li + 1 == lines.size()) m.flags |= kFlagLastLine;
      m.num_samples = static_cast<std::uint32_t>(k.num_ro);
      m.samples.reserve(static_cast<std::size_t>(k.num_coils) * k.num_ro);
      for (int c = 0; c < k.num_coils; ++c)
        for (int ro = 0; ro < k.num_ro; ++ro)
          m.samples.push_back(k.at(c, pe, ro));
      append(m);
    }
  }
  append(CloseMsg{});
  return out;
}

void write_dataset(const std::vector<DatasetSlice>& slices, const std::string& config_text,
                   const std::string& path) {
  if (slices.empty()) throw std::invalid_argument("write_dataset: no slices");
  write_binary_file(path, dataset_bytes(slices, config_text));
}

SimulatedDataset simulate_dataset(const SimulationConfig& cfg) {
  if (cfg.size < 16) throw std::invalid_argument("simulate_dataset: size must be >= 16");
  if (cfg.num_slices < 1) throw std::invalid_argument("simulate_dataset: need >= 1 slice");
  if (cfg.num_lesions < 0) throw std::invalid_argument("simulate_dataset: negative lesion count");

  std::mt19937_64 rng(cfg.seed);
  std::vector<int> lesions_per_slice(cfg.num_slices, 0);
  for (int i = 0; i < cfg.num_lesions; ++i)
    ++lesions_per_slice[uniform_below(rng, static_cast<std::uint64_t>(cfg.num_slices))];

  const CoilSensitivityMaps maps = simulate_coil_maps(cfg.num_coils, cfg.size, cfg.size);

  SimulatedDataset out;
  for (int s = 0; s < cfg.num_slices; ++s) {
    PhantomSpec spec;
    spec.rows = cfg.size;
    spec.cols = cfg.size;
    spec.slice_index = s;
    spec.num_ellipses = cfg.num_ellipses;
    spec.noise_sigma = cfg.noise_sigma;
    spec.seed = seed_for_slice(cfg.seed, s);

    // Place lesions on the uniform body background, away from structure
    // edges and from each other, so the fully sampled detection is clean.
    // The clearance margin relaxes progressively on crowded small phantoms.
    const MagnitudeImage base = render_background(spec);
    std::vector<std::pair<double, double>> placed;
    for (int li = 0; li < lesions_per_slice[s]; ++li) {
      bool ok = false;
      for (const double margin : {2.0, 1.0, 0.0}) {
        const int reach = static_cast<int>(std::ceil(cfg.lesion_radius + margin));
        for (int attempt = 0; attempt < 400 && !ok; ++attempt) {
          const double r = static_cast<double>(uniform_below(rng, cfg.size));
          const double c = static_cast<double>(uniform_below(rng, cfg.size));
          bool clean = true;
          for (int dr = -reach; dr <= reach && clean; ++dr) {
            for (int dc = -reach; dc <= reach && clean; ++dc) {
              if (dr * dr + dc * dc > reach * reach) continue;
              const int rr = static_cast<int>(r) + dr;
              const int cc = static_cast<int>(c) + dc;
              if (rr < 0 || rr >= cfg.size || cc < 0 || cc >= cfg.size ||
                  base.pixels[base.index(rr, cc)] != kBodyIntensity)
                clean = false;
            }
          }
          for (const auto& p : placed) {
            const double d = std::hypot(p.first - r, p.second - c);
            if (d < 2.0 * (cfg.lesion_radius + margin) + 2.0) clean = false;
          }
          if (clean) {
            spec.lesions.push_back(
                Lesion{r, c, cfg.lesion_radius, cfg.lesion_contrast});
            placed.emplace_back(r, c);
            ok = true;
          }
        }
        if (ok) break;
      }
      if (!ok)
        throw std::runtime_error(
            fmt::format("simulate_dataset: could not place lesion {} on slice {}", li, s));
    }

    auto [phantom, gts] = generate_phantom(spec);
    const SamplingMask mask = full_mask(cfg.size, cfg.acs_fraction);
    DatasetSlice ds;
    ds.kspace = simulate_acquisition(phantom, maps, mask, cfg.noise_sigma, spec.seed);
    ds.mask = mask;
    out.slices.push_back(std::move(ds));
    out.phantoms.push_back(std::move(phantom));
    out.ground_truth.insert(out.ground_truth.end(), gts.begin(), gts.end());
  }

  nlohmann::ordered_json config;
  config["format"] = "kspipe-dataset";
  config["version"] = 1;
  config["num_pe"] = cfg.size;
  config["num_ro"] = cfg.size;
  config["num_coils"] = cfg.num_coils;
  config["num_slices"] = cfg.num_slices;
  config["noise_sigma"] = cfg.noise_sigma;
  config["seed"] = cfg.seed;
  out.config_text = config.dump();
  return out;
}

}  // namespace ksp
