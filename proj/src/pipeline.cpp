#include "ksp/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include <fmt/format.h>
#include <json.hpp>

#include "ksp/errors.hpp"
#include "ksp/fileio.hpp"
#include "ksp/log.hpp"
#include "ksp/metrics.hpp"
#include "ksp/pgm.hpp"
#include "ksp/rng.hpp"
#include "ksp/sampling.hpp"

namespace ksp {

// ---- configuration ---------------------------------------------------------

namespace {

using njson = nlohmann::ordered_json;

void check_keys(const njson& obj, std::initializer_list<const char*> allowed,
                const std::string& ctx) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::none_of(allowed.begin(), allowed.end(),
                     [&](const char* k) { return it.key() == k; }))
      throw config_error(fmt::format("{}: unknown key '{}'", ctx, it.key()));
  }
}

njson parse_json(const std::string& text, const char* what) {
  try {
    return njson::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw config_error(fmt::format("{}: {}", what, e.what()));
  }
}

}  // namespace

ChainConfig ChainConfig::from_json_text(const std::string& text) {
  const njson doc = parse_json(text, "chain config");
  if (!doc.is_object()) throw config_error("chain config: top level must be an object");
  check_keys(doc, {"gadgets", "queue_capacity"}, "chain config");
  ChainConfig cfg;
  cfg.queue_capacity = doc.value("queue_capacity", 64);
  if (!doc.contains("gadgets") || !doc["gadgets"].is_array())
    throw config_error("chain config: missing 'gadgets' list");
  for (const auto& g : doc["gadgets"]) {
    if (!g.is_object() || !g.contains("kind"))
      throw config_error("chain config: each gadget needs a 'kind'");
    GadgetCfg gc;
    gc.kind = g["kind"].get<std::string>();
    if (gc.kind == "accumulate") {
      check_keys(g, {"kind"}, "accumulate gadget");
    } else if (gc.kind == "recon") {
      check_keys(g, {"kind", "method", "lambda", "max_iters", "rel_tol", "mask", "images_dir"},
                 "recon gadget");
      gc.recon.method = g.value("method", std::string{"zero_fill"});
      gc.recon.cg.lambda = g.value("lambda", 0.01);
      gc.recon.cg.max_iters = g.value("max_iters", 50);
      gc.recon.cg.rel_tol = g.value("rel_tol", 1e-6);
      gc.recon.images_dir = g.value("images_dir", std::string{});
      if (g.contains("mask")) {
        const auto& m = g["mask"];
        check_keys(m, {"source", "rate", "acs_fraction", "seed", "per_slice_seed"},
                   "recon mask");
        gc.recon.mask.source = m.value("source", std::string{"stream"});
        gc.recon.mask.rate = m.value("rate", 1.0);
        if (m.contains("acs_fraction"))
          gc.recon.mask.acs_fraction = m["acs_fraction"].get<double>();
        gc.recon.mask.seed = m.value("seed", std::uint64_t{0});
        gc.recon.mask.per_slice_seed = m.value("per_slice_seed", true);
      }
    } else if (gc.kind == "detect") {
      check_keys(g,
                 {"kind", "method", "intensity_threshold", "min_area",
                  "confidence_threshold", "detections"},
                 "detect gadget");
      gc.detect.method = g.value("method", std::string{"blob"});
      gc.detect.intensity_threshold = g.value("intensity_threshold", 0.8);
      gc.detect.min_area = g.value("min_area", 4);
      gc.detect.confidence_threshold = g.value("confidence_threshold", 0.0);
      gc.detect.detections_path = g.value("detections", std::string{});
    } else if (gc.kind == "report") {
      check_keys(g, {"kind", "ground_truth", "iou_threshold", "ssim", "group_pair"},
                 "report gadget");
      gc.report.ground_truth_path = g.value("ground_truth", std::string{});
      gc.report.iou_threshold = g.value("iou_threshold", 0.5);
      gc.report.group_pair = g.value("group_pair", std::string{"tp_fn"});
      if (g.contains("ssim")) {
        const auto& s = g["ssim"];
        check_keys(s, {"window", "k1", "k2"}, "report ssim");
        gc.report.ssim_window = s.value("window", 7);
        gc.report.ssim_k1 = s.value("k1", 0.01);
        gc.report.ssim_k2 = s.value("k2", 0.03);
      }
    } else {
      throw config_error(fmt::format("chain config: unknown gadget kind '{}'", gc.kind));
    }
    cfg.gadgets.push_back(std::move(gc));
  }
  cfg.validate();
  return cfg;
}

ChainConfig ChainConfig::from_file(const std::string& path) {
  return from_json_text(read_text_file(path));
}

std::string ChainConfig::to_json_text() const {
  njson doc;
  doc["queue_capacity"] = queue_capacity;
  doc["gadgets"] = njson::array();
  for (const auto& g : gadgets) {
    njson j;
    j["kind"] = g.kind;
    if (g.kind == "recon") {
      j["method"] = g.recon.method;
      j["lambda"] = g.recon.cg.lambda;
      j["max_iters"] = g.recon.cg.max_iters;
      j["rel_tol"] = g.recon.cg.rel_tol;
      njson m;
      m["source"] = g.recon.mask.source;
      m["rate"] = g.recon.mask.rate;
      if (g.recon.mask.acs_fraction) m["acs_fraction"] = *g.recon.mask.acs_fraction;
      m["seed"] = g.recon.mask.seed;
      m["per_slice_seed"] = g.recon.mask.per_slice_seed;
      j["mask"] = std::move(m);
      if (!g.recon.images_dir.empty()) j["images_dir"] = g.recon.images_dir;
    } else if (g.kind == "detect") {
      j["method"] = g.detect.method;
      j["intensity_threshold"] = g.detect.intensity_threshold;
      j["min_area"] = g.detect.min_area;
      j["confidence_threshold"] = g.detect.confidence_threshold;
      if (!g.detect.detections_path.empty()) j["detections"] = g.detect.detections_path;
    } else if (g.kind == "report") {
      if (!g.report.ground_truth_path.empty())
        j["ground_truth"] = g.report.ground_truth_path;
      j["iou_threshold"] = g.report.iou_threshold;
      j["ssim"] = {{"window", g.report.ssim_window},
                   {"k1", g.report.ssim_k1},
                   {"k2", g.report.ssim_k2}};
      j["group_pair"] = g.report.group_pair;
    }
    doc["gadgets"].push_back(std::move(j));
  }
  return doc.dump(2) + "\n";
}

void ChainConfig::validate() const {
  if (queue_capacity < 1) throw config_error("chain config: queue_capacity must be >= 1");
  if (gadgets.empty()) throw config_error("chain config: empty gadget list");
  int n_acc = 0, n_recon = 0, n_detect = 0, n_report = 0;
  int recon_at = -1, detect_at = -1;
  for (std::size_t i = 0; i < gadgets.size(); ++i) {
    const auto& kind = gadgets[i].kind;
    if (kind == "accumulate") ++n_acc;
    else if (kind == "recon") { ++n_recon; recon_at = static_cast<int>(i); }
    else if (kind == "detect") { ++n_detect; detect_at = static_cast<int>(i); }
    else if (kind == "report") ++n_report;
    else throw config_error(fmt::format("chain config: unknown gadget kind '{}'", kind));
  }
  if (n_acc != 1 || gadgets.front().kind != "accumulate")
    throw config_error("chain config: exactly one accumulate gadget must come first");
  if (n_report != 1 || gadgets.back().kind != "report")
    throw config_error("chain config: exactly one report gadget must come last");
  if (n_recon > 1) throw config_error("chain config: at most one recon gadget");
  if (n_detect > 1) throw config_error("chain config: at most one detect gadget");
  if (n_detect == 1 && n_recon == 0)
    throw config_error("chain config: detect requires a recon gadget");
  if (n_detect == 1 && recon_at > detect_at)
    throw config_error("chain config: recon must precede detect");

  for (const auto& g : gadgets) {
    if (g.kind == "recon") {
      if (g.recon.method != "zero_fill" && g.recon.method != "cg_sense" &&
          g.recon.method != "external")
        throw config_error(fmt::format("recon gadget: unknown method '{}'", g.recon.method));
      if (g.recon.method == "external" && g.recon.images_dir.empty())
        throw config_error("recon gadget: external method requires images_dir");
      if (g.recon.mask.source != "stream" && g.recon.mask.source != "policy")
        throw config_error(fmt::format("recon gadget: unknown mask source '{}'",
                                       g.recon.mask.source));
      if (g.recon.mask.source == "policy" && !(g.recon.mask.rate >= 1.0))
        throw config_error("recon gadget: policy mask rate must be >= 1");
    } else if (g.kind == "detect") {
      if (g.detect.method != "blob" && g.detect.method != "external")
        throw config_error(fmt::format("detect gadget: unknown method '{}'", g.detect.method));
      if (g.detect.method == "external" && g.detect.detections_path.empty())
        throw config_error("detect gadget: external method requires a detections path");
    } else if (g.kind == "report") {
      if (g.report.group_pair != "tp_fn" && g.report.group_pair != "fp_fn")
        throw config_error(fmt::format("report gadget: unknown group pair '{}'",
                                       g.report.group_pair));
    }
  }
}

// ---- gadgets ---------------------------------------------------------------

namespace {

bool is_close(const ChainMessage& msg) {
  const auto* wire = std::get_if<GadgetMessage>(&msg);
  return wire != nullptr && std::holds_alternative<CloseMsg>(*wire);
}

class AccumulateGadget final : public Gadget {
 public:
  std::string_view name() const override { return "accumulate"; }

  void process(ChainMessage msg, const Emit& emit) override {
    auto* wire = std::get_if<GadgetMessage>(&msg);
    if (wire == nullptr) {
      emit(std::move(msg));  // internal payloads are not ours
      return;
    }
    if (auto* cfg = std::get_if<ConfigMsg>(wire)) {
      on_config(*cfg);
      return;
    }
    if (auto* acq = std::get_if<AcquisitionMsg>(wire)) {
      on_acquisition(*acq, emit);
      return;
    }
    emit(std::move(msg));
  }

  void flush(const Emit&) override {
    if (pending_)
      throw assembly_error(fmt::format(
          "accumulate: stream ended inside slice {} (missing last-line flag)",
          pending_->slice_index));
  }

 private:
  struct Pending {
    int slice_index;
    int num_coils;
    int num_ro;
    std::vector<cfloat> data;
    std::vector<std::uint8_t> got_line;
    std::vector<std::uint8_t> acs_line;
  };

  void on_config(const ConfigMsg& cfg) {
    njson doc;
    try {
      doc = njson::parse(cfg.text);
    } catch (const nlohmann::json::parse_error& e) {
      throw assembly_error(fmt::format("accumulate: config is not valid JSON: {}", e.what()));
    }
    if (!doc.is_object() || !doc.contains("num_pe") || !doc["num_pe"].is_number_integer())
      throw assembly_error("accumulate: config missing integer 'num_pe'");
    num_pe_ = doc["num_pe"].get<int>();
    if (num_pe_ < 1) throw assembly_error("accumulate: config num_pe must be positive");
    have_config_ = true;
  }

  void on_acquisition(const AcquisitionMsg& acq, const Emit& emit) {
    if (!have_config_)
      throw assembly_error("accumulate: acquisition received before config");
    if (acq.line_index >= num_pe_)
      throw assembly_error(fmt::format("accumulate: line {} outside num_pe {}",
                                       acq.line_index, num_pe_));
    if (acq.num_coils < 1 || acq.num_samples < 1)
      throw assembly_error("accumulate: acquisition with empty dimensions");

    if (!pending_) {
      Pending p;
      p.slice_index = acq.slice_index;
      p.num_coils = acq.num_coils;
      p.num_ro = static_cast<int>(acq.num_samples);
      p.data.assign(static_cast<std::size_t>(p.num_coils) * num_pe_ * p.num_ro,
                    cfloat{0.0f, 0.0f});
      p.got_line.assign(num_pe_, 0);
      p.acs_line.assign(num_pe_, 0);
      pending_ = std::move(p);
    }
    Pending& p = *pending_;
    if (acq.slice_index != p.slice_index)
      throw assembly_error(fmt::format(
          "accumulate: interleaved slices: line for slice {} while assembling slice {}",
          acq.slice_index, p.slice_index));
    if (acq.num_coils != p.num_coils || static_cast<int>(acq.num_samples) != p.num_ro)
      throw assembly_error(fmt::format(
          "accumulate: inconsistent dimensions in slice {}: {}x{} vs {}x{}",
          p.slice_index, acq.num_coils, acq.num_samples, p.num_coils, p.num_ro));
    if (p.got_line[acq.line_index])
      throw assembly_error(fmt::format("accumulate: duplicate line {} in slice {}",
                                       acq.line_index, p.slice_index));
    p.got_line[acq.line_index] = 1;
    if (acq.flags & kFlagAcsLine) p.acs_line[acq.line_index] = 1;
    for (int c = 0; c < p.num_coils; ++c) {
      const std::size_t dst =
          (static_cast<std::size_t>(c) * num_pe_ + acq.line_index) * p.num_ro;
      const std::size_t src = static_cast<std::size_t>(c) * p.num_ro;
      std::copy_n(acq.samples.begin() + src, p.num_ro, p.data.begin() + dst);
    }
    if (acq.flags & kFlagLastLine) finalize(emit);
  }

  void finalize(const Emit& emit) {
    Pending& p = *pending_;
    SliceBundle bundle;
    bundle.realized_mask.num_pe = num_pe_;
    bundle.realized_mask.acquired = p.got_line;
    int acs_lo = num_pe_, acs_hi = -1;
    for (int i = 0; i < num_pe_; ++i) {
      if (!p.acs_line[i]) continue;
      acs_lo = std::min(acs_lo, i);
      acs_hi = std::max(acs_hi, i);
    }
    if (acs_hi >= 0) {
      for (int i = acs_lo; i <= acs_hi; ++i)
        if (!p.got_line[i])
          throw assembly_error(fmt::format(
              "accumulate: ACS block [{}..{}] of slice {} not contiguously acquired",
              acs_lo, acs_hi, p.slice_index));
      bundle.realized_mask.acs = LineRange{acs_lo, acs_hi};
    }
    const int acquired = bundle.realized_mask.acquired_count();
    bundle.realized_mask.nominal_rate =
        acquired > 0 ? static_cast<double>(num_pe_) / acquired : 1.0;
    try {
      bundle.kspace = make_kspace_slice(p.slice_index, p.num_coils, num_pe_, p.num_ro,
                                        std::move(p.data));
    } catch (const std::invalid_argument& e) {
      throw assembly_error(fmt::format("accumulate: slice {}: {}", p.slice_index, e.what()));
    }
    pending_.reset();
    emit(std::move(bundle));
  }

  bool have_config_ = false;
  int num_pe_ = 0;
  std::optional<Pending> pending_;
};

class ReconGadget final : public Gadget {
 public:
  explicit ReconGadget(ReconGadgetCfg cfg) : cfg_(std::move(cfg)) {}

  std::string_view name() const override { return "recon"; }

  void process(ChainMessage msg, const Emit& emit) override {
    auto* bundle = std::get_if<SliceBundle>(&msg);
    if (bundle == nullptr) {
      emit(std::move(msg));
      return;
    }
    const KSpaceSlice& raw = bundle->kspace;
    const int slice = raw.slice_index;

    MagnitudeImage reference = zero_fill_recon(raw, bundle->realized_mask);

    SamplingMask method_mask = bundle->realized_mask;
    KSpaceSlice data = raw;
    const double acs_fraction =
        cfg_.mask.acs_fraction.value_or(default_acs_fraction(cfg_.mask.rate));
    if (cfg_.mask.source == "policy") {
      MaskPolicy policy;
      policy.nominal_rate = cfg_.mask.rate;
      policy.acs_fraction = acs_fraction;
      policy.seed = cfg_.mask.per_slice_seed ? seed_for_slice(cfg_.mask.seed, slice)
                                             : cfg_.mask.seed;
      method_mask = generate_mask(raw.num_pe, policy);
      data = apply_mask(raw, method_mask);
    }

    MagnitudeImage method_img;
    if (cfg_.method == "zero_fill") {
      method_img = zero_fill_recon(data, method_mask);
    } else if (cfg_.method == "cg_sense") {
      const CoilSensitivityMaps sens = estimate_sensitivities(data, method_mask);
      auto [x, trace] = cg_sense(data, method_mask, sens, cfg_.cg);
      log_debug(fmt::format("cg_sense slice {}: {} iterations, converged={}", slice,
                            trace.iterations_run, trace.converged));
      method_img = magnitude(x);
    } else {  // external
      method_img = read_pgm16(fmt::format("{}/slice_{:03d}.pgm", cfg_.images_dir, slice));
      if (method_img.rows != raw.num_pe || method_img.cols != raw.num_ro)
        throw shape_error(fmt::format(
            "recon: external image for slice {} is {}x{}, expected {}x{}", slice,
            method_img.rows, method_img.cols, raw.num_pe, raw.num_ro));
    }
    method_img.slice_index = slice;

    ImageMsg img;
    img.slice_index = static_cast<std::uint16_t>(slice);
    img.rows = static_cast<std::uint16_t>(method_img.rows);
    img.cols = static_cast<std::uint16_t>(method_img.cols);
    img.pixel_type = 0;
    img.pixels = method_img.pixels;
    emit(GadgetMessage{std::move(img)});

    SliceResult result;
    result.slice_index = slice;
    result.method_image = std::move(method_img);
    result.reference_image = std::move(reference);
    result.recon.method = cfg_.method;
    result.recon.rate =
        cfg_.mask.source == "policy" ? cfg_.mask.rate : method_mask.achieved_rate();
    result.recon.mask_lines = method_mask.to_line_string();
    result.recon.mask_source = cfg_.mask.source;
    result.recon.seed = cfg_.mask.seed;
    result.recon.acs_fraction = acs_fraction;
    result.recon.per_slice_seed = cfg_.mask.per_slice_seed;
    result.recon.cg = cfg_.cg;
    emit(std::move(result));
  }

 private:
  ReconGadgetCfg cfg_;
};

// Round a detection through the wire's f32 fields so downstream matching is
// identical whether detections stay in process or travel as Annotations.
Detection quantize_detection(const Detection& d) {
  Detection out = d;
  out.box.x0 = static_cast<float>(d.box.x0);
  out.box.y0 = static_cast<float>(d.box.y0);
  out.box.x1 = static_cast<float>(d.box.x1);
  out.box.y1 = static_cast<float>(d.box.y1);
  out.confidence = static_cast<float>(d.confidence);
  return out;
}

class DetectGadget final : public Gadget {
 public:
  explicit DetectGadget(DetectGadgetCfg cfg) : cfg_(std::move(cfg)) {
    if (cfg_.method == "external")
      external_ = load_external_detections(read_text_file(cfg_.detections_path));
  }

  std::string_view name() const override { return "detect"; }

  void process(ChainMessage msg, const Emit& emit) override {
    auto* result = std::get_if<SliceResult>(&msg);
    if (result == nullptr) {
      emit(std::move(msg));
      return;
    }
    std::vector<Detection> dets;
    if (cfg_.method == "blob") {
      const MagnitudeImage norm = normalize_magnitude(result->method_image);
      dets = blob_detect(norm, cfg_.intensity_threshold, cfg_.min_area);
    } else {
      for (const auto& d : external_)
        if (d.slice_index == result->slice_index) dets.push_back(d);
    }
    std::vector<Detection> kept;
    for (const auto& d : dets) {
      if (d.confidence < cfg_.confidence_threshold) continue;
      kept.push_back(quantize_detection(d));
    }

    AnnotationsMsg ann;
    ann.slice_index = static_cast<std::uint16_t>(result->slice_index);
    for (const auto& d : kept) {
      AnnotationBox b;
      b.x0 = static_cast<float>(d.box.x0);
      b.y0 = static_cast<float>(d.box.y0);
      b.x1 = static_cast<float>(d.box.x1);
      b.y1 = static_cast<float>(d.box.y1);
      b.confidence = static_cast<float>(d.confidence);
      b.class_id = static_cast<std::uint16_t>(d.class_id);
      ann.boxes.push_back(b);
    }
    emit(GadgetMessage{std::move(ann)});

    result->detections = std::move(kept);
    result->has_detections = true;
    result->detect.method = cfg_.method;
    result->detect.intensity_threshold = cfg_.intensity_threshold;
    result->detect.min_area = cfg_.min_area;
    result->detect.confidence_threshold = cfg_.confidence_threshold;
    emit(std::move(msg));
  }

 private:
  DetectGadgetCfg cfg_;
  std::vector<Detection> external_;
};

class ReportGadget final : public Gadget {
 public:
  explicit ReportGadget(ReportGadgetCfg cfg) : cfg_(std::move(cfg)) {}

  std::string_view name() const override { return "report"; }

  void process(ChainMessage msg, const Emit& emit) override {
    if (auto* result = std::get_if<SliceResult>(&msg)) {
      entries_.push_back(std::move(*result));
      return;
    }
    if (auto* bundle = std::get_if<SliceBundle>(&msg)) {
      // Chain without recon: record the slice so ground truth on it counts.
      SliceResult minimal;
      minimal.slice_index = bundle->kspace.slice_index;
      minimal.recon.mask_lines = bundle->realized_mask.to_line_string();
      minimal.recon.rate = bundle->realized_mask.achieved_rate();
      entries_.push_back(std::move(minimal));
      return;
    }
    emit(std::move(msg));
  }

  void flush(const Emit& emit) override {
    double data_range = 0.0;
    bool any_image = false;
    for (const auto& e : entries_) {
      if (e.reference_image.pixels.empty()) continue;
      any_image = true;
      data_range = std::max(data_range, static_cast<double>(e.reference_image.max_pixel()));
    }

    std::map<int, SliceMetrics> metrics;
    std::vector<Detection> dets;
    std::set<int> streamed;
    double ssim_sum = 0.0;
    int ssim_count = 0;
    for (const auto& e : entries_) {
      streamed.insert(e.slice_index);
      SliceMetrics m;
      m.mask = e.recon.mask_lines;
      if (!e.reference_image.pixels.empty() && data_range > 0.0) {
        SsimParams params{cfg_.ssim_window, cfg_.ssim_k1, cfg_.ssim_k2, data_range};
        m.ssim = ssim(e.reference_image, e.method_image, params);
        ssim_sum += *m.ssim;
        ++ssim_count;
        try {
          m.nmse = nmse(e.reference_image, e.method_image);
        } catch (const undefined_metric_error&) {
        }
      }
      metrics[e.slice_index] = std::move(m);
      dets.insert(dets.end(), e.detections.begin(), e.detections.end());
    }

    std::vector<GroundTruthAnnotation> gts;
    if (!cfg_.ground_truth_path.empty()) {
      for (const auto& g : load_ground_truth(read_text_file(cfg_.ground_truth_path)))
        if (streamed.count(g.slice_index)) gts.push_back(g);
    }
    const auto outcomes = match_detections(dets, gts, cfg_.iou_threshold);

    const ReconInfo recon = entries_.empty() ? ReconInfo{} : entries_.front().recon;
    const DetectInfo detect =
        entries_.empty() ? DetectInfo{} : entries_.front().detect;

    njson prov;
    prov["rng"] = kRngName;
    prov["seed"] = recon.seed;
    prov["acs_fraction"] = recon.acs_fraction;
    prov["per_slice_seed"] = recon.per_slice_seed;
    prov["mask_source"] = recon.mask_source;
    prov["recon"] = {{"method", recon.method},
                     {"lambda", recon.cg.lambda},
                     {"max_iters", recon.cg.max_iters},
                     {"rel_tol", recon.cg.rel_tol}};
    prov["detector"] = {{"method", detect.method},
                        {"intensity_threshold", detect.intensity_threshold},
                        {"min_area", detect.min_area},
                        {"confidence_threshold", detect.confidence_threshold}};
    prov["iou_threshold"] = cfg_.iou_threshold;
    prov["ssim"] = {{"window", cfg_.ssim_window},
                    {"k1", cfg_.ssim_k1},
                    {"k2", cfg_.ssim_k2},
                    {"data_range", any_image && data_range > 0.0 ? njson(data_range)
                                                                 : njson(nullptr)}};
    prov["volume_mean_ssim"] =
        ssim_count > 0 ? njson(ssim_sum / ssim_count) : njson(nullptr);

    const EvaluationReport rep = aggregate_report(
        outcomes, metrics, recon.method, recon.rate, std::move(prov), cfg_.group_pair);
    emit(GadgetMessage{ReportMsg{report_to_text(rep)}});
  }

 private:
  ReportGadgetCfg cfg_;
  std::vector<SliceResult> entries_;
};

GadgetMessage error_report(std::string_view gadget, const std::string& what) {
  njson doc;
  doc["error"] = what;
  doc["gadget"] = std::string(gadget);
  return ReportMsg{doc.dump(2) + "\n"};
}

}  // namespace

std::unique_ptr<Gadget> make_gadget(const GadgetCfg& cfg) {
  if (cfg.kind == "accumulate") return std::make_unique<AccumulateGadget>();
  if (cfg.kind == "recon") return std::make_unique<ReconGadget>(cfg.recon);
  if (cfg.kind == "detect") return std::make_unique<DetectGadget>(cfg.detect);
  if (cfg.kind == "report") return std::make_unique<ReportGadget>(cfg.report);
  throw config_error(fmt::format("unknown gadget kind '{}'", cfg.kind));
}

// ---- chain runtime -----------------------------------------------------------

Chain::Chain(const ChainConfig& cfg) {
  cfg.validate();
  for (const auto& g : cfg.gadgets) gadgets_.push_back(make_gadget(g));
  const std::size_t cap = static_cast<std::size_t>(cfg.queue_capacity);
  for (std::size_t i = 0; i <= gadgets_.size(); ++i)
    queues_.push_back(std::make_unique<BoundedQueue<ChainMessage>>(cap));

  for (std::size_t i = 0; i < gadgets_.size(); ++i) {
    workers_.emplace_back([this, i] {
      auto& in = *queues_[i];
      auto& out = *queues_[i + 1];
      Gadget& gadget = *gadgets_[i];
      const Gadget::Emit emit = [&out](ChainMessage m) { out.push(std::move(m)); };
      while (auto msg = in.pop()) {
        if (is_close(*msg)) {
          try {
            gadget.flush(emit);
          } catch (const std::exception& e) {
            log_error(fmt::format("{} gadget failed during flush: {}", gadget.name(), e.what()));
            emit(error_report(gadget.name(), e.what()));
          }
          emit(GadgetMessage{CloseMsg{}});
          break;
        }
        try {
          gadget.process(std::move(*msg), emit);
        } catch (const std::exception& e) {
          log_error(fmt::format("{} gadget failed: {}", gadget.name(), e.what()));
          emit(error_report(gadget.name(), e.what()));
          emit(GadgetMessage{CloseMsg{}});
          // Keep draining so upstream stages are never blocked on a full queue.
          while (auto rest = in.pop())
            if (is_close(*rest)) break;
          break;
        }
      }
      out.close();
    });
  }
}

Chain::~Chain() {
  abort();
  join();
}

void Chain::push(GadgetMessage msg) { queues_.front()->push(ChainMessage{std::move(msg)}); }

void Chain::abort() {
  for (auto& q : queues_) q->close();
}

std::optional<GadgetMessage> Chain::pop_output() {
  while (auto msg = queues_.back()->pop()) {
    if (auto* wire = std::get_if<GadgetMessage>(&*msg)) return std::move(*wire);
    log_debug("chain emitted an internal payload at the boundary; dropped");
  }
  return std::nullopt;
}

void Chain::join() {
  for (auto& w : workers_)
    if (w.joinable()) w.join();
}

std::vector<GadgetMessage> run_chain(const ChainConfig& cfg,
                                     const std::vector<GadgetMessage>& input) {
  Chain chain(cfg);
  std::thread feeder([&] {
    bool closed = false;
    for (const auto& msg : input) {
      chain.push(msg);
      if (std::holds_alternative<CloseMsg>(msg)) closed = true;
    }
    if (!closed) chain.push(GadgetMessage{CloseMsg{}});
  });
  std::vector<GadgetMessage> out;
  while (auto msg = chain.pop_output()) out.push_back(std::move(*msg));
  feeder.join();
  chain.join();
  return out;
}

}  // namespace ksp
