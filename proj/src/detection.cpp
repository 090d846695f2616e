#include "ksp/detection.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include <fmt/format.h>

#include "ksp/errors.hpp"

namespace ksp {

double iou(const BoundingBox& a, const BoundingBox& b) {
  const double ix = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
  const double iy = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
  if (ix <= 0.0 || iy <= 0.0) return 0.0;
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return inter / uni;
}

namespace {

bool detection_order(const Detection& a, const Detection& b) {
  if (a.confidence != b.confidence) return a.confidence > b.confidence;
  if (a.box.x0 != b.box.x0) return a.box.x0 < b.box.x0;
  return a.box.y0 < b.box.y0;
}

}  // namespace

std::vector<SliceOutcome> match_detections(const std::vector<Detection>& dets,
                                           const std::vector<GroundTruthAnnotation>& gts,
                                           double iou_threshold) {
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0))
    throw parameter_error(
        fmt::format("match_detections: iou_threshold must be in (0,1], got {}", iou_threshold));

  // (slice, class) -> indices
  std::map<std::pair<int, int>, std::vector<std::size_t>> det_groups, gt_groups;
  for (std::size_t i = 0; i < dets.size(); ++i)
    det_groups[{dets[i].slice_index, dets[i].class_id}].push_back(i);
  for (std::size_t i = 0; i < gts.size(); ++i)
    gt_groups[{gts[i].slice_index, gts[i].class_id}].push_back(i);

  std::map<int, SliceOutcome> by_slice;
  auto slot = [&](int slice) -> SliceOutcome& {
    auto& o = by_slice[slice];
    o.slice = slice;
    return o;
  };

  for (const auto& [key, det_idx] : det_groups) {
    auto gt_it = gt_groups.find(key);
    std::vector<std::size_t> gt_idx = gt_it != gt_groups.end() ? gt_it->second
                                                               : std::vector<std::size_t>{};
    std::vector<bool> gt_used(gt_idx.size(), false);

    std::vector<std::size_t> order = det_idx;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return detection_order(dets[a], dets[b]);
    });

    SliceOutcome& out = slot(key.first);
    for (std::size_t di : order) {
      double best = 0.0;
      std::size_t best_j = gt_idx.size();
      for (std::size_t j = 0; j < gt_idx.size(); ++j) {
        if (gt_used[j]) continue;
        const double v = iou(dets[di].box, gts[gt_idx[j]].box);
        if (v >= iou_threshold && v > best) {
          best = v;
          best_j = j;
        }
      }
      if (best_j < gt_idx.size()) {
        gt_used[best_j] = true;
        ++out.tp;
      } else {
        ++out.fp;
      }
    }
    for (std::size_t j = 0; j < gt_idx.size(); ++j)
      if (!gt_used[j]) ++out.fn;
  }
  // Ground truths on slices/classes with no detections at all.
  for (const auto& [key, gt_idx] : gt_groups)
    if (det_groups.find(key) == det_groups.end())
      slot(key.first).fn += static_cast<int>(gt_idx.size());

  std::vector<SliceOutcome> outcomes;
  outcomes.reserve(by_slice.size());
  for (const auto& [slice, o] : by_slice) outcomes.push_back(o);
  return outcomes;
}

namespace {

// Mean SSIM over slices where count_a(rec) >= 1, and over slices where
// count_b(rec) >= 1 and count_a(rec) == 0.
template <typename A, typename B>
std::pair<std::optional<double>, std::optional<double>> group_means(
    const std::vector<SliceRecord>& slices, A count_a, B count_b) {
  double sum_a = 0.0, sum_b = 0.0;
  int n_a = 0, n_b = 0;
  for (const auto& rec : slices) {
    if (!rec.ssim) continue;
    if (count_a(rec) > 0) {
      sum_a += *rec.ssim;
      ++n_a;
    } else if (count_b(rec) > 0) {
      sum_b += *rec.ssim;
      ++n_b;
    }
  }
  std::pair<std::optional<double>, std::optional<double>> out;
  if (n_a > 0) out.first = sum_a / n_a;
  if (n_b > 0) out.second = sum_b / n_b;
  return out;
}

}  // namespace

EvaluationReport aggregate_report(const std::vector<SliceOutcome>& outcomes,
                                  const std::map<int, SliceMetrics>& metrics,
                                  std::string method, double rate,
                                  nlohmann::ordered_json provenance,
                                  const std::string& group_pair) {
  if (group_pair != "tp_fn" && group_pair != "fp_fn")
    throw parameter_error(fmt::format("aggregate_report: unknown group pair '{}'", group_pair));

  std::map<int, SliceOutcome> by_slice;
  for (const auto& o : outcomes) by_slice[o.slice] = o;
  if (!metrics.empty()) {
    for (const auto& o : outcomes)
      if (metrics.find(o.slice) == metrics.end())
        throw validation_error(fmt::format(
            "aggregate_report: slice-set mismatch: slice {} has outcomes but no metrics",
            o.slice));
    for (const auto& [slice, m] : metrics)
      if (by_slice.find(slice) == by_slice.end()) by_slice[slice] = SliceOutcome{slice};
  }

  EvaluationReport rep;
  rep.method = std::move(method);
  rep.rate = rate;
  rep.group_pair = group_pair;
  rep.provenance = std::move(provenance);

  for (const auto& [slice, o] : by_slice) {
    SliceRecord rec;
    rec.slice = slice;
    rec.tp = o.tp;
    rec.fp = o.fp;
    rec.fn = o.fn;
    rec.group = o.tp > 0 ? "tp" : (o.fn > 0 ? "fn" : "none");
    if (auto it = metrics.find(slice); it != metrics.end()) {
      rec.ssim = it->second.ssim;
      rec.nmse = it->second.nmse;
      rec.mask = it->second.mask;
    }
    rep.tp += o.tp;
    rep.fp += o.fp;
    rep.fn += o.fn;
    rep.slices.push_back(std::move(rec));
  }
  if (rep.tp + rep.fn > 0)
    rep.sensitivity = static_cast<double>(rep.tp) / (rep.tp + rep.fn);

  std::tie(rep.mean_ssim_tp, rep.mean_ssim_fn) = ssim_group_means(rep);
  if (group_pair == "tp_fn") {
    rep.group_mean_a = rep.mean_ssim_tp;
    rep.group_mean_b = rep.mean_ssim_fn;
  } else {
    std::tie(rep.group_mean_a, rep.group_mean_b) = group_means(
        rep.slices, [](const SliceRecord& r) { return r.fp; },
        [](const SliceRecord& r) { return r.fn; });
  }
  return rep;
}

std::pair<std::optional<double>, std::optional<double>> ssim_group_means(
    const EvaluationReport& report) {
  return group_means(
      report.slices, [](const SliceRecord& r) { return r.tp; },
      [](const SliceRecord& r) { return r.fn; });
}

std::vector<Detection> blob_detect(const MagnitudeImage& img, double intensity_threshold,
                                   int min_area) {
  if (!(intensity_threshold > 0.0 && intensity_threshold <= 1.0))
    throw parameter_error(fmt::format(
        "blob_detect: intensity_threshold must be in (0,1], got {}", intensity_threshold));
  if (min_area < 1)
    throw parameter_error("blob_detect: min_area must be positive");

  const int rows = img.rows, cols = img.cols;
  std::vector<std::uint8_t> visited(img.pixels.size(), 0);
  std::vector<Detection> dets;

  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const std::size_t start = img.index(r, c);
      if (visited[start] || img.pixels[start] <= intensity_threshold) continue;

      int min_r = r, max_r = r, min_c = c, max_c = c;
      double sum = 0.0;
      long area = 0;
      std::deque<std::pair<int, int>> queue{{r, c}};
      visited[start] = 1;
      while (!queue.empty()) {
        const auto [pr, pc] = queue.front();
        queue.pop_front();
        sum += img.pixels[img.index(pr, pc)];
        ++area;
        min_r = std::min(min_r, pr);
        max_r = std::max(max_r, pr);
        min_c = std::min(min_c, pc);
        max_c = std::max(max_c, pc);
        const int nbr[4][2] = {{pr - 1, pc}, {pr + 1, pc}, {pr, pc - 1}, {pr, pc + 1}};
        for (const auto& nb : nbr) {
          if (nb[0] < 0 || nb[0] >= rows || nb[1] < 0 || nb[1] >= cols) continue;
          const std::size_t ni = img.index(nb[0], nb[1]);
          if (visited[ni] || img.pixels[ni] <= intensity_threshold) continue;
          visited[ni] = 1;
          queue.emplace_back(nb[0], nb[1]);
        }
      }
      if (area < min_area) continue;
      Detection d;
      d.slice_index = img.slice_index;
      d.box = BoundingBox{static_cast<double>(min_c), static_cast<double>(min_r),
                          static_cast<double>(max_c + 1), static_cast<double>(max_r + 1)};
      d.confidence = sum / static_cast<double>(area);
      d.class_id = 0;
      dets.push_back(d);
    }
  }
  std::stable_sort(dets.begin(), dets.end(), detection_order);
  return dets;
}

namespace {

int line_of_offset(const std::string& text, std::size_t offset) {
  int line = 1;
  for (std::size_t i = 0; i < offset && i < text.size(); ++i)
    if (text[i] == '\n') ++line;
  return line;
}

nlohmann::json parse_records(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw parse_error(fmt::format("detections document: {} (line {})", e.what(),
                                  line_of_offset(text, e.byte)),
                      line_of_offset(text, e.byte));
  }
  if (!doc.is_array())
    throw validation_error("detections document: top level must be a list");
  return doc;
}

double require_number(const nlohmann::json& rec, const char* field, std::size_t idx) {
  auto it = rec.find(field);
  if (it == rec.end() || !it->is_number())
    throw validation_error(
        fmt::format("record {}: missing or non-numeric field '{}'", idx, field));
  const double v = it->get<double>();
  if (!std::isfinite(v))
    throw validation_error(fmt::format("record {}: non-finite field '{}'", idx, field));
  return v;
}

int require_int(const nlohmann::json& rec, const char* field, std::size_t idx) {
  auto it = rec.find(field);
  if (it == rec.end() || !it->is_number_integer())
    throw validation_error(
        fmt::format("record {}: missing or non-integer field '{}'", idx, field));
  return it->get<int>();
}

BoundingBox parse_box(const nlohmann::json& rec, std::size_t idx) {
  BoundingBox box{require_number(rec, "x0", idx), require_number(rec, "y0", idx),
                  require_number(rec, "x1", idx), require_number(rec, "y1", idx)};
  if (!(box.x0 < box.x1) || !(box.y0 < box.y1))
    throw validation_error(
        fmt::format("record {}: degenerate box ({},{},{},{}) requires x0 < x1 and y0 < y1",
                    idx, box.x0, box.y0, box.x1, box.y1));
  return box;
}

}  // namespace

std::vector<Detection> load_external_detections(const std::string& json_text) {
  const auto doc = parse_records(json_text);
  std::vector<Detection> dets;
  dets.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& rec = doc[i];
    if (!rec.is_object())
      throw validation_error(fmt::format("record {}: not an object", i));
    Detection d;
    d.slice_index = require_int(rec, "slice", i);
    if (d.slice_index < 0)
      throw validation_error(fmt::format("record {}: negative slice index", i));
    d.box = parse_box(rec, i);
    d.confidence = require_number(rec, "confidence", i);
    if (d.confidence < 0.0 || d.confidence > 1.0)
      throw validation_error(
          fmt::format("record {}: confidence {} outside [0,1]", i, d.confidence));
    d.class_id = require_int(rec, "class", i);
    dets.push_back(d);
  }
  return dets;
}

std::vector<GroundTruthAnnotation> load_ground_truth(const std::string& json_text) {
  const auto doc = parse_records(json_text);
  std::vector<GroundTruthAnnotation> gts;
  gts.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& rec = doc[i];
    if (!rec.is_object())
      throw validation_error(fmt::format("record {}: not an object", i));
    GroundTruthAnnotation g;
    g.slice_index = require_int(rec, "slice", i);
    if (g.slice_index < 0)
      throw validation_error(fmt::format("record {}: negative slice index", i));
    g.box = parse_box(rec, i);
    g.class_id = require_int(rec, "class", i);
    gts.push_back(g);
  }
  return gts;
}

std::string detections_to_json(const std::vector<Detection>& dets) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::array();
  for (const auto& d : dets) {
    doc.push_back({{"slice", d.slice_index},
                   {"x0", d.box.x0},
                   {"y0", d.box.y0},
                   {"x1", d.box.x1},
                   {"y1", d.box.y1},
                   {"confidence", d.confidence},
                   {"class", d.class_id}});
  }
  return doc.dump(2) + "\n";
}

std::string ground_truth_to_json(const std::vector<GroundTruthAnnotation>& gts) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::array();
  for (const auto& g : gts) {
    doc.push_back({{"slice", g.slice_index},
                   {"x0", g.box.x0},
                   {"y0", g.box.y0},
                   {"x1", g.box.x1},
                   {"y1", g.box.y1},
                   {"class", g.class_id}});
  }
  return doc.dump(2) + "\n";
}

namespace {

nlohmann::ordered_json opt_num(const std::optional<double>& v) {
  if (v) return *v;
  return nullptr;
}

std::optional<double> num_opt(const nlohmann::ordered_json& v) {
  if (v.is_number()) return v.get<double>();
  return std::nullopt;
}

}  // namespace

nlohmann::ordered_json report_to_json(const EvaluationReport& rep) {
  nlohmann::ordered_json doc;
  doc["method"] = rep.method;
  doc["rate"] = rep.rate;
  doc["tp"] = rep.tp;
  doc["fp"] = rep.fp;
  doc["fn"] = rep.fn;
  doc["sensitivity"] = opt_num(rep.sensitivity);
  doc["slices"] = nlohmann::ordered_json::array();
  for (const auto& rec : rep.slices) {
    nlohmann::ordered_json r;
    r["slice"] = rec.slice;
    r["tp"] = rec.tp;
    r["fp"] = rec.fp;
    r["fn"] = rec.fn;
    r["group"] = rec.group;
    r["ssim"] = opt_num(rec.ssim);
    r["nmse"] = opt_num(rec.nmse);
    r["mask"] = rec.mask;
    doc["slices"].push_back(std::move(r));
  }
  doc["mean_ssim_tp"] = opt_num(rep.mean_ssim_tp);
  doc["mean_ssim_fn"] = opt_num(rep.mean_ssim_fn);
  doc["group_comparison"] = {{"pair", rep.group_pair},
                             {"mean_a", opt_num(rep.group_mean_a)},
                             {"mean_b", opt_num(rep.group_mean_b)}};
  doc["provenance"] = rep.provenance;
  return doc;
}

std::string report_to_text(const EvaluationReport& rep) {
  return report_to_json(rep).dump(2) + "\n";
}

EvaluationReport report_from_json(const nlohmann::ordered_json& doc) {
  EvaluationReport rep;
  rep.method = doc.value("method", std::string{});
  rep.rate = doc.value("rate", 1.0);
  rep.tp = doc.value("tp", 0);
  rep.fp = doc.value("fp", 0);
  rep.fn = doc.value("fn", 0);
  if (doc.contains("sensitivity")) rep.sensitivity = num_opt(doc["sensitivity"]);
  if (doc.contains("slices")) {
    for (const auto& r : doc["slices"]) {
      SliceRecord rec;
      rec.slice = r.value("slice", 0);
      rec.tp = r.value("tp", 0);
      rec.fp = r.value("fp", 0);
      rec.fn = r.value("fn", 0);
      rec.group = r.value("group", std::string{"none"});
      if (r.contains("ssim")) rec.ssim = num_opt(r["ssim"]);
      if (r.contains("nmse")) rec.nmse = num_opt(r["nmse"]);
      rec.mask = r.value("mask", std::string{});
      rep.slices.push_back(std::move(rec));
    }
  }
  if (doc.contains("mean_ssim_tp")) rep.mean_ssim_tp = num_opt(doc["mean_ssim_tp"]);
  if (doc.contains("mean_ssim_fn")) rep.mean_ssim_fn = num_opt(doc["mean_ssim_fn"]);
  if (doc.contains("group_comparison")) {
    const auto& gc = doc["group_comparison"];
    rep.group_pair = gc.value("pair", std::string{"tp_fn"});
    if (gc.contains("mean_a")) rep.group_mean_a = num_opt(gc["mean_a"]);
    if (gc.contains("mean_b")) rep.group_mean_b = num_opt(gc["mean_b"]);
  }
  if (doc.contains("provenance")) rep.provenance = doc["provenance"];
  return rep;
}

}  // namespace ksp
