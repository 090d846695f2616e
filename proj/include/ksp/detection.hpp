#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ksp/types.hpp"

namespace ksp {

// Corner convention: x along columns, y along rows, x0 < x1 and y0 < y1.
struct BoundingBox {
  double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;
  double area() const { return (x1 - x0) * (y1 - y0); }
};

struct Detection {
  int slice_index = 0;
  BoundingBox box;
  double confidence = 1.0;
  int class_id = 0;  // 0 = the single lesion class
};

struct GroundTruthAnnotation {
  int slice_index = 0;
  BoundingBox box;
  int class_id = 0;
};

// Matching result for one slice.
struct SliceOutcome {
  int slice = 0;
  int tp = 0, fp = 0, fn = 0;
};

// Per-slice quality metrics attached to the report.
struct SliceMetrics {
  std::optional<double> ssim;
  std::optional<double> nmse;
  std::string mask;  // "0"/"1" per phase-encode line; may be empty
};

struct SliceRecord {
  int slice = 0;
  int tp = 0, fp = 0, fn = 0;
  std::string group;  // "tp" | "fn" | "none"
  std::optional<double> ssim;
  std::optional<double> nmse;
  std::string mask;
};

struct EvaluationReport {
  std::string method;
  double rate = 1.0;
  int tp = 0, fp = 0, fn = 0;
  std::optional<double> sensitivity;
  std::vector<SliceRecord> slices;
  std::optional<double> mean_ssim_tp;
  std::optional<double> mean_ssim_fn;
  std::string group_pair = "tp_fn";  // configurable comparison pair
  std::optional<double> group_mean_a;
  std::optional<double> group_mean_b;
  nlohmann::ordered_json provenance = nlohmann::ordered_json::object();
};

// Intersection area / union area; 0 when disjoint.
double iou(const BoundingBox& a, const BoundingBox& b);

// Greedy per-slice, per-class matching: detections in descending confidence
// (ties by ascending x0, then y0) each take the unmatched ground truth with
// the highest IoU >= threshold. Returns outcomes sorted by slice.
std::vector<SliceOutcome> match_detections(const std::vector<Detection>& dets,
                                           const std::vector<GroundTruthAnnotation>& gts,
                                           double iou_threshold);

// Sums counts, computes sensitivity, attaches per-slice metrics and group
// means. Throws validation_error when metrics are supplied but some outcome
// slice has no metric record.
EvaluationReport aggregate_report(const std::vector<SliceOutcome>& outcomes,
                                  const std::map<int, SliceMetrics>& metrics,
                                  std::string method, double rate,
                                  nlohmann::ordered_json provenance,
                                  const std::string& group_pair = "tp_fn");

// (mean SSIM over slices with >= 1 TP, mean over slices with >= 1 FN and no TP).
std::pair<std::optional<double>, std::optional<double>> ssim_group_means(
    const EvaluationReport& report);

// 4-connected components above the intensity threshold on a [0,1]-normalized
// image; confidence is the component's mean intensity.
std::vector<Detection> blob_detect(const MagnitudeImage& img, double intensity_threshold,
                                   int min_area);

// Detections/ground-truth JSON documents (see README for the schema).
std::vector<Detection> load_external_detections(const std::string& json_text);
std::vector<GroundTruthAnnotation> load_ground_truth(const std::string& json_text);
std::string detections_to_json(const std::vector<Detection>& dets);
std::string ground_truth_to_json(const std::vector<GroundTruthAnnotation>& gts);

nlohmann::ordered_json report_to_json(const EvaluationReport& report);
std::string report_to_text(const EvaluationReport& report);
EvaluationReport report_from_json(const nlohmann::ordered_json& doc);

}  // namespace ksp
