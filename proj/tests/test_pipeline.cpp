#include <doctest.h>

#include <fmt/format.h>
#include <json.hpp>

#include "ksp/detection.hpp"
#include "ksp/errors.hpp"
#include "ksp/fileio.hpp"
#include "ksp/pgm.hpp"
#include "ksp/phantom.hpp"
#include "ksp/pipeline.hpp"
#include "ksp/wire.hpp"
#include "test_util.hpp"

using namespace ksp;

namespace {

GadgetCfg gadget(const std::string& kind) {
  GadgetCfg g;
  g.kind = kind;
  return g;
}

std::vector<GadgetMessage> dataset_messages(const SimulatedDataset& sim) {
  std::vector<GadgetMessage> out;
  MemorySource src(dataset_bytes(sim.slices, sim.config_text));
  while (auto msg = read_message(src)) out.push_back(std::move(*msg));
  return out;
}

SimulatedDataset small_dataset(int slices, int lesions, double noise = 0.0,
                               std::uint64_t seed = 1) {
  SimulationConfig cfg;
  cfg.size = 32;
  cfg.num_coils = 2;
  cfg.num_slices = slices;
  cfg.num_lesions = lesions;
  cfg.noise_sigma = noise;
  cfg.seed = seed;
  return simulate_dataset(cfg);
}

ChainConfig basic_chain(const std::string& gt_path, const std::string& method = "zero_fill",
                        double rate = 1.0, std::uint64_t seed = 1) {
  ChainConfig cfg;
  GadgetCfg recon = gadget("recon");
  recon.recon.method = method;
  recon.recon.mask.source = "policy";
  recon.recon.mask.rate = rate;
  recon.recon.mask.acs_fraction = 0.25;
  recon.recon.mask.seed = seed;
  GadgetCfg detect = gadget("detect");
  GadgetCfg report = gadget("report");
  report.report.ground_truth_path = gt_path;
  cfg.gadgets = {gadget("accumulate"), recon, detect, report};
  return cfg;
}

struct Counts {
  int images = 0, annotations = 0, reports = 0, closes = 0;
  std::string report_text;
};

Counts count_outputs(const std::vector<GadgetMessage>& outputs) {
  Counts c;
  for (const auto& msg : outputs) {
    if (std::holds_alternative<ImageMsg>(msg)) ++c.images;
    if (std::holds_alternative<AnnotationsMsg>(msg)) ++c.annotations;
    if (std::holds_alternative<CloseMsg>(msg)) ++c.closes;
    if (const auto* rep = std::get_if<ReportMsg>(&msg)) {
      ++c.reports;
      c.report_text = rep->text;
    }
  }
  return c;
}

}  // namespace

TEST_CASE("chain config validation names the broken rule") {
  ChainConfig cfg;
  cfg.gadgets = {gadget("accumulate"), gadget("detect"), gadget("recon"), gadget("report")};
  cfg.gadgets[2].recon = ReconGadgetCfg{};
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("recon must precede detect"),
                       config_error);

  cfg.gadgets = {gadget("accumulate"), gadget("recon")};
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("report"), config_error);

  cfg.gadgets = {gadget("recon"), gadget("accumulate"), gadget("report")};
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("accumulate"), config_error);

  cfg.gadgets = {gadget("accumulate"), gadget("detect"), gadget("report")};
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("detect requires a recon"),
                       config_error);

  cfg.gadgets = {gadget("accumulate"), gadget("report")};
  cfg.queue_capacity = 0;
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("queue_capacity"), config_error);
}

TEST_CASE("chain config JSON parsing is strict about keys") {
  CHECK_THROWS_WITH_AS(
      ChainConfig::from_json_text(
          R"({"gadgets": [{"kind": "accumulate"}, {"kind": "report", "bogus": 1}]})"),
      doctest::Contains("bogus"), config_error);
  const auto cfg = ChainConfig::from_json_text(R"({
    "queue_capacity": 8,
    "gadgets": [
      {"kind": "accumulate"},
      {"kind": "recon", "method": "zero_fill",
       "mask": {"source": "policy", "rate": 4.0, "seed": 7}},
      {"kind": "detect", "method": "blob", "intensity_threshold": 0.8},
      {"kind": "report", "iou_threshold": 0.5}
    ]})");
  CHECK(cfg.queue_capacity == 8);
  CHECK(cfg.gadgets.size() == 4);
  // Round-trip through the writer.
  const auto again = ChainConfig::from_json_text(cfg.to_json_text());
  CHECK(again.gadgets[1].recon.mask.rate == 4.0);
  CHECK(again.gadgets[1].recon.mask.seed == 7);
}

TEST_CASE("identity chain on a one-slice phantom: one image, one annotations, one report") {
  ksptest::TempDir tmp;
  const auto sim = small_dataset(1, 1);
  write_text_file(tmp.file("gt.json"), ground_truth_to_json(sim.ground_truth));
  const auto outputs = run_chain(basic_chain(tmp.file("gt.json")), dataset_messages(sim));
  const auto c = count_outputs(outputs);
  CHECK(c.images == 1);
  CHECK(c.annotations == 1);
  CHECK(c.reports == 1);
  CHECK(c.closes == 1);
  CHECK(std::holds_alternative<CloseMsg>(outputs.back()));

  const auto doc = nlohmann::ordered_json::parse(c.report_text);
  CHECK(doc["sensitivity"].get<double>() == 1.0);
  CHECK(doc["tp"].get<int>() == 1);
}

TEST_CASE("cg_sense NMSE is never worse than zero_fill NMSE at R=4") {
  ksptest::TempDir tmp;
  const auto sim = small_dataset(3, 2, 0.0, 3);
  write_text_file(tmp.file("gt.json"), ground_truth_to_json(sim.ground_truth));
  const auto msgs = dataset_messages(sim);

  auto run = [&](const std::string& method) {
    const auto outputs =
        run_chain(basic_chain(tmp.file("gt.json"), method, 4.0, 11), msgs);
    return nlohmann::ordered_json::parse(count_outputs(outputs).report_text);
  };
  const auto zf = run("zero_fill");
  const auto cg = run("cg_sense");
  CHECK(zf["provenance"]["recon"]["method"] == "zero_fill");
  CHECK(cg["provenance"]["recon"]["method"] == "cg_sense");
  REQUIRE(zf["slices"].size() == cg["slices"].size());
  for (std::size_t i = 0; i < zf["slices"].size(); ++i) {
    const double zf_nmse = zf["slices"][i]["nmse"].get<double>();
    const double cg_nmse = cg["slices"][i]["nmse"].get<double>();
    CHECK(cg_nmse <= zf_nmse);
  }
}

TEST_CASE("images arrive in ascending slice order and are conserved") {
  ksptest::TempDir tmp;
  const auto sim = small_dataset(4, 2, 0.001, 5);
  write_text_file(tmp.file("gt.json"), ground_truth_to_json(sim.ground_truth));
  const auto outputs = run_chain(basic_chain(tmp.file("gt.json")), dataset_messages(sim));
  int last = -1, images = 0;
  for (const auto& msg : outputs) {
    if (const auto* img = std::get_if<ImageMsg>(&msg)) {
      CHECK(static_cast<int>(img->slice_index) > last);
      last = img->slice_index;
      ++images;
    }
  }
  CHECK(images == 4);
}

TEST_CASE("accumulate assembles a full slice and a partial mask") {
  ksptest::TempDir tmp;
  const auto sim = small_dataset(1, 0);
  auto msgs = dataset_messages(sim);

  // Keep only even lines; re-flag the last kept acquisition.
  std::vector<GadgetMessage> partial;
  partial.push_back(msgs.front());
  AcquisitionMsg* last_acq = nullptr;
  for (auto& msg : msgs) {
    auto* acq = std::get_if<AcquisitionMsg>(&msg);
    if (acq == nullptr) continue;
    if (acq->line_index % 2 != 0) continue;
    acq->flags &= static_cast<std::uint16_t>(~kFlagLastLine);
    partial.push_back(*acq);
    last_acq = std::get_if<AcquisitionMsg>(&partial.back());
  }
  REQUIRE(last_acq != nullptr);
  last_acq->flags |= kFlagLastLine;
  partial.push_back(CloseMsg{});

  ChainConfig cfg;
  GadgetCfg recon = gadget("recon");  // stream mask, zero-fill
  cfg.gadgets = {gadget("accumulate"), recon, gadget("report")};
  const auto outputs = run_chain(cfg, partial);
  const auto c = count_outputs(outputs);
  REQUIRE(c.reports == 1);
  const auto doc = nlohmann::ordered_json::parse(c.report_text);
  const std::string mask = doc["slices"][0]["mask"].get<std::string>();
  REQUIRE(mask.size() == 32);
  for (std::size_t i = 0; i < mask.size(); ++i)
    CHECK(mask[i] == (i % 2 == 0 ? '1' : '0'));
  CHECK(doc["rate"].get<double>() == 2.0);
}

TEST_CASE("accumulate reports a duplicate line as a gadget failure") {
  const auto sim = small_dataset(1, 0);
  auto msgs = dataset_messages(sim);
  // Duplicate the first acquisition (line 0) right after itself.
  std::vector<GadgetMessage> bad;
  for (const auto& msg : msgs) {
    bad.push_back(msg);
    if (const auto* acq = std::get_if<AcquisitionMsg>(&msg)) {
      if (acq->line_index == 0 && bad.size() == 2) bad.push_back(msg);
    }
  }
  ChainConfig cfg;
  cfg.gadgets = {gadget("accumulate"), gadget("report")};
  const auto outputs = run_chain(cfg, bad);
  REQUIRE(!outputs.empty());
  const auto* rep = std::get_if<ReportMsg>(&outputs.front());
  REQUIRE(rep != nullptr);
  CHECK(rep->text.find("duplicate line 0") != std::string::npos);
  CHECK(rep->text.find("slice 0") != std::string::npos);
  CHECK(std::holds_alternative<CloseMsg>(outputs.back()));
}

TEST_CASE("accumulate rejects a stream that ends mid-slice") {
  const auto sim = small_dataset(1, 0);
  auto msgs = dataset_messages(sim);
  // Drop the last acquisition (the one carrying the last-line flag).
  std::vector<GadgetMessage> truncated;
  for (const auto& msg : msgs) {
    if (const auto* acq = std::get_if<AcquisitionMsg>(&msg))
      if (acq->flags & kFlagLastLine) continue;
    truncated.push_back(msg);
  }
  ChainConfig cfg;
  cfg.gadgets = {gadget("accumulate"), gadget("report")};
  const auto outputs = run_chain(cfg, truncated);
  bool saw_error = false;
  for (const auto& msg : outputs)
    if (const auto* rep = std::get_if<ReportMsg>(&msg))
      if (rep->text.find("missing last-line flag") != std::string::npos) saw_error = true;
  CHECK(saw_error);
}

TEST_CASE("queue capacity one still completes with identical output") {
  ksptest::TempDir tmp;
  const auto sim = small_dataset(3, 2, 0.001, 8);
  write_text_file(tmp.file("gt.json"), ground_truth_to_json(sim.ground_truth));
  const auto msgs = dataset_messages(sim);

  auto cfg_wide = basic_chain(tmp.file("gt.json"));
  auto cfg_narrow = cfg_wide;
  cfg_narrow.queue_capacity = 1;
  const auto wide = run_chain(cfg_wide, msgs);
  const auto narrow = run_chain(cfg_narrow, msgs);
  REQUIRE(wide.size() == narrow.size());
  for (std::size_t i = 0; i < wide.size(); ++i)
    CHECK(encode_message(wide[i]) == encode_message(narrow[i]));
}

TEST_CASE("end-to-end chain runs are byte-deterministic") {
  ksptest::TempDir tmp;
  const auto sim = small_dataset(2, 1, 0.002, 9);
  write_text_file(tmp.file("gt.json"), ground_truth_to_json(sim.ground_truth));
  const auto msgs = dataset_messages(sim);
  const auto cfg = basic_chain(tmp.file("gt.json"), "cg_sense", 2.0, 13);
  const auto a = count_outputs(run_chain(cfg, msgs)).report_text;
  const auto b = count_outputs(run_chain(cfg, msgs)).report_text;
  CHECK(a == b);
}

TEST_CASE("empty session produces a report with empty totals") {
  std::vector<GadgetMessage> input;
  input.push_back(ConfigMsg{R"({"num_pe": 32})"});
  input.push_back(CloseMsg{});
  ChainConfig cfg;
  cfg.gadgets = {gadget("accumulate"), gadget("recon"), gadget("detect"), gadget("report")};
  const auto outputs = run_chain(cfg, input);
  const auto c = count_outputs(outputs);
  CHECK(c.images == 0);
  CHECK(c.reports == 1);
  const auto doc = nlohmann::ordered_json::parse(c.report_text);
  CHECK(doc["tp"].get<int>() == 0);
  CHECK(doc["fp"].get<int>() == 0);
  CHECK(doc["fn"].get<int>() == 0);
  CHECK(doc["sensitivity"].is_null());
  CHECK(doc["slices"].empty());
}

TEST_CASE("external detections feed the chain in place of the blob detector") {
  ksptest::TempDir tmp;
  const auto sim = small_dataset(1, 1);
  write_text_file(tmp.file("gt.json"), ground_truth_to_json(sim.ground_truth));
  // Use the ground truth itself as the external detections (confidence 1).
  std::vector<Detection> dets;
  for (const auto& g : sim.ground_truth)
    dets.push_back(Detection{g.slice_index, g.box, 1.0, g.class_id});
  write_text_file(tmp.file("dets.json"), detections_to_json(dets));

  auto cfg = basic_chain(tmp.file("gt.json"));
  cfg.gadgets[2].detect.method = "external";
  cfg.gadgets[2].detect.detections_path = tmp.file("dets.json");
  const auto outputs = run_chain(cfg, dataset_messages(sim));
  const auto doc = nlohmann::ordered_json::parse(count_outputs(outputs).report_text);
  CHECK(doc["sensitivity"].get<double>() == 1.0);
  CHECK(doc["fp"].get<int>() == 0);
}

TEST_CASE("external reconstruction mode evaluates injected images") {
  ksptest::TempDir tmp;
  const auto sim = small_dataset(2, 1, 0.0, 17);
  write_text_file(tmp.file("gt.json"), ground_truth_to_json(sim.ground_truth));

  // Inject the ground-truth phantoms as the "externally reconstructed" images.
  for (const auto& ph : sim.phantoms)
    write_pgm16(fmt::format("{}/slice_{:03d}.pgm", tmp.path().string(), ph.slice_index), ph);

  auto cfg = basic_chain(tmp.file("gt.json"));
  cfg.gadgets[1].recon.method = "external";
  cfg.gadgets[1].recon.images_dir = tmp.path().string();
  cfg.gadgets[1].recon.mask.source = "stream";
  const auto outputs = run_chain(cfg, dataset_messages(sim));
  const auto doc = nlohmann::ordered_json::parse(count_outputs(outputs).report_text);
  CHECK(doc["sensitivity"].get<double>() == 1.0);
  CHECK(doc["provenance"]["recon"]["method"] == "external");
}
