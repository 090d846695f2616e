#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "ksp/client.hpp"
#include "ksp/detection.hpp"
#include "ksp/errors.hpp"
#include "ksp/fileio.hpp"
#include "ksp/log.hpp"
#include "ksp/pgm.hpp"
#include "ksp/phantom.hpp"
#include "ksp/pipeline.hpp"
#include "ksp/sampling.hpp"
#include "ksp/server.hpp"
#include "ksp/wire.hpp"

namespace {

std::string ground_truth_path_for(const std::string& dataset_path) {
  std::filesystem::path p(dataset_path);
  p.replace_extension();
  return p.string() + ".gt.json";
}

std::pair<std::string, std::uint16_t> split_address(const std::string& addr) {
  const auto at = addr.rfind(':');
  if (at == std::string::npos || at + 1 >= addr.size())
    throw CLI::ValidationError("--addr", "expected HOST:PORT");
  const std::string host = addr.substr(0, at);
  const int port = std::stoi(addr.substr(at + 1));
  if (port < 1 || port > 65535)
    throw CLI::ValidationError("--addr", "port out of range");
  return {host, static_cast<std::uint16_t>(port)};
}

struct SimulateArgs {
  std::string out;
  int size = 128;
  int coils = 8;
  int slices = 16;
  int lesions = 8;
  double noise = 0.002;
  std::uint64_t seed = 1;
};

void cmd_simulate(const SimulateArgs& a) {
  ksp::SimulationConfig cfg;
  cfg.size = a.size;
  cfg.num_coils = a.coils;
  cfg.num_slices = a.slices;
  cfg.num_lesions = a.lesions;
  cfg.noise_sigma = a.noise;
  cfg.seed = a.seed;
  const auto sim = ksp::simulate_dataset(cfg);
  ksp::write_dataset(sim.slices, sim.config_text, a.out);
  const std::string gt_path = ground_truth_path_for(a.out);
  ksp::write_text_file(gt_path, ksp::ground_truth_to_json(sim.ground_truth));
  fmt::print("dataset: {}\nground_truth: {} ({} boxes)\n", a.out, gt_path,
             sim.ground_truth.size());
}

struct ReconArgs {
  std::string in;
  std::string method = "zero_fill";
  double rate = 1.0;
  std::optional<double> acs;
  std::uint64_t seed = 0;
  std::string out;
  double lambda = 0.01;
  int max_iters = 50;
  double rel_tol = 1e-6;
  double threshold = 0.8;
  int min_area = 4;
};

ksp::ChainConfig recon_chain_config(const ReconArgs& a) {
  ksp::ChainConfig cfg;
  ksp::GadgetCfg acc;
  acc.kind = "accumulate";
  ksp::GadgetCfg recon;
  recon.kind = "recon";
  recon.recon.method = a.method;
  recon.recon.cg = ksp::CgConfig{a.lambda, a.max_iters, a.rel_tol};
  recon.recon.mask.source = "policy";
  recon.recon.mask.rate = a.rate;
  recon.recon.mask.acs_fraction = a.acs;
  recon.recon.mask.seed = a.seed;
  recon.recon.mask.per_slice_seed = true;
  ksp::GadgetCfg detect;
  detect.kind = "detect";
  detect.detect.method = "blob";
  detect.detect.intensity_threshold = a.threshold;
  detect.detect.min_area = a.min_area;
  ksp::GadgetCfg report;
  report.kind = "report";
  cfg.gadgets = {acc, recon, detect, report};
  return cfg;
}

void cmd_recon(const ReconArgs& a) {
  const auto bytes = ksp::read_binary_file(a.in);
  std::vector<ksp::GadgetMessage> input;
  {
    ksp::MemorySource src(bytes);
    while (auto msg = ksp::read_message(src)) input.push_back(std::move(*msg));
  }
  std::filesystem::create_directories(a.out);
  const auto outputs = ksp::run_chain(recon_chain_config(a), input);

  std::vector<ksp::Detection> detections;
  bool wrote_report = false;
  for (const auto& msg : outputs) {
    if (const auto* img = std::get_if<ksp::ImageMsg>(&msg)) {
      ksp::MagnitudeImage m;
      m.slice_index = img->slice_index;
      m.rows = img->rows;
      m.cols = img->cols;
      m.pixels = img->pixels;
      ksp::write_pgm16(fmt::format("{}/slice_{:03d}.pgm", a.out, img->slice_index), m);
    } else if (const auto* ann = std::get_if<ksp::AnnotationsMsg>(&msg)) {
      for (const auto& b : ann->boxes) {
        ksp::Detection d;
        d.slice_index = ann->slice_index;
        d.box = ksp::BoundingBox{b.x0, b.y0, b.x1, b.y1};
        d.confidence = b.confidence;
        d.class_id = b.class_id;
        detections.push_back(d);
      }
    } else if (const auto* rep = std::get_if<ksp::ReportMsg>(&msg)) {
      ksp::write_text_file(a.out + "/metrics.json", rep->text);
      wrote_report = true;
    }
  }
  ksp::write_text_file(a.out + "/detections.json", ksp::detections_to_json(detections));
  if (!wrote_report) throw std::runtime_error("recon: chain produced no report");
  fmt::print("recon outputs written to {}\n", a.out);
}

struct EvaluateArgs {
  std::string pred;
  std::string gt;
  double iou = 0.5;
  std::string ssim;
  std::string out;
};

void cmd_evaluate(const EvaluateArgs& a) {
  const auto dets = ksp::load_external_detections(ksp::read_text_file(a.pred));
  const auto gts = ksp::load_ground_truth(ksp::read_text_file(a.gt));

  std::string method = "external";
  double rate = 1.0;
  std::string group_pair = "tp_fn";
  nlohmann::ordered_json prov = nlohmann::ordered_json::object();
  std::map<int, ksp::SliceMetrics> metrics;
  if (!a.ssim.empty()) {
    const auto doc = nlohmann::ordered_json::parse(ksp::read_text_file(a.ssim));
    const auto mdoc = ksp::report_from_json(doc);
    method = mdoc.method;
    rate = mdoc.rate;
    group_pair = mdoc.group_pair;
    prov = mdoc.provenance;
    for (const auto& rec : mdoc.slices)
      metrics[rec.slice] = ksp::SliceMetrics{rec.ssim, rec.nmse, rec.mask};
  }
  prov["iou_threshold"] = a.iou;

  const auto outcomes = ksp::match_detections(dets, gts, a.iou);
  const auto report =
      ksp::aggregate_report(outcomes, metrics, method, rate, prov, group_pair);
  ksp::write_text_file(a.out, ksp::report_to_text(report));
  fmt::print("tp={} fp={} fn={} sensitivity={}\n", report.tp, report.fp, report.fn,
             report.sensitivity ? fmt::format("{}", *report.sensitivity) : "n/a");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Streaming k-space reconstruction and lesion-detection pipeline"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "Generate a synthetic phantom dataset");
  sim_cmd->add_option("--out", sim.out, "Output dataset file")->required();
  sim_cmd->add_option("--size", sim.size, "Matrix size (rows = cols)");
  sim_cmd->add_option("--coils", sim.coils, "Number of receive coils");
  sim_cmd->add_option("--slices", sim.slices, "Number of slices");
  sim_cmd->add_option("--lesions", sim.lesions, "Total lesions across slices");
  sim_cmd->add_option("--noise", sim.noise, "Complex-noise sigma relative to center line");
  sim_cmd->add_option("--seed", sim.seed, "Master seed");

  std::uint16_t serve_port = 9002;
  std::string serve_config;
  auto* serve_cmd = app.add_subcommand("serve", "Run the reconstruction server");
  serve_cmd->add_option("--port", serve_port, "TCP port");
  serve_cmd->add_option("--config", serve_config, "Chain configuration JSON")->required();

  std::string send_addr, send_in, send_out;
  auto* send_cmd = app.add_subcommand("send", "Replay a dataset to a server");
  send_cmd->add_option("--addr", send_addr, "Server address HOST:PORT")->required();
  send_cmd->add_option("--in", send_in, "Dataset file")->required();
  send_cmd->add_option("--out", send_out, "Output directory")->required();

  ReconArgs rec;
  auto* rec_cmd = app.add_subcommand("recon", "Offline reconstruction of a dataset");
  rec_cmd->add_option("--in", rec.in, "Dataset file")->required();
  rec_cmd->add_option("--method", rec.method, "Reconstruction method")
      ->required()
      ->check(CLI::IsMember({"zero_fill", "cg_sense"}));
  rec_cmd->add_option("--rate", rec.rate, "Acceleration rate");
  rec_cmd->add_option("--acs", rec.acs, "ACS fraction (default 0.08, 0.04 at rate >= 6)");
  rec_cmd->add_option("--seed", rec.seed, "Mask seed");
  rec_cmd->add_option("--out", rec.out, "Output directory")->required();
  rec_cmd->add_option("--lambda", rec.lambda, "Tikhonov weight (cg_sense)");
  rec_cmd->add_option("--max-iters", rec.max_iters, "CG iteration cap");
  rec_cmd->add_option("--rel-tol", rec.rel_tol, "CG relative residual tolerance");
  rec_cmd->add_option("--threshold", rec.threshold, "Blob intensity threshold");
  rec_cmd->add_option("--min-area", rec.min_area, "Blob minimum area");

  EvaluateArgs ev;
  auto* ev_cmd = app.add_subcommand("evaluate", "Match detections against ground truth");
  ev_cmd->add_option("--pred", ev.pred, "Detections JSON")->required();
  ev_cmd->add_option("--gt", ev.gt, "Ground-truth JSON")->required();
  ev_cmd->add_option("--iou", ev.iou, "IoU threshold");
  ev_cmd->add_option("--ssim", ev.ssim, "Per-slice metrics JSON from recon");
  ev_cmd->add_option("--out", ev.out, "Report JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (sim_cmd->parsed()) {
      cmd_simulate(sim);
    } else if (serve_cmd->parsed()) {
      ksp::run_server(serve_port, ksp::ChainConfig::from_file(serve_config));
    } else if (send_cmd->parsed()) {
      const auto [host, port] = split_address(send_addr);
      const auto summary = ksp::run_client(host, port, send_in, send_out);
      fmt::print("{{\"sent\": {}, \"images\": {}, \"annotations\": {}, \"reports\": {}}}\n",
                 summary.messages_sent, summary.images, summary.annotations,
                 summary.reports);
    } else if (rec_cmd->parsed()) {
      cmd_recon(rec);
    } else if (ev_cmd->parsed()) {
      cmd_evaluate(ev);
    }
  } catch (const std::exception& e) {
    ksp::log_error(e.what());
    return 2;
  }
  return 0;
}
