// Exercises the CLI surface end to end through the real binary
// (path passed as argv[1]). Plain assertions, one line per check.

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>

#include <fmt/format.h>
#include <json.hpp>

#include "ksp/detection.hpp"
#include "ksp/fileio.hpp"
#include "test_util.hpp"

namespace {

int failures = 0;

void check(bool ok, const std::string& what) {
  std::printf("[%s] %s\n", ok ? "ok" : "FAILED", what.c_str());
  if (!ok) ++failures;
}

int run(const std::string& cmd) {
  const int rc = std::system(cmd.c_str());
  if (rc == -1) return -1;
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: cli_tests <kspipe binary>\n");
    return 2;
  }
  const std::string bin = argv[1];
  ksptest::TempDir tmp;
  const std::string quiet = " >/dev/null 2>&1";

  // simulate writes the dataset and the ground-truth JSON.
  const std::string dataset = tmp.file("d.bin");
  const int sim_rc = run(fmt::format(
      "{} simulate --out {} --size 32 --coils 2 --slices 2 --lesions 1 --noise 0 --seed 1{}",
      bin, dataset, quiet));
  check(sim_rc == 0, "simulate exits 0");
  check(std::filesystem::exists(dataset), "simulate writes the dataset");
  const std::string gt = tmp.file("d.gt.json");
  check(std::filesystem::exists(gt), "simulate writes the ground truth");
  const auto gts = ksp::load_ground_truth(ksp::read_text_file(gt));
  check(gts.size() == 1, "ground truth carries one box");

  // recon + evaluate at rate 1 reproduce the phantom detection perfectly.
  const std::string rdir = tmp.file("recon_out");
  const int rec_rc = run(fmt::format(
      "{} recon --in {} --method zero_fill --rate 1 --seed 1 --out {}{}", bin, dataset,
      rdir, quiet));
  check(rec_rc == 0, "recon exits 0");
  check(std::filesystem::exists(rdir + "/slice_000.pgm"), "recon writes PGM images");
  check(std::filesystem::exists(rdir + "/metrics.json"), "recon writes metrics");
  check(std::filesystem::exists(rdir + "/detections.json"), "recon writes detections");

  const std::string report = tmp.file("report.json");
  const int ev_rc = run(fmt::format(
      "{} evaluate --pred {}/detections.json --gt {} --iou 0.5 --ssim {}/metrics.json --out {}{}",
      bin, rdir, gt, rdir, report, quiet));
  check(ev_rc == 0, "evaluate exits 0");
  {
    const auto doc = nlohmann::ordered_json::parse(ksp::read_text_file(report));
    check(doc["sensitivity"].get<double>() == 1.0, "rate-1 sensitivity is 1.0");
    check(doc["method"] == "zero_fill", "report records the method");
  }

  // evaluate with empty predictions: every ground truth becomes a FN.
  ksp::write_text_file(tmp.file("empty.json"), "[]\n");
  ksp::write_text_file(
      tmp.file("four.json"),
      R"([{"slice":0,"x0":1,"y0":1,"x1":3,"y1":3,"class":0},
          {"slice":1,"x0":1,"y0":1,"x1":3,"y1":3,"class":0},
          {"slice":2,"x0":1,"y0":1,"x1":3,"y1":3,"class":0},
          {"slice":3,"x0":1,"y0":1,"x1":3,"y1":3,"class":0}])");
  const std::string report2 = tmp.file("report2.json");
  const int ev2_rc = run(fmt::format(
      "{} evaluate --pred {} --gt {} --iou 0.5 --out {}{}", bin, tmp.file("empty.json"),
      tmp.file("four.json"), report2, quiet));
  check(ev2_rc == 0, "evaluate (empty predictions) exits 0");
  {
    const auto doc = nlohmann::ordered_json::parse(ksp::read_text_file(report2));
    check(doc["tp"].get<int>() == 0, "no true positives");
    check(doc["fn"].get<int>() == 4, "four false negatives");
    check(doc["sensitivity"].get<double>() == 0.0, "sensitivity 0.0");
  }

  // Usage errors exit 1; runtime errors exit 2.
  check(run(fmt::format("{} recon --bogus-flag{}", bin, quiet)) == 1,
        "unknown flag exits 1");
  check(run(fmt::format("{} frobnicate{}", bin, quiet)) == 1, "unknown subcommand exits 1");
  check(run(fmt::format("{}{}", bin, quiet)) == 1, "missing subcommand exits 1");
  check(run(fmt::format("{} recon --in {}/missing.bin --method zero_fill --out {}{}",
                        bin, tmp.path().string(), tmp.file("x"), quiet)) == 2,
        "missing input file exits 2");
  check(run(fmt::format("{} --help{}", bin, quiet)) == 0, "--help exits 0");

  if (failures == 0) std::printf("all cli checks passed\n");
  return failures == 0 ? 0 : 1;
}
