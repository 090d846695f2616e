#pragma once

#include <condition_variable>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "ksp/detection.hpp"
#include "ksp/recon.hpp"
#include "ksp/types.hpp"
#include "ksp/wire.hpp"

namespace ksp {

// ---- chain configuration ----------------------------------------------

struct MaskSourceCfg {
  std::string source = "stream";  // "stream" | "policy"
  double rate = 1.0;
  std::optional<double> acs_fraction;  // default depends on rate
  std::uint64_t seed = 0;
  bool per_slice_seed = true;
};

struct ReconGadgetCfg {
  std::string method = "zero_fill";  // zero_fill | cg_sense | external
  CgConfig cg;
  MaskSourceCfg mask;
  std::string images_dir;  // external mode: PGM images keyed by slice index
};

struct DetectGadgetCfg {
  std::string method = "blob";  // blob | external
  double intensity_threshold = 0.8;
  int min_area = 4;
  double confidence_threshold = 0.0;
  std::string detections_path;  // external mode
};

struct ReportGadgetCfg {
  std::string ground_truth_path;  // optional
  double iou_threshold = 0.5;
  int ssim_window = 7;
  double ssim_k1 = 0.01;
  double ssim_k2 = 0.03;
  std::string group_pair = "tp_fn";  // "tp_fn" | "fp_fn"
};

struct GadgetCfg {
  std::string kind;  // accumulate | recon | detect | report
  ReconGadgetCfg recon;
  DetectGadgetCfg detect;
  ReportGadgetCfg report;
};

struct ChainConfig {
  std::vector<GadgetCfg> gadgets;
  int queue_capacity = 64;

  static ChainConfig from_json_text(const std::string& text);
  static ChainConfig from_file(const std::string& path);
  std::string to_json_text() const;
  // Throws config_error naming the broken rule.
  void validate() const;
};

// ---- chain messages -----------------------------------------------------

// An assembled slice plus the mask realized from the acquisition stream.
struct SliceBundle {
  KSpaceSlice kspace;
  SamplingMask realized_mask;
};

struct ReconInfo {
  std::string method = "none";
  double rate = 1.0;
  std::string mask_lines;
  std::string mask_source = "stream";
  std::uint64_t seed = 0;
  double acs_fraction = 0.08;
  bool per_slice_seed = true;
  CgConfig cg;
};

struct DetectInfo {
  std::string method = "none";
  double intensity_threshold = 0.0;
  int min_area = 0;
  double confidence_threshold = 0.0;
};

// Per-slice result flowing from recon through detect into report.
struct SliceResult {
  int slice_index = 0;
  MagnitudeImage method_image;
  MagnitudeImage reference_image;
  ReconInfo recon;
  std::vector<Detection> detections;
  bool has_detections = false;
  DetectInfo detect;
};

// Wire messages plus in-process payloads; only wire messages cross the
// session boundary.
using ChainMessage = std::variant<GadgetMessage, SliceBundle, SliceResult>;

// ---- gadget interface ----------------------------------------------------

class Gadget {
 public:
  using Emit = std::function<void(ChainMessage)>;
  virtual ~Gadget() = default;
  virtual std::string_view name() const = 0;
  virtual void process(ChainMessage msg, const Emit& emit) = 0;
  virtual void flush(const Emit& emit) { (void)emit; }
};

// ---- bounded inter-stage queue -------------------------------------------

template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity) {}

  void push(T v) {
    std::unique_lock lock(mutex_);
    not_full_.wait(lock, [&] { return closed_ || items_.size() < capacity_; });
    if (closed_) return;  // dropped during teardown
    items_.push_back(std::move(v));
    not_empty_.notify_one();
  }

  std::optional<T> pop() {
    std::unique_lock lock(mutex_);
    not_empty_.wait(lock, [&] { return closed_ || !items_.empty(); });
    if (items_.empty()) return std::nullopt;
    T v = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return v;
  }

  void close() {
    std::lock_guard lock(mutex_);
    closed_ = true;
    not_empty_.notify_all();
    not_full_.notify_all();
  }

 private:
  std::mutex mutex_;
  std::condition_variable not_full_, not_empty_;
  std::deque<T> items_;
  std::size_t capacity_;
  bool closed_ = false;
};

// ---- chain runtime --------------------------------------------------------

// One gadget per thread, bounded queues between stages. Input ends with a
// Close message, which triggers each gadget's flush in order; outputs are
// the wire messages emitted by the last stage, ending with Close.
class Chain {
 public:
  explicit Chain(const ChainConfig& cfg);
  ~Chain();

  Chain(const Chain&) = delete;
  Chain& operator=(const Chain&) = delete;

  void push(GadgetMessage msg);
  // Abnormal teardown: closes all queues and unwinds the stages.
  void abort();
  // Next wire message from the last stage; nullopt once the chain is done.
  std::optional<GadgetMessage> pop_output();
  void join();

 private:
  std::vector<std::unique_ptr<Gadget>> gadgets_;
  std::vector<std::unique_ptr<BoundedQueue<ChainMessage>>> queues_;
  std::vector<std::thread> workers_;
};

std::unique_ptr<Gadget> make_gadget(const GadgetCfg& cfg);

// Convenience wrapper: feeds every input message (appending Close if absent)
// and returns all output wire messages including the final Close.
std::vector<GadgetMessage> run_chain(const ChainConfig& cfg,
                                     const std::vector<GadgetMessage>& input);

}  // namespace ksp
