#pragma once

#include <cstdint>
#include <string>

namespace ksp {

struct ClientSummary {
  std::size_t messages_sent = 0;  // including Config and Close
  std::size_t images = 0;
  std::size_t annotations = 0;
  std::size_t reports = 0;
};

// Replays a dataset file to the server and writes received images (PGM),
// detections (JSON) and the report (verbatim payload) into out_dir.
// Throws net_error on connection failure, premature_close_error when the
// server closes mid-session (partial outputs are preserved), and the wire
// decode errors on protocol violations.
ClientSummary run_client(const std::string& host, std::uint16_t port,
                         const std::string& dataset_path, const std::string& out_dir);

}  // namespace ksp
