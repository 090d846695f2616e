#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

#include "ksp/pipeline.hpp"

namespace ksp {

// TCP reconstruction server. Each connection gets a freshly built chain;
// sessions expect Config, then Acquisitions, then Close, and receive the
// chain's Image/Annotations/Report messages followed by Close.
class Server {
 public:
  // port 0 binds an ephemeral port (see port() for the actual one).
  Server(std::uint16_t port, ChainConfig cfg);
  ~Server();

  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  std::uint16_t port() const { return port_; }
  void start();
  void stop();
  void serve_forever();

 private:
  void accept_loop();
  void session(int fd);

  ChainConfig cfg_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::thread accept_thread_;
  std::mutex sessions_mutex_;
  std::vector<std::thread> sessions_;
  std::atomic<bool> running_{false};
};

// Blocks serving sessions until the process is stopped.
void run_server(std::uint16_t port, const ChainConfig& cfg);

}  // namespace ksp
