#include "ksp/server.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstring>

#include <fmt/format.h>
#include <json.hpp>

#include "ksp/log.hpp"
#include "net_util.hpp"

namespace ksp {
namespace {

GadgetMessage session_error_report(const std::string& what) {
  nlohmann::ordered_json doc;
  doc["error"] = what;
  return ReportMsg{doc.dump(2) + "\n"};
}

}  // namespace

Server::Server(std::uint16_t port, ChainConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0)
    throw net_error(fmt::format("socket failed: {}", std::strerror(errno)));
  const int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_ANY);
  addr.sin_port = htons(port);
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0) {
    const std::string err = std::strerror(errno);
    ::close(listen_fd_);
    throw net_error(fmt::format("bind to port {} failed: {}", port, err));
  }
  if (::listen(listen_fd_, 16) < 0) {
    const std::string err = std::strerror(errno);
    ::close(listen_fd_);
    throw net_error(fmt::format("listen failed: {}", err));
  }
  socklen_t len = sizeof(addr);
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

Server::~Server() { stop(); }

void Server::start() {
  if (running_) return;
  running_ = true;
  accept_thread_ = std::thread([this] { accept_loop(); });
  log_info(fmt::format("server listening on port {}", port_));
}

void Server::stop() {
  running_ = false;
  // Unblock accept() first; the fd is closed only after the accept thread
  // has joined, so it is never reused under a concurrent accept.
  if (listen_fd_ >= 0) ::shutdown(listen_fd_, SHUT_RDWR);
  if (accept_thread_.joinable()) accept_thread_.join();
  if (listen_fd_ >= 0) {
    ::close(listen_fd_);
    listen_fd_ = -1;
  }
  std::vector<std::thread> sessions;
  {
    std::lock_guard lock(sessions_mutex_);
    sessions.swap(sessions_);
  }
  for (auto& s : sessions)
    if (s.joinable()) s.join();
}

void Server::serve_forever() {
  start();
  accept_thread_.join();
}

void Server::accept_loop() {
  while (running_) {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (!running_ || errno == EBADF || errno == EINVAL) break;
      if (errno == EINTR) continue;
      log_error(fmt::format("accept failed: {}", std::strerror(errno)));
      break;
    }
    std::lock_guard lock(sessions_mutex_);
    sessions_.emplace_back([this, fd] { session(fd); });
  }
}

void Server::session(int fd) {
  log_debug("session opened");
  std::unique_ptr<Chain> chain;
  try {
    chain = std::make_unique<Chain>(cfg_);
  } catch (const std::exception& e) {
    log_error(fmt::format("chain build failed: {}", e.what()));
    try {
      send_all(fd, encode_message(session_error_report(
                       fmt::format("chain build failed: {}", e.what()))));
      send_all(fd, encode_message(GadgetMessage{CloseMsg{}}));
    } catch (const net_error&) {
    }
    ::close(fd);
    return;
  }

  std::thread writer([&] {
    try {
      while (auto msg = chain->pop_output()) {
        send_all(fd, encode_message(*msg));
        if (std::holds_alternative<CloseMsg>(*msg)) break;
      }
    } catch (const net_error& e) {
      log_error(fmt::format("session write failed: {}", e.what()));
      chain->abort();
    }
  });

  bool failed = false;
  std::string failure;
  try {
    FdSource src(fd);
    int phase = 0;  // 0 = expect config, 1 = acquisitions, 2 = closed
    while (auto msg = read_message(src)) {
      if (phase == 0) {
        if (!std::holds_alternative<ConfigMsg>(*msg))
          throw protocol_error("session must begin with a config message");
        phase = 1;
        chain->push(std::move(*msg));
        continue;
      }
      if (std::holds_alternative<ConfigMsg>(*msg))
        throw protocol_error("duplicate config message");
      if (!std::holds_alternative<AcquisitionMsg>(*msg) &&
          !std::holds_alternative<CloseMsg>(*msg))
        throw protocol_error(
            fmt::format("unexpected message id {} from client", message_id(*msg)));
      const bool was_close = std::holds_alternative<CloseMsg>(*msg);
      chain->push(std::move(*msg));
      if (was_close) {
        phase = 2;
        break;
      }
    }
    if (phase != 2) throw protocol_error("client ended the session without a close message");
  } catch (const std::exception& e) {
    failed = true;
    failure = e.what();
  }

  if (failed) {
    log_error(fmt::format("session protocol failure: {}", failure));
    chain->abort();
    writer.join();
    try {
      send_all(fd, encode_message(session_error_report(failure)));
      send_all(fd, encode_message(GadgetMessage{CloseMsg{}}));
    } catch (const net_error&) {
    }
  } else {
    writer.join();
  }
  ::close(fd);
  log_debug("session closed");
}

void run_server(std::uint16_t port, const ChainConfig& cfg) {
  Server server(port, cfg);
  server.serve_forever();
}

}  // namespace ksp
