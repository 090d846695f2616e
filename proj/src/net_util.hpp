#pragma once

#include <cerrno>
#include <cstring>

#include <sys/socket.h>
#include <unistd.h>

#include <fmt/format.h>

#include "ksp/errors.hpp"
#include "ksp/wire.hpp"

namespace ksp {

// ByteSource over a connected socket.
class FdSource : public ByteSource {
 public:
  explicit FdSource(int fd) : fd_(fd) {}

  std::size_t read(std::uint8_t* dst, std::size_t n) override {
    while (true) {
      const ssize_t r = ::recv(fd_, dst, n, 0);
      if (r >= 0) return static_cast<std::size_t>(r);
      if (errno == EINTR) continue;
      throw net_error(fmt::format("recv failed: {}", std::strerror(errno)));
    }
  }

 private:
  int fd_;
};

inline void send_all(int fd, const std::vector<std::uint8_t>& bytes) {
  std::size_t sent = 0;
  while (sent < bytes.size()) {
    const ssize_t r = ::send(fd, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
    if (r < 0) {
      if (errno == EINTR) continue;
      throw net_error(fmt::format("send failed: {}", std::strerror(errno)));
    }
    sent += static_cast<std::size_t>(r);
  }
}

}  // namespace ksp
