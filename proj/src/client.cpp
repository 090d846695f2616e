#include "ksp/client.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstring>
#include <exception>
#include <filesystem>
#include <thread>

#include <fmt/format.h>

#include "ksp/detection.hpp"
#include "ksp/fileio.hpp"
#include "ksp/log.hpp"
#include "ksp/pgm.hpp"
#include "ksp/wire.hpp"
#include "net_util.hpp"

namespace ksp {
namespace {

int connect_to(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string service = std::to_string(port);
  const int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &res);
  if (rc != 0)
    throw net_error(fmt::format("cannot resolve {}: {}", host, gai_strerror(rc)));
  int fd = -1;
  std::string last_error = "no addresses";
  for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) {
      last_error = std::strerror(errno);
      continue;
    }
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    last_error = std::strerror(errno);
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0)
    throw net_error(fmt::format("connection to {}:{} failed: {}", host, port, last_error));
  return fd;
}

struct FdCloser {
  int fd;
  ~FdCloser() { ::close(fd); }
};

// Receives the server's messages; runs on its own thread so responses are
// drained while the dataset is still being streamed (the server applies
// backpressure end to end).
struct ResponseCollector {
  std::string out_dir;
  std::size_t images = 0;
  std::size_t annotations = 0;
  std::size_t reports = 0;
  std::vector<Detection> detections;
  bool closed = false;
  std::exception_ptr failure;

  void run(int fd) {
    try {
      FdSource src(fd);
      try {
        while (auto msg = read_message(src)) {
          if (std::holds_alternative<CloseMsg>(*msg)) {
            closed = true;
            break;
          }
          if (auto* img = std::get_if<ImageMsg>(&*msg)) {
            MagnitudeImage m;
            m.slice_index = img->slice_index;
            m.rows = img->rows;
            m.cols = img->cols;
            m.pixels = img->pixels;
            write_pgm16(fmt::format("{}/slice_{:03d}.pgm", out_dir, img->slice_index), m);
            ++images;
          } else if (auto* ann = std::get_if<AnnotationsMsg>(&*msg)) {
            for (const auto& b : ann->boxes) {
              Detection d;
              d.slice_index = ann->slice_index;
              d.box = BoundingBox{b.x0, b.y0, b.x1, b.y1};
              d.confidence = b.confidence;
              d.class_id = b.class_id;
              detections.push_back(d);
            }
            ++annotations;
          } else if (auto* rep = std::get_if<ReportMsg>(&*msg)) {
            write_text_file(out_dir + "/report.json", rep->text);
            ++reports;
          }
          // Config from the server is not part of the protocol; ignore if seen.
        }
      } catch (const net_error&) {
        throw premature_close_error("connection lost before the session finished");
      } catch (const incomplete_message_error&) {
        throw premature_close_error("server closed the connection inside a message");
      }
      if (!closed)
        throw premature_close_error(
            "server closed the connection before the session finished");
    } catch (...) {
      failure = std::current_exception();
    }
  }
};

}  // namespace

ClientSummary run_client(const std::string& host, std::uint16_t port,
                         const std::string& dataset_path, const std::string& out_dir) {
  const auto dataset = read_binary_file(dataset_path);
  std::filesystem::create_directories(out_dir);

  const int fd = connect_to(host, port);
  FdCloser closer{fd};
  log_info(fmt::format("connected to {}:{}", host, port));

  ResponseCollector collector;
  collector.out_dir = out_dir;
  std::thread receiver([&] { collector.run(fd); });

  ClientSummary summary;
  std::exception_ptr send_failure;
  try {
    MemorySource src(dataset);
    while (auto msg = read_message(src)) {
      send_all(fd, encode_message(*msg));
      ++summary.messages_sent;
    }
    log_info(fmt::format("sent {} messages", summary.messages_sent));
  } catch (const net_error&) {
    // The peer hung up while we were still streaming.
    send_failure = std::make_exception_ptr(premature_close_error(
        "server closed the connection while the dataset was being streamed"));
  } catch (...) {
    send_failure = std::current_exception();
  }
  // A failed send leaves the receiver blocked on a socket the server will
  // never close; shut the connection down so it can finish.
  if (send_failure) ::shutdown(fd, SHUT_RDWR);
  receiver.join();

  // Whatever happened, keep the partial outputs.
  write_text_file(out_dir + "/detections.json", detections_to_json(collector.detections));
  summary.images = collector.images;
  summary.annotations = collector.annotations;
  summary.reports = collector.reports;

  if (collector.failure) std::rethrow_exception(collector.failure);
  // A send failure after a clean Close means the server ended the session
  // early on purpose (e.g. an error report); the session still completed.
  if (send_failure && !collector.closed) std::rethrow_exception(send_failure);

  log_info(fmt::format("received {} images, {} annotation sets, {} reports",
                       summary.images, summary.annotations, summary.reports));
  return summary;
}

}  // namespace ksp
