#include "ksp/pgm.hpp"

#include <cctype>
#include <cmath>
#include <cstdint>

#include <fmt/format.h>

#include "ksp/errors.hpp"
#include "ksp/fileio.hpp"

namespace ksp {

void write_pgm16(const std::string& path, const MagnitudeImage& img) {
  const float max = img.max_pixel();
  const double scale = max > 0.0f ? max : 1.0;
  std::string header = fmt::format("P5\n# scale={:.17g}\n{} {}\n65535\n", scale,
                                   img.cols, img.rows);
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  bytes.reserve(bytes.size() + img.pixels.size() * 2);
  for (float p : img.pixels) {
    const long v = std::lround(static_cast<double>(p) / scale * 65535.0);
    const std::uint16_t s = static_cast<std::uint16_t>(std::clamp(v, 0L, 65535L));
    bytes.push_back(static_cast<std::uint8_t>(s >> 8));  // big-endian
    bytes.push_back(static_cast<std::uint8_t>(s & 0xFF));
  }
  write_binary_file(path, bytes);
}

namespace {

struct TokenReader {
  const std::vector<std::uint8_t>& bytes;
  std::size_t pos = 0;
  double scale = 1.0;

  std::string next_token() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        std::size_t end = pos;
        while (end < bytes.size() && bytes[end] != '\n') ++end;
        const std::string comment(bytes.begin() + pos, bytes.begin() + end);
        if (const auto at = comment.find("scale="); at != std::string::npos)
          scale = std::stod(comment.substr(at + 6));
        pos = end;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(bytes[pos]) && bytes[pos] != '#') ++pos;
    if (start == pos) throw io_error("pgm: truncated header");
    return std::string(bytes.begin() + start, bytes.begin() + pos);
  }
};

}  // namespace

MagnitudeImage read_pgm16(const std::string& path) {
  const auto bytes = read_binary_file(path);
  TokenReader tr{bytes};
  if (tr.next_token() != "P5") throw io_error(fmt::format("{}: not a binary PGM", path));
  const int cols = std::stoi(tr.next_token());
  const int rows = std::stoi(tr.next_token());
  const int maxval = std::stoi(tr.next_token());
  if (maxval != 65535)
    throw io_error(fmt::format("{}: expected 16-bit PGM (maxval 65535), got {}", path, maxval));
  if (rows < 1 || cols < 1) throw io_error(fmt::format("{}: bad dimensions", path));
  // Exactly one whitespace byte separates the header from the samples.
  std::size_t data_at = tr.pos + 1;
  const std::size_t need = static_cast<std::size_t>(rows) * cols * 2;
  if (bytes.size() < data_at + need)
    throw io_error(fmt::format("{}: truncated pixel data", path));
  MagnitudeImage img;
  img.rows = rows;
  img.cols = cols;
  img.pixels.resize(static_cast<std::size_t>(rows) * cols);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const std::uint16_t v = static_cast<std::uint16_t>(bytes[data_at + 2 * i]) << 8 |
                            bytes[data_at + 2 * i + 1];
    img.pixels[i] = static_cast<float>(v / 65535.0 * tr.scale);
  }
  return img;
}

}  // namespace ksp
