#include "ksp/fileio.hpp"

#include <fstream>

#include <fmt/format.h>

#include "ksp/errors.hpp"

namespace ksp {

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error(fmt::format("cannot open {} for reading", path));
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return text;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error(fmt::format("cannot open {} for writing", path));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw io_error(fmt::format("write to {} failed", path));
}

std::vector<std::uint8_t> read_binary_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error(fmt::format("cannot open {} for reading", path));
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

void write_binary_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error(fmt::format("cannot open {} for writing", path));
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw io_error(fmt::format("write to {} failed", path));
}

}  // namespace ksp
