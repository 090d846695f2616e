#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ksp/types.hpp"

namespace ksp {

// Wire message ids; the variant order below matches.
enum : std::uint16_t {
  kMsgClose = 0,
  kMsgConfig = 1,
  kMsgAcquisition = 2,
  kMsgImage = 3,
  kMsgAnnotations = 4,
  kMsgReport = 5,
};

// Acquisition flag bits.
inline constexpr std::uint16_t kFlagAcsLine = 1u << 0;
inline constexpr std::uint16_t kFlagLastLine = 1u << 1;

struct CloseMsg {};

struct ConfigMsg {
  std::string text;  // UTF-8
};

// One phase-encode line of multi-coil data; samples are coil-major.
struct AcquisitionMsg {
  std::uint32_t scan_counter = 0;
  std::uint16_t slice_index = 0;
  std::uint16_t line_index = 0;
  std::uint16_t num_coils = 0;
  std::uint16_t flags = 0;
  std::uint32_t num_samples = 0;
  std::vector<cfloat> samples;  // num_coils * num_samples
};

struct ImageMsg {
  std::uint16_t slice_index = 0;
  std::uint16_t rows = 0;
  std::uint16_t cols = 0;
  std::uint16_t pixel_type = 0;  // 0 = f32 magnitude
  std::vector<float> pixels;     // row-major
};

struct AnnotationBox {
  float x0 = 0, y0 = 0, x1 = 0, y1 = 0, confidence = 0;
  std::uint16_t class_id = 0;
};

struct AnnotationsMsg {
  std::uint16_t slice_index = 0;
  std::vector<AnnotationBox> boxes;
};

struct ReportMsg {
  std::string text;  // UTF-8
};

using GadgetMessage =
    std::variant<CloseMsg, ConfigMsg, AcquisitionMsg, ImageMsg, AnnotationsMsg, ReportMsg>;

std::uint16_t message_id(const GadgetMessage& msg);

// Little-endian header (u16 id, u32 payload length) followed by the payload.
std::vector<std::uint8_t> encode_message(const GadgetMessage& msg);

// Pull-based byte stream; read returns the number of bytes produced, 0 at EOF.
class ByteSource {
 public:
  virtual ~ByteSource() = default;
  virtual std::size_t read(std::uint8_t* dst, std::size_t n) = 0;
};

class MemorySource : public ByteSource {
 public:
  explicit MemorySource(std::vector<std::uint8_t> bytes) : bytes_(std::move(bytes)) {}
  std::size_t read(std::uint8_t* dst, std::size_t n) override;
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::vector<std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

// Next message, or nullopt at a clean end-of-stream (EOF exactly at a header
// boundary). Throws protocol_error on unknown ids, incomplete_message_error
// on truncation, malformed_message_error on header/payload inconsistencies.
std::optional<GadgetMessage> read_message(ByteSource& src);

// As read_message but a clean EOF is also an incomplete_message_error.
GadgetMessage decode_message(ByteSource& src);

}  // namespace ksp
