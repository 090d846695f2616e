#include "ksp/wire.hpp"

#include <bit>
#include <cstring>

#include <fmt/format.h>

#include "ksp/errors.hpp"

namespace ksp {
namespace {

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i)
    out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

void put_f32(std::vector<std::uint8_t>& out, float v) {
  put_u32(out, std::bit_cast<std::uint32_t>(v));
}

struct Cursor {
  const std::uint8_t* p;
  std::size_t size;
  std::size_t pos = 0;

  std::uint16_t u16() {
    const std::uint16_t v = static_cast<std::uint16_t>(p[pos]) |
                            static_cast<std::uint16_t>(p[pos + 1]) << 8;
    pos += 2;
    return v;
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
};

}  // namespace

std::uint16_t message_id(const GadgetMessage& msg) {
  return static_cast<std::uint16_t>(msg.index());
}

std::vector<std::uint8_t> encode_message(const GadgetMessage& msg) {
  std::vector<std::uint8_t> payload;
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, CloseMsg>) {
          // empty payload
        } else if constexpr (std::is_same_v<T, ConfigMsg> || std::is_same_v<T, ReportMsg>) {
          payload.assign(m.text.begin(), m.text.end());
        } else if constexpr (std::is_same_v<T, AcquisitionMsg>) {
          const std::size_t expect =
              static_cast<std::size_t>(m.num_coils) * m.num_samples;
          if (m.samples.size() != expect)
            throw std::invalid_argument(
                fmt::format("encode_message: acquisition carries {} samples, expected {}",
                            m.samples.size(), expect));
          payload.reserve(16 + 8 * expect);
          put_u32(payload, m.scan_counter);
          put_u16(payload, m.slice_index);
          put_u16(payload, m.line_index);
          put_u16(payload, m.num_coils);
          put_u16(payload, m.flags);
          put_u32(payload, m.num_samples);
          for (const auto& s : m.samples) {
            put_f32(payload, s.real());
            put_f32(payload, s.imag());
          }
        } else if constexpr (std::is_same_v<T, ImageMsg>) {
          const std::size_t expect = static_cast<std::size_t>(m.rows) * m.cols;
          if (m.pixels.size() != expect)
            throw std::invalid_argument(
                fmt::format("encode_message: image carries {} pixels, expected {}",
                            m.pixels.size(), expect));
          payload.reserve(8 + 4 * expect);
          put_u16(payload, m.slice_index);
          put_u16(payload, m.rows);
          put_u16(payload, m.cols);
          put_u16(payload, m.pixel_type);
          for (float px : m.pixels) put_f32(payload, px);
        } else if constexpr (std::is_same_v<T, AnnotationsMsg>) {
          payload.reserve(4 + 22 * m.boxes.size());
          put_u16(payload, m.slice_index);
          put_u16(payload, static_cast<std::uint16_t>(m.boxes.size()));
          for (const auto& b : m.boxes) {
            put_f32(payload, b.x0);
            put_f32(payload, b.y0);
            put_f32(payload, b.x1);
            put_f32(payload, b.y1);
            put_f32(payload, b.confidence);
            put_u16(payload, b.class_id);
          }
        }
      },
      msg);

  std::vector<std::uint8_t> out;
  out.reserve(6 + payload.size());
  put_u16(out, message_id(msg));
  put_u32(out, static_cast<std::uint32_t>(payload.size()));
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

std::size_t MemorySource::read(std::uint8_t* dst, std::size_t n) {
  const std::size_t take = std::min(n, bytes_.size() - pos_);
  if (take == 0) return 0;
  std::memcpy(dst, bytes_.data() + pos_, take);
  pos_ += take;
  return take;
}

namespace {

std::size_t read_exact(ByteSource& src, std::uint8_t* dst, std::size_t n) {
  std::size_t got = 0;
  while (got < n) {
    const std::size_t r = src.read(dst + got, n - got);
    if (r == 0) break;
    got += r;
  }
  return got;
}

GadgetMessage parse_payload(std::uint16_t id, const std::vector<std::uint8_t>& payload) {
  Cursor cur{payload.data(), payload.size()};
  switch (id) {
    case kMsgClose:
      if (!payload.empty())
        throw malformed_message_error(fmt::format(
            "close message with non-empty payload ({} bytes)", payload.size()));
      return CloseMsg{};
    case kMsgConfig:
      return ConfigMsg{std::string(payload.begin(), payload.end())};
    case kMsgReport:
      return ReportMsg{std::string(payload.begin(), payload.end())};
    case kMsgAcquisition: {
      if (payload.size() < 16)
        throw malformed_message_error(fmt::format(
            "acquisition payload too short ({} bytes, need at least 16)", payload.size()));
      AcquisitionMsg m;
      m.scan_counter = cur.u32();
      m.slice_index = cur.u16();
      m.line_index = cur.u16();
      m.num_coils = cur.u16();
      m.flags = cur.u16();
      m.num_samples = cur.u32();
      const std::uint64_t count =
          static_cast<std::uint64_t>(m.num_coils) * m.num_samples;
      if (payload.size() != 16 + 8 * count)
        throw malformed_message_error(
            fmt::format("acquisition payload length {} != computed size {}",
                        payload.size(), 16 + 8 * count));
      m.samples.resize(count);
      for (auto& s : m.samples) {
        const float re = cur.f32();
        const float im = cur.f32();
        s = {re, im};
      }
      return m;
    }
    case kMsgImage: {
      if (payload.size() < 8)
        throw malformed_message_error(fmt::format(
            "image payload too short ({} bytes, need at least 8)", payload.size()));
      ImageMsg m;
      m.slice_index = cur.u16();
      m.rows = cur.u16();
      m.cols = cur.u16();
      m.pixel_type = cur.u16();
      if (m.pixel_type != 0)
        throw malformed_message_error(
            fmt::format("unsupported pixel type {}", m.pixel_type));
      const std::uint64_t count = static_cast<std::uint64_t>(m.rows) * m.cols;
      if (payload.size() != 8 + 4 * count)
        throw malformed_message_error(
            fmt::format("image payload length {} != computed size {}", payload.size(),
                        8 + 4 * count));
      m.pixels.resize(count);
      for (auto& px : m.pixels) px = cur.f32();
      return m;
    }
    case kMsgAnnotations: {
      if (payload.size() < 4)
        throw malformed_message_error(fmt::format(
            "annotations payload too short ({} bytes, need at least 4)", payload.size()));
      AnnotationsMsg m;
      m.slice_index = cur.u16();
      const std::uint16_t count = cur.u16();
      if (payload.size() != 4 + 22ull * count)
        throw malformed_message_error(
            fmt::format("annotations payload length {} != computed size {}",
                        payload.size(), 4 + 22ull * count));
      m.boxes.resize(count);
      for (auto& b : m.boxes) {
        b.x0 = cur.f32();
        b.y0 = cur.f32();
        b.x1 = cur.f32();
        b.y1 = cur.f32();
        b.confidence = cur.f32();
        b.class_id = cur.u16();
      }
      return m;
    }
    default:
      throw protocol_error(fmt::format("unknown message id {}", id));
  }
}

}  // namespace

std::optional<GadgetMessage> read_message(ByteSource& src) {
  std::uint8_t header[6];
  const std::size_t got = read_exact(src, header, 6);
  if (got == 0) return std::nullopt;
  if (got < 6)
    throw incomplete_message_error(
        fmt::format("stream ended inside a message header ({} of 6 bytes)", got));
  const std::uint16_t id = static_cast<std::uint16_t>(header[0]) |
                           static_cast<std::uint16_t>(header[1]) << 8;
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i)
    len |= static_cast<std::uint32_t>(header[2 + i]) << (8 * i);
  if (id > kMsgReport) throw protocol_error(fmt::format("unknown message id {}", id));
  // Sanity cap before allocating; no legitimate message comes close.
  constexpr std::uint32_t kMaxPayload = 1u << 30;
  if (len > kMaxPayload)
    throw malformed_message_error(
        fmt::format("payload length {} exceeds the 1 GiB limit", len));

  std::vector<std::uint8_t> payload(len);
  const std::size_t pgot = read_exact(src, payload.data(), len);
  if (pgot < len)
    throw incomplete_message_error(fmt::format(
        "stream ended inside a message payload ({} of {} bytes, id {})", pgot, len, id));
  return parse_payload(id, payload);
}

GadgetMessage decode_message(ByteSource& src) {
  auto msg = read_message(src);
  if (!msg)
    throw incomplete_message_error("stream ended before a message header");
  return *msg;
}

}  // namespace ksp
