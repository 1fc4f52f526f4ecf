#include "latefuse/codec.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

#include "zstd_shim.hpp"

namespace latefuse::wire {

namespace {

constexpr std::size_t kMaxDecompressed = 1u << 20;

class Writer {
 public:
  explicit Writer(std::vector<std::uint8_t>& out) : out_(out) {}

  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { le(v, 2); }
  void u64(std::uint64_t v) { le(v, 8); }
  void i16(std::int16_t v) { le(static_cast<std::uint16_t>(v), 2); }
  void i32(std::int32_t v) { le(static_cast<std::uint32_t>(v), 4); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v), 8); }

 private:
  void le(std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t>& out_;
};

class Reader {
 public:
  Reader(std::span<const std::uint8_t> data, std::size_t base) : data_(data), base_(base) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(le(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(le(2)); }
  std::uint64_t u64() { return le(8); }
  std::int16_t i16() { return static_cast<std::int16_t>(static_cast<std::uint16_t>(le(2))); }
  std::int32_t i32() { return static_cast<std::int32_t>(static_cast<std::uint32_t>(le(4))); }
  double f64() { return std::bit_cast<double>(le(8)); }

  std::size_t offset() const { return base_ + pos_; }
  bool done() const { return pos_ == data_.size(); }

 private:
  std::uint64_t le(std::size_t bytes) {
    if (data_.size() - pos_ < bytes) throw ParseError(offset(), "truncated frame");
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < bytes; ++i) v |= std::uint64_t{data_[pos_ + i]} << (8 * i);
    pos_ += bytes;
    return v;
  }
  std::span<const std::uint8_t> data_;
  std::size_t base_;
  std::size_t pos_ = 0;
};

template <typename Int>
Int quantize(double value, double quantum, const std::string& what) {
  const double q = std::round(value / quantum);
  if (!std::isfinite(q) || q < static_cast<double>(std::numeric_limits<Int>::min()) ||
      q > static_cast<double>(std::numeric_limits<Int>::max()))
    throw RangeError(what + " is outside the quantized range");
  return static_cast<Int>(q);
}

std::uint16_t quantize_variance(double v) {
  const double q = std::round(v * 1000.0);
  if (!(q >= 1.0)) return 1;
  return static_cast<std::uint16_t>(std::min(q, 65535.0));
}

}  // namespace

std::vector<std::uint8_t> encode_payload(std::uint16_t sender_id, Timestamp gps_time,
                                         const Eigen::Vector2d& anchor,
                                         std::span<const SharedAgent> agents) {
  if (agents.size() > std::numeric_limits<std::uint16_t>::max())
    throw RangeError("too many agents for one message");
  if (!anchor.allFinite()) throw RangeError("message anchor must be finite");

  std::vector<std::uint8_t> out;
  out.reserve(kPayloadHeaderBytes + agents.size() * (kAgentHeaderBytes + 20 * kWaypointBytes));
  Writer w(out);
  w.u8(kForecastMessage);
  w.u16(sender_id);
  w.u64(static_cast<std::uint64_t>(gps_time.micros()));
  w.f64(anchor.x());
  w.f64(anchor.y());
  w.u16(static_cast<std::uint16_t>(agents.size()));

  for (std::size_t a = 0; a < agents.size(); ++a) {
    const auto& agent = agents[a];
    const std::string name = "agent " + std::to_string(a);
    if (agent.traj.size() > 255) throw RangeError(name + " has more than 255 waypoints");
    const auto cx = quantize<std::int32_t>((agent.current.x - anchor.x()) * 100.0, 1.0, name + " current x");
    const auto cy = quantize<std::int32_t>((agent.current.y - anchor.y()) * 100.0, 1.0, name + " current y");
    w.u8(static_cast<std::uint8_t>(agent.cls) & 0x0F);
    w.u8(static_cast<std::uint8_t>(agent.traj.size()));
    w.i32(cx);
    w.i32(cy);
    for (const auto& s : agent.traj.samples) {
      const Duration dt = s.t - gps_time;
      if (dt.micros < 0 || dt.micros % 1000 != 0 || dt.micros / 1000 > 65535)
        throw RangeError(name + " waypoint time is not a whole millisecond within 65.535 s");
      // Deltas are taken from the quantized current position so errors do not stack.
      const double dx = (s.mean.x - anchor.x()) * 100.0 - cx;
      const double dy = (s.mean.y - anchor.y()) * 100.0 - cy;
      w.u16(static_cast<std::uint16_t>(dt.micros / 1000));
      w.i16(quantize<std::int16_t>(dx, 1.0, name + " waypoint x offset"));
      w.i16(quantize<std::int16_t>(dy, 1.0, name + " waypoint y offset"));
      w.u16(quantize_variance(s.var_x));
      w.u16(quantize_variance(s.var_y));
    }
  }
  return out;
}

std::vector<std::uint8_t> encode(std::uint16_t sender_id, Timestamp gps_time,
                                 const Eigen::Vector2d& anchor,
                                 std::span<const SharedAgent> agents, const EncodeOptions& opt) {
  std::vector<std::uint8_t> payload = encode_payload(sender_id, gps_time, anchor, agents);
  std::uint8_t flags = 0;

  if (opt.allow_compression) {
    std::vector<std::uint8_t> packed(ZSTD_compressBound(payload.size()));
    const std::size_t n = ZSTD_compress(packed.data(), packed.size(), payload.data(),
                                        payload.size(), opt.compression_level);
    if (!ZSTD_isError(n) && n < payload.size()) {
      packed.resize(n);
      payload = std::move(packed);
      flags |= kFlagCompressed;
    }
  }

  const std::size_t frame_size = kFrameHeaderBytes + payload.size();
  if (frame_size > opt.budget || payload.size() > std::numeric_limits<std::uint16_t>::max())
    throw SizeError(frame_size, opt.budget);

  std::vector<std::uint8_t> frame;
  frame.reserve(frame_size);
  Writer w(frame);
  w.u8(kVersion);
  w.u8(flags);
  w.u16(static_cast<std::uint16_t>(payload.size()));
  frame.insert(frame.end(), payload.begin(), payload.end());
  return frame;
}

DecodedMessage decode(std::span<const std::uint8_t> frame) {
  Reader head(frame, 0);
  const std::uint8_t version = head.u8();
  if (version != kVersion) throw VersionError(version);
  const std::uint8_t flags = head.u8();
  if (flags & ~kFlagCompressed) throw ParseError(1, "unknown flag bits");
  const std::uint16_t payload_len = head.u16();
  if (frame.size() - kFrameHeaderBytes != payload_len)
    throw ParseError(2, "payload length " + std::to_string(payload_len) + " does not match frame size " +
                            std::to_string(frame.size()));

  std::span<const std::uint8_t> payload = frame.subspan(kFrameHeaderBytes);
  std::vector<std::uint8_t> inflated;
  DecodedMessage msg;
  msg.compressed = flags & kFlagCompressed;
  if (msg.compressed) {
    const unsigned long long size = ZSTD_getFrameContentSize(payload.data(), payload.size());
    if (size == ZSTD_CONTENTSIZE_ERROR || size == ZSTD_CONTENTSIZE_UNKNOWN || size > kMaxDecompressed)
      throw ParseError(kFrameHeaderBytes, "invalid compressed payload");
    inflated.resize(static_cast<std::size_t>(size));
    const std::size_t n =
        ZSTD_decompress(inflated.data(), inflated.size(), payload.data(), payload.size());
    if (ZSTD_isError(n) || n != inflated.size())
      throw ParseError(kFrameHeaderBytes, "corrupt compressed payload");
    payload = inflated;
  }

  Reader r(payload, kFrameHeaderBytes);
  if (r.u8() != kForecastMessage) throw ParseError(kFrameHeaderBytes, "unknown message type");
  msg.sender_id = r.u16();
  const std::uint64_t gps = r.u64();
  if (gps > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max()))
    throw ParseError(r.offset() - 8, "gps time out of range");
  msg.gps_time = Timestamp(static_cast<std::int64_t>(gps));
  msg.anchor.x() = r.f64();
  msg.anchor.y() = r.f64();
  if (!msg.anchor.allFinite()) throw ParseError(r.offset() - 16, "non-finite anchor");
  const std::uint16_t n_agents = r.u16();

  msg.agents.reserve(n_agents);
  for (std::uint16_t a = 0; a < n_agents; ++a) {
    SharedAgent agent;
    const std::size_t class_at = r.offset();
    const std::uint8_t cls = r.u8() & 0x0F;
    if (cls >= kAllClasses.size()) throw ParseError(class_at, "unknown agent class");
    agent.cls = static_cast<AgentClass>(cls);
    const std::uint8_t n_wp = r.u8();
    const std::int32_t cx = r.i32();
    const std::int32_t cy = r.i32();
    agent.current = State2D::at({msg.anchor.x() + cx / 100.0, msg.anchor.y() + cy / 100.0});
    agent.traj.samples.reserve(n_wp);
    for (std::uint8_t k = 0; k < n_wp; ++k) {
      const std::size_t at = r.offset();
      PredictedSample s;
      s.t = msg.gps_time + Duration::from_millis(r.u16());
      const std::int32_t dx = r.i16();
      const std::int32_t dy = r.i16();
      s.mean = State2D::at({msg.anchor.x() + (cx + dx) / 100.0, msg.anchor.y() + (cy + dy) / 100.0});
      s.var_x = r.u16() / 1000.0;
      s.var_y = r.u16() / 1000.0;
      if (!agent.traj.empty() && !(agent.traj.back_time() < s.t))
        throw ParseError(at, "waypoint times not increasing");
      if (s.var_x <= 0.0 || s.var_y <= 0.0) throw ParseError(at, "zero variance");
      agent.traj.samples.push_back(s);
    }
    msg.agents.push_back(std::move(agent));
  }
  if (!r.done()) throw ParseError(r.offset(), "trailing bytes after last agent");
  return msg;
}

}  // namespace latefuse::wire
