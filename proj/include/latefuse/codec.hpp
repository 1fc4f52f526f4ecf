#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "latefuse/core.hpp"

namespace latefuse::wire {

inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::uint8_t kForecastMessage = 1;
inline constexpr std::uint8_t kFlagCompressed = 0x01;
inline constexpr std::size_t kFrameHeaderBytes = 4;
inline constexpr std::size_t kPayloadHeaderBytes = 29;
inline constexpr std::size_t kAgentHeaderBytes = 10;
inline constexpr std::size_t kWaypointBytes = 10;
inline constexpr std::size_t kMessageBudget = 1500;

/// One agent forecast as carried on the wire.
struct SharedAgent {
  AgentClass cls = AgentClass::car;
  State2D current;            // at gps_time
  PredictedTrajectory traj;   // absolute timestamps
};

struct DecodedMessage {
  std::uint16_t sender_id = 0;
  Timestamp gps_time;
  Eigen::Vector2d anchor = Eigen::Vector2d::Zero();
  bool compressed = false;
  std::vector<SharedAgent> agents;
};

struct EncodeOptions {
  bool allow_compression = true;
  int compression_level = 3;
  std::size_t budget = kMessageBudget;
};

/// Quantized, optionally compressed forecast frame. Positions are centimetres
/// (current state relative to `anchor`, waypoints relative to the current
/// state), times whole milliseconds after `gps_time`, variances 1e-3 m^2
/// saturating at 65.535 m^2.
///
/// Throws SizeError when the final frame exceeds the budget and RangeError when
/// an agent does not fit the quantized ranges.
std::vector<std::uint8_t> encode(std::uint16_t sender_id, Timestamp gps_time,
                                 const Eigen::Vector2d& anchor,
                                 std::span<const SharedAgent> agents,
                                 const EncodeOptions& opt = {});

/// Uncompressed payload section (what `encode` would compress).
std::vector<std::uint8_t> encode_payload(std::uint16_t sender_id, Timestamp gps_time,
                                         const Eigen::Vector2d& anchor,
                                         std::span<const SharedAgent> agents);

/// Throws ParseError (with byte offset) or VersionError.
DecodedMessage decode(std::span<const std::uint8_t> frame);

}  // namespace latefuse::wire
