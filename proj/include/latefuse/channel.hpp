#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <vector>

#include "latefuse/core.hpp"

namespace latefuse {

/// Seeded generator with fixed, portable variate algorithms (the standard
/// distributions are implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  /// Standard normal by Box-Muller (one draw per call, two uniforms consumed).
  double normal();
  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

struct ChannelParams {
  double k_ms_per_byte = 0.0197;
  double mu = 3.135;
  double sigma = 0.182;
  std::size_t tier_low_bytes = 400;
  std::size_t tier_high_bytes = 900;
  double p_mid = 0.08;
  double p_high = 0.10;
  bool delay_enabled = true;
  bool drop_enabled = true;

  void validate() const;
};

/// Drop probability for a packet of `bytes`, ignoring `drop_enabled`.
double p_drop(std::size_t bytes, const ChannelParams& params = {});

/// Analytic quantile of the shifted log-normal delay in milliseconds.
double delay_quantile_ms(std::size_t bytes, double p, const ChannelParams& params = {});

/// Inverse of the standard normal CDF.
double normal_quantile(double p);

struct ChannelOutcome {
  bool delivered = true;
  double delay_ms = 0.0;
};

/// One packet's fate. Both the drop and the delay variates are always drawn so
/// that runs with impairments switched on or off consume the generator alike.
ChannelOutcome channel_sample(std::size_t bytes, const ChannelParams& params, Rng& rng);

struct ChannelStats {
  std::size_t bytes = 0;
  std::size_t samples = 0;
  double drop_rate = 0.0;
  double delay_p50_ms = 0.0;   // over delivered packets
  double delay_p95_ms = 0.0;
};

/// Monte-Carlo summary of `n` packets of one size.
ChannelStats channel_stats(std::size_t bytes, std::size_t n, const ChannelParams& params, Rng& rng);

struct Delivery {
  std::uint16_t sender = 0;
  std::uint64_t seq = 0;
  Timestamp send_time;
  Timestamp arrival;
  std::vector<std::uint8_t> bytes;
};

struct ChannelEvent {
  std::uint16_t receiver = 0;
  bool delivered = true;
  double delay_ms = 0.0;
};

/// In-process single-hop broadcast medium with one mailbox per receiver.
class Bus {
 public:
  explicit Bus(ChannelParams params = {}, std::uint64_t seed = 0);

  void add_receiver(std::uint16_t id);

  /// Samples an independent outcome for every registered receiver other than
  /// the sender, in ascending receiver order.
  std::vector<ChannelEvent> publish(std::uint16_t sender, const std::vector<std::uint8_t>& bytes,
                                    Timestamp send_time);

  /// Messages with arrival <= now not yet handed to this receiver, ordered by
  /// arrival then publish order.
  std::vector<Delivery> poll(std::uint16_t receiver, Timestamp now);

  const ChannelParams& params() const { return params_; }
  std::size_t pending(std::uint16_t receiver) const;

 private:
  ChannelParams params_;
  Rng rng_;
  std::uint64_t next_seq_ = 0;
  std::map<std::uint16_t, std::vector<Delivery>> mailboxes_;
};

}  // namespace latefuse
