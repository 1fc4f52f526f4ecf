#include "latefuse/channel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <tuple>

namespace latefuse {

double Rng::normal() {
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw InputError("Rng::below needs n > 0");
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x;
  do x = engine_();
  while (x >= limit);
  return x % n;
}

void ChannelParams::validate() const {
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob(p_mid) || !prob(p_high)) throw InputError("drop probabilities must lie in [0, 1]");
  if (!(sigma > 0.0)) throw InputError("delay sigma must be positive");
  if (!(k_ms_per_byte >= 0.0) || !std::isfinite(mu)) throw InputError("invalid delay parameters");
  if (tier_high_bytes < tier_low_bytes) throw InputError("drop tiers out of order");
}

double p_drop(std::size_t bytes, const ChannelParams& params) {
  if (bytes <= params.tier_low_bytes) return 0.0;
  if (bytes <= params.tier_high_bytes) return params.p_mid;
  return params.p_high;
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("normal quantile needs p in (0, 1)");
  double lo = -40.0, hi = 40.0;
  for (int i = 0; i < 200 && hi - lo > 1e-15; ++i) {
    const double mid = 0.5 * (lo + hi);
    (0.5 * std::erfc(-mid / std::numbers::sqrt2) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double delay_quantile_ms(std::size_t bytes, double p, const ChannelParams& params) {
  return params.k_ms_per_byte * static_cast<double>(bytes) +
         std::exp(params.mu + params.sigma * normal_quantile(p));
}

ChannelOutcome channel_sample(std::size_t bytes, const ChannelParams& params, Rng& rng) {
  if (bytes == 0) throw InputError("packet size must be at least one byte");
  const double u = rng.uniform();
  const double z = rng.normal();
  ChannelOutcome out;
  out.delivered = !(params.drop_enabled && u < p_drop(bytes, params));
  out.delay_ms = params.delay_enabled
                     ? params.k_ms_per_byte * static_cast<double>(bytes) + std::exp(params.mu + params.sigma * z)
                     : 0.0;
  return out;
}

ChannelStats channel_stats(std::size_t bytes, std::size_t n, const ChannelParams& params, Rng& rng) {
  if (n == 0) throw InputError("channel_stats needs at least one sample");
  ChannelStats st;
  st.bytes = bytes;
  st.samples = n;
  std::vector<double> delays;
  delays.reserve(n);
  std::size_t dropped = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const ChannelOutcome o = channel_sample(bytes, params, rng);
    if (o.delivered)
      delays.push_back(o.delay_ms);
    else
      ++dropped;
  }
  st.drop_rate = static_cast<double>(dropped) / static_cast<double>(n);
  if (!delays.empty()) {
    std::sort(delays.begin(), delays.end());
    auto q = [&](double p) {
      const double h = p * static_cast<double>(delays.size() - 1);
      const auto lo = static_cast<std::size_t>(h);
      const std::size_t hi = std::min(lo + 1, delays.size() - 1);
      return delays[lo] + (h - static_cast<double>(lo)) * (delays[hi] - delays[lo]);
    };
    st.delay_p50_ms = q(0.5);
    st.delay_p95_ms = q(0.95);
  }
  return st;
}

Bus::Bus(ChannelParams params, std::uint64_t seed) : params_(params), rng_(seed) {
  params_.validate();
}

void Bus::add_receiver(std::uint16_t id) { mailboxes_.try_emplace(id); }

std::vector<ChannelEvent> Bus::publish(std::uint16_t sender, const std::vector<std::uint8_t>& bytes,
                                       Timestamp send_time) {
  const std::uint64_t seq = next_seq_++;
  std::vector<ChannelEvent> events;
  for (auto& [receiver, box] : mailboxes_) {
    if (receiver == sender) continue;
    const ChannelOutcome o = channel_sample(bytes.size(), params_, rng_);
    events.push_back({receiver, o.delivered, o.delay_ms});
    if (!o.delivered) continue;
    Delivery d;
    d.sender = sender;
    d.seq = seq;
    d.send_time = send_time;
    d.arrival = send_time + Duration::from_seconds(o.delay_ms * 1e-3);
    d.bytes = bytes;
    auto at = std::upper_bound(box.begin(), box.end(), d, [](const Delivery& a, const Delivery& b) {
      return std::tie(a.arrival, a.seq) < std::tie(b.arrival, b.seq);
    });
    box.insert(at, std::move(d));
  }
  return events;
}

std::vector<Delivery> Bus::poll(std::uint16_t receiver, Timestamp now) {
  std::vector<Delivery> out;
  auto it = mailboxes_.find(receiver);
  if (it == mailboxes_.end()) return out;
  auto& box = it->second;
  auto end = std::find_if(box.begin(), box.end(), [&](const Delivery& d) { return d.arrival > now; });
  out.assign(std::make_move_iterator(box.begin()), std::make_move_iterator(end));
  box.erase(box.begin(), end);
  return out;
}

std::size_t Bus::pending(std::uint16_t receiver) const {
  auto it = mailboxes_.find(receiver);
  return it == mailboxes_.end() ? 0 : it->second.size();
}

}  // namespace latefuse
