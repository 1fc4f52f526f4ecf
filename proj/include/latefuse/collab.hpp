#pragma once

#include <optional>
#include <span>
#include <vector>

#include "latefuse/core.hpp"

namespace latefuse {

enum class Category { L, S };

/// One agent in a vehicle's prediction map.
struct MapEntry {
  Category category = Category::L;
  AgentId agent_id;
  AgentClass cls = AgentClass::car;
  BoxDims dims;
  State2D current_state;
  std::optional<PredictedTrajectory> local_pred;
  std::optional<PredictedTrajectory> fused_pred;
  std::vector<PredictedTrajectory> pool;
  int unmatched_steps = 0;
};

/// Entries in insertion order; ids are unique.
class PredictionMap {
 public:
  std::vector<MapEntry>& entries() { return entries_; }
  const std::vector<MapEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  MapEntry* find(const AgentId& id);
  const MapEntry* find(const AgentId& id) const;
  std::size_t count(Category c) const;
  std::size_t pooled_samples() const;

 private:
  std::vector<MapEntry> entries_;
};

struct CollabConfig {
  double promote_gate_m = 2.0;
  double relevance_radius_m = 75.0;
  double relevance_threshold = 0.0;
  int stale_S_steps = 2;

  void validate() const;
};

/// A forecast produced by this vehicle's own predictor for one track.
struct LocalPrediction {
  AgentId track_id;
  AgentClass cls = AgentClass::car;
  BoxDims dims;
  State2D current;
  PredictedTrajectory pred;
};

/// A peer forecast after temporal alignment.
struct AlignedShare {
  AgentId share_id;  // sender-namespaced, stable across messages
  AgentClass cls = AgentClass::car;
  State2D current_state;
  PredictedTrajectory traj;
  std::vector<Duration> offsets;  // sample times relative to the ego prediction time
};

struct AlignedTrajectory {
  State2D current_state;
  PredictedTrajectory aligned;
  std::vector<Duration> offsets;
};

/// Drops samples older than `ego_pred_time`; the first survivor becomes the
/// current state. Empty when nothing survives.
std::optional<AlignedTrajectory> temporal_align(const PredictedTrajectory& shared,
                                                Timestamp ego_pred_time);

struct SpatialMatch {
  std::vector<std::pair<AgentId, std::size_t>> matched;  // (entry id, share index)
  std::vector<std::size_t> unmatched;                    // share indices
};

/// Greedy nearest-neighbour pairing of shares to map entries, closest pair
/// first, gated at `gate_m`. Each entry and share is used at most once.
SpatialMatch spatial_match(const PredictionMap& map, std::span<const AlignedShare> shares,
                           double gate_m);

/// Map refresh from the vehicle's own predictor (id refresh, S promotion,
/// stale removal, new L entries).
void update_from_predictor(PredictionMap& map, std::span<const LocalPrediction> locals,
                           const CollabConfig& cfg);

/// Map refresh from one sender's aligned shares: matched shares join the
/// entry's pool, relevant unmatched shares open S entries.
/// Returns the number of shares inserted into pools.
std::size_t update_from_association(PredictionMap& map, std::span<const AlignedShare> shares,
                                    const SpatialMatch& match, const CollabConfig& cfg,
                                    const State2D& ego_state);

/// max(0, 1 - dist / relevance_radius_m)
double is_relevant(const State2D& state, const State2D& ego_state, const CollabConfig& cfg);

}  // namespace latefuse
