#include "latefuse/collab.hpp"

#include <algorithm>
#include <set>
#include <tuple>

namespace latefuse {

MapEntry* PredictionMap::find(const AgentId& id) {
  auto it = std::find_if(entries_.begin(), entries_.end(),
                         [&](const MapEntry& e) { return e.agent_id == id; });
  return it == entries_.end() ? nullptr : &*it;
}

const MapEntry* PredictionMap::find(const AgentId& id) const {
  return const_cast<PredictionMap*>(this)->find(id);
}

std::size_t PredictionMap::count(Category c) const {
  return static_cast<std::size_t>(std::count_if(
      entries_.begin(), entries_.end(), [c](const MapEntry& e) { return e.category == c; }));
}

std::size_t PredictionMap::pooled_samples() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.pool.size();
  return n;
}

void CollabConfig::validate() const {
  if (!(promote_gate_m > 0.0) || !(relevance_radius_m > 0.0) || stale_S_steps <= 0)
    throw InputError("collaboration thresholds must be positive");
}

std::optional<AlignedTrajectory> temporal_align(const PredictedTrajectory& shared,
                                                Timestamp ego_pred_time) {
  if (shared.empty()) throw InputError("temporal_align needs a non-empty trajectory");
  auto first = std::find_if(shared.samples.begin(), shared.samples.end(),
                            [&](const PredictedSample& s) { return !(s.t < ego_pred_time); });
  if (first == shared.samples.end()) return std::nullopt;

  AlignedTrajectory out;
  out.aligned.samples.assign(first, shared.samples.end());
  out.current_state = first->mean;
  for (const auto& s : out.aligned.samples) out.offsets.push_back(s.t - ego_pred_time);
  return out;
}

SpatialMatch spatial_match(const PredictionMap& map, std::span<const AlignedShare> shares,
                           double gate_m) {
  const auto& entries = map.entries();
  std::vector<std::tuple<double, std::size_t, std::size_t>> pairs;
  for (std::size_t e = 0; e < entries.size(); ++e)
    for (std::size_t s = 0; s < shares.size(); ++s) {
      const double d = distance(entries[e].current_state, shares[s].current_state);
      if (d <= gate_m) pairs.emplace_back(d, e, s);
    }
  std::sort(pairs.begin(), pairs.end());

  SpatialMatch out;
  std::vector<char> entry_used(entries.size(), 0), share_used(shares.size(), 0);
  for (const auto& [d, e, s] : pairs) {
    if (entry_used[e] || share_used[s]) continue;
    entry_used[e] = share_used[s] = 1;
    out.matched.emplace_back(entries[e].agent_id, s);
  }
  for (std::size_t s = 0; s < shares.size(); ++s)
    if (!share_used[s]) out.unmatched.push_back(s);
  return out;
}

void update_from_predictor(PredictionMap& map, std::span<const LocalPrediction> locals,
                           const CollabConfig& cfg) {
  {
    std::set<AgentId> ids;
    for (const auto& p : locals)
      if (!ids.insert(p.track_id).second)
        throw InputError("duplicate track id '" + p.track_id + "' in local predictions");
  }

  auto refresh = [](MapEntry& v, const LocalPrediction& p) {
    v.category = Category::L;
    v.agent_id = p.track_id;
    v.cls = p.cls;
    v.dims = p.dims;
    v.current_state = p.current;
    v.local_pred = p.pred;
    v.fused_pred.reset();
    v.unmatched_steps = 0;
  };

  auto& entries = map.entries();
  std::set<AgentId> matched;
  std::vector<char> touched(entries.size(), 0);
  std::vector<const LocalPrediction*> unmatched;

  // (i) identifier refresh
  for (const auto& p : locals) {
    auto it = std::find_if(entries.begin(), entries.end(),
                           [&](const MapEntry& e) { return e.agent_id == p.track_id; });
    if (it != entries.end()) {
      refresh(*it, p);
      touched[static_cast<std::size_t>(it - entries.begin())] = 1;
      matched.insert(p.track_id);
    } else {
      unmatched.push_back(&p);
    }
  }

  // (ii) promote the nearest shared-only entry within the gate
  std::vector<const LocalPrediction*> leftovers;
  for (const LocalPrediction* p : unmatched) {
    std::size_t best = entries.size();
    double best_d = 0.0;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (entries[i].category != Category::S || touched[i]) continue;
      const double d = distance(p->current, entries[i].current_state);
      if (best == entries.size() || d < best_d) {
        best = i;
        best_d = d;
      }
    }
    if (best != entries.size() && best_d <= cfg.promote_gate_m) {
      refresh(entries[best], *p);
      touched[best] = 1;
      matched.insert(p->track_id);
    } else {
      leftovers.push_back(p);
    }
  }

  // (iii) stale removal
  for (std::size_t i = 0; i < entries.size(); ++i)
    if (entries[i].category == Category::S && !touched[i]) entries[i].unmatched_steps += 1;
  std::erase_if(entries, [&](const MapEntry& v) {
    if (v.category == Category::L) return !matched.count(v.agent_id);
    return v.unmatched_steps > cfg.stale_S_steps;
  });

  // (iv) new local entries
  for (const LocalPrediction* p : leftovers) {
    MapEntry v;
    refresh(v, *p);
    entries.push_back(std::move(v));
  }
}

std::size_t update_from_association(PredictionMap& map, std::span<const AlignedShare> shares,
                                    const SpatialMatch& match, const CollabConfig& cfg,
                                    const State2D& ego_state) {
  std::size_t inserted = 0;
  for (const auto& [id, s] : match.matched) {
    MapEntry* v = map.find(id);
    if (!v) continue;
    v->pool.push_back(shares[s].traj);
    if (v->category == Category::S) {
      v->current_state = shares[s].current_state;
      v->unmatched_steps = 0;
    }
    ++inserted;
  }
  for (std::size_t s : match.unmatched) {
    const auto& share = shares[s];
    if (!(is_relevant(share.current_state, ego_state, cfg) > cfg.relevance_threshold)) continue;
    AgentId id = share.share_id;
    // Ids are sender-namespaced; a clash means an older entry for the same
    // sender slot still exists under another position.
    for (int k = 1; map.find(id); ++k) id = share.share_id + "#" + std::to_string(k);
    MapEntry v;
    v.category = Category::S;
    v.agent_id = std::move(id);
    v.cls = share.cls;
    v.dims = default_dims(share.cls);
    v.current_state = share.current_state;
    v.pool.push_back(share.traj);
    map.entries().push_back(std::move(v));
    ++inserted;
  }
  return inserted;
}

double is_relevant(const State2D& state, const State2D& ego_state, const CollabConfig& cfg) {
  return std::max(0.0, 1.0 - distance(state, ego_state) / cfg.relevance_radius_m);
}

}  // namespace latefuse
