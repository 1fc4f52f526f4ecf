#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "latefuse/collab.hpp"

using namespace latefuse;

namespace {

PredictedTrajectory line(Eigen::Vector2d from, Eigen::Vector2d vel, Timestamp t0, int n = 5) {
  PredictedTrajectory p;
  for (int k = 1; k <= n; ++k) {
    const Timestamp t = t0 + Duration::from_millis(100) * k;
    p.samples.push_back({t, State2D::at(from + vel * 0.1 * k), 0.1, 0.1});
  }
  return p;
}

LocalPrediction local(const AgentId& id, Eigen::Vector2d at) {
  LocalPrediction p;
  p.track_id = id;
  p.dims = default_dims(AgentClass::car);
  p.current = State2D::at(at);
  p.pred = line(at, {1, 0}, Timestamp(0));
  return p;
}

AlignedShare share(const AgentId& id, Eigen::Vector2d at) {
  AlignedShare s;
  s.share_id = id;
  s.current_state = State2D::at(at);
  s.traj = line(at, {1, 0}, Timestamp(0));
  return s;
}

MapEntry s_entry(const AgentId& id, Eigen::Vector2d at, std::size_t pool) {
  MapEntry e;
  e.category = Category::S;
  e.agent_id = id;
  e.current_state = State2D::at(at);
  for (std::size_t i = 0; i < pool; ++i) e.pool.push_back(line(at, {0, 1}, Timestamp(0)));
  return e;
}

}  // namespace

TEST_CASE("temporal alignment drops samples older than the ego time") {
  PredictedTrajectory p;
  for (int ms : {100, 200, 300}) p.samples.push_back({Timestamp(ms * 1000), State2D::at({ms / 100.0, 0}), 1, 1});
  const auto a = temporal_align(p, Timestamp(150000));
  REQUIRE(a);
  REQUIRE(a->aligned.size() == 2);
  CHECK(a->aligned.samples[0].t == Timestamp(200000));
  CHECK(a->current_state.x == 2.0);
  CHECK(a->offsets == std::vector<Duration>{Duration::from_millis(50), Duration::from_millis(150)});

  const auto early = temporal_align(p, Timestamp(0));
  REQUIRE(early);
  CHECK(early->aligned == p);
  CHECK(early->current_state.x == 1.0);

  CHECK_FALSE(temporal_align(p, Timestamp(301000)));
  CHECK(temporal_align(p, Timestamp(300000))->aligned.size() == 1);
}

TEST_CASE("spatial matching gates by distance") {
  PredictionMap map;
  map.entries().push_back(s_entry("e", {0, 0}, 0));
  std::vector<AlignedShare> near{share("a", {0.5, 0})};
  auto m = spatial_match(map, near, 2.0);
  REQUIRE(m.matched.size() == 1);
  CHECK(m.unmatched.empty());

  std::vector<AlignedShare> far{share("a", {10, 0})};
  m = spatial_match(map, far, 2.0);
  CHECK(m.matched.empty());
  CHECK(m.unmatched == std::vector<std::size_t>{0});
}

TEST_CASE("greedy matching agrees with exhaustive minimum on 2x2") {
  std::mt19937_64 gen(2);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  int agree = 0;
  for (int trial = 0; trial < 300; ++trial) {
    PredictionMap map;
    map.entries().push_back(s_entry("e0", {u(gen), u(gen)}, 0));
    map.entries().push_back(s_entry("e1", {u(gen), u(gen)}, 0));
    std::vector<AlignedShare> shares{share("s0", {u(gen), u(gen)}), share("s1", {u(gen), u(gen)})};
    const auto m = spatial_match(map, shares, 100.0);
    REQUIRE(m.matched.size() == 2);
    auto d = [&](int e, int s) { return distance(map.entries()[e].current_state, shares[s].current_state); };
    const double straight = d(0, 0) + d(1, 1), crossed = d(0, 1) + d(1, 0);
    const bool got_straight = (m.matched[0].first == "e0") == (m.matched[0].second == 0);
    const double nearest = std::min({d(0, 0), d(1, 1), d(0, 1), d(1, 0)});
    const bool nearest_straight = nearest == d(0, 0) || nearest == d(1, 1);
    CHECK(got_straight == nearest_straight);
    // whenever the closest pair belongs to the min-sum pairing, both agree
    if (nearest_straight == (straight < crossed)) ++agree;
  }
  CHECK(agree > 200);
}

TEST_CASE("greedy and min-sum part ways when the closest pair is costly overall") {
  PredictionMap map;
  map.entries().push_back(s_entry("e0", {0, 0}, 0));
  map.entries().push_back(s_entry("e1", {2.2, 0}, 0));
  std::vector<AlignedShare> shares{share("s0", {1.0, 0}), share("s1", {-1.1, 0})};
  const auto m = spatial_match(map, shares, 5.0);
  REQUIRE(m.matched.size() == 2);
  // sums: greedy 1.0 + 3.3, crossed 1.1 + 1.2
  CHECK(m.matched[0] == std::pair<AgentId, std::size_t>{"e0", 0});
  CHECK(m.matched[1] == std::pair<AgentId, std::size_t>{"e1", 1});
}

TEST_CASE("crossed proximities pick the globally nearest pair first") {
  PredictionMap map;
  map.entries().push_back(s_entry("e0", {0, 0}, 0));
  map.entries().push_back(s_entry("e1", {3, 0}, 0));
  std::vector<AlignedShare> shares{share("s0", {2.0, 0}), share("s1", {2.9, 0})};
  const auto m = spatial_match(map, shares, 5.0);
  REQUIRE(m.matched.size() == 2);
  CHECK(m.matched[0] == std::pair<AgentId, std::size_t>{"e1", 1});
  CHECK(m.matched[1] == std::pair<AgentId, std::size_t>{"e0", 0});
}

TEST_CASE("each entry is matched at most once per message") {
  PredictionMap map;
  map.entries().push_back(s_entry("e", {0, 0}, 0));
  std::vector<AlignedShare> shares{share("a", {0.1, 0}), share("b", {0.2, 0}), share("c", {0.3, 0})};
  const auto m = spatial_match(map, shares, 2.0);
  CHECK(m.matched.size() == 1);
  CHECK(m.unmatched.size() == 2);
}

TEST_CASE("first local prediction creates an L entry") {
  PredictionMap map;
  std::vector<LocalPrediction> locals{local("t1", {5, 5})};
  update_from_predictor(map, locals, CollabConfig{});
  REQUIRE(map.size() == 1);
  CHECK(map.entries()[0].category == Category::L);
  CHECK(map.entries()[0].pool.empty());
  CHECK(map.entries()[0].local_pred == locals[0].pred);
}

TEST_CASE("a nearby S entry is promoted and keeps its pool") {
  PredictionMap map;
  map.entries().push_back(s_entry("v2.0", {1, 0}, 2));
  std::vector<LocalPrediction> locals{local("t7", {1.2, 0})};
  update_from_predictor(map, locals, CollabConfig{});
  REQUIRE(map.size() == 1);
  const auto& e = map.entries()[0];
  CHECK(e.category == Category::L);
  CHECK(e.agent_id == "t7");
  CHECK(e.pool.size() == 2);
}

TEST_CASE("L entries vanish with their tracks") {
  PredictionMap map;
  std::vector<LocalPrediction> both{local("a", {0, 0}), local("b", {10, 0})};
  update_from_predictor(map, both, CollabConfig{});
  std::vector<LocalPrediction> one{local("a", {0.1, 0})};
  update_from_predictor(map, one, CollabConfig{});
  REQUIRE(map.size() == 1);
  CHECK(map.entries()[0].agent_id == "a");
}

TEST_CASE("refresh clears a stale fused prediction") {
  PredictionMap map;
  std::vector<LocalPrediction> locals{local("a", {0, 0})};
  update_from_predictor(map, locals, CollabConfig{});
  map.entries()[0].fused_pred = locals[0].pred;
  update_from_predictor(map, locals, CollabConfig{});
  CHECK_FALSE(map.entries()[0].fused_pred);
}

TEST_CASE("L ids equal local ids after every update") {
  std::mt19937_64 gen(9);
  std::uniform_real_distribution<double> u(-20, 20);
  PredictionMap map;
  CollabConfig cfg;
  for (int step = 0; step < 50; ++step) {
    std::vector<LocalPrediction> locals;
    for (int i = 0; i < 6; ++i)
      if (gen() % 3) locals.push_back(local("t" + std::to_string(i), {u(gen), u(gen)}));
    if (step % 2) map.entries().push_back(s_entry("s" + std::to_string(step), {u(gen), u(gen)}, 1));
    update_from_predictor(map, locals, cfg);
    std::set<AgentId> want, got;
    for (const auto& p : locals) want.insert(p.track_id);
    for (const auto& e : map.entries())
      if (e.category == Category::L) got.insert(e.agent_id);
    CHECK(got == want);
  }
}

TEST_CASE("S entries expire after stale_S_steps unmatched updates") {
  PredictionMap map;
  CollabConfig cfg;
  map.entries().push_back(s_entry("v2.0", {30, 0}, 1));
  for (int k = 0; k < cfg.stale_S_steps; ++k) {
    update_from_predictor(map, {}, cfg);
    CHECK(map.size() == 1);
  }
  update_from_predictor(map, {}, cfg);
  CHECK(map.size() == 0);
}

TEST_CASE("duplicate track ids are rejected") {
  PredictionMap map;
  std::vector<LocalPrediction> locals{local("a", {0, 0}), local("a", {5, 0})};
  CHECK_THROWS_AS(update_from_predictor(map, locals, CollabConfig{}), InputError);
}

TEST_CASE("association grows pools and opens relevant S entries") {
  CollabConfig cfg;
  cfg.relevance_radius_m = 50.0;
  const State2D ego = State2D::at({0, 0});

  PredictionMap map;
  std::vector<LocalPrediction> locals{local("a", {10, 0})};
  update_from_predictor(map, locals, cfg);
  std::vector<AlignedShare> shares{share("v2.0", {10.3, 0})};
  auto m = spatial_match(map, shares, cfg.promote_gate_m);
  CHECK(update_from_association(map, shares, m, cfg, ego) == 1);
  CHECK(map.find("a")->pool.size() == 1);

  std::vector<AlignedShare> near{share("v2.1", {5, 0})};
  m = spatial_match(map, near, cfg.promote_gate_m);
  update_from_association(map, near, m, cfg, ego);
  REQUIRE(map.find("v2.1"));
  CHECK(map.find("v2.1")->category == Category::S);
  CHECK_FALSE(map.find("v2.1")->local_pred);
  CHECK(map.find("v2.1")->pool.size() == 1);

  const std::size_t before = map.size();
  std::vector<AlignedShare> far{share("v2.2", {500, 0})};
  m = spatial_match(map, far, cfg.promote_gate_m);
  CHECK(update_from_association(map, far, m, cfg, ego) == 0);
  CHECK(map.size() == before);
}

TEST_CASE("relevance is linear in distance") {
  CollabConfig cfg;
  cfg.relevance_radius_m = 50.0;
  const State2D ego = State2D::at({0, 0});
  CHECK(is_relevant(ego, ego, cfg) == 1.0);
  CHECK(is_relevant(State2D::at({50, 0}), ego, cfg) == 0.0);
  CHECK(is_relevant(State2D::at({0, 25}), ego, cfg) == doctest::Approx(0.5));
  CHECK(is_relevant(State2D::at({100, 0}), ego, cfg) == 0.0);
}
