#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "latefuse/metrics.hpp"

using namespace latefuse;

namespace {

BoundingBox unit(const std::string& id, double x, double y, double heading = 0.0) {
  return make_box(id, AgentClass::car, x, y, heading, {1, 1, 1});
}

ForecastPair pair_with_final_error(double err, int steps = 5) {
  ForecastPair p;
  for (int k = 1; k <= steps; ++k) {
    p.truth.emplace_back(k, 0);
    p.forecast.emplace_back(k, k == steps ? err : 0.0);
  }
  return p;
}

FrameMetrics frame(double ade, std::size_t matched = 1, const std::string& setting = "s") {
  FrameMetrics f;
  f.ade = f.fde = ade;
  f.n_gt = 2;
  f.n_matched = matched;
  f.mr = (2.0 - matched) / 2.0;
  f.tsr = 0.0;
  f.setting = setting;
  return f;
}

}  // namespace

TEST_CASE("IoU of identical, disjoint and half-offset squares") {
  CHECK(iou_bev(unit("a", 0, 0), unit("b", 0, 0)) == doctest::Approx(1.0));
  CHECK(iou_bev(unit("a", 0, 0), unit("b", 5, 0)) == 0.0);
  CHECK(std::abs(iou_bev(unit("a", 0, 0), unit("b", 0.5, 0)) - 1.0 / 3.0) < 1e-9);
}

TEST_CASE("IoU of a square and its 45 degree rotation") {
  // overlap is the regular octagon of side sqrt(2)-1
  const double s = std::sqrt(2.0) - 1.0;
  const double octagon = 2.0 * (1.0 + std::sqrt(2.0)) * s * s;
  const double want = octagon / (2.0 - octagon);
  CHECK(iou_bev(unit("a", 0, 0), unit("b", 0, 0, M_PI / 4)) == doctest::Approx(want).epsilon(1e-9));
}

TEST_CASE("IoU is symmetric and bounded") {
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int i = 0; i < 500; ++i) {
    const auto a = make_box("a", AgentClass::car, u(gen), u(gen), u(gen), {1 + std::abs(u(gen)), 1, 1});
    const auto b = make_box("b", AgentClass::car, u(gen), u(gen), u(gen), {1, 1 + std::abs(u(gen)), 1});
    const double ab = iou_bev(a, b), ba = iou_bev(b, a);
    CHECK(ab == doctest::Approx(ba));
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0);
  }
}

TEST_CASE("greedy matching basics") {
  std::vector<BoundingBox> boxes{unit("a", 0, 0), unit("b", 5, 0), unit("c", 10, 0)};
  const auto m = greedy_match(boxes, boxes, 0.5);
  CHECK(m.matches.size() == 3);
  for (const auto& [g, p] : m.matches) CHECK(g == p);

  std::vector<BoundingBox> gt{unit("a", 0, 0)};
  std::vector<BoundingBox> weak{make_box("p", AgentClass::car, 0.6, 0, 0, {1, 1, 1})};
  CHECK(iou_bev(gt[0], weak[0]) < 0.5);
  const auto none = greedy_match(gt, weak, 0.5);
  CHECK(none.matches.empty());
  CHECK(none.unmatched_gt == std::vector<std::size_t>{0});
}

TEST_CASE("two truths competing for one prediction: input order decides") {
  const auto g1 = unit("g1", 0.0, 0);
  const auto g2 = unit("g2", 0.1, 0);
  std::vector<BoundingBox> pred{unit("p", 0.05, 0)};
  for (bool flipped : {false, true}) {
    std::vector<BoundingBox> gt = flipped ? std::vector{g2, g1} : std::vector{g1, g2};
    const auto m = greedy_match(gt, pred, 0.5);
    REQUIRE(m.matches.size() == 1);
    CHECK(m.matches[0].first == 0);
    CHECK(m.unmatched_gt == std::vector<std::size_t>{1});
  }
}

TEST_CASE("frame metrics worked values") {
  std::vector<ForecastPair> perfect{pair_with_final_error(0.0), pair_with_final_error(0.0)};
  auto m = frame_metrics(perfect, 2, 0.5);
  REQUIRE(m);
  CHECK(m->ade == 0.0);
  CHECK(m->fde == 0.0);
  CHECK(m->mr == 0.0);
  CHECK(m->tsr == 1.0);

  std::vector<ForecastPair> three(3, pair_with_final_error(0.0));
  CHECK(frame_metrics(three, 4, 0.5)->mr == 0.25);

  std::vector<ForecastPair> split{pair_with_final_error(0.49), pair_with_final_error(0.51)};
  m = frame_metrics(split, 2, 0.5);
  CHECK(m->tsr == 0.5);
  CHECK(m->fde == doctest::Approx(0.5));
  CHECK(m->ade == doctest::Approx(1.0 / 10.0));

  CHECK_FALSE(frame_metrics({}, 0, 0.5));
  const auto empty = frame_metrics({}, 3, 0.5);
  CHECK(std::isnan(empty->ade));
  CHECK(empty->mr == 1.0);
}

TEST_CASE("frame metric identities on random frames") {
  std::mt19937_64 gen(8);
  std::uniform_real_distribution<double> u(0, 1.5);
  for (int i = 0; i < 300; ++i) {
    const std::size_t n_gt = 1 + gen() % 6;
    const std::size_t n_matched = gen() % (n_gt + 1);
    std::vector<ForecastPair> pairs;
    for (std::size_t k = 0; k < n_matched; ++k) pairs.push_back(pair_with_final_error(u(gen)));
    double prev_tsr = -1.0;
    for (double thr : {0.25, 0.5, 1.0}) {
      const auto m = frame_metrics(pairs, n_gt, thr);
      CHECK(m->mr + static_cast<double>(m->n_matched) / static_cast<double>(m->n_gt) == doctest::Approx(1.0));
      CHECK(m->tsr <= 1.0 - m->mr + 1e-12);
      CHECK(m->tsr * static_cast<double>(n_gt) <= static_cast<double>(n_matched) + 1e-9);
      CHECK(m->tsr >= prev_tsr);
      prev_tsr = m->tsr;
    }
  }
}

TEST_CASE("raising the IoU threshold never adds matches") {
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int i = 0; i < 200; ++i) {
    std::vector<BoundingBox> gt, pred;
    for (int k = 0; k < 4; ++k) {
      gt.push_back(make_box("g", AgentClass::car, u(gen), u(gen), u(gen), {2, 1, 1}));
      pred.push_back(make_box("p", AgentClass::car, u(gen), u(gen), u(gen), {2, 1, 1}));
    }
    std::size_t prev = 5;
    for (double thr : {0.0, 0.1, 0.3, 0.5, 0.7, 0.9}) {
      const std::size_t n = greedy_match(gt, pred, thr).matches.size();
      CHECK(n <= prev);
      prev = n;
    }
  }
}

TEST_CASE("frame metrics reject malformed input") {
  std::vector<ForecastPair> two(2, pair_with_final_error(0.0));
  CHECK_THROWS_AS(frame_metrics(two, 1, 0.5), InputError);
  ForecastPair bad = pair_with_final_error(0.0);
  bad.truth.pop_back();
  CHECK_THROWS_AS(frame_metrics(std::vector{bad}, 1, 0.5), InputError);
}

TEST_CASE("aggregation") {
  const std::vector<FrameMetrics> one{frame(1.5)};
  const Report r = aggregate(one);
  CHECK(r.ade == 1.5);
  CHECK(r.mr == 0.5);
  CHECK(r.frames == 1);

  const std::vector<FrameMetrics> two{frame(1.0), frame(3.0)};
  CHECK(aggregate(two).ade == 2.0);

  std::vector<FrameMetrics> with_empty{frame(1.0), frame(0.0, 0)};
  with_empty[1].ade = with_empty[1].fde = std::nan("");
  const Report e = aggregate(with_empty);
  CHECK(e.ade == 1.0);
  CHECK(e.mr == 0.75);
  CHECK(e.frames_with_matches == 1);

  CHECK_THROWS_AS(aggregate(std::vector<FrameMetrics>{}), InputError);
  const std::vector<FrameMetrics> mixed{frame(1.0, 1, "fusion=on,delay=on,drop=on"),
                                        frame(1.0, 1, "fusion=off,delay=on,drop=on")};
  CHECK_THROWS_AS(aggregate(mixed), InputError);
}

TEST_CASE("size statistics") {
  const auto s = size_stats({4, 1, 3, 2, 5});
  CHECK(s.count == 5);
  CHECK(s.mean == 3.0);
  CHECK(s.median == 3.0);
  CHECK(s.q1 == 2.0);
  CHECK(s.p95 == doctest::Approx(4.8));
  CHECK(size_stats({}).count == 0);
}

TEST_CASE("report CSV header and quoting") {
  Report r;
  r.scenario_id = "x";
  r.vehicle_id = 2;
  r.setting = "fusion=on,delay=on,drop=on";
  std::ostringstream out;
  write_report_csv(out, std::vector{r});
  const std::string text = out.str();
  CHECK(text.rfind("scenario_id,vehicle_id,setting,ade_m,fde_m,mr,tsr_0_5,frames,mean_msg_bytes,p50_msg_bytes,p95_msg_bytes\n", 0) == 0);
  CHECK(text.find("x,2,\"fusion=on,delay=on,drop=on\",") != std::string::npos);
}

TEST_CASE("shared-only entries take the class footprint along their forecast") {
  LoggedEntry e;
  e.category = Category::S;
  e.cls = AgentClass::pedestrian;
  e.current = State2D::at({1, 1});
  PredictedTrajectory f;
  f.samples.push_back({Timestamp(100000), State2D::at({1, 3}), 1, 1});
  e.fused = f;
  const auto b = entry_box(e);
  CHECK(b.length == default_dims(AgentClass::pedestrian).length);
  CHECK(b.heading == doctest::Approx(M_PI / 2));
}
