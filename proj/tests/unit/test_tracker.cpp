#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <numeric>
#include <random>

#include "latefuse/hungarian.hpp"
#include "latefuse/tracker.hpp"

using namespace latefuse;

namespace {

// Minimum total cost over all injective row->column maps (rows <= cols).
double brute_force_min(const Eigen::MatrixXd& c) {
  std::vector<int> cols(static_cast<std::size_t>(c.cols()));
  std::iota(cols.begin(), cols.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (Eigen::Index r = 0; r < c.rows(); ++r) total += c(r, cols[static_cast<std::size_t>(r)]);
    best = std::min(best, total);
  } while (std::next_permutation(cols.begin(), cols.end()));
  return best;
}

double assignment_cost(const Eigen::MatrixXd& c, const std::vector<int>& a) {
  double total = 0.0;
  for (std::size_t r = 0; r < a.size(); ++r)
    if (a[r] >= 0) total += c(static_cast<Eigen::Index>(r), a[r]);
  return total;
}

BoundingBox det(const std::string& id, AgentClass cls, double x, double y) {
  return make_box(id, cls, x, y, 0.0, default_dims(cls));
}

KfState at_rest(double x, double y) {
  KfState kf;
  kf.x << x, y, 0, 0, 0, 0;
  return kf;
}

}  // namespace

TEST_CASE("constant-velocity and constant-acceleration kinematics") {
  KfState kf;
  kf.x << 0, 0, 1, 0, 0, 0;
  auto p = kf_predict(kf, 0.1, 0.5);
  CHECK(p.x(0) == doctest::Approx(0.1));
  CHECK(p.x(1) == doctest::Approx(0.0));

  kf.x << 0, 0, 0, 0, 2, 0;
  p = kf_predict(kf, 1.0, 0.5);
  CHECK(p.x(0) == doctest::Approx(1.0));
  CHECK(p.x(2) == doctest::Approx(2.0));
}

TEST_CASE("prediction adds process noise on top of the propagated covariance") {
  std::mt19937_64 gen(3);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const double dt = 0.05 + 0.1 * (trial % 5);
    Matrix6d F = Matrix6d::Identity();
    for (int a = 0; a < 2; ++a) {
      F(a, a + 2) = dt;
      F(a, a + 4) = 0.5 * dt * dt;
      F(a + 2, a + 4) = dt;
    }
    KfState kf;
    for (int i = 0; i < 6; ++i) kf.x(i) = n(gen);
    Matrix6d A = Matrix6d::NullaryExpr([&] { return n(gen); });
    kf.P = A * A.transpose();
    const auto p = kf_predict(kf, dt, 0.3);
    CHECK(p.covariance_valid());
    const Matrix6d added = p.P - F * kf.P * F.transpose();
    CHECK(Eigen::SelfAdjointEigenSolver<Matrix6d>(added).eigenvalues().minCoeff() > -1e-9);
    CHECK(added.trace() > 0.0);

    KfState diag;
    diag.P = Matrix6d::Identity() * (0.5 + std::abs(n(gen)));
    CHECK(kf_predict(diag, dt, 0.3).P.trace() > diag.P.trace());
  }
}

TEST_CASE("predict rejects bad steps and non-finite state") {
  KfState kf;
  CHECK_THROWS_AS(kf_predict(kf, 0.0, 0.5), InputError);
  kf.x(0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(kf_predict(kf, 0.1, 0.5), NumericError);
}

TEST_CASE("update at the predicted position has zero NIS") {
  KfState kf = at_rest(3.0, -1.0);
  const auto u = kf_update(kf, {3.0, -1.0}, 0.09);
  CHECK(u.nis == doctest::Approx(0.0));
  CHECK(u.state.position().x() == doctest::Approx(3.0));
  CHECK(u.state.position().y() == doctest::Approx(-1.0));
}

TEST_CASE("NIS equals squared innovation over innovation variance") {
  KfState kf;
  kf.P = Matrix6d::Identity();
  const auto u = kf_update(kf, {1.0, 0.0}, 1.0);
  CHECK(u.nis == doctest::Approx(0.5));
  CHECK(innovation_nis(kf, {1.0, 0.0}, 1.0) == doctest::Approx(0.5));
  CHECK_THROWS_AS(kf_update(kf, {0, 0}, 0.0), InputError);
}

TEST_CASE("update contracts the covariance and keeps it PSD") {
  std::mt19937_64 gen(11);
  std::normal_distribution<double> n(0.0, 1.0);
  KfState kf;
  kf.P *= 5.0;
  for (int k = 0; k < 200; ++k) {
    kf = kf_predict(kf, 0.1, 0.5);
    if (k % 3 != 2) {
      const double before = kf.P.trace();
      kf = kf_update(kf, {n(gen), n(gen)}, 0.09).state;
      CHECK(kf.P.trace() <= before + 1e-12);
    }
    REQUIRE(kf.covariance_valid());
  }
}

TEST_CASE("assignment matches exhaustive search on random 5x5 matrices") {
  std::mt19937_64 gen(2024);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (int trial = 0; trial < 500; ++trial) {
    Eigen::MatrixXd c = Eigen::MatrixXd::NullaryExpr(5, 5, [&] { return u(gen); });
    const auto a = solve_assignment(c);
    REQUIRE(a.size() == 5);
    std::vector<int> sorted = a;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == std::vector<int>{0, 1, 2, 3, 4});
    CHECK(assignment_cost(c, a) == doctest::Approx(brute_force_min(c)).epsilon(1e-12));
  }
}

TEST_CASE("assignment handles rectangular matrices both ways") {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::MatrixXd wide = Eigen::MatrixXd::NullaryExpr(3, 5, [&] { return u(gen); });
    const auto a = solve_assignment(wide);
    CHECK(assignment_cost(wide, a) == doctest::Approx(brute_force_min(wide)));
    const Eigen::MatrixXd tall = wide.transpose();
    const auto b = solve_assignment(tall);
    REQUIRE(b.size() == 5);
    CHECK(std::count(b.begin(), b.end(), -1) == 2);
    CHECK(assignment_cost(tall, b) == doctest::Approx(brute_force_min(wide)));
  }
  CHECK(solve_assignment(Eigen::MatrixXd(0, 0)).empty());
  Eigen::MatrixXd bad(1, 1);
  bad(0, 0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(solve_assignment(bad), NumericError);
}

TEST_CASE("identifier association ignores distance") {
  TrackedAgent trk;
  trk.track_id = "a";
  trk.kf = at_rest(0, 0);
  std::vector<TrackedAgent> tracks{trk};
  std::vector<BoundingBox> dets{det("b", AgentClass::car, 0, 0), det("a", AgentClass::car, 500, 0)};
  const auto asg = associate(tracks, dets, AssociationMode::gt_id, {}, 0.09);
  REQUIRE(asg.matches.size() == 1);
  CHECK(asg.matches[0] == std::pair<std::size_t, std::size_t>{0, 1});
  CHECK(asg.unmatched_detections == std::vector<std::size_t>{0});
}

TEST_CASE("Euclidean gate excludes far detections") {
  TrackedAgent trk;
  trk.cls = AgentClass::pedestrian;
  trk.confirmed = true;
  trk.kf = at_rest(0, 0);
  trk.kf.P *= 100.0;  // NIS alone would admit it
  std::vector<TrackedAgent> tracks{trk};
  std::vector<BoundingBox> dets{det("x", AgentClass::pedestrian, 2.5, 0)};
  const auto asg = associate(tracks, dets, AssociationMode::hungarian_nis, {}, 0.09);
  CHECK(asg.matches.empty());
  CHECK(asg.unmatched_tracks.size() == 1);
  CHECK(asg.unmatched_detections.size() == 1);
}

TEST_CASE("class mismatch is inadmissible") {
  TrackedAgent trk;
  trk.cls = AgentClass::car;
  trk.kf = at_rest(0, 0);
  std::vector<TrackedAgent> tracks{trk};
  std::vector<BoundingBox> dets{det("x", AgentClass::van, 0.1, 0)};
  CHECK(associate(tracks, dets, AssociationMode::hungarian_nis, {}, 0.09).matches.empty());
}

TEST_CASE("crossed detections get the cheaper pairing") {
  std::vector<TrackedAgent> tracks(2);
  tracks[0].kf = at_rest(0, 0);
  tracks[1].kf = at_rest(1, 0);
  for (auto& t : tracks) {
    t.cls = AgentClass::pedestrian;
    t.confirmed = true;
    t.kf.P = Matrix6d::Identity();
  }
  // det 0 is nearer track 1 and det 1 nearer track 0
  std::vector<BoundingBox> dets{det("p", AgentClass::pedestrian, 0.9, 0),
                                det("q", AgentClass::pedestrian, 0.2, 0)};
  const double r = 0.09;
  const auto asg = associate(tracks, dets, AssociationMode::hungarian_nis, {}, r);
  REQUIRE(asg.matches.size() == 2);
  double got = 0.0;
  for (auto [ti, di] : asg.matches) got += innovation_nis(tracks[ti].kf, dets[di].center.position(), r);
  const double straight = innovation_nis(tracks[0].kf, dets[0].center.position(), r) +
                          innovation_nis(tracks[1].kf, dets[1].center.position(), r);
  const double crossed = innovation_nis(tracks[0].kf, dets[1].center.position(), r) +
                         innovation_nis(tracks[1].kf, dets[0].center.position(), r);
  CHECK(got == doctest::Approx(std::min(straight, crossed)));
  CHECK(crossed < straight);
}

TEST_CASE("fresh tracker spawns one tentative track per detection") {
  Tracker tracker;
  std::vector<BoundingBox> dets{det("a", AgentClass::car, 0, 0), det("b", AgentClass::car, 10, 0),
                                det("c", AgentClass::pedestrian, 5, 5)};
  const auto& tracks = tracker.step(dets, Timestamp(0));
  REQUIRE(tracks.size() == 3);
  for (const auto& t : tracks) {
    CHECK(t.streak == 0);
    CHECK_FALSE(t.confirmed);
  }
}

TEST_CASE("tracks are pruned after lifetime+1 consecutive misses") {
  TrackerConfig cfg;
  cfg.lifetime = 4;
  Tracker tracker(cfg);
  std::vector<BoundingBox> dets{det("a", AgentClass::car, 0, 0)};
  tracker.step(dets, Timestamp(0));
  tracker.step(dets, Timestamp(100000));
  for (int k = 1; k <= cfg.lifetime; ++k) {
    const auto& tracks = tracker.step({}, Timestamp(100000 * (k + 1)));
    REQUIRE(tracks.size() == 1);
    CHECK(tracks[0].streak == k);
  }
  CHECK(tracker.step({}, Timestamp(100000 * (cfg.lifetime + 2))).empty());
}

TEST_CASE("tracker times must strictly increase") {
  Tracker tracker;
  tracker.step({}, Timestamp(100));
  CHECK_THROWS_AS(tracker.step({}, Timestamp(100)), InputError);
}

TEST_CASE("noise-free constant-velocity target converges below a micrometre") {
  for (AssociationMode mode : {AssociationMode::gt_id, AssociationMode::hungarian_nis}) {
    TrackerConfig cfg;
    cfg.mode = mode;
    Tracker tracker(cfg);
    const Eigen::Vector2d p0(3.0, -2.0), v(4.0, 1.5);
    Eigen::Vector2d truth;
    for (int k = 0; k < 20; ++k) {
      const double t = 0.1 * k;
      truth = p0 + v * t;
      std::vector<BoundingBox> dets{det("a", AgentClass::car, truth.x(), truth.y())};
      tracker.step(dets, Timestamp::from_seconds(t));
    }
    REQUIRE(tracker.tracks().size() == 1);
    CHECK((tracker.tracks()[0].kf.position() - truth).norm() < 1e-6);
  }
}

TEST_CASE("identifier mode with detections every frame keeps one track per id") {
  Tracker tracker;
  for (int k = 0; k < 40; ++k) {
    std::vector<BoundingBox> dets;
    for (int i = 0; i < 5; ++i) dets.push_back(det("id" + std::to_string(i), AgentClass::car, 10.0 * i + k, 0.5 * i));
    const auto& tracks = tracker.step(dets, Timestamp(100000 * k));
    CHECK(tracks.size() == 5);
    for (const auto& t : tracks) CHECK(t.misses == 0);
  }
}

TEST_CASE("streak resets on update and counts coasting steps") {
  Tracker tracker;
  std::vector<BoundingBox> dets{det("a", AgentClass::car, 0, 0)};
  tracker.step(dets, Timestamp(0));
  tracker.step(dets, Timestamp(100000));
  for (int k = 0; k < 5; ++k) tracker.step({}, Timestamp(200000 + 100000 * k));
  CHECK(gate_stats(tracker.tracks()[0]).streak == 5);
  tracker.step(dets, Timestamp(800000));
  CHECK(tracker.tracks()[0].streak == 0);
}

TEST_CASE("covariance ratio against the running median") {
  TrackedAgent t;
  for (double v : {2.0, 2.0, 2.0, 2.0}) {
    t.cov_trace_history.push_back(v);
    t.cov_trace_median.push(v);
  }
  CHECK(gate_stats(t).cov_ratio == doctest::Approx(1.0));

  TrackedAgent u;
  for (double v : {1.0, 1.0, 1.0}) {
    u.cov_trace_history.push_back(v);
    u.cov_trace_median.push(v);
  }
  u.cov_trace_history.push_back(2.0);
  u.cov_trace_median.push(2.0);
  CHECK(gate_stats(u).cov_ratio == doctest::Approx(2.0));

  TrackedAgent z;
  z.cov_trace_history.push_back(0.0);
  z.cov_trace_median.push(0.0);
  CHECK(std::isinf(gate_stats(z).cov_ratio));
}

TEST_CASE("running median agrees with sorting") {
  std::mt19937_64 gen(9);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  RunningMedian m;
  std::vector<double> seen;
  for (int i = 0; i < 301; ++i) {
    const double v = std::round(u(gen) * 4) / 4;
    m.push(v);
    seen.push_back(v);
    std::vector<double> s = seen;
    std::sort(s.begin(), s.end());
    const std::size_t n = s.size();
    const double expect = n % 2 ? s[n / 2] : 0.5 * (s[n / 2 - 1] + s[n / 2]);
    CHECK(m.median() == doctest::Approx(expect));
  }
}
