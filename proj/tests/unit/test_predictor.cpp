#include <doctest.h>

#include <cmath>
#include <functional>
#include <limits>

#include "latefuse/predictor.hpp"

using namespace latefuse;

namespace {

Trajectory history_of(const std::function<Eigen::Vector2d(double)>& path, int n, double dt) {
  Trajectory h;
  for (int i = 0; i < n; ++i) {
    const double t = dt * i;
    h.samples.push_back({Timestamp::from_seconds(t), State2D::at(path(t))});
  }
  return h;
}

}  // namespace

TEST_CASE("straight-line history is extrapolated exactly") {
  const auto h = history_of([](double t) { return Eigen::Vector2d(t, 0.0); }, 11, 0.1);
  const State2D now = h.samples.back().state;
  const auto p = predict(h, now, PredictorConfig{});
  REQUIRE(p.size() == 20);
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double t = p.samples[k].t.seconds();
    CHECK(std::abs(p.samples[k].mean.x - t) < 1e-9);
    CHECK(std::abs(p.samples[k].mean.y) < 1e-9);
  }
}

TEST_CASE("stationary history stays put") {
  const auto h = history_of([](double) { return Eigen::Vector2d(3.0, -2.0); }, 8, 0.1);
  const auto p = predict(h, h.samples.back().state, PredictorConfig{});
  for (const auto& s : p.samples) {
    CHECK(s.mean.x == doctest::Approx(3.0));
    CHECK(s.mean.y == doctest::Approx(-2.0));
  }
}

TEST_CASE("constant acceleration is recovered when enabled") {
  const auto h = history_of([](double t) { return Eigen::Vector2d(t + 0.5 * t * t, 0.0); }, 11, 0.1);
  PredictorConfig cfg;
  cfg.fit_acceleration = true;
  const auto p = predict(h, h.samples.back().state, cfg);
  for (const auto& s : p.samples) {
    const double t = s.t.seconds();
    CHECK(s.mean.x == doctest::Approx(t + 0.5 * t * t).epsilon(1e-9));
  }
}

TEST_CASE("circular motion: bounded first step, growing variance") {
  const double r = 10.0, w = 0.5;
  auto arc = [&](double t) { return Eigen::Vector2d(r * std::cos(w * t), r * std::sin(w * t)); };
  const auto h = history_of(arc, 11, 0.1);
  const auto p = predict(h, h.samples.back().state, PredictorConfig{});
  const double first = (p.samples.front().mean.position() - arc(p.samples.front().t.seconds())).norm();
  const double last = (p.samples.back().mean.position() - arc(p.samples.back().t.seconds())).norm();
  // the least-squares velocity lags the true heading by about w * window / 2
  const double speed = r * w, dt = 0.1, window = 1.0;
  const double lag_bound = speed * dt * (w * window / 2) + 0.5 * speed * w * dt * dt;
  CHECK(first < 1.1 * lag_bound);
  CHECK(last > first);
  for (std::size_t k = 1; k < p.size(); ++k) {
    CHECK(p.samples[k].var_x > p.samples[k - 1].var_x);
    CHECK(p.samples[k].var_y > p.samples[k - 1].var_y);
  }
}

TEST_CASE("variance follows sigma0^2 + sigma_v^2 * lead^2") {
  const auto h = history_of([](double t) { return Eigen::Vector2d(t, t); }, 5, 0.1);
  PredictorConfig cfg;
  const auto p = predict(h, h.samples.back().state, cfg);
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double lead = 0.1 * static_cast<double>(k + 1);
    CHECK(p.samples[k].var_x == doctest::Approx(cfg.sigma0_sq + cfg.sigma_v_sq * lead * lead));
  }
}

TEST_CASE("single sample gives a zero-velocity rollout with inflated variance") {
  Trajectory h;
  h.samples.push_back({Timestamp(500000), State2D::at({1, 2})});
  PredictorConfig cfg;
  const auto p = predict(h, h.samples.back().state, cfg);
  REQUIRE(p.size() == cfg.steps());
  CHECK(p.samples.front().mean.position() == Eigen::Vector2d(1, 2));
  CHECK(p.samples.back().mean.position() == Eigen::Vector2d(1, 2));
  CHECK(p.samples.front().var_x ==
        doctest::Approx(cfg.sigma0_sq * cfg.single_sample_inflation + cfg.sigma_v_sq * 0.01));
}

TEST_CASE("output timestamps are exact microsecond multiples") {
  const Timestamp start(1'234'567);
  Trajectory h;
  for (int i = 0; i < 300; ++i) h.samples.push_back({start + Duration::from_millis(100) * i, State2D::at({0.1 * i, 0})});
  PredictorConfig cfg;
  cfg.horizon = Duration::from_millis(3000);
  const auto p = predict(h, h.samples.back().state, cfg);
  const Timestamp now = h.samples.back().t;
  for (std::size_t k = 0; k < p.size(); ++k)
    CHECK(p.samples[k].t.micros() == now.micros() + 100'000 * static_cast<std::int64_t>(k + 1));
}

TEST_CASE("displacements telescope back to positions") {
  const auto h = history_of([](double t) { return Eigen::Vector2d(std::sin(t), t * t); }, 11, 0.1);
  const State2D cur = h.samples.back().state;
  PredictorConfig cfg;
  cfg.fit_acceleration = true;
  const auto p = predict(h, cur, cfg);
  const auto d = to_displacements(p, cur);
  Eigen::Vector2d sum = Eigen::Vector2d::Zero();
  for (const auto& s : d) sum += s.mean;
  CHECK((sum - (p.samples.back().mean.position() - cur.position())).norm() < 1e-12);
  const auto back = integrate(d, cur, h.samples.back().t, cfg.step);
  for (std::size_t k = 0; k < p.size(); ++k) CHECK((back.samples[k].mean.position() - p.samples[k].mean.position()).norm() < 1e-12);
}

TEST_CASE("predictor input checks") {
  CHECK_THROWS_AS(predict(Trajectory{}, State2D{}, PredictorConfig{}), InputError);
  PredictorConfig cfg;
  cfg.horizon = Duration::from_millis(2050);
  CHECK_THROWS_AS(cfg.validate(), InputError);
}

TEST_CASE("nll worked values") {
  DisplacementForecast f(3);
  std::vector<Eigen::Vector2d> truth(3, Eigen::Vector2d::Zero());
  CHECK(nll(f, truth) == doctest::Approx(0.0));

  DisplacementForecast one(1);
  CHECK(nll(one, {Eigen::Vector2d(1, 0)}) == doctest::Approx(0.5));

  one[0].var_x = one[0].var_y = std::exp(1.0);
  CHECK(nll(one, {Eigen::Vector2d::Zero()}) == doctest::Approx(1.0));

  one[0].var_x = 0.0;
  CHECK_THROWS_AS(nll(one, {Eigen::Vector2d::Zero()}), DomainError);
}

TEST_CASE("nll is minimized where variance equals the squared error") {
  const double err = 0.7;
  double best_v = 0.0, best = std::numeric_limits<double>::infinity();
  for (double v = 0.01; v < 3.0; v += 0.0005) {
    DisplacementForecast f(1);
    f[0].var_x = v;
    f[0].var_y = 1.0;
    const double s = nll(f, {Eigen::Vector2d(err, 0)});
    if (s < best) {
      best = s;
      best_v = v;
    }
  }
  CHECK(best_v == doctest::Approx(err * err).epsilon(2e-3));
}

TEST_CASE("nll on absolute trajectories uses step differences") {
  PredictedTrajectory p;
  Trajectory truth;
  for (int k = 1; k <= 2; ++k) {
    p.samples.push_back({Timestamp(k * 100000), State2D::at({double(k), 0}), 1.0, 1.0});
    truth.samples.push_back({Timestamp(k * 100000), State2D::at({double(k), 0})});
  }
  CHECK(nll(p, truth, State2D::at({0, 0})) == doctest::Approx(0.0));
  truth.samples[0].t = Timestamp(150000);
  CHECK_THROWS_AS(nll(p, truth, State2D::at({0, 0})), InputError);
}
