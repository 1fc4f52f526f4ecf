#pragma once

// Scalar Gaussian-process regression over time with a squared-exponential
// kernel, Cholesky-based marginal likelihood and bounded hyperparameter search.

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

#include "latefuse/errors.hpp"

namespace latefuse::gp {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// k(a, b) = signal_var * exp(-(a - b)^2 / (2 lengthscale^2)), times in seconds.
template <typename Scalar>
struct SquaredExponential {
  Scalar signal_var = Scalar(1);
  Scalar lengthscale = Scalar(1);

  Scalar operator()(Scalar a, Scalar b) const {
    const Scalar d = a - b;
    return signal_var * std::exp(-d * d / (Scalar(2) * lengthscale * lengthscale));
  }
};

template <typename Scalar>
Matrix<Scalar> covariance(const SquaredExponential<Scalar>& k, const Vector<Scalar>& a,
                          const Vector<Scalar>& b) {
  Matrix<Scalar> K(a.size(), b.size());
  for (Eigen::Index i = 0; i < a.size(); ++i)
    for (Eigen::Index j = 0; j < b.size(); ++j) K(i, j) = k(a(i), b(j));
  return K;
}

inline constexpr std::array<double, 3> kJitterLadder = {1e-8, 1e-6, 1e-4};

/// Cholesky of K + diag(noise) + jitter*I, escalating jitter on failure.
template <typename Scalar>
struct Factorization {
  Eigen::LLT<Matrix<Scalar>> llt;
  Scalar jitter = Scalar(0);
};

template <typename Scalar>
std::optional<Factorization<Scalar>> try_factorize(const Matrix<Scalar>& K,
                                                   const Vector<Scalar>& noise_vars) {
  for (double j : kJitterLadder) {
    Matrix<Scalar> A = K;
    A.diagonal() += noise_vars + Vector<Scalar>::Constant(noise_vars.size(), Scalar(j));
    Factorization<Scalar> f;
    f.llt.compute(A);
    f.jitter = Scalar(j);
    if (f.llt.info() == Eigen::Success && f.llt.matrixLLT().diagonal().minCoeff() > Scalar(0))
      return f;
  }
  return std::nullopt;
}

template <typename Scalar>
Factorization<Scalar> factorize(const Matrix<Scalar>& K, const Vector<Scalar>& noise_vars) {
  auto f = try_factorize(K, noise_vars);
  if (!f) throw NumericError("GP covariance is not positive definite after jitter 1e-4");
  return std::move(*f);
}

template <typename Scalar>
Scalar log_marginal_likelihood(const Factorization<Scalar>& f, const Vector<Scalar>& y) {
  const Vector<Scalar> alpha = f.llt.solve(y);
  const Scalar half_logdet = f.llt.matrixLLT().diagonal().array().log().sum();
  const Scalar n = static_cast<Scalar>(y.size());
  return Scalar(-0.5) * y.dot(alpha) - half_logdet -
         Scalar(0.5) * n * std::log(Scalar(2) * std::numbers::pi_v<Scalar>);
}

/// -1/2 y^T A^-1 y - 1/2 log|A| - n/2 log 2pi with A = K + diag(noise) + jitter*I.
template <typename Scalar>
Scalar log_marginal_likelihood(const SquaredExponential<Scalar>& k, const Vector<Scalar>& t,
                               const Vector<Scalar>& y, const Vector<Scalar>& noise_vars) {
  if (t.size() != y.size() || t.size() != noise_vars.size())
    throw InputError("GP inputs must have equal lengths");
  return log_marginal_likelihood(factorize(covariance(k, t, t), noise_vars), y);
}

struct HyperBounds {
  double signal_var_min = 1e-4;
  double signal_var_max = 1e4;
  double lengthscale_min = 0.05;
  double lengthscale_max = 30.0;
};

struct FitOptions {
  HyperBounds bounds;
  int starts = 4;
  int evals_per_start = 60;
  int screen_points = 9;  // per axis, log-spaced
};

/// Posterior of a zero-mean GP conditioned on noisy observations.
template <typename Scalar>
class Model {
 public:
  Model(SquaredExponential<Scalar> kernel, Vector<Scalar> t_obs, Vector<Scalar> y_obs,
        Vector<Scalar> noise_vars)
      : kernel_(kernel),
        t_obs_(std::move(t_obs)),
        y_obs_(std::move(y_obs)),
        noise_vars_(std::move(noise_vars)),
        chol_(factorize(covariance(kernel_, t_obs_, t_obs_), noise_vars_)),
        alpha_(chol_.llt.solve(y_obs_)) {}

  const SquaredExponential<Scalar>& kernel() const { return kernel_; }
  const Vector<Scalar>& t_obs() const { return t_obs_; }
  const Vector<Scalar>& y_obs() const { return y_obs_; }
  const Vector<Scalar>& noise_vars() const { return noise_vars_; }
  Scalar jitter() const { return chol_.jitter; }
  bool used_fallback() const { return fallback_; }
  void mark_fallback() { fallback_ = true; }

  Scalar log_marginal_likelihood() const { return gp::log_marginal_likelihood(chol_, y_obs_); }

  /// K(T_q, T_obs) [K(T_obs, T_obs) + Sigma_obs]^-1 y_obs
  Vector<Scalar> posterior_mean(const Vector<Scalar>& t_query) const {
    return covariance(kernel_, t_query, t_obs_) * alpha_;
  }

  /// Latent-function variance at each query time.
  Vector<Scalar> posterior_variance(const Vector<Scalar>& t_query) const {
    const Matrix<Scalar> Ks = covariance(kernel_, t_obs_, t_query);
    const Matrix<Scalar> v = chol_.llt.matrixL().solve(Ks);
    Vector<Scalar> out(t_query.size());
    for (Eigen::Index i = 0; i < t_query.size(); ++i)
      out(i) = std::max(kernel_(t_query(i), t_query(i)) - v.col(i).squaredNorm(), Scalar(0));
    return out;
  }

 private:
  SquaredExponential<Scalar> kernel_;
  Vector<Scalar> t_obs_;
  Vector<Scalar> y_obs_;
  Vector<Scalar> noise_vars_;
  Factorization<Scalar> chol_;
  Vector<Scalar> alpha_;
  bool fallback_ = false;
};

namespace detail {

/// Bounded Nelder-Mead maximization; parameters are clamped into the box.
template <typename Scalar, typename F>
std::pair<Eigen::Matrix<Scalar, 2, 1>, Scalar> nelder_mead_max(
    F&& f, Eigen::Matrix<Scalar, 2, 1> x0, Scalar step, const Eigen::Matrix<Scalar, 2, 1>& lo,
    const Eigen::Matrix<Scalar, 2, 1>& hi, int max_evals) {
  using V = Eigen::Matrix<Scalar, 2, 1>;
  auto clamp = [&](V v) { return v.cwiseMax(lo).cwiseMin(hi); };
  int evals = 0;
  auto eval = [&](const V& v) {
    ++evals;
    const Scalar r = f(v);
    return std::isfinite(r) ? -r : std::numeric_limits<Scalar>::infinity();
  };

  std::array<V, 3> x = {clamp(x0), clamp(x0 + V(step, 0)), clamp(x0 + V(0, step))};
  if (x[1] == x[0]) x[1] = clamp(x0 - V(step, 0));
  if (x[2] == x[0]) x[2] = clamp(x0 - V(0, step));
  std::array<Scalar, 3> fx = {eval(x[0]), eval(x[1]), eval(x[2])};

  while (evals < max_evals) {
    std::array<int, 3> idx = {0, 1, 2};
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return fx[a] < fx[b]; });
    const int best = idx[0], mid = idx[1], worst = idx[2];
    const V centroid = (x[best] + x[mid]) / Scalar(2);

    const V xr = clamp(centroid + (centroid - x[worst]));
    const Scalar fr = eval(xr);
    if (fr < fx[best]) {
      const V xe = clamp(centroid + Scalar(2) * (centroid - x[worst]));
      const Scalar fe = eval(xe);
      if (fe < fr) {
        x[worst] = xe;
        fx[worst] = fe;
      } else {
        x[worst] = xr;
        fx[worst] = fr;
      }
      continue;
    }
    if (fr < fx[mid]) {
      x[worst] = xr;
      fx[worst] = fr;
      continue;
    }
    const bool outside = fr < fx[worst];
    const V xc = outside ? clamp(centroid + Scalar(0.5) * (xr - centroid))
                         : clamp(centroid + Scalar(0.5) * (x[worst] - centroid));
    const Scalar fc = eval(xc);
    if (fc < (outside ? fr : fx[worst])) {
      x[worst] = xc;
      fx[worst] = fc;
      continue;
    }
    for (int i : {mid, worst}) {
      x[i] = clamp(x[best] + Scalar(0.5) * (x[i] - x[best]));
      fx[i] = eval(x[i]);
    }
  }
  const auto it = std::min_element(fx.begin(), fx.end());
  return {x[static_cast<std::size_t>(it - fx.begin())], -*it};
}

template <typename Scalar>
Scalar median_abs_gap(const Vector<Scalar>& t) {
  std::vector<Scalar> gaps;
  for (Eigen::Index i = 0; i < t.size(); ++i)
    for (Eigen::Index j = i + 1; j < t.size(); ++j) gaps.push_back(std::abs(t(i) - t(j)));
  if (gaps.empty()) return Scalar(1);
  auto mid = gaps.begin() + static_cast<std::ptrdiff_t>(gaps.size() / 2);
  std::nth_element(gaps.begin(), mid, gaps.end());
  return *mid;
}

}  // namespace detail

/// Heuristic hyperparameters: median pairwise |dt| and the sample variance,
/// clamped into the search box.
template <typename Scalar>
SquaredExponential<Scalar> heuristic_kernel(const Vector<Scalar>& t, const Vector<Scalar>& y,
                                            const HyperBounds& b) {
  const Scalar mean = y.size() > 0 ? y.mean() : Scalar(0);
  const Scalar var = y.size() > 1 ? (y.array() - mean).square().sum() / Scalar(y.size() - 1)
                                  : Scalar(0);
  SquaredExponential<Scalar> k;
  k.signal_var = std::clamp<Scalar>(var, Scalar(b.signal_var_min), Scalar(b.signal_var_max));
  k.lengthscale = std::clamp<Scalar>(detail::median_abs_gap(t), Scalar(b.lengthscale_min),
                                     Scalar(b.lengthscale_max));
  return k;
}

/// Maximizes the log marginal likelihood over (signal_var, lengthscale) in log
/// space: a coarse log grid picks `starts` seeds, each refined by a bounded
/// simplex search. Falls back to heuristic_kernel when fewer than two
/// observations are given or every start fails.
template <typename Scalar>
Model<Scalar> fit(const Vector<Scalar>& t, const Vector<Scalar>& y,
                  const Vector<Scalar>& noise_vars, const FitOptions& opt = {}) {
  if (t.size() == 0) throw InputError("GP fit needs at least one observation");
  if (t.size() != y.size() || t.size() != noise_vars.size())
    throw InputError("GP inputs must have equal lengths");
  if (!t.allFinite() || !y.allFinite() || !noise_vars.allFinite() ||
      (noise_vars.array() < Scalar(0)).any())
    throw InputError("GP inputs must be finite with non-negative noise");

  auto fallback = [&] {
    Model<Scalar> m(heuristic_kernel(t, y, opt.bounds), t, y, noise_vars);
    m.mark_fallback();
    return m;
  };
  if (t.size() < 2) return fallback();

  using V = Eigen::Matrix<Scalar, 2, 1>;
  // Squared time gaps are shared by every kernel evaluation.
  Matrix<Scalar> gap2(t.size(), t.size());
  for (Eigen::Index i = 0; i < t.size(); ++i)
    for (Eigen::Index j = 0; j < t.size(); ++j) gap2(i, j) = (t(i) - t(j)) * (t(i) - t(j));

  auto objective = [&](const V& logp) -> Scalar {
    const Scalar sv = std::exp(logp(0));
    const Scalar ls = std::exp(logp(1));
    const Matrix<Scalar> K = (sv * (-gap2.array() / (Scalar(2) * ls * ls)).exp()).matrix();
    auto f = try_factorize<Scalar>(K, noise_vars);
    if (!f) return -std::numeric_limits<Scalar>::infinity();
    return log_marginal_likelihood(*f, y);
  };

  const V lo(std::log(Scalar(opt.bounds.signal_var_min)), std::log(Scalar(opt.bounds.lengthscale_min)));
  const V hi(std::log(Scalar(opt.bounds.signal_var_max)), std::log(Scalar(opt.bounds.lengthscale_max)));

  struct Seed {
    V p;
    Scalar value;
  };
  std::vector<Seed> seeds;
  const int g = std::max(opt.screen_points, 2);
  for (int i = 0; i < g; ++i)
    for (int j = 0; j < g; ++j) {
      const V p(lo(0) + (hi(0) - lo(0)) * i / (g - 1), lo(1) + (hi(1) - lo(1)) * j / (g - 1));
      const Scalar v = objective(p);
      if (std::isfinite(v)) seeds.push_back({p, v});
    }
  if (seeds.empty()) return fallback();
  std::stable_sort(seeds.begin(), seeds.end(),
                   [](const Seed& a, const Seed& b) { return a.value > b.value; });

  const Scalar step = (hi(1) - lo(1)) / Scalar(g - 1) / Scalar(2);
  V best_p = seeds.front().p;
  Scalar best_v = seeds.front().value;
  const int starts = std::min<int>(opt.starts, static_cast<int>(seeds.size()));
  for (int s = 0; s < starts; ++s) {
    auto [p, v] = detail::nelder_mead_max<Scalar>(objective, seeds[static_cast<std::size_t>(s)].p,
                                                  step, lo, hi, opt.evals_per_start);
    if (v > best_v) {
      best_v = v;
      best_p = p;
    }
  }
  if (!std::isfinite(best_v)) return fallback();

  SquaredExponential<Scalar> k{std::exp(best_p(0)), std::exp(best_p(1))};
  return Model<Scalar>(k, t, y, noise_vars);
}

}  // namespace latefuse::gp
