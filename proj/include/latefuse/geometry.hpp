#pragma once

// Planar convex-polygon helpers shared by occlusion scoring and box IoU.

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

namespace latefuse::geometry {

template <typename Scalar>
using Vec2 = Eigen::Matrix<Scalar, 2, 1>;

template <typename Scalar>
using Polygon = std::vector<Vec2<Scalar>>;

template <typename Scalar>
Scalar cross(const Vec2<Scalar>& a, const Vec2<Scalar>& b) {
  return a.x() * b.y() - a.y() * b.x();
}

/// Signed area, positive for counter-clockwise winding.
template <typename Scalar>
Scalar signed_area(const Polygon<Scalar>& poly) {
  Scalar acc(0);
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) acc += cross(poly[i], poly[(i + 1) % n]);
  return acc / Scalar(2);
}

template <typename Scalar>
Scalar area(const Polygon<Scalar>& poly) {
  return std::abs(signed_area(poly));
}

template <typename Scalar>
Polygon<Scalar> make_ccw(Polygon<Scalar> poly) {
  if (signed_area(poly) < Scalar(0)) std::reverse(poly.begin(), poly.end());
  return poly;
}

/// Sutherland-Hodgman clip of `subject` against the convex, counter-clockwise `clip`.
template <typename Scalar>
Polygon<Scalar> clip_convex(const Polygon<Scalar>& subject, const Polygon<Scalar>& clip) {
  Polygon<Scalar> out = subject;
  const std::size_t m = clip.size();
  for (std::size_t e = 0; e < m && !out.empty(); ++e) {
    const Vec2<Scalar>& a = clip[e];
    const Vec2<Scalar>& b = clip[(e + 1) % m];
    const Vec2<Scalar> edge = b - a;
    auto side = [&](const Vec2<Scalar>& p) { return cross<Scalar>(edge, p - a); };

    Polygon<Scalar> in = std::move(out);
    out.clear();
    const std::size_t n = in.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Vec2<Scalar>& cur = in[i];
      const Vec2<Scalar>& prev = in[(i + n - 1) % n];
      const Scalar sc = side(cur);
      const Scalar sp = side(prev);
      if (sc >= Scalar(0)) {
        if (sp < Scalar(0)) out.push_back(prev + (cur - prev) * (sp / (sp - sc)));
        out.push_back(cur);
      } else if (sp >= Scalar(0)) {
        out.push_back(prev + (cur - prev) * (sp / (sp - sc)));
      }
    }
  }
  return out;
}

/// Point inside (or on the boundary of) a convex counter-clockwise polygon.
template <typename Scalar>
bool contains(const Polygon<Scalar>& poly, const Vec2<Scalar>& p) {
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i)
    if (cross<Scalar>(poly[(i + 1) % n] - poly[i], p - poly[i]) < Scalar(0)) return false;
  return n >= 3;
}

/// Cyrus-Beck clip of the half-line origin + t*dir (t >= 0) against a convex
/// counter-clockwise polygon. Returns the entry parameter when the ray hits.
template <typename Scalar>
std::optional<Scalar> ray_entry(const Polygon<Scalar>& poly, const Vec2<Scalar>& origin,
                                const Vec2<Scalar>& dir) {
  Scalar t_in(0);
  Scalar t_out = std::numeric_limits<Scalar>::infinity();
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2<Scalar> a = poly[i];
    const Vec2<Scalar> edge = poly[(i + 1) % n] - a;
    // inward normal of a ccw edge
    const Vec2<Scalar> normal(-edge.y(), edge.x());
    const Scalar num = normal.dot(origin - a);
    const Scalar den = normal.dot(dir);
    if (den == Scalar(0)) {
      if (num < Scalar(0)) return std::nullopt;
      continue;
    }
    const Scalar t = -num / den;
    if (den > Scalar(0))
      t_in = std::max(t_in, t);
    else
      t_out = std::min(t_out, t);
    if (t_in > t_out) return std::nullopt;
  }
  return t_in;
}

}  // namespace latefuse::geometry
