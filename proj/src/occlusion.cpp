#include "latefuse/occlusion.hpp"

#include <algorithm>
#include <cmath>

#include "latefuse/geometry.hpp"

namespace latefuse {

namespace {

geometry::Polygon<double> footprint(const BoundingBox& box) {
  const auto c = box.corners();
  return geometry::make_ccw<double>({c.begin(), c.end()});
}

}  // namespace

void OcclusionConfig::validate() const {
  if (n_rays < 2) throw InputError("occlusion n_rays must be >= 2");
  if (!(discard_threshold >= 0.0 && discard_threshold <= 1.0))
    throw InputError("occlusion discard_threshold must lie in [0, 1]");
}

AngularSpan angular_span(const State2D& ego, const BoundingBox& box) {
  const Eigen::Vector2d origin = ego.position();
  const Eigen::Vector2d to_center = box.center.position() - origin;
  const double bearing = std::atan2(to_center.y(), to_center.x());
  double lo = 0.0;
  double hi = 0.0;
  bool first = true;
  for (const auto& corner : box.corners()) {
    const Eigen::Vector2d v = corner - origin;
    const double rel = wrap_angle(std::atan2(v.y(), v.x()) - bearing);
    lo = first ? rel : std::min(lo, rel);
    hi = first ? rel : std::max(hi, rel);
    first = false;
  }
  return {bearing + lo, bearing + hi};
}

std::vector<double> sample_rays(const AngularSpan& span, int n_rays) {
  if (n_rays < 2) throw InputError("n_rays must be >= 2");
  std::vector<double> rays(static_cast<std::size_t>(n_rays));
  const double width = span.right - span.left;
  for (int n = 0; n < n_rays; ++n)
    rays[static_cast<std::size_t>(n)] = span.left + width * n / (n_rays - 1);
  return rays;
}

std::map<AgentId, double> occlusion_scores(const State2D& ego, std::span<const BoundingBox> boxes,
                                           int n_rays) {
  if (n_rays < 2) throw InputError("n_rays must be >= 2");
  const Eigen::Vector2d origin = ego.position();

  std::vector<geometry::Polygon<double>> polys;
  std::vector<bool> encloses_ego;
  std::vector<double> dist;
  polys.reserve(boxes.size());
  for (const auto& b : boxes) {
    b.validate();
    polys.push_back(footprint(b));
    encloses_ego.push_back(geometry::contains<double>(polys.back(), origin));
    dist.push_back((b.center.position() - origin).norm());
  }

  std::map<AgentId, double> scores;
  for (std::size_t m = 0; m < boxes.size(); ++m) {
    if (encloses_ego[m]) {
      scores[boxes[m].agent_id] = 0.0;
      continue;
    }
    const double d_m = dist[m];
    const double h_m = boxes[m].height;
    int occluded = 0;
    for (double theta : sample_rays(angular_span(ego, boxes[m]), n_rays)) {
      const Eigen::Vector2d dir(std::cos(theta), std::sin(theta));
      for (std::size_t o = 0; o < boxes.size(); ++o) {
        if (o == m || encloses_ego[o]) continue;
        const double d_o = dist[o];
        if (!(d_o < d_m) || boxes[o].height < h_m * (d_o / d_m)) continue;
        if (geometry::ray_entry<double>(polys[o], origin, dir)) {
          ++occluded;
          break;
        }
      }
    }
    scores[boxes[m].agent_id] = static_cast<double>(occluded) / n_rays;
  }
  return scores;
}

std::vector<BoundingBox> filter_visible(std::span<const BoundingBox> boxes,
                                        const std::map<AgentId, double>& scores,
                                        double threshold) {
  std::vector<BoundingBox> kept;
  for (const auto& b : boxes) {
    auto it = scores.find(b.agent_id);
    if (it == scores.end()) throw InputError("no occlusion score for box '" + b.agent_id + "'");
    if (it->second <= threshold) kept.push_back(b);
  }
  return kept;
}

}  // namespace latefuse
