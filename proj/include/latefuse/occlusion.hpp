#pragma once

#include <map>
#include <span>
#include <vector>

#include "latefuse/core.hpp"

namespace latefuse {

struct OcclusionConfig {
  int n_rays = 21;
  double discard_threshold = 0.75;

  void validate() const;
};

/// Angular interval [left, right] (radians, right >= left) subtended by a box
/// as seen from `ego`, unwrapped around the ego-to-center bearing.
struct AngularSpan {
  double left = 0.0;
  double right = 0.0;
};

AngularSpan angular_span(const State2D& ego, const BoundingBox& box);

/// Ray bearings sampled uniformly over the span, endpoints included.
std::vector<double> sample_rays(const AngularSpan& span, int n_rays);

/// Casting-ray occlusion score per box: the fraction of rays through the box's
/// angular span that first pass a nearer box tall enough to hide it
/// (h_o >= h_m * d_o / d_m, distances ego-to-center). A box containing the ego
/// scores 0 and never acts as an occluder.
std::map<AgentId, double> occlusion_scores(const State2D& ego, std::span<const BoundingBox> boxes,
                                           int n_rays);

/// Keeps boxes whose score is <= threshold, preserving order.
std::vector<BoundingBox> filter_visible(std::span<const BoundingBox> boxes,
                                        const std::map<AgentId, double>& scores,
                                        double threshold);

}  // namespace latefuse
