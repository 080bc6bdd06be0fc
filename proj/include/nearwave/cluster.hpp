#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "nearwave/geo.hpp"

namespace nearwave::cluster {

inline constexpr double default_elbow_threshold = 0.075;
inline constexpr double default_spread_multiplier = 3.0;

struct KmeansOptions {
    std::uint64_t seed = 1;
    int restarts = 16;
    int max_iterations = 300;
    int threads = 1;
};

struct ClusterModel {
    int k = 0;
    std::vector<geo::GeoPoint> centroids;
    std::vector<int> assignment;      // per input point, index of its nearest centroid
    std::vector<double> spreads;      // per-cluster rms distance to the centroid, km
    std::vector<std::size_t> sizes;   // per-cluster member counts
    double dbar = 0.0;                // rms point-to-centroid distance over all points, km
};

// Lloyd iteration with great-circle distances and spherical centroid updates;
// initial centers are distinct points sampled without replacement with
// squared-distance weighting. Best of `restarts` runs by lowest dbar, ties
// broken by restart index; deterministic given the seed. Throws when there
// are fewer distinct points than clusters. An emptied cluster is re-seeded at
// the point farthest from its assigned centroid.
ClusterModel kmeans(std::span<const geo::GeoPoint> points, int k, const KmeansOptions& opt = {},
                    const geo::EarthModel& earth = {});

struct ElbowPoint {
    int k = 0;
    double dbar = 0.0;
    std::optional<double> ratio; // I_k = |dbar_{k+1} - dbar_k| / dbar_k; 0 when dbar_k = 0
};

struct ElbowCurve {
    std::vector<ElbowPoint> points;
    int k_star = 1;
    bool elbow_found = false;
};

// Runs kmeans for k = 1..k_max+1 (clamped at the distinct-point count) and
// picks the smallest k whose relative-change ratios stay below `threshold`
// for every larger scanned k. When no k qualifies, k_star falls back to the
// largest scanned k with elbow_found = false.
ElbowCurve elbow_select(std::span<const geo::GeoPoint> points, int k_max,
                        double threshold = default_elbow_threshold,
                        const KmeansOptions& opt = {}, const geo::EarthModel& earth = {});

// Maps each extra point to its nearest centroid when within
// multiplier * spread of that cluster, else -1. A zero-spread cluster only
// accepts points at exactly the centroid location.
std::vector<int> assign_by_spread(const ClusterModel& model,
                                  std::span<const geo::GeoPoint> extras,
                                  double multiplier = default_spread_multiplier,
                                  const geo::EarthModel& earth = {});

} // namespace nearwave::cluster
