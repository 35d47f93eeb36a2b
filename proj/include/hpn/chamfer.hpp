#pragma once

#include <vector>

#include "hpn/kdtree.hpp"

namespace hpn {

namespace detail {

inline double mean_nearest_sq(const std::vector<Vec3>& from, const KdTree& to) {
    double sum = 0.0;
    for (const auto& p : from) sum += to.nearest(p).second;  // fixed, sequential order
    return sum / static_cast<double>(from.size());
}

}  // namespace detail

/// Symmetric L2 Chamfer distance: mean squared nearest-neighbor distance
/// from a to b plus the same from b to a.
inline double chamfer_distance(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
    if (a.empty() || b.empty()) throw ValidationError("chamfer distance needs non-empty point sets");
    const KdTree ta(a), tb(b);
    return detail::mean_nearest_sq(a, tb) + detail::mean_nearest_sq(b, ta);
}

/// Default surface sample count used for mesh-to-mesh Chamfer distance.
inline constexpr std::size_t default_chamfer_samples = 100000;

/// Both surfaces are sampled with the same seed, so identical meshes give
/// identical samples and a distance of exactly 0.
inline double mesh_chamfer_distance(const Mesh& a, const Mesh& b,
                                    std::size_t samples = default_chamfer_samples,
                                    std::uint64_t seed = 0) {
    return chamfer_distance(sample_surface(a, samples, seed), sample_surface(b, samples, seed));
}

}  // namespace hpn
