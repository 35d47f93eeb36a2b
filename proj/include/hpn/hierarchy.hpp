#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "hpn/mesh.hpp"

namespace hpn {

/// Axis-aligned cube used as the octree domain.
struct GridDomain {
    double min = -1.0;
    double max = 1.0;

    double size() const { return max - min; }
    bool contains(const Vec3& p) const { return (p.array() >= min).all() && (p.array() <= max).all(); }
    bool operator==(const GridDomain&) const = default;
};

struct HierarchyConfig {
    int levels = 3;                    // L
    int max_resolution_exponent = 7;   // R; level l -> l+1 uses a 2^(R-l+1) grid
    double error_threshold = 5.0;      // clustering threshold on the fit residual
    GridDomain domain{};
    double rank_tolerance = 1e-8;      // relative eigenvalue cut for degenerate fits

    /// Grid resolution used when clustering level `level` (1-based) into level+1.
    int resolution_for(int level) const {
        return 1 << (max_resolution_exponent - level + 1);
    }

    void validate() const {
        if (levels < 2) throw ValidationError("levels must be at least 2");
        if (max_resolution_exponent < 1) throw ValidationError("max resolution exponent must be at least 1");
        if (max_resolution_exponent - (levels - 1) + 1 < 0)
            throw ValidationError("max resolution exponent too small for the number of levels");
        if (max_resolution_exponent > 20) throw ValidationError("max resolution exponent must be at most 20");
        if (!(error_threshold >= 0.0)) throw ValidationError("error threshold must be non-negative");
        if (!(domain.max > domain.min)) throw ValidationError("grid domain must have positive size");
        if (!(rank_tolerance >= 0.0 && rank_tolerance < 1.0))
            throw ValidationError("rank tolerance must lie in [0, 1)");
    }

    bool operator==(const HierarchyConfig&) const = default;
};

struct ProxyPoint {
    Vec3 position = Vec3::Zero();
    Vec3 normal = Vec3::UnitZ();
    int level = 1;
    std::optional<std::uint32_t> parent;  // index into level+1; empty on the top level
    double residual = 0.0;                // fit error of an accepted cluster, else 0

    bool operator==(const ProxyPoint&) const = default;
};

using ProxyLevel = std::vector<ProxyPoint>;
using ChildLists = std::vector<std::vector<std::uint32_t>>;

/// Per-transition statistics gathered while building.
struct LevelStats {
    int resolution = 0;
    std::size_t cells = 0;
    std::size_t merged_cells = 0;    // cells with >= 2 members collapsed into one proxy
    std::size_t promoted_cells = 0;  // cells whose members were all kept
    std::size_t normal_fallbacks = 0;
    std::size_t nonlocal_centers = 0;  // accepted centers farther than one cell from their cell
    std::size_t clamped_points = 0;    // proxies outside the domain, binned at the nearest boundary cell

    bool operator==(const LevelStats&) const = default;
};

struct ProxyHierarchy {
    std::vector<ProxyLevel> levels;     // levels[0] is level 1 (the mesh vertices)
    std::vector<ChildLists> children;   // children[l] lists level-(l+1) children of level-(l+2) points
    HierarchyConfig config;
    std::vector<LevelStats> stats;      // one per transition
    bool stale = false;                 // levels >= 2 no longer match level 1

    std::size_t level_count() const { return levels.size(); }
    std::size_t size(int level) const { return levels.at(static_cast<std::size_t>(level - 1)).size(); }
    const ProxyLevel& level(int level) const { return levels.at(static_cast<std::size_t>(level - 1)); }
    ProxyLevel& level(int level) { return levels.at(static_cast<std::size_t>(level - 1)); }
    /// Children (on level-1) of point `index` on `level` (>= 2).
    const std::vector<std::uint32_t>& children_of(int level, std::size_t index) const {
        return children.at(static_cast<std::size_t>(level - 2)).at(index);
    }

    bool operator==(const ProxyHierarchy&) const = default;
};

/// Fraction of points removed by clustering from level l to l+1.
inline double merge_rate(const ProxyHierarchy& h, int level) {
    const double below = static_cast<double>(h.size(level));
    return below > 0 ? 1.0 - static_cast<double>(h.size(level + 1)) / below : 0.0;
}

// ---------------------------------------------------------------------------
// Octree cells

using CellIndex = std::array<int, 3>;
using CellMap = std::map<CellIndex, std::vector<std::uint32_t>>;

/// Buckets points into a resolution^3 grid over `domain`. Points on the upper
/// boundary land in the last cell. Cells iterate in lexicographic order.
inline CellMap assign_to_grid(const std::vector<Vec3>& points, int resolution, const GridDomain& domain) {
    if (resolution < 1) throw ValidationError("grid resolution must be at least 1");
    const double cell = domain.size() / resolution;
    CellMap cells;
    for (std::size_t i = 0; i < points.size(); ++i) {
        const Vec3& p = points[i];
        CellIndex idx{};
        for (int a = 0; a < 3; ++a) {
            if (!(p[a] >= domain.min && p[a] <= domain.max))
                throw ValidationError("point " + std::to_string(i) + " (" + std::to_string(p.x()) + ", " +
                                      std::to_string(p.y()) + ", " + std::to_string(p.z()) +
                                      ") lies outside the grid domain");
            const int k = static_cast<int>(std::floor((p[a] - domain.min) / cell));
            idx[static_cast<std::size_t>(a)] = std::clamp(k, 0, resolution - 1);
        }
        cells[idx].push_back(static_cast<std::uint32_t>(i));
    }
    return cells;
}

// ---------------------------------------------------------------------------
// Plane-constrained center fit

struct PlaneFit {
    Vec3 center = Vec3::Zero();
    double residual = 0.0;
};

/// Sum over members of (n_k . (c - p_k))^2.
inline double plane_fit_objective(const std::vector<Vec3>& points, const std::vector<Vec3>& normals,
                                  const Vec3& c) {
    double sum = 0.0;
    for (std::size_t k = 0; k < points.size(); ++k) {
        const double r = normals[k].dot(c) - normals[k].dot(points[k]);
        sum += r * r;
    }
    return sum;
}

/// Point whose distance to every member's tangent plane is least-squares
/// minimal. Directions the normals do not constrain (eigenvalues of
/// sum n n^T at or below rank_tolerance * lambda_max) take the centroid's
/// component.
inline PlaneFit fit_plane_center(const std::vector<Vec3>& points, const std::vector<Vec3>& normals,
                                 double rank_tolerance = 1e-8) {
    if (points.empty() || points.size() != normals.size())
        throw ValidationError("plane fit needs equally many (and at least one) points and normals");
    if (points.size() == 1) return {points.front(), 0.0};

    Eigen::Matrix3d A = Eigen::Matrix3d::Zero();
    Vec3 b = Vec3::Zero();
    Vec3 centroid = Vec3::Zero();
    for (std::size_t k = 0; k < points.size(); ++k) {
        const Vec3& n = normals[k];
        A.noalias() += n * n.transpose();
        b += n * n.dot(points[k]);
        centroid += points[k];
    }
    centroid /= static_cast<double>(points.size());

    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(A);
    const Vec3 lambda = eig.eigenvalues();
    const Eigen::Matrix3d U = eig.eigenvectors();
    const double cutoff = rank_tolerance * std::max(lambda.maxCoeff(), 0.0);

    Vec3 center = Vec3::Zero();
    for (int i = 0; i < 3; ++i) {
        const Vec3 u = U.col(i);
        if (lambda[i] > cutoff && lambda[i] > 0.0)
            center += (u.dot(b) / lambda[i]) * u;
        else
            center += u.dot(centroid) * u;
    }
    return {center, plane_fit_objective(points, normals, center)};
}

// ---------------------------------------------------------------------------
// Level construction

struct LevelBuild {
    ProxyLevel next;                          // level l+1
    std::vector<std::uint32_t> parent_of;     // per level-l point
    ChildLists children;                      // per level-(l+1) point
    LevelStats stats;
};

/// Clusters one level into the next: per occupied cell, accept the fitted
/// center when its residual is within `threshold`, otherwise keep every
/// member as its own proxy.
inline LevelBuild build_next_level(const ProxyLevel& level, int resolution, double threshold,
                                   const GridDomain& domain = {}, double rank_tolerance = 1e-8) {
    const int next_level = level.empty() ? 2 : level.front().level + 1;
    const double cell_size = domain.size() / resolution;

    LevelBuild out;
    // Mesh vertices must be inside the domain. Fitted centers above them may
    // drift out, so those are binned by their clamped position (not moved).
    std::vector<Vec3> positions;
    positions.reserve(level.size());
    for (const auto& p : level) {
        if (next_level > 2 && !domain.contains(p.position)) {
            positions.push_back(p.position.cwiseMax(Vec3::Constant(domain.min)).cwiseMin(Vec3::Constant(domain.max)));
            ++out.stats.clamped_points;
        } else {
            positions.push_back(p.position);
        }
    }
    const auto cells = assign_to_grid(positions, resolution, domain);
    out.parent_of.assign(level.size(), 0);
    out.stats.resolution = resolution;
    out.stats.cells = cells.size();

    std::vector<Vec3> pts, nrm;
    for (const auto& [cell, members] : cells) {
        pts.clear();
        nrm.clear();
        for (auto m : members) {
            pts.push_back(level[m].position);
            nrm.push_back(level[m].normal);
        }
        const PlaneFit fit = fit_plane_center(pts, nrm, rank_tolerance);
        if (fit.residual <= threshold) {
            Vec3 mean = Vec3::Zero();
            for (const auto& n : nrm) mean += n;
            mean /= static_cast<double>(nrm.size());
            Vec3 normal;
            if (mean.norm() < 1e-8) {
                normal = nrm.front();  // normals cancel out
                ++out.stats.normal_fallbacks;
            } else {
                normal = mean.normalized();
            }
            // not enforced, only counted: the least-squares center is unconstrained
            for (int a = 0; a < 3; ++a) {
                const double lo = domain.min + cell[static_cast<std::size_t>(a)] * cell_size;
                if (fit.center[a] < lo - cell_size || fit.center[a] > lo + 2 * cell_size) {
                    ++out.stats.nonlocal_centers;
                    break;
                }
            }
            const auto id = static_cast<std::uint32_t>(out.next.size());
            out.next.push_back({fit.center, normal, next_level, std::nullopt, fit.residual});
            out.children.emplace_back(members.begin(), members.end());
            for (auto m : members) out.parent_of[m] = id;
            if (members.size() >= 2) ++out.stats.merged_cells;
        } else {
            for (auto m : members) {
                const auto id = static_cast<std::uint32_t>(out.next.size());
                out.next.push_back({level[m].position, level[m].normal, next_level, std::nullopt, 0.0});
                out.children.push_back({m});
                out.parent_of[m] = id;
            }
            ++out.stats.promoted_cells;
        }
    }
    return out;
}

/// Builds all L levels from the mesh vertices. The mesh must already lie in
/// the grid domain; vertex normals are estimated when the mesh has none.
inline ProxyHierarchy build_hierarchy(const Mesh& mesh, const HierarchyConfig& config = {}) {
    config.validate();
    const std::vector<Vec3> normals = mesh.normals ? *mesh.normals : compute_vertex_normals(mesh);

    ProxyHierarchy h;
    h.config = config;
    ProxyLevel bottom;
    bottom.reserve(mesh.vertices.size());
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i)
        bottom.push_back({mesh.vertices[i], normals[i], 1, std::nullopt, 0.0});
    h.levels.push_back(std::move(bottom));

    for (int l = 1; l < config.levels; ++l) {
        auto built = build_next_level(h.levels.back(), config.resolution_for(l), config.error_threshold,
                                      config.domain, config.rank_tolerance);
        auto& below = h.levels.back();
        for (std::size_t i = 0; i < below.size(); ++i) below[i].parent = built.parent_of[i];
        h.children.push_back(std::move(built.children));
        h.stats.push_back(built.stats);
        h.levels.push_back(std::move(built.next));
    }
    return h;
}

/// Throws StructuralError when links are inconsistent.
inline void check_structure(const ProxyHierarchy& h) {
    const auto L = h.levels.size();
    if (L < 2 || static_cast<int>(L) != h.config.levels)
        throw StructuralError("hierarchy level count does not match its config");
    if (h.children.size() != L - 1) throw StructuralError("children table count mismatch");
    for (std::size_t l = 0; l < L; ++l) {
        for (std::size_t i = 0; i < h.levels[l].size(); ++i) {
            const auto& p = h.levels[l][i];
            if (p.level != static_cast<int>(l) + 1) throw StructuralError("proxy carries the wrong level number");
            if (l + 1 < L) {
                if (!p.parent || *p.parent >= h.levels[l + 1].size())
                    throw StructuralError("level " + std::to_string(l + 1) + " point " + std::to_string(i) +
                                          " has no valid parent");
            } else if (p.parent) {
                throw StructuralError("top-level point has a parent");
            }
        }
    }
    for (std::size_t l = 0; l + 1 < L; ++l) {
        const auto& lists = h.children[l];
        if (lists.size() != h.levels[l + 1].size()) throw StructuralError("children list count mismatch");
        std::vector<int> seen(h.levels[l].size(), 0);
        for (std::size_t j = 0; j < lists.size(); ++j) {
            for (auto c : lists[j]) {
                if (c >= seen.size() || *h.levels[l][c].parent != j)
                    throw StructuralError("children list disagrees with parent links");
                ++seen[c];
            }
        }
        for (int s : seen)
            if (s != 1) throw StructuralError("children lists do not partition the level below");
    }
}

/// Chain of ancestor indices for a bottom vertex: result[l] is its index on level l+1.
inline std::vector<std::uint32_t> ancestor_chain(const ProxyHierarchy& h, std::size_t vertex) {
    std::vector<std::uint32_t> chain;
    chain.reserve(h.levels.size());
    if (vertex >= h.levels.front().size()) throw StructuralError("vertex index out of range");
    auto idx = static_cast<std::uint32_t>(vertex);
    for (std::size_t l = 0; l < h.levels.size(); ++l) {
        chain.push_back(idx);
        if (l + 1 == h.levels.size()) break;
        const auto& parent = h.levels[l][idx].parent;
        if (!parent || *parent >= h.levels[l + 1].size())
            throw StructuralError("broken parent chain at level " + std::to_string(l + 1) + " index " +
                                  std::to_string(idx));
        idx = *parent;
    }
    return chain;
}

/// Bottom-level descendants of point `index` on `level`, ascending.
inline std::vector<std::uint32_t> descendants(const ProxyHierarchy& h, int level, std::size_t index) {
    std::vector<std::uint32_t> frontier{static_cast<std::uint32_t>(index)};
    for (int l = level; l > 1; --l) {
        std::vector<std::uint32_t> next;
        for (auto i : frontier) {
            const auto& c = h.children_of(l, i);
            next.insert(next.end(), c.begin(), c.end());
        }
        frontier = std::move(next);
    }
    std::sort(frontier.begin(), frontier.end());
    return frontier;
}

}  // namespace hpn
