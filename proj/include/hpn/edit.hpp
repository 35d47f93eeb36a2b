#pragma once

// Drag edits and feature transfer.
//
// A drag on proxy i of level l moves every bottom vertex j in scope toward
//   target_j = p_j + w_j * delta,   w_j = exp(-|p_j - p_i| / tau)
// and the mesh is then relaxed by a uniform-Laplacian least-squares solve
//   min |L D|^2 + s * sum_j w_j |D_j - (target_j - v_j)|^2 + a * sum_k |D_k|^2
// over displacements D, where k runs over anchored vertices (outside the
// drag support) and a does not scale with s.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <variant>
#include <vector>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SVD>
#include <Eigen/Sparse>

#include "hpn/error.hpp"
#include "hpn/hierarchy.hpp"
#include "hpn/kdtree.hpp"
#include "hpn/mesh.hpp"
#include "hpn/texture.hpp"

namespace hpn {

enum class EditScope { subtree, global };

struct DragEdit {
    int level = 1;
    std::uint32_t point_index = 0;
    Vec3 displacement = Vec3::Zero();
    double tau = 1.0;
    EditScope scope = EditScope::subtree;
    double weight_cutoff = 1e-3;

    bool operator==(const DragEdit&) const = default;
};

struct RigidTransform {
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Vec3 translation = Vec3::Zero();

    Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
    bool operator==(const RigidTransform&) const = default;
};

struct TransferEdit {
    int level = 1;
    std::vector<std::uint32_t> source;
    std::vector<std::uint32_t> target;
    int k_neighbors = 4;
    std::optional<RigidTransform> transform;  // maps target positions into the source frame; auto when empty

    bool operator==(const TransferEdit&) const = default;
};

struct EditOptions {
    double constraint_strength = 10.0;
    double anchor_weight = 1.0;  // 0 leaves vertices outside the support free
    double cg_tolerance = 1e-8;
    int cg_max_iterations = 20000;
};

using WeightMap = std::map<std::uint32_t, double>;

inline void check_level(const ProxyHierarchy& h, int level) {
    if (level < 1 || level > static_cast<int>(h.levels.size()))
        throw ValidationError("level " + std::to_string(level) + " outside 1.." + std::to_string(h.levels.size()));
}

inline void check_fresh(const ProxyHierarchy& h, int level) {
    if (h.stale && level >= 2)
        throw StaleHierarchyError("hierarchy levels above 1 are stale after a geometry edit; rebuild before editing level " +
                                  std::to_string(level));
}

inline void validate_drag(const ProxyHierarchy& h, const DragEdit& e) {
    check_level(h, e.level);
    if (e.point_index >= h.size(e.level))
        throw ValidationError("point " + std::to_string(e.point_index) + " outside level " + std::to_string(e.level) +
                              " (" + std::to_string(h.size(e.level)) + " points)");
    if (!(e.tau > 0)) throw ValidationError("tau must be positive");
    if (!(e.weight_cutoff >= 0 && e.weight_cutoff < 1)) throw ValidationError("weight cutoff must be in [0, 1)");
    if (!e.displacement.allFinite()) throw ValidationError("displacement must be finite");
}

inline WeightMap edit_weights(const ProxyHierarchy& h, const DragEdit& e) {
    validate_drag(h, e);
    const Vec3 center = h.level(e.level)[e.point_index].position;
    const auto& bottom = h.levels.front();
    WeightMap out;
    auto consider = [&](std::uint32_t j) {
        const double w = std::exp(-(bottom[j].position - center).norm() / e.tau);
        if (w >= e.weight_cutoff) out.emplace(j, w);
    };
    if (e.scope == EditScope::subtree) {
        for (auto j : descendants(h, e.level, e.point_index)) consider(j);
    } else {
        for (std::uint32_t j = 0; j < bottom.size(); ++j) consider(j);
    }
    return out;
}

inline std::map<std::uint32_t, Vec3> apply_drag_targets(const ProxyHierarchy& h, const DragEdit& e) {
    std::map<std::uint32_t, Vec3> out;
    for (const auto& [j, w] : edit_weights(h, e)) out.emplace(j, h.levels.front()[j].position + w * e.displacement);
    return out;
}

/// Uniform graph Laplacian L = D - A over the mesh edges.
inline Eigen::SparseMatrix<double> uniform_laplacian(const Mesh& mesh) {
    std::set<std::pair<std::uint32_t, std::uint32_t>> edges;
    for (const auto& f : mesh.faces)
        for (int k = 0; k < 3; ++k) {
            const auto a = f[static_cast<std::size_t>(k)], b = f[static_cast<std::size_t>((k + 1) % 3)];
            if (a != b) edges.insert(std::minmax(a, b));
        }
    const auto n = static_cast<Eigen::Index>(mesh.vertices.size());
    std::vector<Eigen::Triplet<double>> t;
    std::vector<double> degree(mesh.vertices.size(), 0.0);
    for (const auto& [a, b] : edges) {
        t.emplace_back(a, b, -1.0);
        t.emplace_back(b, a, -1.0);
        degree[a] += 1;
        degree[b] += 1;
    }
    for (Eigen::Index i = 0; i < n; ++i)
        if (degree[static_cast<std::size_t>(i)] > 0) t.emplace_back(i, i, degree[static_cast<std::size_t>(i)]);
    Eigen::SparseMatrix<double> L(n, n);
    L.setFromTriplets(t.begin(), t.end());
    return L;
}

struct SoftConstraint {
    Vec3 target;
    double weight;
};

/// New vertex positions. `anchors` pin vertices to where they are with the
/// given weight, independent of `strength`.
inline std::vector<Vec3> laplacian_solve(const Mesh& mesh, const std::map<std::uint32_t, SoftConstraint>& constraints,
                                         double strength, const std::map<std::uint32_t, double>& anchors = {},
                                         const EditOptions& opts = {}) {
    if (constraints.empty()) return mesh.vertices;
    const auto n = static_cast<Eigen::Index>(mesh.vertices.size());
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n, 3);
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
    for (const auto& [j, c] : constraints) {
        if (j >= mesh.vertices.size()) throw ValidationError("constraint on vertex " + std::to_string(j) + " out of range");
        diag[j] += strength * c.weight;
        rhs.row(j) += strength * c.weight * (c.target - mesh.vertices[j]).transpose();
    }
    if (rhs.isZero(0)) return mesh.vertices;  // every target is where its vertex already is
    for (const auto& [j, a] : anchors) {
        if (j >= mesh.vertices.size()) throw ValidationError("anchor on vertex " + std::to_string(j) + " out of range");
        diag[j] += a;
    }

    const auto L = uniform_laplacian(mesh);
    Eigen::SparseMatrix<double> M = Eigen::SparseMatrix<double>(L.transpose()) * L;
    for (Eigen::Index i = 0; i < n; ++i)
        if (diag[i] != 0) M.coeffRef(i, i) += diag[i];
    M.makeCompressed();

    Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper> cg;
    cg.setTolerance(opts.cg_tolerance);
    cg.setMaxIterations(opts.cg_max_iterations);
    cg.compute(M);
    std::vector<Vec3> out = mesh.vertices;
    for (int a = 0; a < 3; ++a) {
        const Eigen::VectorXd b = rhs.col(a);
        if (b.isZero(0)) continue;
        const Eigen::VectorXd d = cg.solve(b);
        if (cg.info() != Eigen::Success)
            throw NumericError("conjugate gradients did not converge: relative residual " + std::to_string(cg.error()) +
                               " after " + std::to_string(cg.iterations()) + " iterations");
        for (Eigen::Index i = 0; i < n; ++i) out[static_cast<std::size_t>(i)][a] += d[i];
    }
    return out;
}

struct EditedGeometry {
    Mesh mesh;
    ProxyHierarchy hierarchy;
    std::vector<std::uint32_t> moved;  // vertices whose position changed, ascending
};

/// Drag edit end to end. Level-1 proxies follow the mesh; higher levels are
/// left as they were and the hierarchy is flagged stale if anything moved.
inline EditedGeometry apply_edit(const Mesh& mesh, const ProxyHierarchy& h, const DragEdit& e,
                                 const EditOptions& opts = {}) {
    validate_drag(h, e);
    check_fresh(h, e.level);
    if (mesh.vertices.size() != h.levels.front().size())
        throw ValidationError("mesh and hierarchy level 1 differ in size");
    const auto weights = edit_weights(h, e);
    std::map<std::uint32_t, SoftConstraint> constraints;
    for (const auto& [j, w] : weights) constraints.emplace(j, SoftConstraint{h.levels.front()[j].position + w * e.displacement, w});
    std::map<std::uint32_t, double> anchors;
    if (opts.anchor_weight > 0)
        for (std::uint32_t j = 0; j < mesh.vertices.size(); ++j)
            if (!weights.count(j)) anchors.emplace(j, opts.anchor_weight);

    EditedGeometry out{mesh, h, {}};
    out.mesh.vertices = laplacian_solve(mesh, constraints, opts.constraint_strength, anchors, opts);
    for (std::uint32_t j = 0; j < mesh.vertices.size(); ++j) {
        if (out.mesh.vertices[j] == mesh.vertices[j]) continue;
        out.moved.push_back(j);
        out.hierarchy.levels.front()[j].position = out.mesh.vertices[j];
    }
    if (!out.moved.empty()) {
        out.hierarchy.stale = true;
        if (out.mesh.normals) out.mesh.normals = compute_vertex_normals(out.mesh);
    }
    return out;
}

// ---------------------------------------------------------------------------
// rigid alignment and feature transfer

/// Least-squares rotation and translation taking source onto target.
inline RigidTransform kabsch_align(const std::vector<Vec3>& source, const std::vector<Vec3>& target) {
    if (source.size() != target.size()) throw ValidationError("kabsch: point counts differ");
    if (source.size() < 3) throw ValidationError("kabsch: need at least 3 correspondences");
    Vec3 cs = Vec3::Zero(), ct = Vec3::Zero();
    for (std::size_t i = 0; i < source.size(); ++i) {
        cs += source[i];
        ct += target[i];
    }
    cs /= static_cast<double>(source.size());
    ct /= static_cast<double>(target.size());
    Eigen::Matrix3d H = Eigen::Matrix3d::Zero();
    for (std::size_t i = 0; i < source.size(); ++i) H += (source[i] - cs) * (target[i] - ct).transpose();

    // collinear (or coincident) sets leave the rotation about their line free
    auto spread = [](const std::vector<Vec3>& p, const Vec3& c) {
        Eigen::Matrix3d S = Eigen::Matrix3d::Zero();
        for (const auto& x : p) S += (x - c) * (x - c).transpose();
        Eigen::JacobiSVD<Eigen::Matrix3d> svd(S);
        const Vec3 s = svd.singularValues();
        return s[0] > 0 ? s[1] / s[0] : 0.0;
    };
    if (spread(source, cs) < 1e-12 || spread(target, ct) < 1e-12)
        throw NumericError("kabsch: points are collinear, rotation is undetermined");

    Eigen::JacobiSVD<Eigen::Matrix3d> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Eigen::Matrix3d U = svd.matrixU(), V = svd.matrixV();
    Eigen::Matrix3d D = Eigen::Matrix3d::Identity();
    D(2, 2) = (V * U.transpose()).determinant() < 0 ? -1.0 : 1.0;
    RigidTransform t;
    t.rotation = V * D * U.transpose();
    t.translation = ct - t.rotation * cs;
    return t;
}

namespace detail {

inline Vec3 centroid(const std::vector<Vec3>& p) {
    Vec3 c = Vec3::Zero();
    for (const auto& x : p) c += x;
    return c / static_cast<double>(p.size());
}

inline double rms_radius(const std::vector<Vec3>& p, const Vec3& c) {
    double s = 0;
    for (const auto& x : p) s += (x - c).squaredNorm();
    return std::sqrt(s / static_cast<double>(p.size()));
}

}  // namespace detail

/// Transform taking target positions into the source frame. Correspondences
/// are mutual nearest neighbours, first after matching centroids and RMS
/// radii, then re-matched under the current estimate until the pairing stops
/// changing. With fewer than 3 usable pairs only the centroids are matched.
inline RigidTransform auto_align(const std::vector<Vec3>& source, const std::vector<Vec3>& target,
                                 int max_rounds = 50) {
    const Vec3 cs = detail::centroid(source), ct = detail::centroid(target);
    const double rs = detail::rms_radius(source, cs), rt = detail::rms_radius(target, ct);
    const double scale = rt > 0 && rs > 0 ? rs / rt : 1.0;
    const KdTree ks(source);

    RigidTransform fallback;
    fallback.translation = cs - ct;

    // round 0 compares scaled target offsets against source offsets
    std::vector<Vec3> moved(target.size());
    for (std::size_t i = 0; i < target.size(); ++i) moved[i] = cs + (target[i] - ct) * scale;

    std::vector<std::pair<std::size_t, std::size_t>> pairs, previous;
    RigidTransform current = fallback;
    for (int round = 0; round < max_rounds; ++round) {
        const KdTree km(moved);
        pairs.clear();
        for (std::size_t i = 0; i < moved.size(); ++i) {
            const auto j = ks.nearest(moved[i]).first;
            if (km.nearest(source[j]).first == i) pairs.emplace_back(i, j);
        }
        if (pairs.size() < 3 || pairs == previous) break;
        std::vector<Vec3> from, to;
        for (const auto& [i, j] : pairs) {
            from.push_back(target[i]);
            to.push_back(source[j]);
        }
        try {
            current = kabsch_align(from, to);
        } catch (const NumericError&) {
            break;  // collinear pairs: keep the last good estimate
        }
        previous = pairs;
        for (std::size_t i = 0; i < target.size(); ++i) moved[i] = current.apply(target[i]);
    }
    return previous.empty() ? fallback : current;
}

/// Distances below this copy the source feature as is.
inline constexpr double transfer_snap_distance = 1e-10;

inline TextureModel transfer_features(const TextureModel& model, const ProxyHierarchy& h, const TransferEdit& e) {
    check_level(h, e.level);
    check_fresh(h, e.level);
    check_compatible(model, h);
    if (e.source.empty() || e.target.empty()) throw ValidationError("transfer needs non-empty source and target sets");
    if (e.k_neighbors < 1) throw ValidationError("k_neighbors must be >= 1");
    const auto& level = h.level(e.level);
    for (const auto* set : {&e.source, &e.target})
        for (auto i : *set)
            if (i >= level.size())
                throw ValidationError("point " + std::to_string(i) + " outside level " + std::to_string(e.level) + " (" +
                                      std::to_string(level.size()) + " points)");

    std::vector<Vec3> src, tgt;
    for (auto i : e.source) src.push_back(level[i].position);
    for (auto i : e.target) tgt.push_back(level[i].position);
    const RigidTransform T = e.transform ? *e.transform : auto_align(src, tgt);

    const auto& table = model.features[static_cast<std::size_t>(e.level - 1)];
    const KdTree tree(src);
    const auto k = std::min<std::size_t>(static_cast<std::size_t>(e.k_neighbors), src.size());
    TextureModel out = model;
    auto& dst = out.features[static_cast<std::size_t>(e.level - 1)];
    for (std::size_t t = 0; t < tgt.size(); ++t) {
        const auto nn = tree.k_nearest(T.apply(tgt[t]), k);
        if (std::sqrt(nn.front().second) <= transfer_snap_distance) {
            dst.col(e.target[t]) = table.col(e.source[nn.front().first]);
            continue;
        }
        std::vector<double> w;
        double wsum = 0;
        for (const auto& nb : nn) wsum += w.emplace_back(1.0 / (std::sqrt(nb.second) + 1e-8));
        // normalise first so a lone neighbour is copied exactly
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(table.rows());
        for (std::size_t n = 0; n < nn.size(); ++n) acc += (w[n] / wsum) * table.col(e.source[nn[n].first]);
        dst.col(e.target[t]) = acc;
    }
    return out;
}

}  // namespace hpn
