#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "hpn/error.hpp"

namespace hpn {

using Vec3 = Eigen::Vector3d;
using Face = std::array<std::uint32_t, 3>;

/// Triangle mesh with optional per-vertex colors and normals.
struct Mesh {
    std::vector<Vec3> vertices;
    std::vector<Face> faces;
    std::optional<std::vector<Vec3>> colors;   // RGB in [0,1]
    std::optional<std::vector<Vec3>> normals;  // unit length

    std::size_t vertex_count() const noexcept { return vertices.size(); }
    std::size_t face_count() const noexcept { return faces.size(); }
    bool has_colors() const noexcept { return colors.has_value(); }

    bool operator==(const Mesh&) const = default;
};

/// Throws IndexError / ValidationError if `mesh` breaks any Mesh invariant.
inline void validate(const Mesh& mesh) {
    const auto n = mesh.vertices.size();
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
        for (auto idx : mesh.faces[f]) {
            if (idx >= n) {
                throw IndexError("face " + std::to_string(f) + " references vertex " +
                                     std::to_string(idx) + " but the mesh has " +
                                     std::to_string(n) + " vertices",
                                 f);
            }
        }
    }
    if (mesh.colors) {
        if (mesh.colors->size() != n)
            throw ValidationError("color count " + std::to_string(mesh.colors->size()) +
                                  " does not match vertex count " + std::to_string(n));
        for (std::size_t i = 0; i < n; ++i) {
            const auto& c = (*mesh.colors)[i];
            if (!(c.minCoeff() >= 0.0 && c.maxCoeff() <= 1.0))
                throw ValidationError("color of vertex " + std::to_string(i) + " outside [0,1]");
        }
    }
    if (mesh.normals) {
        if (mesh.normals->size() != n)
            throw ValidationError("normal count does not match vertex count");
        for (std::size_t i = 0; i < n; ++i) {
            if (std::abs((*mesh.normals)[i].norm() - 1.0) > 1e-6)
                throw ValidationError("normal of vertex " + std::to_string(i) + " is not unit length");
        }
    }
}

/// Uniform scale followed by translation: x' = scale * x + translation.
struct NormalizationTransform {
    double scale = 1.0;
    Vec3 translation = Vec3::Zero();

    Vec3 forward(const Vec3& p) const { return scale * p + translation; }
    Vec3 inverse(const Vec3& p) const { return (p - translation) / scale; }
};

struct BoundingBox {
    Vec3 min = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 max = Vec3::Constant(-std::numeric_limits<double>::infinity());

    void extend(const Vec3& p) {
        min = min.cwiseMin(p);
        max = max.cwiseMax(p);
    }
    Vec3 center() const { return 0.5 * (min + max); }
    Vec3 extent() const { return max - min; }
};

inline BoundingBox bounding_box(const std::vector<Vec3>& points) {
    BoundingBox box;
    for (const auto& p : points) box.extend(p);
    return box;
}

/// Fits the mesh into [-half_extent, half_extent]^3 with a uniform scale,
/// bounding-box center moved to the origin.
inline std::pair<Mesh, NormalizationTransform> normalize_to_cube(const Mesh& mesh,
                                                                 double half_extent = 0.9) {
    if (mesh.vertices.empty()) throw ValidationError("cannot normalize a mesh without vertices");
    if (!(half_extent > 0.0)) throw ValidationError("half extent must be positive");
    const auto box = bounding_box(mesh.vertices);
    const double max_extent = box.extent().maxCoeff();
    if (!(max_extent > 0.0)) throw NumericError("cannot normalize a mesh with zero extent");

    NormalizationTransform xf;
    xf.scale = half_extent / (0.5 * max_extent);
    xf.translation = -xf.scale * box.center();

    Mesh out = mesh;
    for (auto& v : out.vertices) {
        v = xf.forward(v);
        // rounding can push the extreme coordinates a hair past the cube
        v = v.cwiseMax(Vec3::Constant(-half_extent)).cwiseMin(Vec3::Constant(half_extent));
    }
    return {std::move(out), xf};
}

inline Vec3 face_cross(const Mesh& mesh, const Face& f) {
    const Vec3& a = mesh.vertices[f[0]];
    const Vec3& b = mesh.vertices[f[1]];
    const Vec3& c = mesh.vertices[f[2]];
    return (b - a).cross(c - a);
}

inline double face_area(const Mesh& mesh, const Face& f) { return 0.5 * face_cross(mesh, f).norm(); }

/// Area-weighted average of incident face normals. Isolated vertices get +z.
inline std::vector<Vec3> compute_vertex_normals(const Mesh& mesh) {
    std::vector<Vec3> acc(mesh.vertices.size(), Vec3::Zero());
    for (const auto& f : mesh.faces) {
        // |cross| is twice the area, so the sum is already area weighted
        const Vec3 n = face_cross(mesh, f);
        for (auto idx : f) acc[idx] += n;
    }
    for (auto& n : acc) {
        const double len = n.norm();
        if (len > 0.0 && std::isfinite(len))
            n /= len;
        else
            n = Vec3::UnitZ();
    }
    return acc;
}

/// Area-uniform surface samples. Deterministic for a fixed seed.
inline std::vector<Vec3> sample_surface(const Mesh& mesh, std::size_t n, std::uint64_t seed) {
    if (n == 0) throw ValidationError("sample count must be at least 1");
    std::vector<double> cumulative;
    cumulative.reserve(mesh.faces.size());
    double total = 0.0;
    for (const auto& f : mesh.faces) {
        total += face_area(mesh, f);
        cumulative.push_back(total);
    }
    if (!(total > 0.0)) throw NumericError("cannot sample a mesh with zero surface area");

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    std::vector<Vec3> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double pick = uniform(rng) * total;
        auto it = std::upper_bound(cumulative.begin(), cumulative.end(), pick);
        if (it == cumulative.end()) --it;
        // zero-area faces own an empty interval and can never be picked
        const auto& f = mesh.faces[static_cast<std::size_t>(it - cumulative.begin())];
        const double r1 = std::sqrt(uniform(rng));
        const double r2 = uniform(rng);
        const Vec3& a = mesh.vertices[f[0]];
        const Vec3& b = mesh.vertices[f[1]];
        const Vec3& c = mesh.vertices[f[2]];
        out.push_back((1.0 - r1) * a + r1 * (1.0 - r2) * b + r1 * r2 * c);
    }
    return out;
}

}  // namespace hpn
