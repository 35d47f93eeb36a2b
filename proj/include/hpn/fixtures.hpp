#pragma once

// Procedural test meshes with deterministic vertex colors.
//
//   icosphere  unit sphere, icosahedron subdivided `subdivisions` times
//              (3 -> 642 vertices). Colors: three latitude bands
//                  red    (0.85, 0.20, 0.15)   z < -1/3
//                  yellow (0.95, 0.85, 0.30)   -1/3 < z < 1/3
//                  blue   (0.15, 0.35, 0.80)   z > 1/3
//              blended by smoothstep over a 0.3-wide seam, then green is
//              modulated by 0.08 * sin(4 * atan2(y, x)).
//   torus      major radius 1, minor radius 0.4, `rings` x `sides` grid.
//              Colors: (0.5 + 0.4 sin 2u, 0.5 + 0.4 cos 3v, 0.5 + 0.3 sin(u + v))
//              with u the ring angle and v the tube angle.
//   cube       [-1,1]^3 with each face split into an n x n grid, welded.
//              Colors: 0.5 + 0.45 * p (an RGB cube).

#include <cmath>
#include <map>
#include <numbers>

#include "hpn/mesh.hpp"

namespace hpn::fixtures {

namespace detail {

inline double smoothstep(double e0, double e1, double x) {
    const double t = std::clamp((x - e0) / (e1 - e0), 0.0, 1.0);
    return t * t * (3.0 - 2.0 * t);
}

}  // namespace detail

inline Vec3 band_color(const Vec3& p) {
    const Vec3 red(0.85, 0.20, 0.15), yellow(0.95, 0.85, 0.30), blue(0.15, 0.35, 0.80);
    const double up = detail::smoothstep(1.0 / 3.0 - 0.15, 1.0 / 3.0 + 0.15, p.z());
    const double down = detail::smoothstep(-1.0 / 3.0 - 0.15, -1.0 / 3.0 + 0.15, p.z());
    Vec3 c = red * (1.0 - down) + yellow * (down - up) + blue * up;
    c.y() += 0.08 * std::sin(4.0 * std::atan2(p.y(), p.x()));
    return c.cwiseMax(Vec3::Zero()).cwiseMin(Vec3::Ones());
}

inline Mesh icosphere(int subdivisions = 3) {
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    Mesh m;
    m.vertices = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                  {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
    for (auto& v : m.vertices) v.normalize();
    m.faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
               {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
               {3, 8, 9},  {4, 9, 5},  {2, 4, 11}, {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
    for (int s = 0; s < subdivisions; ++s) {
        std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> midpoint;
        auto mid = [&](std::uint32_t a, std::uint32_t b) {
            auto key = std::minmax(a, b);
            auto it = midpoint.find(key);
            if (it != midpoint.end()) return it->second;
            const auto idx = static_cast<std::uint32_t>(m.vertices.size());
            m.vertices.push_back((m.vertices[a] + m.vertices[b]).normalized());
            midpoint.emplace(key, idx);
            return idx;
        };
        std::vector<Face> next;
        next.reserve(m.faces.size() * 4);
        for (const auto& f : m.faces) {
            const auto ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
            next.push_back({f[0], ab, ca});
            next.push_back({f[1], bc, ab});
            next.push_back({f[2], ca, bc});
            next.push_back({ab, bc, ca});
        }
        m.faces = std::move(next);
    }
    std::vector<Vec3> colors;
    for (const auto& v : m.vertices) colors.push_back(band_color(v));
    m.colors = std::move(colors);
    return m;
}

inline Mesh torus(int rings = 32, int sides = 16, double major = 1.0, double minor = 0.4) {
    Mesh m;
    std::vector<Vec3> colors;
    const double two_pi = 2.0 * std::numbers::pi;
    for (int i = 0; i < rings; ++i) {
        const double u = two_pi * i / rings;
        for (int j = 0; j < sides; ++j) {
            const double v = two_pi * j / sides;
            m.vertices.emplace_back((major + minor * std::cos(v)) * std::cos(u),
                                    (major + minor * std::cos(v)) * std::sin(u), minor * std::sin(v));
            colors.emplace_back(0.5 + 0.4 * std::sin(2 * u), 0.5 + 0.4 * std::cos(3 * v),
                                0.5 + 0.3 * std::sin(u + v));
        }
    }
    auto id = [&](int i, int j) {
        return static_cast<std::uint32_t>(((i + rings) % rings) * sides + (j + sides) % sides);
    };
    for (int i = 0; i < rings; ++i) {
        for (int j = 0; j < sides; ++j) {
            m.faces.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
            m.faces.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
        }
    }
    m.colors = std::move(colors);
    return m;
}

inline Mesh cube(int n = 8) {
    Mesh m;
    std::map<std::array<long, 3>, std::uint32_t> weld;  // keyed on the integer lattice
    auto vertex = [&](const std::array<long, 3>& key) {
        auto it = weld.find(key);
        if (it != weld.end()) return it->second;
        const auto idx = static_cast<std::uint32_t>(m.vertices.size());
        m.vertices.emplace_back(2.0 * key[0] / n - 1.0, 2.0 * key[1] / n - 1.0, 2.0 * key[2] / n - 1.0);
        weld.emplace(key, idx);
        return idx;
    };
    // each face: fixed axis, side, and two in-plane axes ordered for outward winding
    struct Side {
        int axis, u, v;
        long value;
    };
    const Side sides[] = {{0, 1, 2, n}, {0, 2, 1, 0}, {1, 2, 0, n}, {1, 0, 2, 0}, {2, 0, 1, n}, {2, 1, 0, 0}};
    for (const auto& s : sides) {
        for (long a = 0; a < n; ++a) {
            for (long b = 0; b < n; ++b) {
                auto key = [&](long da, long db) {
                    std::array<long, 3> k{};
                    k[s.axis] = s.value;
                    k[s.u] = a + da;
                    k[s.v] = b + db;
                    return vertex(k);
                };
                const auto p00 = key(0, 0), p10 = key(1, 0), p11 = key(1, 1), p01 = key(0, 1);
                m.faces.push_back({p00, p10, p11});
                m.faces.push_back({p00, p11, p01});
            }
        }
    }
    std::vector<Vec3> colors;
    for (const auto& p : m.vertices) colors.push_back((Vec3::Constant(0.5) + 0.45 * p));
    m.colors = std::move(colors);
    return m;
}

}  // namespace hpn::fixtures
