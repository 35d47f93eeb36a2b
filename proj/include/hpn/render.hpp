#pragma once

// Software rasterizer for per-vertex colored meshes. One ray per pixel
// center is intersected with each candidate triangle, so barycentrics are
// taken on the 3D triangle (perspective-correct by construction). Depth test
// is strict less-than, faces in index order, no culling.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Geometry>

#include "hpn/error.hpp"
#include "hpn/mesh.hpp"

namespace hpn {

struct Camera {
    Vec3 position{0, 0, 2.5};
    Vec3 look_at{0, 0, 0};
    Vec3 up{0, 1, 0};
    double vertical_fov = 40.0;  // degrees
    int width = 128;
    int height = 128;
    double near = 0.1;
    double far = 100.0;

    void validate() const {
        if (width < 1 || height < 1) throw ValidationError("camera image size must be positive");
        if (!(near > 0) || !(far > near)) throw ValidationError("camera needs 0 < near < far");
        if (!(vertical_fov > 0 && vertical_fov < 180)) throw ValidationError("vertical fov must be in (0, 180)");
        const Vec3 forward = look_at - position;
        if (forward.norm() < 1e-12) throw ValidationError("camera position coincides with look_at");
        if (forward.normalized().cross(up).norm() < 1e-9) throw ValidationError("camera up is parallel to the view direction");
    }

    /// Rows: right, true up, forward.
    Eigen::Matrix3d basis() const {
        const Vec3 f = (look_at - position).normalized();
        const Vec3 r = f.cross(up).normalized();
        const Vec3 u = r.cross(f);
        Eigen::Matrix3d b;
        b.row(0) = r;
        b.row(1) = u;
        b.row(2) = f;
        return b;
    }

    bool operator==(const Camera&) const = default;
};

struct Coverage {
    std::int32_t face = -1;  // -1: background
    std::array<std::uint32_t, 3> vertices{};
    std::array<double, 3> bary{};
    double depth = 0;
};

struct Image {
    int width = 0;
    int height = 0;
    std::vector<double> rgb;  // row-major, 3 per pixel, row 0 at the top
    std::vector<Coverage> coverage;

    Image() = default;
    Image(int w, int h, const Vec3& fill = Vec3::Zero()) : width(w), height(h), rgb(3 * std::size_t(w) * h) {
        for (std::size_t i = 0; i < pixel_count(); ++i) set(i, fill);
    }
    std::size_t pixel_count() const { return std::size_t(width) * std::size_t(height); }
    Vec3 at(std::size_t i) const { return {rgb[3 * i], rgb[3 * i + 1], rgb[3 * i + 2]}; }
    Vec3 at(int x, int y) const { return at(std::size_t(y) * width + x); }
    void set(std::size_t i, const Vec3& c) {
        rgb[3 * i] = c.x();
        rgb[3 * i + 1] = c.y();
        rgb[3 * i + 2] = c.z();
    }
};

/// The interpolation used by the rasterizer. Written relative to the first
/// corner so that a constant-colored face reproduces its color exactly.
inline Vec3 interpolate_color(const Vec3& c0, const Vec3& c1, const Vec3& c2, double w1, double w2) {
    return c0 + w1 * (c1 - c0) + w2 * (c2 - c0);
}

/// Recomputes pixel colors from coverage records (background elsewhere).
inline Image interpolate(const Image& covered, const std::vector<Vec3>& colors, const Vec3& background) {
    Image out(covered.width, covered.height, background);
    for (std::size_t i = 0; i < covered.coverage.size(); ++i) {
        const auto& c = covered.coverage[i];
        if (c.face < 0) continue;
        out.set(i, interpolate_color(colors[c.vertices[0]], colors[c.vertices[1]], colors[c.vertices[2]], c.bary[1],
                                     c.bary[2]));
    }
    out.coverage = covered.coverage;
    return out;
}

inline Image rasterize(const Mesh& mesh, const std::vector<Vec3>& colors, const Camera& cam,
                       const Vec3& background = Vec3::Zero()) {
    cam.validate();
    if (colors.size() != mesh.vertices.size())
        throw ValidationError("rasterize: " + std::to_string(colors.size()) + " colors for " +
                              std::to_string(mesh.vertices.size()) + " vertices");
    const int W = cam.width, H = cam.height;
    const Eigen::Matrix3d B = cam.basis();
    const double ty = std::tan(cam.vertical_fov * std::numbers::pi / 360.0);
    const double tx = ty * W / H;

    std::vector<Vec3> vc(mesh.vertices.size());  // camera space, z forward
    for (std::size_t i = 0; i < vc.size(); ++i) vc[i] = B * (mesh.vertices[i] - cam.position);

    Image img(W, H, background);
    img.coverage.assign(img.pixel_count(), Coverage{});
    std::vector<double> zbuf(img.pixel_count(), std::numeric_limits<double>::infinity());

    auto ray = [&](int x, int y) {
        return Vec3((2.0 * (x + 0.5) / W - 1.0) * tx, (1.0 - 2.0 * (y + 0.5) / H) * ty, 1.0);
    };

    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
        const auto& face = mesh.faces[f];
        const Vec3 &a = vc[face[0]], &b = vc[face[1]], &c = vc[face[2]];
        if (a.z() >= cam.far && b.z() >= cam.far && c.z() >= cam.far) continue;
        if (a.z() <= cam.near && b.z() <= cam.near && c.z() <= cam.near) continue;

        int x0 = 0, x1 = W - 1, y0 = 0, y1 = H - 1;
        if (a.z() > cam.near && b.z() > cam.near && c.z() > cam.near) {
            double sx0 = 1e300, sx1 = -1e300, sy0 = 1e300, sy1 = -1e300;
            for (const Vec3* v : {&a, &b, &c}) {
                const double sx = (v->x() / v->z() / tx + 1.0) * 0.5 * W - 0.5;
                const double sy = (1.0 - v->y() / v->z() / ty) * 0.5 * H - 0.5;
                sx0 = std::min(sx0, sx);
                sx1 = std::max(sx1, sx);
                sy0 = std::min(sy0, sy);
                sy1 = std::max(sy1, sy);
            }
            // one pixel of slack; the ray test decides coverage
            x0 = std::max(0, static_cast<int>(std::floor(sx0)) - 1);
            x1 = std::min(W - 1, static_cast<int>(std::ceil(sx1)) + 1);
            y0 = std::max(0, static_cast<int>(std::floor(sy0)) - 1);
            y1 = std::min(H - 1, static_cast<int>(std::ceil(sy1)) + 1);
            if (x0 > x1 || y0 > y1) continue;
        }

        const Vec3 e1 = b - a, e2 = c - a;
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                const Vec3 d = ray(x, y);
                const Vec3 pv = d.cross(e2);
                const double det = e1.dot(pv);
                if (std::abs(det) < 1e-300) continue;  // ray parallel to the triangle
                const double inv = 1.0 / det;
                const Vec3 tv = -a;  // ray origin is the camera
                const double u = tv.dot(pv) * inv;
                if (u < 0.0 || u > 1.0) continue;
                const Vec3 qv = tv.cross(e1);
                const double v = d.dot(qv) * inv;
                if (v < 0.0 || u + v > 1.0) continue;
                const double z = e2.dot(qv) * inv;  // d.z == 1, so t is the view depth
                if (z < cam.near || z > cam.far) continue;
                const std::size_t p = std::size_t(y) * W + x;
                if (!(z < zbuf[p])) continue;
                zbuf[p] = z;
                auto& cov = img.coverage[p];
                cov.face = static_cast<std::int32_t>(f);
                cov.vertices = face;
                cov.bary = {std::max(0.0, 1.0 - u - v), u, v};
                cov.depth = z;
                img.set(p, interpolate_color(colors[face[0]], colors[face[1]], colors[face[2]], u, v));
            }
        }
    }
    return img;
}

/// Vertex colors of a mesh, or mid-gray when it has none.
inline std::vector<Vec3> mesh_colors(const Mesh& m) {
    return m.colors ? *m.colors : std::vector<Vec3>(m.vertices.size(), Vec3::Constant(0.5));
}

// ---------------------------------------------------------------------------
// evaluation views

struct ViewProtocol {
    int count = 50;
    double radius = 2.5;
    double vertical_fov = 40.0;
    int resolution = 128;
    std::uint64_t seed = 0;
};

/// `count` cameras on a Fibonacci sphere, rotated by a seeded random
/// rotation, all looking at the origin.
inline std::vector<Camera> fibonacci_views(const ViewProtocol& p) {
    if (p.count < 1) throw ValidationError("view count must be >= 1");
    std::mt19937_64 rng(p.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::Quaterniond q(gauss(rng), gauss(rng), gauss(rng), gauss(rng));
    q.normalize();
    const Eigen::Matrix3d R = q.toRotationMatrix();

    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    std::vector<Camera> out;
    for (int i = 0; i < p.count; ++i) {
        const double z = 1.0 - (2.0 * i + 1.0) / p.count;
        const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        const double phi = golden * i;
        const Vec3 dir = R * Vec3(r * std::cos(phi), r * std::sin(phi), z);
        Camera c;
        c.position = p.radius * dir;
        c.look_at = Vec3::Zero();
        c.up = std::abs(dir.z()) > 0.99 ? Vec3::UnitY() : Vec3::UnitZ();
        c.vertical_fov = p.vertical_fov;
        c.width = c.height = p.resolution;
        out.push_back(c);
    }
    return out;
}

}  // namespace hpn
