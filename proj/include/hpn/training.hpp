#pragma once

// Two supervision paths for the texture field:
//   vertex mode  mean squared error between decoded and target vertex colors
//   render mode  mean squared error over covered pixels of rasterized views;
//                pixel gradients reach vertex colors through the coverage
//                barycentrics (geometry stays fixed)

#include <algorithm>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

#include "hpn/render.hpp"
#include "hpn/texture.hpp"

namespace hpn {

struct TrainOptions {
    int iterations = 2000;
    int batch_size = 0;  // 0 or >= n: every vertex each step
    std::uint64_t seed = 0;
    AdamOptions adam;
    std::function<void(int iteration, double loss)> on_step;  // optional progress callback
};

/// Auxiliary loss term. Returns its value and adds weight * its gradient.
using AuxLoss = std::function<double(const TextureModel&, Gradients&, double weight)>;

namespace detail {

inline std::vector<std::uint32_t> iota_u32(std::size_t n) {
    std::vector<std::uint32_t> v(n);
    std::iota(v.begin(), v.end(), 0u);
    return v;
}

/// Sorted batch drawn without replacement.
inline std::vector<std::uint32_t> sample_batch(std::size_t n, int batch, std::mt19937_64& rng) {
    auto all = iota_u32(n);
    if (batch <= 0 || static_cast<std::size_t>(batch) >= n) return all;
    for (std::size_t i = 0; i < static_cast<std::size_t>(batch); ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(all[i], all[pick(rng)]);
    }
    all.resize(static_cast<std::size_t>(batch));
    std::sort(all.begin(), all.end());
    return all;
}

}  // namespace detail

/// Returns the loss of each step, measured before the update.
inline std::vector<double> train_vertex_colors(TextureModel& model, const ProxyHierarchy& h, const Mesh& mesh,
                                               const TrainOptions& opts, OptimizerState* state = nullptr) {
    if (!mesh.colors) throw ValidationError("vertex-mode training needs per-vertex target colors");
    if (mesh.vertices.size() != h.levels.front().size())
        throw ValidationError("mesh has " + std::to_string(mesh.vertices.size()) + " vertices, hierarchy level 1 has " +
                              std::to_string(h.levels.front().size()));
    check_compatible(model, h);
    OptimizerState local = OptimizerState::for_model(model, opts.adam);
    OptimizerState& s = state ? *state : local;

    std::mt19937_64 rng(opts.seed);
    std::vector<double> history;
    history.reserve(static_cast<std::size_t>(std::max(0, opts.iterations)));
    for (int it = 0; it < opts.iterations; ++it) {
        const auto batch = detail::sample_batch(mesh.vertices.size(), opts.batch_size, rng);
        const auto cache = forward_batch(h, model, batch);
        const auto& y = cache.output();
        Eigen::MatrixXd grad_y(3, y.cols());
        double loss = 0;
        const double scale = 1.0 / (3.0 * static_cast<double>(batch.size()));
        for (Eigen::Index j = 0; j < y.cols(); ++j) {
            const Vec3 d = y.col(j) - (*mesh.colors)[batch[static_cast<std::size_t>(j)]];
            loss += d.squaredNorm();
            grad_y.col(j) = 2.0 * scale * d;
        }
        loss *= scale;
        history.push_back(loss);
        Gradients g = Gradients::zeros_like(model);
        backward(model, cache, grad_y, g);
        adam_step(model, g, s);
        if (opts.on_step) opts.on_step(it, loss);
    }
    return history;
}

struct TrainingView {
    Camera camera;
    Image target;
};

/// Per-pixel color gradient pushed back onto vertex colors.
struct RenderLoss {
    double value = 0;
    std::vector<Vec3> color_grad;  // one per vertex
    std::size_t covered = 0;
};

/// Mean squared error over covered pixels (all views, all channels).
/// `coverage` holds one rasterized image per view.
inline RenderLoss render_loss(const std::vector<Image>& coverage, const std::vector<TrainingView>& views,
                              const std::vector<Vec3>& colors) {
    RenderLoss out;
    out.color_grad.assign(colors.size(), Vec3::Zero());
    for (const auto& img : coverage)
        for (const auto& c : img.coverage) out.covered += c.face >= 0;
    if (out.covered == 0) return out;
    const double scale = 1.0 / (3.0 * static_cast<double>(out.covered));
    for (std::size_t v = 0; v < views.size(); ++v) {
        const auto& img = coverage[v];
        for (std::size_t i = 0; i < img.coverage.size(); ++i) {
            const auto& c = img.coverage[i];
            if (c.face < 0) continue;
            const Vec3 pred = interpolate_color(colors[c.vertices[0]], colors[c.vertices[1]], colors[c.vertices[2]],
                                                c.bary[1], c.bary[2]);
            const Vec3 d = pred - views[v].target.at(i);
            out.value += d.squaredNorm();
            const Vec3 g = 2.0 * scale * d;
            out.color_grad[c.vertices[0]] += (1.0 - c.bary[1] - c.bary[2]) * g;
            out.color_grad[c.vertices[1]] += c.bary[1] * g;
            out.color_grad[c.vertices[2]] += c.bary[2] * g;
        }
    }
    out.value *= scale;
    return out;
}

/// Optimizes L_rgb + lambda * L_others over the given views. Without a hook
/// the loss is exactly L_rgb.
inline std::vector<double> train_render_loss(TextureModel& model, const ProxyHierarchy& h, const Mesh& mesh,
                                             const std::vector<TrainingView>& views, double lambda,
                                             const TrainOptions& opts, const AuxLoss& others = {},
                                             OptimizerState* state = nullptr) {
    if (views.empty()) throw ValidationError("render-mode training needs at least one view");
    if (mesh.vertices.size() != h.levels.front().size())
        throw ValidationError("mesh has " + std::to_string(mesh.vertices.size()) + " vertices, hierarchy level 1 has " +
                              std::to_string(h.levels.front().size()));
    for (const auto& v : views)
        if (v.target.width != v.camera.width || v.target.height != v.camera.height)
            throw ValidationError("target image is " + std::to_string(v.target.width) + "x" +
                                  std::to_string(v.target.height) + " but the camera renders " +
                                  std::to_string(v.camera.width) + "x" + std::to_string(v.camera.height));
    check_compatible(model, h);

    // geometry is fixed, so coverage is computed once
    std::vector<Image> coverage;
    const std::vector<Vec3> dummy(mesh.vertices.size(), Vec3::Zero());
    std::vector<char> seen(mesh.vertices.size(), 0);
    for (const auto& v : views) {
        coverage.push_back(rasterize(mesh, dummy, v.camera));
        for (const auto& c : coverage.back().coverage)
            if (c.face >= 0)
                for (auto idx : c.vertices) seen[idx] = 1;
    }
    std::vector<std::uint32_t> visible;
    for (std::size_t i = 0; i < seen.size(); ++i)
        if (seen[i]) visible.push_back(static_cast<std::uint32_t>(i));

    OptimizerState local = OptimizerState::for_model(model, opts.adam);
    OptimizerState& s = state ? *state : local;
    std::vector<double> history;
    std::vector<Vec3> colors(mesh.vertices.size(), Vec3::Zero());
    for (int it = 0; it < opts.iterations; ++it) {
        const auto cache = forward_batch(h, model, visible);
        for (std::size_t j = 0; j < visible.size(); ++j) colors[visible[j]] = cache.output().col(static_cast<Eigen::Index>(j));
        const auto rl = render_loss(coverage, views, colors);
        Eigen::MatrixXd grad_y(3, static_cast<Eigen::Index>(visible.size()));
        for (std::size_t j = 0; j < visible.size(); ++j) grad_y.col(static_cast<Eigen::Index>(j)) = rl.color_grad[visible[j]];
        Gradients g = Gradients::zeros_like(model);
        backward(model, cache, grad_y, g);
        double loss = rl.value;
        if (others) loss += lambda * others(model, g, lambda);
        history.push_back(loss);
        adam_step(model, g, s);
        if (opts.on_step) opts.on_step(it, loss);
    }
    return history;
}

/// Ground-truth renders of a colored mesh for the given cameras.
inline std::vector<TrainingView> make_views(const Mesh& mesh, const std::vector<Camera>& cams,
                                            const Vec3& background = Vec3::Zero()) {
    std::vector<TrainingView> out;
    const auto colors = mesh_colors(mesh);
    for (const auto& c : cams) {
        auto img = rasterize(mesh, colors, c, background);
        img.coverage.clear();
        out.push_back({c, std::move(img)});
    }
    return out;
}

}  // namespace hpn
