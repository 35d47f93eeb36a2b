#pragma once

// Per-level feature tables, top-down fusion and the color decoder.
//
// Fused input for a bottom vertex with ancestors k_2, ..., k_L:
//   g_L = f^(L)[k_L]
//   g_l = [ g_{l+1} , f^(l)[k_l] , PE(p^(l)[k_l] - p^(l+1)[k_{l+1}]) ]
// and the decoder sees g_1. Hidden layers use SiLU, the output a sigmoid.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "hpn/encoding.hpp"
#include "hpn/error.hpp"
#include "hpn/hierarchy.hpp"

namespace hpn {

struct TextureConfig {
    std::vector<int> feature_dims{32, 24, 12};  // level 1 first
    int pe_bands = 10;
    int hidden_width = 128;
    int hidden_layers = 2;
    double lambda = 0.5;               // weight of the auxiliary loss hook
    bool positional_encoding = true;   // false: PE blocks are zero
    bool multi_level_features = true;  // false: features above level 1 are zero and frozen

    int levels() const { return static_cast<int>(feature_dims.size()); }
    int pe_dim() const { return positional_encoding_dim(pe_bands); }
    int input_dim() const {
        int d = feature_dims.back();
        for (int l = 0; l + 1 < levels(); ++l) d += feature_dims[static_cast<std::size_t>(l)] + pe_dim();
        return d;
    }
    void validate() const {
        if (levels() < 2) throw ValidationError("texture config needs at least two levels");
        for (int f : feature_dims)
            if (f < 1) throw ValidationError("feature dimensions must be positive");
        if (pe_bands < 1) throw ValidationError("pe_bands must be >= 1");
        if (hidden_width < 1 || hidden_layers < 1) throw ValidationError("decoder needs at least one hidden layer");
        if (!(lambda >= 0)) throw ValidationError("lambda must be non-negative");
    }
    bool operator==(const TextureConfig&) const = default;
};

struct DenseLayer {
    Eigen::MatrixXd weight;  // out x in
    Eigen::VectorXd bias;

    bool operator==(const DenseLayer& o) const { return weight == o.weight && bias == o.bias; }
};

struct TextureModel {
    TextureConfig config;
    std::vector<Eigen::MatrixXd> features;  // per level, F^(l) x n_l; column i is point i's feature
    std::vector<DenseLayer> decoder;

    std::size_t level_size(int level) const { return static_cast<std::size_t>(features.at(static_cast<std::size_t>(level - 1)).cols()); }
    bool operator==(const TextureModel& o) const {
        return config == o.config && features == o.features && decoder == o.decoder;
    }
};

/// Where each block of the fused vector starts.
struct FusionBlock {
    int level;
    int feature_offset;
    int pe_offset;  // -1 for the top level
};

inline std::vector<FusionBlock> fusion_layout(const TextureConfig& c) {
    std::vector<FusionBlock> out;
    const int L = c.levels();
    int off = 0;
    out.push_back({L, 0, -1});
    off += c.feature_dims.back();
    for (int l = L - 1; l >= 1; --l) {
        const int f = c.feature_dims[static_cast<std::size_t>(l - 1)];
        out.push_back({l, off, off + f});
        off += f + c.pe_dim();
    }
    return out;
}

inline std::size_t decoder_parameter_count(const TextureConfig& c) {
    std::size_t n = 0;
    int in = c.input_dim();
    for (int i = 0; i <= c.hidden_layers; ++i) {
        const int out = i == c.hidden_layers ? 3 : c.hidden_width;
        n += static_cast<std::size_t>(in) * static_cast<std::size_t>(out) + static_cast<std::size_t>(out);
        in = out;
    }
    return n;
}

/// Fresh model: features uniform in [-0.01, 0.01], decoder weights uniform in
/// +-1/sqrt(fan_in), hidden biases likewise, output bias zero.
inline TextureModel init_texture_model(const TextureConfig& config, const std::vector<std::size_t>& level_sizes,
                                       std::uint64_t seed) {
    config.validate();
    if (level_sizes.size() != config.feature_dims.size())
        throw ValidationError("texture config has " + std::to_string(config.levels()) + " levels but the hierarchy has " +
                              std::to_string(level_sizes.size()));
    std::mt19937_64 rng(seed);
    auto uniform = [&](double bound) { return std::uniform_real_distribution<double>(-bound, bound)(rng); };

    TextureModel m;
    m.config = config;
    for (std::size_t l = 0; l < level_sizes.size(); ++l) {
        Eigen::MatrixXd table(config.feature_dims[l], static_cast<Eigen::Index>(level_sizes[l]));
        for (Eigen::Index j = 0; j < table.cols(); ++j)
            for (Eigen::Index i = 0; i < table.rows(); ++i) table(i, j) = uniform(0.01);
        if (l > 0 && !config.multi_level_features) table.setZero();
        m.features.push_back(std::move(table));
    }
    int in = config.input_dim();
    for (int i = 0; i <= config.hidden_layers; ++i) {
        const bool last = i == config.hidden_layers;
        const int out = last ? 3 : config.hidden_width;
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        DenseLayer layer{Eigen::MatrixXd(out, in), Eigen::VectorXd::Zero(out)};
        for (Eigen::Index c = 0; c < layer.weight.cols(); ++c)
            for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) layer.weight(r, c) = uniform(bound);
        if (!last)
            for (Eigen::Index r = 0; r < out; ++r) layer.bias(r) = uniform(bound);
        m.decoder.push_back(std::move(layer));
        in = out;
    }
    return m;
}

inline std::vector<std::size_t> level_sizes(const ProxyHierarchy& h) {
    std::vector<std::size_t> out;
    for (const auto& l : h.levels) out.push_back(l.size());
    return out;
}

/// Throws ValidationError unless the model's tables match the hierarchy.
inline void check_compatible(const TextureModel& m, const ProxyHierarchy& h) {
    if (m.features.size() != h.levels.size())
        throw ValidationError("model has " + std::to_string(m.features.size()) + " feature levels, hierarchy has " +
                              std::to_string(h.levels.size()));
    for (std::size_t l = 0; l < h.levels.size(); ++l) {
        if (static_cast<std::size_t>(m.features[l].cols()) != h.levels[l].size())
            throw ValidationError("level " + std::to_string(l + 1) + ": model has " +
                                  std::to_string(m.features[l].cols()) + " feature rows, hierarchy has " +
                                  std::to_string(h.levels[l].size()) + " points");
    }
}

inline void fuse_into(const ProxyHierarchy& h, const TextureModel& m, const std::vector<std::uint32_t>& chain,
                      Eigen::Ref<Eigen::VectorXd> out) {
    const auto& c = m.config;
    for (const auto& b : fusion_layout(c)) {
        const auto l = static_cast<std::size_t>(b.level - 1);
        const int f = c.feature_dims[l];
        out.segment(b.feature_offset, f) = m.features[l].col(chain[l]);
        if (b.pe_offset < 0) continue;
        if (!c.positional_encoding) {
            out.segment(b.pe_offset, c.pe_dim()).setZero();
            continue;
        }
        const Vec3 delta = h.levels[l][chain[l]].position - h.levels[l + 1][chain[l + 1]].position;
        positional_encoding_into(delta, c.pe_bands, out.segment(b.pe_offset, c.pe_dim()));
    }
}

inline Eigen::VectorXd fuse_features(const ProxyHierarchy& h, const TextureModel& m, std::size_t vertex) {
    if (h.levels.size() != m.features.size()) throw StructuralError("model and hierarchy level counts differ");
    Eigen::VectorXd out(m.config.input_dim());
    fuse_into(h, m, ancestor_chain(h, vertex), out);
    return out;
}

// ---------------------------------------------------------------------------
// decoder

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double silu(double x) { return x * sigmoid(x); }
inline double silu_grad(double x) {
    const double s = sigmoid(x);
    return s * (1.0 + x * (1.0 - s));
}

/// Activations kept for the backward pass; column j belongs to batch item j.
struct ForwardCache {
    std::vector<std::uint32_t> vertices;
    std::vector<std::vector<std::uint32_t>> chains;
    std::vector<Eigen::MatrixXd> pre;   // pre-activation per layer
    std::vector<Eigen::MatrixXd> post;  // post[0] is the fused input, post[i+1] the output of layer i
    const Eigen::MatrixXd& output() const { return post.back(); }
};

inline void decoder_forward(const TextureModel& m, Eigen::MatrixXd input, ForwardCache& cache) {
    if (input.rows() != m.config.input_dim())
        throw ValidationError("decoder expects " + std::to_string(m.config.input_dim()) + " inputs, got " +
                              std::to_string(input.rows()));
    cache.pre.clear();
    cache.post.clear();
    cache.post.push_back(std::move(input));
    for (std::size_t i = 0; i < m.decoder.size(); ++i) {
        const auto& layer = m.decoder[i];
        Eigen::MatrixXd z = layer.weight * cache.post.back();
        z.colwise() += layer.bias;
        const bool last = i + 1 == m.decoder.size();
        Eigen::MatrixXd a = z.unaryExpr(last ? &sigmoid : &silu);
        cache.pre.push_back(std::move(z));
        cache.post.push_back(std::move(a));
    }
}

inline Vec3 decode_color(const TextureModel& m, const Eigen::VectorXd& fused) {
    ForwardCache cache;
    decoder_forward(m, fused, cache);
    return cache.output().col(0);
}

/// Fuses and decodes a batch of bottom-level vertices.
inline ForwardCache forward_batch(const ProxyHierarchy& h, const TextureModel& m,
                                  const std::vector<std::uint32_t>& vertices) {
    if (h.levels.size() != m.features.size()) throw StructuralError("model and hierarchy level counts differ");
    ForwardCache cache;
    cache.vertices = vertices;
    Eigen::MatrixXd input(m.config.input_dim(), static_cast<Eigen::Index>(vertices.size()));
    for (std::size_t j = 0; j < vertices.size(); ++j) {
        cache.chains.push_back(ancestor_chain(h, vertices[j]));
        fuse_into(h, m, cache.chains.back(), input.col(static_cast<Eigen::Index>(j)));
    }
    decoder_forward(m, std::move(input), cache);
    return cache;
}

/// Decoded RGB for every bottom-level vertex.
inline std::vector<Vec3> decode_all(const ProxyHierarchy& h, const TextureModel& m) {
    std::vector<std::uint32_t> all(h.levels.front().size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<std::uint32_t>(i);
    const auto cache = forward_batch(h, m, all);
    std::vector<Vec3> out(all.size());
    for (std::size_t i = 0; i < all.size(); ++i) out[i] = cache.output().col(static_cast<Eigen::Index>(i));
    return out;
}

// ---------------------------------------------------------------------------
// gradients

/// Same shapes as the model parameters.
struct Gradients {
    std::vector<Eigen::MatrixXd> features;
    std::vector<DenseLayer> decoder;

    static Gradients zeros_like(const TextureModel& m) {
        Gradients g;
        for (const auto& t : m.features) g.features.push_back(Eigen::MatrixXd::Zero(t.rows(), t.cols()));
        for (const auto& l : m.decoder)
            g.decoder.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()),
                                 Eigen::VectorXd::Zero(l.bias.size())});
        return g;
    }
};

/// Accumulates dLoss/dparams into `grad` given dLoss/dcolor (3 x batch).
/// PE blocks depend only on fixed positions and get no gradient.
inline void backward(const TextureModel& m, const ForwardCache& cache, const Eigen::MatrixXd& color_grad,
                     Gradients& grad) {
    if (color_grad.rows() != 3 || color_grad.cols() != static_cast<Eigen::Index>(cache.vertices.size()))
        throw ValidationError("color gradient shape does not match the batch");
    Eigen::MatrixXd delta = color_grad;
    for (std::size_t i = m.decoder.size(); i-- > 0;) {
        const bool last = i + 1 == m.decoder.size();
        if (last) {
            delta.array() *= cache.post[i + 1].array() * (1.0 - cache.post[i + 1].array());
        } else {
            delta.array() *= cache.pre[i].unaryExpr(&silu_grad).array();
        }
        grad.decoder[i].weight.noalias() += delta * cache.post[i].transpose();
        grad.decoder[i].bias += delta.rowwise().sum();
        delta = m.decoder[i].weight.transpose() * delta;
    }
    // delta is now dLoss/dfused; scatter the feature blocks in batch order
    const auto layout = fusion_layout(m.config);
    for (std::size_t j = 0; j < cache.vertices.size(); ++j) {
        const auto& chain = cache.chains[j];
        for (const auto& b : layout) {
            const auto l = static_cast<std::size_t>(b.level - 1);
            grad.features[l].col(chain[l]) +=
                delta.col(static_cast<Eigen::Index>(j)).segment(b.feature_offset, m.config.feature_dims[l]);
        }
    }
}

// ---------------------------------------------------------------------------
// Adam

struct AdamOptions {
    double lr_features = 1e-2;
    double lr_decoder = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct OptimizerState {
    AdamOptions options;
    std::int64_t step = 0;
    Gradients m, v;

    static OptimizerState for_model(const TextureModel& model, const AdamOptions& o = {}) {
        return {o, 0, Gradients::zeros_like(model), Gradients::zeros_like(model)};
    }
};

namespace detail {

template <typename P, typename G, typename M>
inline void adam_update(P& param, const G& g, M& m, M& v, double lr, const AdamOptions& o, double c1, double c2) {
    m = o.beta1 * m + (1.0 - o.beta1) * g;
    v = o.beta2 * v + (1.0 - o.beta2) * g.cwiseProduct(g);
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + o.eps);
}

}  // namespace detail

inline void adam_step(TextureModel& model, const Gradients& g, OptimizerState& s) {
    const auto& o = s.options;
    ++s.step;
    const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(s.step));
    const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(s.step));
    for (std::size_t l = 0; l < model.features.size(); ++l) {
        if (l > 0 && !model.config.multi_level_features) continue;
        detail::adam_update(model.features[l], g.features[l], s.m.features[l], s.v.features[l], o.lr_features, o, c1, c2);
    }
    for (std::size_t i = 0; i < model.decoder.size(); ++i) {
        detail::adam_update(model.decoder[i].weight, g.decoder[i].weight, s.m.decoder[i].weight,
                            s.v.decoder[i].weight, o.lr_decoder, o, c1, c2);
        detail::adam_update(model.decoder[i].bias, g.decoder[i].bias, s.m.decoder[i].bias, s.v.decoder[i].bias,
                            o.lr_decoder, o, c1, c2);
    }
}

/// Calls fn(name, matrix) for every parameter block, features first.
template <typename Model, typename Fn>
inline void for_each_parameter(Model& model, Fn&& fn) {
    for (std::size_t l = 0; l < model.features.size(); ++l) fn("features" + std::to_string(l + 1), model.features[l]);
    for (std::size_t i = 0; i < model.decoder.size(); ++i) {
        fn("layer" + std::to_string(i) + ".weight", model.decoder[i].weight);
        fn("layer" + std::to_string(i) + ".bias", model.decoder[i].bias);
    }
}

}  // namespace hpn
