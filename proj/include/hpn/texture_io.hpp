#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "hpn/binary_io.hpp"
#include "hpn/mesh_io.hpp"
#include "hpn/texture.hpp"

namespace hpn {

inline constexpr std::string_view model_magic = "HPNM";
inline constexpr std::uint32_t model_version = 1;

namespace detail {

inline void put_matrix(binary::Writer& w, const Eigen::MatrixXd& m) {
    w.put<std::uint64_t>(static_cast<std::uint64_t>(m.rows()));
    w.put<std::uint64_t>(static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.size(); ++i) w.put(m.data()[i]);  // column-major
}

inline Eigen::MatrixXd get_matrix(binary::Reader& r) {
    const auto rows = r.get<std::uint64_t>();
    const auto cols = r.get_count(0);
    if (rows != 0 && cols > (std::uint64_t(1) << 40) / rows) throw FormatError("matrix too large");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = r.get<double>();
    return m;
}

inline void put_gradients(binary::Writer& w, const Gradients& g) {
    for (const auto& f : g.features) put_matrix(w, f);
    for (const auto& l : g.decoder) {
        put_matrix(w, l.weight);
        put_matrix(w, l.bias);
    }
}

inline void get_gradients(binary::Reader& r, Gradients& g, const TextureModel& shape) {
    g = Gradients::zeros_like(shape);
    auto read_same = [&](Eigen::MatrixXd& dst) {
        auto m = get_matrix(r);
        if (m.rows() != dst.rows() || m.cols() != dst.cols()) throw FormatError("optimizer state shape mismatch");
        dst = std::move(m);
    };
    for (auto& f : g.features) read_same(f);
    for (auto& l : g.decoder) {
        read_same(l.weight);
        Eigen::MatrixXd b = l.bias;
        read_same(b);
        l.bias = b.col(0);
    }
}

}  // namespace detail

/// Layout after the container header:
///   config: u64 L, L x i32 feature dims, i32 bands, i32 width, i32 layers,
///           f64 lambda, u8 pe, u8 mlf
///   L feature tables, then (weight, bias) per decoder layer; each matrix is
///   u64 rows, u64 cols, column-major f64
///   u8 has_optimizer [+ 5 f64 options, i64 step, first moments, second moments]
inline std::string encode_model(const TextureModel& m, const OptimizerState* opt = nullptr) {
    binary::Writer w(model_magic, model_version);
    const auto& c = m.config;
    w.put<std::uint64_t>(c.feature_dims.size());
    for (int f : c.feature_dims) w.put<std::int32_t>(f);
    w.put<std::int32_t>(c.pe_bands);
    w.put<std::int32_t>(c.hidden_width);
    w.put<std::int32_t>(c.hidden_layers);
    w.put(c.lambda);
    w.put<std::uint8_t>(c.positional_encoding);
    w.put<std::uint8_t>(c.multi_level_features);
    for (const auto& f : m.features) detail::put_matrix(w, f);
    for (const auto& l : m.decoder) {
        detail::put_matrix(w, l.weight);
        detail::put_matrix(w, l.bias);
    }
    w.put<std::uint8_t>(opt ? 1 : 0);
    if (opt) {
        const auto& o = opt->options;
        for (double v : {o.lr_features, o.lr_decoder, o.beta1, o.beta2, o.eps}) w.put(v);
        w.put<std::int64_t>(opt->step);
        detail::put_gradients(w, opt->m);
        detail::put_gradients(w, opt->v);
    }
    return w.finish();
}

struct LoadedModel {
    TextureModel model;
    std::optional<OptimizerState> optimizer;
};

inline LoadedModel decode_model(std::string_view bytes) {
    binary::Reader r(bytes, model_magic, model_version);
    LoadedModel out;
    auto& m = out.model;
    auto& c = m.config;
    const auto L = r.get_count(sizeof(std::int32_t));
    c.feature_dims.resize(L);
    for (auto& f : c.feature_dims) f = r.get<std::int32_t>();
    c.pe_bands = r.get<std::int32_t>();
    c.hidden_width = r.get<std::int32_t>();
    c.hidden_layers = r.get<std::int32_t>();
    c.lambda = r.get<double>();
    c.positional_encoding = r.get<std::uint8_t>() != 0;
    c.multi_level_features = r.get<std::uint8_t>() != 0;
    c.validate();
    for (std::size_t l = 0; l < L; ++l) {
        m.features.push_back(detail::get_matrix(r));
        if (m.features.back().rows() != c.feature_dims[l])
            throw FormatError("feature table " + std::to_string(l + 1) + " has the wrong width");
    }
    int in = c.input_dim();
    for (int i = 0; i <= c.hidden_layers; ++i) {
        const int o = i == c.hidden_layers ? 3 : c.hidden_width;
        DenseLayer layer;
        layer.weight = detail::get_matrix(r);
        const auto b = detail::get_matrix(r);
        if (layer.weight.rows() != o || layer.weight.cols() != in || b.rows() != o || b.cols() != 1)
            throw FormatError("decoder layer " + std::to_string(i) + " has the wrong shape");
        layer.bias = b.col(0);
        m.decoder.push_back(std::move(layer));
        in = o;
    }
    if (r.get<std::uint8_t>()) {
        OptimizerState s;
        auto& o = s.options;
        for (double* v : {&o.lr_features, &o.lr_decoder, &o.beta1, &o.beta2, &o.eps}) *v = r.get<double>();
        s.step = r.get<std::int64_t>();
        detail::get_gradients(r, s.m, m);
        detail::get_gradients(r, s.v, m);
        out.optimizer = std::move(s);
    }
    if (!r.at_end()) throw FormatError("trailing bytes after model payload");
    return out;
}

inline void save_model(const TextureModel& m, const std::filesystem::path& path, const OptimizerState* opt = nullptr) {
    detail::write_file(path, encode_model(m, opt));
}

inline LoadedModel load_model(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw IoError("no such file: " + path.string());
    return decode_model(detail::read_file(path));
}

}  // namespace hpn
