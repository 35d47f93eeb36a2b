#pragma once

// Glue shared by the command-line tool and the HTTP service, so both produce
// identical bytes for the same inputs.

#include <filesystem>
#include <string>

#include "hpn/chamfer.hpp"
#include "hpn/edit_script.hpp"
#include "hpn/hierarchy_io.hpp"
#include "hpn/image_io.hpp"
#include "hpn/image_metrics.hpp"
#include "hpn/mesh_io.hpp"
#include "hpn/render.hpp"
#include "hpn/texture_io.hpp"

namespace hpn {

/// Mesh/hierarchy/model agreement. ValidationError on any size mismatch.
inline void check_state(const EditState& s) {
    validate(s.mesh);
    check_structure(s.hierarchy);
    if (s.mesh.vertices.size() != s.hierarchy.size(1))
        throw ValidationError("mesh has " + std::to_string(s.mesh.vertices.size()) + " vertices but hierarchy level 1 has " +
                              std::to_string(s.hierarchy.size(1)) + " points");
    check_compatible(s.model, s.hierarchy);
}

inline EditState load_state(const std::filesystem::path& mesh, const std::filesystem::path& hierarchy,
                            const std::filesystem::path& model) {
    EditState s{load_mesh(mesh), load_hierarchy(hierarchy), load_model(model).model};
    check_state(s);
    return s;
}

inline std::vector<Vec3> state_colors(const EditState& s) { return decode_all(s.hierarchy, s.model); }

inline Image render_state(const EditState& s, const Camera& cam) { return rasterize(s.mesh, state_colors(s), cam); }

/// Camera of the evaluation protocol by index.
inline Camera protocol_view(int index) {
    const auto views = fibonacci_views(ViewProtocol{});
    if (index < 0 || index >= static_cast<int>(views.size()))
        throw ValidationError("view index must be in [0, " + std::to_string(views.size()) + ")");
    return views[static_cast<std::size_t>(index)];
}

// Export artifacts. The mesh is written as binary PLY.
inline std::string export_mesh(const EditState& s) { return encode_mesh(s.mesh, MeshFormat::ply, true); }
inline std::string export_hierarchy(const EditState& s) { return encode_hierarchy(s.hierarchy); }
inline std::string export_model(const EditState& s) { return encode_model(s.model); }

// ---------------------------------------------------------------------------
// evaluation

/// Stored scalars. Geometry counts a position and a normal per proxy on every
/// level; texture adds every feature entry and the decoder weights and biases.
struct ParameterCount {
    std::vector<std::size_t> level_sizes;
    std::size_t geometry = 0;
    std::size_t features = 0;
    std::size_t decoder = 0;

    std::size_t geometry_texture() const { return geometry + features + decoder; }
};

inline ParameterCount count_parameters(const ProxyHierarchy& h, const TextureModel& m) {
    check_compatible(m, h);
    ParameterCount c;
    c.level_sizes = level_sizes(h);
    for (std::size_t l = 0; l < c.level_sizes.size(); ++l) {
        c.geometry += c.level_sizes[l] * 6;
        c.features += c.level_sizes[l] * static_cast<std::size_t>(m.config.feature_dims[l]);
    }
    c.decoder = decoder_parameter_count(m.config);
    return c;
}

struct ViewMetrics {
    double psnr = 0;  // mean over views; +inf when every view is identical
    double ssim = 0;
    std::vector<double> view_psnr, view_ssim;
};

/// Renders `colors` on `mesh` and the reference mesh with its own vertex
/// colors from every protocol view, then averages PSNR and SSIM.
inline ViewMetrics evaluate_views(const Mesh& mesh, const std::vector<Vec3>& colors, const Mesh& reference,
                                  const ViewProtocol& protocol = {}) {
    ViewMetrics out;
    const auto truth = mesh_colors(reference);
    for (const auto& cam : fibonacci_views(protocol)) {
        const auto a = rasterize(mesh, colors, cam), b = rasterize(reference, truth, cam);
        out.view_psnr.push_back(psnr(a, b));
        out.view_ssim.push_back(ssim(a, b));
    }
    const double n = static_cast<double>(out.view_psnr.size());
    for (std::size_t i = 0; i < out.view_psnr.size(); ++i) {
        out.psnr += out.view_psnr[i] / n;
        out.ssim += out.view_ssim[i] / n;
    }
    return out;
}

}  // namespace hpn
