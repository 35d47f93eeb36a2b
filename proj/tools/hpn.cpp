// hpn: build, train, render, evaluate, edit, export and serve.
//
// Exit codes: 0 ok, 1 usage (bad flags, invalid arguments, script errors),
// 2 I/O (missing or malformed files), 3 numeric or structural failure.

#include <cmath>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "hpn/fixtures.hpp"
#include "hpn/service.hpp"
#include "hpn/training.hpp"

using namespace hpn;
namespace fs = std::filesystem;

namespace {

struct UsageError : Error {
    using Error::Error;
};

int exit_code(const std::exception& e) {
    if (dynamic_cast<const UsageError*>(&e) || dynamic_cast<const ValidationError*>(&e) ||
        dynamic_cast<const StaleHierarchyError*>(&e))
        return 1;
    if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const FormatError*>(&e) ||
        dynamic_cast<const ParseError*>(&e) || dynamic_cast<const IndexError*>(&e))
        return 2;
    return 3;
}

std::string fmt(double v) {
    std::string s;
    detail::append_double(s, v);
    return s;
}

// ---------------------------------------------------------------------------
// shared option groups

struct HierarchyFlags {
    HierarchyConfig c;
    void add(CLI::App* app) {
        app->add_option("--levels", c.levels, "Hierarchy levels L")->check(CLI::Range(2, 16));
        app->add_option("--resolution-exponent", c.max_resolution_exponent,
                        "R; level l clusters on a 2^(R-l+1) grid")
            ->check(CLI::Range(1, 20));
        app->add_option("--threshold", c.error_threshold, "Clustering threshold on the plane-fit residual")
            ->check(CLI::NonNegativeNumber);
        app->add_option("--rank-tolerance", c.rank_tolerance, "Relative eigenvalue cut for degenerate fits");
    }
};

struct TextureFlags {
    TextureConfig c;
    bool no_pe = false, no_mlf = false;
    void add(CLI::App* app) {
        app->add_option("--feature-dims", c.feature_dims, "Feature width per level, level 1 first")->delimiter(',');
        app->add_option("--pe-bands", c.pe_bands, "Positional-encoding frequencies")->check(CLI::PositiveNumber);
        app->add_option("--hidden-width", c.hidden_width, "Decoder hidden width")->check(CLI::PositiveNumber);
        app->add_option("--hidden-layers", c.hidden_layers, "Decoder hidden layers")->check(CLI::PositiveNumber);
        app->add_option("--lambda", c.lambda, "Weight of the auxiliary loss")->check(CLI::NonNegativeNumber);
        app->add_flag("--no-pe", no_pe, "Zero the positional-encoding blocks");
        app->add_flag("--no-mlf", no_mlf, "Zero and freeze features above level 1");
    }
    TextureConfig get() const {
        auto out = c;
        out.positional_encoding = !no_pe;
        out.multi_level_features = !no_mlf;
        return out;
    }
};

struct StateFlags {
    std::string mesh, hierarchy, model;
    enum class Model { required, optional, none };
    void add(CLI::App* app, Model want = Model::required) {
        app->add_option("--mesh", mesh, "Normalized mesh written by build")->required();
        app->add_option("--hierarchy", hierarchy, "Hierarchy file written by build")->required();
        if (want == Model::none) return;
        auto* m = app->add_option("--model", model, "Texture model written by train");
        if (want == Model::required) m->required();
    }
    EditState load() const { return load_state(mesh, hierarchy, model); }
};

struct CameraFlags {
    std::optional<int> view;
    std::vector<double> eye{0, 0, 2.5}, at{0, 0, 0}, up{0, 1, 0};
    double fov = 40;
    int width = 128, height = 128;
    void add(CLI::App* app) {
        app->add_option("--view", view, "Protocol view index (0-49); overrides the camera flags");
        app->add_option("--eye", eye, "Camera position")->expected(3)->delimiter(',');
        app->add_option("--at", at, "Look-at point")->expected(3)->delimiter(',');
        app->add_option("--up", up, "Up vector")->expected(3)->delimiter(',');
        app->add_option("--fov", fov, "Vertical field of view in degrees");
        app->add_option("--width", width, "Image width")->check(CLI::Range(1, 8192));
        app->add_option("--height", height, "Image height")->check(CLI::Range(1, 8192));
    }
    Camera get() const {
        if (view) return protocol_view(*view);
        Camera c;
        c.position = Vec3(eye[0], eye[1], eye[2]);
        c.look_at = Vec3(at[0], at[1], at[2]);
        c.up = Vec3(up[0], up[1], up[2]);
        c.vertical_fov = fov;
        c.width = width;
        c.height = height;
        c.validate();
        return c;
    }
};

// ---------------------------------------------------------------------------
// commands

int cmd_fixture(const std::string& kind, int detail, const std::string& out) {
    Mesh m;
    if (kind == "icosphere") m = fixtures::icosphere(detail < 0 ? 3 : detail);
    else if (kind == "torus") m = fixtures::torus(detail < 0 ? 32 : detail, detail < 0 ? 16 : std::max(3, detail / 2));
    else if (kind == "cube") m = fixtures::cube(detail < 0 ? 8 : detail);
    else throw UsageError("unknown fixture '" + kind + "' (icosphere, torus, cube)");
    save_mesh(m, out, false);
    std::cout << kind << ": " << m.vertices.size() << " vertices, " << m.faces.size() << " faces -> " << out << "\n";
    return 0;
}

int cmd_build(const std::string& in, const std::string& out, std::string mesh_out, const HierarchyConfig& config,
              const std::string& stats_json) {
    config.validate();
    auto mesh = normalize_to_cube(load_mesh(in)).first;
    mesh.normals = compute_vertex_normals(mesh);
    const auto h = build_hierarchy(mesh, config);
    if (mesh_out.empty()) mesh_out = fs::path(out).replace_extension(".mesh.ply").string();
    save_mesh(mesh, mesh_out, true);
    save_hierarchy(h, out);
    for (int l = 1; l <= static_cast<int>(h.levels.size()); ++l) {
        std::cout << "level " << l << ": " << h.size(l) << " points";
        if (l > 1) {
            const auto& st = h.stats[static_cast<std::size_t>(l - 2)];
            std::cout << "  (grid " << st.resolution << ", merge rate " << fmt(merge_rate(h, l - 1)) << ", "
                      << st.merged_cells << " merged / " << st.promoted_cells << " promoted cells)";
        }
        std::cout << "\n";
    }
    std::cout << "mesh -> " << mesh_out << "\nhierarchy -> " << out << "\n";
    if (!stats_json.empty()) detail::write_file(stats_json, hierarchy_to_json(h).dump(2) + "\n");
    return 0;
}

struct TrainArgs {
    StateFlags state;
    TextureFlags texture;
    std::string mode = "vertex", out, loss_csv;
    int iterations = 2000, batch = 0, views = 24, view_resolution = 64;
    std::uint64_t seed = 0, view_seed = 1234;
    AdamOptions adam;
};

int cmd_train(const TrainArgs& a) {
    const auto mesh = load_mesh(a.state.mesh);
    const auto h = load_hierarchy(a.state.hierarchy);
    if (mesh.vertices.size() != h.size(1))
        throw ValidationError("mesh has " + std::to_string(mesh.vertices.size()) + " vertices but hierarchy level 1 has " +
                              std::to_string(h.size(1)));
    const auto config = a.texture.get();
    config.validate();
    if (config.levels() != static_cast<int>(h.levels.size()))
        throw UsageError("--feature-dims needs one entry per hierarchy level (" + std::to_string(h.levels.size()) + ")");
    auto model = init_texture_model(config, level_sizes(h), a.seed);
    TrainOptions o;
    o.iterations = a.iterations;
    o.batch_size = a.batch;
    o.seed = a.seed;
    o.adam = a.adam;
    std::vector<double> losses;
    if (a.mode == "vertex") {
        losses = train_vertex_colors(model, h, mesh, o);
    } else {
        if (!mesh.colors) throw ValidationError("render-mode training renders targets from the mesh vertex colors");
        ViewProtocol p;
        p.count = a.views;
        p.resolution = a.view_resolution;
        p.seed = a.view_seed;
        losses = train_render_loss(model, h, mesh, make_views(mesh, fibonacci_views(p)), config.lambda, o);
    }
    save_model(model, a.out);
    if (!a.loss_csv.empty()) {
        std::string csv = "iteration,loss\n";
        for (std::size_t i = 0; i < losses.size(); ++i) csv += std::to_string(i) + "," + fmt(losses[i]) + "\n";
        detail::write_file(a.loss_csv, csv);
    }
    std::cout << a.mode << " training: " << losses.size() << " iterations, first loss "
              << (losses.empty() ? "-" : fmt(losses.front())) << ", last loss "
              << (losses.empty() ? "-" : fmt(losses.back())) << "\nmodel -> " << a.out << "\n";
    return 0;
}

int cmd_render(const StateFlags& s, bool ground_truth, const CameraFlags& cam, const std::string& out,
               const std::string& pfm, const std::string& all_views) {
    Mesh mesh;
    std::vector<Vec3> colors;
    if (ground_truth) {
        mesh = load_mesh(s.mesh);
        colors = mesh_colors(mesh);
    } else {
        if (s.model.empty()) throw UsageError("--model is required unless --ground-truth is set");
        const auto st = s.load();
        mesh = st.mesh;
        colors = state_colors(st);
    }
    if (!all_views.empty()) {
        fs::create_directories(all_views);
        const auto views = fibonacci_views(ViewProtocol{});
        for (std::size_t i = 0; i < views.size(); ++i) {
            char name[32];
            std::snprintf(name, sizeof name, "view_%02zu.png", i);
            save_png((fs::path(all_views) / name).string(), rasterize(mesh, colors, views[i]));
        }
        std::cout << views.size() << " views -> " << all_views << "\n";
    }
    if (!out.empty() || !pfm.empty()) {
        const auto img = rasterize(mesh, colors, cam.get());
        if (!out.empty()) save_png(out, img);
        if (!pfm.empty()) save_pfm(pfm, img);
    }
    return 0;
}

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

int cmd_eval(const StateFlags& s, std::string reference, std::size_t samples, std::uint64_t cd_seed,
             const ViewProtocol& protocol, const std::string& out) {
    const auto st = s.load();
    if (reference.empty()) reference = s.mesh;
    const auto ref = load_mesh(reference);
    const double cd = mesh_chamfer_distance(st.mesh, ref, samples, cd_seed);
    const auto views = evaluate_views(st.mesh, state_colors(st), ref, protocol);
    const auto params = count_parameters(st.hierarchy, st.model);
    auto per_psnr = nlohmann::json::array();
    for (double v : views.view_psnr) per_psnr.push_back(number_or_null(v));
    const nlohmann::json j{
        {"chamfer_distance", cd},
        {"psnr", number_or_null(views.psnr)},
        {"ssim", views.ssim},
        {"views", {{"count", protocol.count}, {"resolution", protocol.resolution}, {"seed", protocol.seed},
                   {"psnr", per_psnr}, {"ssim", views.view_ssim}}},
        {"chamfer_samples", samples},
        {"parameters",
         {{"level_sizes", params.level_sizes},
          {"geometry", params.geometry},
          {"features", params.features},
          {"decoder", params.decoder},
          {"geometry_texture", params.geometry_texture()}}}};
    const auto text = j.dump(2) + "\n";
    if (out.empty() || out == "-") std::cout << text;
    else detail::write_file(out, text);
    return 0;
}

int cmd_edit(const StateFlags& s, const std::string& script_path, const std::string& out_dir,
             const std::vector<int>& render_views, const EditOptions& opts) {
    const auto text = detail::read_file(script_path);
    std::vector<ScriptLine> script;
    try {
        script = parse_edit_script(text);
    } catch (const ParseError& e) {
        throw UsageError(script_path + ": " + e.what());
    }
    const auto result = replay(s.load(), script, opts);
    fs::create_directories(out_dir);
    const fs::path dir(out_dir);
    detail::write_file(dir / "mesh.ply", export_mesh(result));
    detail::write_file(dir / "hierarchy.hpnh", export_hierarchy(result));
    detail::write_file(dir / "model.hpnm", export_model(result));
    std::vector<EditCommand> cmds;
    for (const auto& l : script) cmds.push_back(l.command);
    detail::write_file(dir / "script.txt", format_edit_script(cmds));
    for (int v : render_views)
        save_png((dir / ("view_" + std::to_string(v) + ".png")).string(), render_state(result, protocol_view(v)));
    std::cout << script.size() << " edits applied" << (result.hierarchy.stale ? " (hierarchy stale)" : "") << " -> "
              << out_dir << "\n";
    return 0;
}

int cmd_export(const StateFlags& s, const std::string& out, const std::string& tree_json) {
    auto st = s.load();
    st.mesh.colors = state_colors(st);
    save_mesh(st.mesh, out, true);
    if (!tree_json.empty()) detail::write_file(tree_json, hierarchy_to_json(st.hierarchy).dump(2) + "\n");
    std::cout << "colored mesh -> " << out << "\n";
    return 0;
}

Service* running = nullptr;

int cmd_serve(const std::string& bind, int port, const ServiceOptions& opts) {
    Service service(opts);
    running = &service;
    std::signal(SIGINT, [](int) { if (running) running->stop(); });
    std::signal(SIGTERM, [](int) { if (running) running->stop(); });
    int bound = port;
    if (port == 0) {
        bound = service.bind_any(bind);
        if (bound < 0) throw IoError("cannot bind " + bind);
    }
    std::cout << "listening on http://" << bind << ":" << bound << std::endl;
    const bool ok = port == 0 ? service.listen_after_bind() : service.listen(bind, port);
    running = nullptr;
    if (!ok) throw IoError("cannot listen on " + bind + ":" + std::to_string(port));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hierarchical proxy-point meshes: build, train, render, evaluate, edit, export, serve"};
    app.option_defaults()->always_capture_default();
    app.set_config("--config", "", "Read flags from a key=value file ([subcommand] sections)");
    app.require_subcommand(1);

    // fixture
    auto* fixture = app.add_subcommand("fixture", "Write a colored fixture mesh");
    std::string fixture_kind, fixture_out;
    int fixture_detail = -1;
    fixture->add_option("kind", fixture_kind, "icosphere | torus | cube")->required();
    fixture->add_option("-o,--out", fixture_out, "Output .obj or .ply")->required();
    fixture->add_option("--detail", fixture_detail,
                        "Subdivisions (icosphere, 3), rings (torus, 32) or grid size (cube, 8)");

    // build
    auto* build = app.add_subcommand("build", "Normalize a mesh and build its proxy hierarchy");
    std::string build_in, build_out, build_mesh_out, build_stats;
    HierarchyFlags hflags;
    build->add_option("mesh", build_in, "Input .obj or .ply")->required();
    build->add_option("-o,--out", build_out, "Hierarchy file to write")->required();
    build->add_option("--mesh-out", build_mesh_out, "Normalized mesh (default: <out>.mesh.ply)");
    build->add_option("--stats-json", build_stats, "Also write levels and statistics as JSON");
    hflags.add(build);

    // train
    auto* train = app.add_subcommand("train", "Fit the texture field to the mesh colors");
    TrainArgs targs;
    targs.state.add(train, StateFlags::Model::none);
    targs.texture.add(train);
    train->add_option("--mode", targs.mode, "vertex | render")->check(CLI::IsMember({"vertex", "render"}));
    train->add_option("-o,--out", targs.out, "Model file to write")->required();
    train->add_option("--loss-csv", targs.loss_csv, "Per-iteration loss (iteration,loss)");
    train->add_option("--iterations", targs.iterations, "Optimizer steps")->check(CLI::NonNegativeNumber);
    train->add_option("--batch-size", targs.batch, "Vertices per step in vertex mode (0: all)")
        ->check(CLI::NonNegativeNumber);
    train->add_option("--seed", targs.seed, "Initialization and batch seed");
    train->add_option("--views", targs.views, "Training views in render mode")->check(CLI::PositiveNumber);
    train->add_option("--view-resolution", targs.view_resolution, "Training view size in render mode")
        ->check(CLI::PositiveNumber);
    train->add_option("--view-seed", targs.view_seed, "Rotation seed of the training views");
    train->add_option("--lr-features", targs.adam.lr_features, "Adam step for features");
    train->add_option("--lr-decoder", targs.adam.lr_decoder, "Adam step for the decoder");

    // render
    auto* render = app.add_subcommand("render", "Rasterize the decoded colors (or the mesh colors)");
    StateFlags rstate;
    CameraFlags rcam;
    bool r_gt = false;
    std::string r_out, r_pfm, r_all;
    rstate.add(render, StateFlags::Model::optional);
    rcam.add(render);
    render->add_flag("--ground-truth", r_gt, "Use the mesh vertex colors instead of the model");
    render->add_option("-o,--out", r_out, "PNG to write");
    render->add_option("--pfm", r_pfm, "Also write linear float PFM");
    render->add_option("--all-views", r_all, "Write every protocol view into this directory");

    // eval
    auto* eval = app.add_subcommand("eval", "Chamfer distance, PSNR, SSIM and parameter counts as JSON");
    StateFlags estate;
    std::string e_ref, e_out;
    std::size_t e_samples = default_chamfer_samples;
    std::uint64_t e_cd_seed = 0;
    ViewProtocol e_views;
    estate.add(eval);
    eval->add_option("--reference", e_ref, "Reference mesh in the same frame (default: --mesh)");
    eval->add_option("--samples", e_samples, "Surface samples per mesh for Chamfer distance")
        ->check(CLI::PositiveNumber);
    eval->add_option("--cd-seed", e_cd_seed, "Surface sampling seed");
    eval->add_option("--views", e_views.count, "Evaluation views")->check(CLI::PositiveNumber);
    eval->add_option("--resolution", e_views.resolution, "Evaluation view size")->check(CLI::PositiveNumber);
    eval->add_option("--view-seed", e_views.seed, "Rotation seed of the evaluation views");
    eval->add_option("-o,--out", e_out, "Metrics JSON (default: stdout)");

    // edit
    auto* edit = app.add_subcommand("edit", "Replay an edit script");
    StateFlags dstate;
    std::string d_script, d_out;
    std::vector<int> d_views;
    EditOptions d_opts;
    dstate.add(edit);
    edit->add_option("--script", d_script, "Edit script")->required();
    edit->add_option("-o,--out-dir", d_out, "Directory for mesh.ply, hierarchy.hpnh, model.hpnm, script.txt")
        ->required();
    edit->add_option("--render-view", d_views, "Also render these protocol views of the result");
    edit->add_option("--constraint-strength", d_opts.constraint_strength, "Weight of the drag targets")
        ->check(CLI::NonNegativeNumber);
    edit->add_option("--anchor-weight", d_opts.anchor_weight, "Weight holding vertices outside the drag support")
        ->check(CLI::NonNegativeNumber);

    // export
    auto* exp = app.add_subcommand("export", "Write the mesh with decoded vertex colors");
    StateFlags xstate;
    std::string x_out, x_json;
    xstate.add(exp);
    exp->add_option("-o,--out", x_out, "Colored .ply or .obj")->required();
    exp->add_option("--hierarchy-json", x_json, "Also write the hierarchy as JSON");

    // serve
    auto* serve = app.add_subcommand("serve", "HTTP editing service");
    std::string s_bind = "127.0.0.1";
    int s_port = 8080;
    ServiceOptions s_opts;
    serve->add_option("--bind", s_bind, "Address to bind")->envname("HPN_BIND");
    serve->add_option("--port", s_port, "Port (0 picks a free one)")->envname("HPN_PORT")->check(CLI::Range(0, 65535));
    serve->add_option("--undo-depth", s_opts.undo_depth, "Undo states kept per session");
    serve->add_option("--queue-limit", s_opts.edit_queue_limit, "Edits queued per session before 409");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (fixture->parsed()) return cmd_fixture(fixture_kind, fixture_detail, fixture_out);
        if (build->parsed()) return cmd_build(build_in, build_out, build_mesh_out, hflags.c, build_stats);
        if (train->parsed()) return cmd_train(targs);
        if (render->parsed()) {
            if (r_out.empty() && r_pfm.empty() && r_all.empty()) throw UsageError("nothing to write: give -o, --pfm or --all-views");
            return cmd_render(rstate, r_gt, rcam, r_out, r_pfm, r_all);
        }
        if (eval->parsed()) return cmd_eval(estate, e_ref, e_samples, e_cd_seed, e_views, e_out);
        if (edit->parsed()) return cmd_edit(dstate, d_script, d_out, d_views, d_opts);
        if (exp->parsed()) return cmd_export(xstate, x_out, x_json);
        if (serve->parsed()) return cmd_serve(s_bind, s_port, s_opts);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(e);
    }
    return 1;
}
