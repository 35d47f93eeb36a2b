#pragma once

// HTTP/JSON editing sessions.
//
//   GET    /health
//   POST   /sessions                      {"mesh","hierarchy","model"} paths -> 201
//   GET    /sessions/{id}
//   DELETE /sessions/{id}
//   GET    /sessions/{id}/state?level=l
//   POST   /sessions/{id}/edits           drag or transfer JSON -> diff
//   POST   /sessions/{id}/undo
//   GET    /sessions/{id}/render?view=k | eye=x,y,z&at=x,y,z&up=x,y,z&fov=d&width=w&height=h
//   GET    /sessions/{id}/export/{mesh|hierarchy|model|script}
//
// Each session holds an immutable snapshot; an edit builds the next snapshot
// under the session's edit lock and swaps it in, so readers never see a half
// applied edit.

#include <atomic>
#include <deque>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <unordered_map>

#include <nlohmann/json.hpp>

// Eigen first: httplib pulls in <resolv.h>, whose _res macro clashes with
// Eigen parameter names.
#include "hpn/image_metrics.hpp"
#include "hpn/pipeline.hpp"

#include <httplib.h>
#ifdef _res
#undef _res
#endif

namespace hpn {

struct ServiceOptions {
    std::size_t undo_depth = 32;
    std::size_t edit_queue_limit = 4;  // edits waiting or running per session before 409
    EditOptions edit;
};

/// Error with the HTTP status it maps to.
class HttpError : public Error {
public:
    HttpError(int status, const std::string& what) : Error(what), status_(status) {}
    int status() const noexcept { return status_; }

private:
    int status_;
};

// ---------------------------------------------------------------------------
// JSON <-> edits

inline Vec3 json_vec3(const nlohmann::json& j, const char* name) {
    if (!j.is_array() || j.size() != 3) throw HttpError(400, std::string(name) + " must be an array of 3 numbers");
    Vec3 v;
    for (int a = 0; a < 3; ++a) {
        if (!j[static_cast<std::size_t>(a)].is_number()) throw HttpError(400, std::string(name) + " must hold numbers");
        v[a] = j[static_cast<std::size_t>(a)].get<double>();
    }
    return v;
}

inline EditCommand edit_from_json(const nlohmann::json& j) {
    try {
        if (!j.is_object() || !j.contains("type")) throw HttpError(400, "edit needs a \"type\"");
        const auto type = j.at("type").get<std::string>();
        if (type == "drag") {
            DragEdit e;
            e.level = j.at("level").get<int>();
            e.point_index = j.at("index").get<std::uint32_t>();
            e.displacement = json_vec3(j.at("delta"), "delta");
            e.tau = j.value("tau", 1.0);
            e.scope = parse_scope(j.value("scope", std::string("subtree")));
            return e;
        }
        if (type == "transfer") {
            TransferEdit e;
            e.level = j.at("level").get<int>();
            e.source = j.at("source").get<std::vector<std::uint32_t>>();
            e.target = j.at("target").get<std::vector<std::uint32_t>>();
            e.k_neighbors = j.value("k", 4);
            return e;
        }
        throw HttpError(400, "unknown edit type '" + type + "'");
    } catch (const nlohmann::json::exception& e) {
        throw HttpError(400, std::string("bad edit body: ") + e.what());
    } catch (const ParseError& e) {
        throw HttpError(400, e.what());
    }
}

inline nlohmann::json edit_to_json(const EditCommand& cmd) {
    if (const auto* d = std::get_if<DragEdit>(&cmd))
        return {{"type", "drag"},
                {"level", d->level},
                {"index", d->point_index},
                {"delta", {d->displacement.x(), d->displacement.y(), d->displacement.z()}},
                {"tau", d->tau},
                {"scope", to_string(d->scope)}};
    const auto& t = std::get<TransferEdit>(cmd);
    return {{"type", "transfer"}, {"level", t.level}, {"source", t.source}, {"target", t.target}, {"k", t.k_neighbors}};
}

inline nlohmann::json flat(const std::vector<Vec3>& v) {
    auto out = nlohmann::json::array();
    for (const auto& p : v) {
        out.push_back(p.x());
        out.push_back(p.y());
        out.push_back(p.z());
    }
    return out;
}

// ---------------------------------------------------------------------------
// sessions

struct Snapshot {
    EditState state;
    std::vector<Vec3> colors;  // decoded once per snapshot
    std::vector<EditCommand> history;
};

class Session {
public:
    explicit Session(EditState s) {
        auto snap = std::make_shared<Snapshot>();
        snap->colors = state_colors(s);
        snap->state = std::move(s);
        current_ = std::move(snap);
    }

    std::shared_ptr<const Snapshot> snapshot() const {
        std::lock_guard lock(swap_);
        return current_;
    }

    std::size_t undo_depth() const {
        std::lock_guard lock(swap_);
        return undo_.size();
    }

    /// Applies one edit; returns the snapshots before and after.
    std::pair<std::shared_ptr<const Snapshot>, std::shared_ptr<const Snapshot>> apply(const EditCommand& cmd,
                                                                                        const ServiceOptions& opts) {
        if (pending_.fetch_add(1) >= opts.edit_queue_limit) {
            pending_.fetch_sub(1);
            throw HttpError(409, "edit queue is full");
        }
        struct Release {
            std::atomic<std::size_t>& n;
            ~Release() { n.fetch_sub(1); }
        } release{pending_};
        std::lock_guard edit(edit_);
        const auto before = snapshot();
        auto next = std::make_shared<Snapshot>();
        next->state = apply_command(before->state, cmd, opts.edit);
        next->colors = state_colors(next->state);
        next->history = before->history;
        next->history.push_back(cmd);
        std::lock_guard lock(swap_);
        undo_.push_back(before);
        if (undo_.size() > opts.undo_depth) undo_.pop_front();
        current_ = next;
        return {before, next};
    }

    std::shared_ptr<const Snapshot> undo() {
        std::lock_guard edit(edit_);
        std::lock_guard lock(swap_);
        if (undo_.empty()) throw HttpError(409, "nothing to undo");
        current_ = undo_.back();
        undo_.pop_back();
        return current_;
    }

private:
    mutable std::mutex swap_;  // guards current_ and undo_
    std::mutex edit_;          // serializes edits
    std::atomic<std::size_t> pending_{0};
    std::shared_ptr<const Snapshot> current_;
    std::deque<std::shared_ptr<const Snapshot>> undo_;
};

class SessionStore {
public:
    std::string add(EditState s) {
        auto session = std::make_shared<Session>(std::move(s));
        std::unique_lock lock(mutex_);
        auto id = "s" + std::to_string(++counter_);
        sessions_.emplace(id, std::move(session));
        return id;
    }

    std::shared_ptr<Session> get(const std::string& id) const {
        std::shared_lock lock(mutex_);
        auto it = sessions_.find(id);
        if (it == sessions_.end()) throw HttpError(404, "no session '" + id + "'");
        return it->second;
    }

    bool remove(const std::string& id) {
        std::unique_lock lock(mutex_);
        return sessions_.erase(id) > 0;
    }

private:
    mutable std::shared_mutex mutex_;
    std::unordered_map<std::string, std::shared_ptr<Session>> sessions_;
    std::uint64_t counter_ = 0;
};

// ---------------------------------------------------------------------------
// request handling

inline nlohmann::json session_summary(const std::string& id, const Snapshot& s, std::size_t undo_depth) {
    const auto box = bounding_box(s.state.mesh.vertices);
    return {{"id", id},
            {"level_sizes", level_sizes(s.state.hierarchy)},
            {"vertex_count", s.state.mesh.vertices.size()},
            {"face_count", s.state.mesh.faces.size()},
            {"bbox", {{"min", {box.min.x(), box.min.y(), box.min.z()}}, {"max", {box.max.x(), box.max.y(), box.max.z()}}}},
            {"stale", s.state.hierarchy.stale},
            {"edits", s.history.size()},
            {"undo_depth", undo_depth}};
}

inline nlohmann::json state_json(const Snapshot& s, int level) {
    const auto& h = s.state.hierarchy;
    if (level < 1 || level > static_cast<int>(h.levels.size()))
        throw HttpError(400, "level must be in 1.." + std::to_string(h.levels.size()));
    auto faces = nlohmann::json::array();
    for (const auto& f : s.state.mesh.faces) {
        faces.push_back(f[0]);
        faces.push_back(f[1]);
        faces.push_back(f[2]);
    }
    std::vector<Vec3> pos;
    auto parents = nlohmann::json::array();
    for (const auto& p : h.level(level)) {
        pos.push_back(p.position);
        parents.push_back(p.parent ? nlohmann::json(*p.parent) : nlohmann::json(nullptr));
    }
    return {{"vertices", flat(s.state.mesh.vertices)},
            {"faces", std::move(faces)},
            {"colors", flat(s.colors)},
            {"level", level},
            {"level_sizes", level_sizes(h)},
            {"proxies", {{"positions", flat(pos)}, {"parents", std::move(parents)}}},
            {"stale", h.stale}};
}

/// Vertices whose position or decoded color changed.
inline nlohmann::json diff_json(const Snapshot& before, const Snapshot& after) {
    std::vector<std::uint32_t> moved, recolored;
    std::vector<Vec3> positions, colors;
    for (std::uint32_t i = 0; i < after.state.mesh.vertices.size(); ++i) {
        if (after.state.mesh.vertices[i] != before.state.mesh.vertices[i]) {
            moved.push_back(i);
            positions.push_back(after.state.mesh.vertices[i]);
        }
        if (after.colors[i] != before.colors[i]) {
            recolored.push_back(i);
            colors.push_back(after.colors[i]);
        }
    }
    return {{"moved", moved},
            {"positions", flat(positions)},
            {"recolored", recolored},
            {"colors", flat(colors)},
            {"stale", after.state.hierarchy.stale},
            {"edits", after.history.size()},
            {"script_line", format_edit(after.history.back())}};
}

inline Vec3 parse_query_vec3(const std::string& s, const char* name) {
    std::array<double, 3> v{};
    std::size_t pos = 0;
    for (int a = 0; a < 3; ++a) {
        const auto end = a < 2 ? s.find(',', pos) : s.size();
        if (end == std::string::npos) throw HttpError(400, std::string(name) + " must be x,y,z");
        try {
            v[static_cast<std::size_t>(a)] = detail::parse_double(std::string_view(s).substr(pos, end - pos), 0);
        } catch (const ParseError&) {
            throw HttpError(400, std::string(name) + " must be x,y,z");
        }
        pos = end + 1;
    }
    if (pos <= s.size()) throw HttpError(400, std::string(name) + " must be x,y,z");
    return {v[0], v[1], v[2]};
}

inline Camera camera_from_query(const httplib::Request& req) {
    auto num = [&](const char* key, auto fallback) {
        if (!req.has_param(key)) return fallback;
        try {
            return static_cast<decltype(fallback)>(
                detail::parse_double(req.get_param_value(key), 0));
        } catch (const ParseError&) {
            throw HttpError(400, std::string("bad ") + key);
        }
    };
    if (req.has_param("view")) {
        try {
            return protocol_view(static_cast<int>(detail::parse_int(req.get_param_value("view"), 0)));
        } catch (const Error& e) {
            throw HttpError(400, e.what());
        }
    }
    Camera c;
    if (req.has_param("eye")) c.position = parse_query_vec3(req.get_param_value("eye"), "eye");
    if (req.has_param("at")) c.look_at = parse_query_vec3(req.get_param_value("at"), "at");
    if (req.has_param("up")) c.up = parse_query_vec3(req.get_param_value("up"), "up");
    c.vertical_fov = num("fov", c.vertical_fov);
    c.width = num("width", c.width);
    c.height = num("height", c.height);
    if (c.width > 4096 || c.height > 4096) throw HttpError(400, "image size is limited to 4096");
    try {
        c.validate();
    } catch (const ValidationError& e) {
        throw HttpError(400, e.what());
    }
    return c;
}

class Service {
public:
    explicit Service(ServiceOptions opts = {}) : opts_(std::move(opts)) { routes(); }

    httplib::Server& server() { return server_; }
    SessionStore& sessions() { return store_; }

    /// Binds and serves until stop(). Returns false when the bind fails.
    bool listen(const std::string& host, int port) { return server_.listen(host, port); }
    int bind_any(const std::string& host) { return server_.bind_to_any_port(host); }
    bool listen_after_bind() { return server_.listen_after_bind(); }
    void stop() { server_.stop(); }

private:
    template <class F>
    static void guarded(httplib::Response& res, F&& f) {
        try {
            f();
        } catch (const HttpError& e) {
            fail(res, e.status(), e.what());
        } catch (const StaleHierarchyError& e) {
            fail(res, 409, e.what());
        } catch (const ValidationError& e) {
            fail(res, 422, e.what());
        } catch (const NumericError& e) {
            fail(res, 422, e.what());
        } catch (const nlohmann::json::exception& e) {
            fail(res, 400, e.what());
        } catch (const std::exception& e) {
            fail(res, 500, e.what());
        }
    }

    static void fail(httplib::Response& res, int status, const std::string& msg) {
        res.status = status;
        res.set_content(nlohmann::json{{"error", msg}}.dump(), "application/json");
    }

    static void send(httplib::Response& res, const nlohmann::json& j, int status = 200) {
        res.status = status;
        res.set_content(j.dump(), "application/json");
    }

    void routes() {
        server_.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                     {"Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS"},
                                     {"Access-Control-Allow-Headers", "Content-Type"}});
        server_.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

        server_.Get("/health", [](const httplib::Request&, httplib::Response& res) { send(res, {{"status", "ok"}}); });

        server_.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const auto body = nlohmann::json::parse(req.body);
                EditState state;
                try {
                    state = EditState{load_mesh(body.at("mesh").get<std::string>()),
                                      load_hierarchy(body.at("hierarchy").get<std::string>()),
                                      load_model(body.at("model").get<std::string>()).model};
                } catch (const nlohmann::json::exception& e) {
                    throw HttpError(400, std::string("session needs mesh, hierarchy and model paths: ") + e.what());
                } catch (const ValidationError& e) {
                    throw HttpError(400, e.what());
                } catch (const Error& e) {
                    throw HttpError(400, e.what());  // unreadable or malformed artifact
                }
                try {
                    check_state(state);
                } catch (const Error& e) {
                    throw HttpError(422, e.what());
                }
                const auto id = store_.add(std::move(state));
                send(res, session_summary(id, *store_.get(id)->snapshot(), 0), 201);
            });
        });

        server_.Get(R"(/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const auto s = store_.get(req.matches[1]);
                send(res, session_summary(req.matches[1], *s->snapshot(), s->undo_depth()));
            });
        });

        server_.Delete(R"(/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                if (!store_.remove(req.matches[1])) throw HttpError(404, "no session");
                res.status = 204;
            });
        });

        server_.Get(R"(/sessions/([^/]+)/state)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const auto s = store_.get(req.matches[1])->snapshot();
                int level = 1;
                if (req.has_param("level")) {
                    try {
                        level = static_cast<int>(detail::parse_int(req.get_param_value("level"), 0));
                    } catch (const ParseError&) {
                        throw HttpError(400, "level must be an integer");
                    }
                }
                send(res, state_json(*s, level));
            });
        });

        server_.Post(R"(/sessions/([^/]+)/edits)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const auto session = store_.get(req.matches[1]);
                nlohmann::json body;
                try {
                    body = nlohmann::json::parse(req.body);
                } catch (const nlohmann::json::exception& e) {
                    throw HttpError(400, e.what());
                }
                const auto cmd = edit_from_json(body);
                const auto [before, after] = session->apply(cmd, opts_);
                send(res, diff_json(*before, *after));
            });
        });

        server_.Post(R"(/sessions/([^/]+)/undo)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const auto s = store_.get(req.matches[1]);
                const auto snap = s->undo();
                send(res, session_summary(req.matches[1], *snap, s->undo_depth()));
            });
        });

        server_.Get(R"(/sessions/([^/]+)/render)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const auto s = store_.get(req.matches[1])->snapshot();
                const auto cam = camera_from_query(req);
                res.set_content(encode_png(rasterize(s->state.mesh, s->colors, cam)), "image/png");
            });
        });

        server_.Get(R"(/sessions/([^/]+)/export/([a-z]+))", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const auto s = store_.get(req.matches[1])->snapshot();
                const std::string what = req.matches[2];
                if (what == "mesh") res.set_content(export_mesh(s->state), "application/octet-stream");
                else if (what == "hierarchy") res.set_content(export_hierarchy(s->state), "application/octet-stream");
                else if (what == "model") res.set_content(export_model(s->state), "application/octet-stream");
                else if (what == "script") res.set_content(format_edit_script(s->history), "text/plain");
                else throw HttpError(404, "unknown artifact '" + what + "'");
            });
        });
    }

    ServiceOptions opts_;
    SessionStore store_;
    httplib::Server server_;
};

}  // namespace hpn
