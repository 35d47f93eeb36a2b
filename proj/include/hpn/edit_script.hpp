#pragma once

// Line-oriented edit scripts, one edit per line:
//
//   drag <level> <index> <dx> <dy> <dz> <tau> <subtree|global>
//   transfer <level> <src>... -> <tgt>... <k>
//
// Blank lines and everything after '#' are ignored.

#include <filesystem>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "hpn/edit.hpp"
#include "hpn/mesh_io.hpp"
#include "hpn/texture.hpp"

namespace hpn {

using EditCommand = std::variant<DragEdit, TransferEdit>;

struct ScriptLine {
    EditCommand command;
    std::size_t line = 0;  // 1-based source line
};

inline std::string_view to_string(EditScope s) { return s == EditScope::subtree ? "subtree" : "global"; }

inline EditScope parse_scope(std::string_view s, std::size_t line = 0) {
    if (s == "subtree") return EditScope::subtree;
    if (s == "global") return EditScope::global;
    throw ParseError("scope must be 'subtree' or 'global', got '" + std::string(s) + "'", line);
}

namespace detail {

inline int parse_level(std::string_view tok, std::size_t line) {
    const auto v = parse_int(tok, line);
    if (v < 1 || v > 64) throw ParseError("level out of range: " + std::string(tok), line);
    return static_cast<int>(v);
}

inline std::uint32_t parse_index(std::string_view tok, std::size_t line) {
    const auto v = parse_int(tok, line);
    if (v < 0 || v > 0xffffffffLL) throw ParseError("index out of range: " + std::string(tok), line);
    return static_cast<std::uint32_t>(v);
}

}  // namespace detail

inline EditCommand parse_edit_line(std::string_view text, std::size_t line = 0) {
    const auto tok = detail::split_ws(text);
    if (tok.empty()) throw ParseError("empty edit", line);
    if (tok[0] == "drag") {
        if (tok.size() != 8) throw ParseError("drag takes: level index dx dy dz tau scope", line);
        DragEdit e;
        e.level = detail::parse_level(tok[1], line);
        e.point_index = detail::parse_index(tok[2], line);
        e.displacement = Vec3(detail::parse_double(tok[3], line), detail::parse_double(tok[4], line),
                              detail::parse_double(tok[5], line));
        e.tau = detail::parse_double(tok[6], line);
        if (!(e.tau > 0)) throw ParseError("tau must be positive", line);
        if (!e.displacement.allFinite()) throw ParseError("displacement must be finite", line);
        e.scope = parse_scope(tok[7], line);
        return e;
    }
    if (tok[0] == "transfer") {
        if (tok.size() < 6) throw ParseError("transfer takes: level src... -> tgt... k", line);
        TransferEdit e;
        e.level = detail::parse_level(tok[1], line);
        std::size_t i = 2;
        for (; i < tok.size() && tok[i] != "->"; ++i) e.source.push_back(detail::parse_index(tok[i], line));
        if (i == tok.size()) throw ParseError("transfer is missing '->'", line);
        for (++i; i + 1 < tok.size(); ++i) e.target.push_back(detail::parse_index(tok[i], line));
        if (i != tok.size() - 1) throw ParseError("transfer is missing k", line);
        const auto k = detail::parse_int(tok.back(), line);
        if (k < 1 || k > 1000000) throw ParseError("k must be >= 1", line);
        e.k_neighbors = static_cast<int>(k);
        if (e.source.empty() || e.target.empty()) throw ParseError("transfer needs source and target indices", line);
        return e;
    }
    throw ParseError("unknown edit '" + std::string(tok[0]) + "'", line);
}

inline std::vector<ScriptLine> parse_edit_script(std::string_view text) {
    std::vector<ScriptLine> out;
    std::size_t line = 0, pos = 0;
    while (pos <= text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        auto row = text.substr(pos, end - pos);
        ++line;
        if (auto hash = row.find('#'); hash != std::string_view::npos) row = row.substr(0, hash);
        if (!detail::split_ws(row).empty()) out.push_back({parse_edit_line(row, line), line});
        pos = end + 1;
    }
    return out;
}

inline std::string format_edit(const EditCommand& cmd) {
    std::string s;
    if (const auto* d = std::get_if<DragEdit>(&cmd)) {
        s = "drag " + std::to_string(d->level) + " " + std::to_string(d->point_index);
        for (int a = 0; a < 3; ++a) {
            s += ' ';
            detail::append_double(s, d->displacement[a]);
        }
        s += ' ';
        detail::append_double(s, d->tau);
        s += ' ';
        s += to_string(d->scope);
    } else {
        const auto& t = std::get<TransferEdit>(cmd);
        s = "transfer " + std::to_string(t.level);
        for (auto i : t.source) s += " " + std::to_string(i);
        s += " ->";
        for (auto i : t.target) s += " " + std::to_string(i);
        s += " " + std::to_string(t.k_neighbors);
    }
    return s;
}

inline std::string format_edit_script(const std::vector<EditCommand>& cmds) {
    std::string s;
    for (const auto& c : cmds) s += format_edit(c) + "\n";
    return s;
}

struct EditState {
    Mesh mesh;
    ProxyHierarchy hierarchy;
    TextureModel model;
};

inline EditState apply_command(const EditState& state, const EditCommand& cmd, const EditOptions& opts = {}) {
    if (const auto* d = std::get_if<DragEdit>(&cmd)) {
        auto g = apply_edit(state.mesh, state.hierarchy, *d, opts);
        return {std::move(g.mesh), std::move(g.hierarchy), state.model};
    }
    return {state.mesh, state.hierarchy, transfer_features(state.model, state.hierarchy, std::get<TransferEdit>(cmd))};
}

/// Replays a parsed script. Engine errors are rethrown tagged with the line.
inline EditState replay(EditState state, const std::vector<ScriptLine>& script, const EditOptions& opts = {}) {
    for (const auto& s : script) {
        try {
            state = apply_command(state, s.command, opts);
        } catch (const ValidationError& e) {
            throw ValidationError("line " + std::to_string(s.line) + ": " + e.what());
        } catch (const StaleHierarchyError& e) {
            throw StaleHierarchyError("line " + std::to_string(s.line) + ": " + e.what());
        }
    }
    return state;
}

}  // namespace hpn
