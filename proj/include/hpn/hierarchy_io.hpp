#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "hpn/binary_io.hpp"
#include "hpn/hierarchy.hpp"
#include "hpn/mesh_io.hpp"

namespace hpn {

inline constexpr std::string_view hierarchy_magic = "HPNH";
inline constexpr std::uint32_t hierarchy_version = 1;

/// Binary layout after the container header:
///   config: i32 L, i32 R, f64 eps, f64 domain min, f64 domain max, f64 rank tol
///   u8 stale
///   per level: u64 n, then n x (3 f64 position, 3 f64 normal, f64 residual, u32 parent or 0xFFFFFFFF)
///   per transition: i32 resolution + 6 u64 stats, u64 n_{l+1}, n_{l+1}+1 u64 offsets, u32 flat child indices
inline std::string encode_hierarchy(const ProxyHierarchy& h) {
    binary::Writer w(hierarchy_magic, hierarchy_version);
    const auto& c = h.config;
    w.put<std::int32_t>(c.levels);
    w.put<std::int32_t>(c.max_resolution_exponent);
    w.put(c.error_threshold);
    w.put(c.domain.min);
    w.put(c.domain.max);
    w.put(c.rank_tolerance);
    w.put<std::uint8_t>(h.stale ? 1 : 0);
    for (const auto& level : h.levels) {
        w.put(static_cast<std::uint64_t>(level.size()));
        for (const auto& p : level) {
            for (int a = 0; a < 3; ++a) w.put(p.position[a]);
            for (int a = 0; a < 3; ++a) w.put(p.normal[a]);
            w.put(p.residual);
            w.put<std::uint32_t>(p.parent ? *p.parent : 0xFFFFFFFFu);
        }
    }
    for (std::size_t l = 0; l < h.children.size(); ++l) {
        const auto& s = l < h.stats.size() ? h.stats[l] : LevelStats{};
        w.put<std::int32_t>(s.resolution);
        w.put<std::uint64_t>(s.cells);
        w.put<std::uint64_t>(s.merged_cells);
        w.put<std::uint64_t>(s.promoted_cells);
        w.put<std::uint64_t>(s.normal_fallbacks);
        w.put<std::uint64_t>(s.nonlocal_centers);
        w.put<std::uint64_t>(s.clamped_points);
        const auto& lists = h.children[l];
        w.put(static_cast<std::uint64_t>(lists.size()));
        std::uint64_t offset = 0;
        w.put(offset);
        for (const auto& list : lists) {
            offset += list.size();
            w.put(offset);
        }
        for (const auto& list : lists)
            for (auto idx : list) w.put(idx);
    }
    return w.finish();
}

/// The config stored in the file always wins over whatever the caller uses.
inline ProxyHierarchy decode_hierarchy(std::string_view bytes) {
    binary::Reader r(bytes, hierarchy_magic, hierarchy_version);
    ProxyHierarchy h;
    auto& c = h.config;
    c.levels = r.get<std::int32_t>();
    c.max_resolution_exponent = r.get<std::int32_t>();
    c.error_threshold = r.get<double>();
    c.domain.min = r.get<double>();
    c.domain.max = r.get<double>();
    c.rank_tolerance = r.get<double>();
    c.validate();
    h.stale = r.get<std::uint8_t>() != 0;
    for (int l = 0; l < c.levels; ++l) {
        const auto n = r.get_count(7 * sizeof(double) + sizeof(std::uint32_t));
        ProxyLevel level(n);
        for (auto& p : level) {
            for (int a = 0; a < 3; ++a) p.position[a] = r.get<double>();
            for (int a = 0; a < 3; ++a) p.normal[a] = r.get<double>();
            p.residual = r.get<double>();
            const auto parent = r.get<std::uint32_t>();
            if (parent != 0xFFFFFFFFu) p.parent = parent;
            p.level = l + 1;
        }
        h.levels.push_back(std::move(level));
    }
    for (int l = 0; l + 1 < c.levels; ++l) {
        LevelStats s;
        s.resolution = r.get<std::int32_t>();
        s.cells = r.get<std::uint64_t>();
        s.merged_cells = r.get<std::uint64_t>();
        s.promoted_cells = r.get<std::uint64_t>();
        s.normal_fallbacks = r.get<std::uint64_t>();
        s.nonlocal_centers = r.get<std::uint64_t>();
        s.clamped_points = r.get<std::uint64_t>();
        h.stats.push_back(s);
        const auto n = r.get_count(sizeof(std::uint64_t));
        std::vector<std::uint64_t> offsets(n + 1);
        for (auto& o : offsets) o = r.get<std::uint64_t>();
        ChildLists lists(n);
        for (std::size_t j = 0; j < n; ++j) {
            if (offsets[j + 1] < offsets[j]) throw FormatError("children offsets are not monotone");
            lists[j].resize(offsets[j + 1] - offsets[j]);
            for (auto& idx : lists[j]) idx = r.get<std::uint32_t>();
        }
        h.children.push_back(std::move(lists));
    }
    if (!r.at_end()) throw FormatError("trailing bytes after hierarchy payload");
    check_structure(h);
    return h;
}

inline void save_hierarchy(const ProxyHierarchy& h, const std::filesystem::path& path) {
    detail::write_file(path, encode_hierarchy(h));
}

inline ProxyHierarchy load_hierarchy(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw IoError("no such file: " + path.string());
    return decode_hierarchy(detail::read_file(path));
}

/// Human-readable dump for debugging. Not a storage format: doubles go through
/// JSON number formatting and the file is never read back.
inline nlohmann::json hierarchy_to_json(const ProxyHierarchy& h) {
    nlohmann::json j;
    j["debug_only"] = true;
    j["config"] = {{"levels", h.config.levels},
                   {"max_resolution_exponent", h.config.max_resolution_exponent},
                   {"error_threshold", h.config.error_threshold},
                   {"domain", {h.config.domain.min, h.config.domain.max}},
                   {"rank_tolerance", h.config.rank_tolerance}};
    j["stale"] = h.stale;
    j["levels"] = nlohmann::json::array();
    for (std::size_t l = 0; l < h.levels.size(); ++l) {
        nlohmann::json level;
        level["level"] = l + 1;
        level["count"] = h.levels[l].size();
        auto& pts = level["points"] = nlohmann::json::array();
        for (const auto& p : h.levels[l]) {
            nlohmann::json q = {{"p", {p.position.x(), p.position.y(), p.position.z()}},
                                {"n", {p.normal.x(), p.normal.y(), p.normal.z()}},
                                {"r", p.residual}};
            q["parent"] = p.parent ? nlohmann::json(*p.parent) : nlohmann::json(nullptr);
            pts.push_back(std::move(q));
        }
        if (l > 0) {
            level["children"] = h.children[l - 1];
            const auto& s = h.stats[l - 1];
            level["build"] = {{"resolution", s.resolution},
                              {"cells", s.cells},
                              {"merged_cells", s.merged_cells},
                              {"promoted_cells", s.promoted_cells},
                              {"normal_fallbacks", s.normal_fallbacks},
                              {"nonlocal_centers", s.nonlocal_centers},
                              {"clamped_points", s.clamped_points}};
        }
        j["levels"].push_back(std::move(level));
    }
    return j;
}

}  // namespace hpn
