#pragma once

#include <cctype>
#include <charconv>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "hpn/mesh.hpp"

namespace hpn {

enum class MeshFormat { obj, ply };

namespace detail {

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

inline std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        std::size_t j = i;
        while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
        if (j > i) out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

inline double parse_double(std::string_view tok, std::size_t line) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size())
        throw ParseError("expected a number, got '" + std::string(tok) + "'", line);
    return v;
}

inline long long parse_int(std::string_view tok, std::size_t line) {
    long long v = 0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size())
        throw ParseError("expected an integer, got '" + std::string(tok) + "'", line);
    return v;
}

// Shortest representation that reads back to the same double.
inline void append_double(std::string& out, double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, ptr);
}

}  // namespace detail

inline MeshFormat format_from_path(const std::filesystem::path& path) {
    auto ext = path.extension().string();
    for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (ext == ".obj") return MeshFormat::obj;
    if (ext == ".ply") return MeshFormat::ply;
    throw ValidationError("unrecognized mesh extension '" + ext + "' (expected .obj or .ply)");
}

// ---------------------------------------------------------------------------
// OBJ

/// Parses OBJ text. `v` lines carry 3 floats, or 6 with per-vertex RGB.
/// Polygonal faces are fan-triangulated; texture/normal indices are ignored.
inline Mesh parse_obj(std::string_view text) {
    Mesh mesh;
    std::vector<Vec3> colors;
    int colored = -1;  // unknown until the first v line
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        auto tok = detail::split_ws(line);
        if (tok.empty()) {
            if (end == text.size()) break;
            continue;
        }
        if (tok[0] == "v") {
            if (tok.size() != 4 && tok.size() != 7)
                throw ParseError("vertex needs 3 coordinates or 3 coordinates + RGB", line_no);
            const int has_color = tok.size() == 7 ? 1 : 0;
            if (colored == -1) colored = has_color;
            if (colored != has_color)
                throw ParseError("mixed colored and uncolored vertices", line_no);
            mesh.vertices.emplace_back(detail::parse_double(tok[1], line_no),
                                       detail::parse_double(tok[2], line_no),
                                       detail::parse_double(tok[3], line_no));
            if (has_color) {
                Vec3 c(detail::parse_double(tok[4], line_no), detail::parse_double(tok[5], line_no),
                       detail::parse_double(tok[6], line_no));
                if (!(c.minCoeff() >= 0.0 && c.maxCoeff() <= 1.0))
                    throw ParseError("vertex color outside [0,1]", line_no);
                colors.push_back(c);
            }
        } else if (tok[0] == "f") {
            if (tok.size() < 4) throw ParseError("face needs at least 3 vertices", line_no);
            std::vector<std::uint32_t> poly;
            for (std::size_t k = 1; k < tok.size(); ++k) {
                auto t = tok[k];
                auto slash = t.find('/');
                long long idx = detail::parse_int(t.substr(0, slash), line_no);
                if (idx == 0) throw ParseError("OBJ indices are 1-based; 0 is invalid", line_no);
                if (idx < 0) idx += static_cast<long long>(mesh.vertices.size()) + 1;
                if (idx < 1) throw ParseError("relative index before the first vertex", line_no);
                if (idx - 1 > static_cast<long long>(std::numeric_limits<std::uint32_t>::max()))
                    throw ParseError("vertex index too large", line_no);
                poly.push_back(static_cast<std::uint32_t>(idx - 1));
            }
            for (std::size_t k = 1; k + 1 < poly.size(); ++k)
                mesh.faces.push_back({poly[0], poly[k], poly[k + 1]});
        }
        // vn, vt, o, g, s, usemtl, mtllib ... are not needed
        if (end == text.size()) break;
    }
    if (colored == 1) mesh.colors = std::move(colors);
    validate(mesh);
    return mesh;
}

inline std::string format_obj(const Mesh& mesh) {
    std::string out;
    out.reserve(mesh.vertices.size() * 64 + mesh.faces.size() * 24);
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
        out += "v";
        for (int a = 0; a < 3; ++a) {
            out += ' ';
            detail::append_double(out, mesh.vertices[i][a]);
        }
        if (mesh.colors) {
            for (int a = 0; a < 3; ++a) {
                out += ' ';
                detail::append_double(out, (*mesh.colors)[i][a]);
            }
        }
        out += '\n';
    }
    for (const auto& f : mesh.faces) {
        out += "f " + std::to_string(f[0] + 1) + ' ' + std::to_string(f[1] + 1) + ' ' +
               std::to_string(f[2] + 1) + '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// PLY

namespace detail {

enum class PlyType { i8, u8, i16, u16, i32, u32, f32, f64 };

inline PlyType ply_type(std::string_view name, std::size_t line) {
    if (name == "char" || name == "int8") return PlyType::i8;
    if (name == "uchar" || name == "uint8") return PlyType::u8;
    if (name == "short" || name == "int16") return PlyType::i16;
    if (name == "ushort" || name == "uint16") return PlyType::u16;
    if (name == "int" || name == "int32") return PlyType::i32;
    if (name == "uint" || name == "uint32") return PlyType::u32;
    if (name == "float" || name == "float32") return PlyType::f32;
    if (name == "double" || name == "float64") return PlyType::f64;
    throw ParseError("unknown PLY property type '" + std::string(name) + "'", line);
}

inline std::size_t ply_size(PlyType t) {
    switch (t) {
        case PlyType::i8:
        case PlyType::u8: return 1;
        case PlyType::i16:
        case PlyType::u16: return 2;
        case PlyType::i32:
        case PlyType::u32:
        case PlyType::f32: return 4;
        case PlyType::f64: return 8;
    }
    return 0;
}

struct PlyProperty {
    std::string name;
    PlyType type = PlyType::f32;
    bool is_list = false;
    PlyType count_type = PlyType::u8;
};

struct PlyElement {
    std::string name;
    std::size_t count = 0;
    std::vector<PlyProperty> properties;
};

// Little-endian host assumed for binary_little_endian payloads.
template <typename T>
T load_le(const char* p) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    return v;
}

inline double read_binary_value(PlyType t, const char* p) {
    switch (t) {
        case PlyType::i8: return load_le<std::int8_t>(p);
        case PlyType::u8: return load_le<std::uint8_t>(p);
        case PlyType::i16: return load_le<std::int16_t>(p);
        case PlyType::u16: return load_le<std::uint16_t>(p);
        case PlyType::i32: return load_le<std::int32_t>(p);
        case PlyType::u32: return load_le<std::uint32_t>(p);
        case PlyType::f32: return load_le<float>(p);
        case PlyType::f64: return load_le<double>(p);
    }
    return 0.0;
}

inline bool is_integral(PlyType t) { return t != PlyType::f32 && t != PlyType::f64; }

// Pulls values one at a time from either an ASCII or a binary body.
class PlyCursor {
public:
    PlyCursor(std::string_view body, bool binary, std::size_t first_line)
        : body_(body), binary_(binary), line_(first_line) {}

    double next(PlyType t) {
        if (binary_) {
            const auto sz = ply_size(t);
            if (pos_ + sz > body_.size()) throw ParseError("unexpected end of binary PLY data");
            double v = read_binary_value(t, body_.data() + pos_);
            pos_ += sz;
            return v;
        }
        auto tok = next_token();
        if (is_integral(t)) return static_cast<double>(parse_int(tok, line_));
        return parse_double(tok, line_);
    }

    // ASCII elements occupy one line each.
    void end_element() {
        if (binary_) return;
        while (pos_ < body_.size() && body_[pos_] != '\n') {
            if (!std::isspace(static_cast<unsigned char>(body_[pos_])))
                throw ParseError("trailing data on element line", line_);
            ++pos_;
        }
        if (pos_ < body_.size()) {
            ++pos_;
            ++line_;
        }
    }

    std::size_t line() const { return line_; }

private:
    std::string_view next_token() {
        while (pos_ < body_.size() && (body_[pos_] == ' ' || body_[pos_] == '\t' || body_[pos_] == '\r'))
            ++pos_;
        if (pos_ >= body_.size() || body_[pos_] == '\n')
            throw ParseError("element line has too few values", line_);
        std::size_t start = pos_;
        while (pos_ < body_.size() && !std::isspace(static_cast<unsigned char>(body_[pos_]))) ++pos_;
        return body_.substr(start, pos_ - start);
    }

    std::string_view body_;
    bool binary_;
    std::size_t line_;
    std::size_t pos_ = 0;
};

}  // namespace detail

/// Parses ASCII or binary little-endian PLY. Vertex colors may be uchar
/// (scaled by 1/255) or floating point; normals are renormalized.
inline Mesh parse_ply(std::string_view data) {
    using namespace detail;
    std::size_t pos = 0;
    std::size_t line_no = 0;
    auto next_line = [&]() -> std::string_view {
        if (pos >= data.size()) throw ParseError("unexpected end of PLY header", line_no);
        std::size_t end = data.find('\n', pos);
        if (end == std::string_view::npos) end = data.size();
        std::string_view line = data.substr(pos, end - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        pos = end + 1;
        ++line_no;
        return line;
    };

    if (next_line() != "ply") throw ParseError("missing 'ply' magic", 1);
    bool binary = false;
    std::vector<PlyElement> elements;
    for (;;) {
        auto line = next_line();
        auto tok = split_ws(line);
        if (tok.empty() || tok[0] == "comment" || tok[0] == "obj_info") continue;
        if (tok[0] == "end_header") break;
        if (tok[0] == "format") {
            if (tok.size() < 2) throw ParseError("malformed format line", line_no);
            if (tok[1] == "ascii")
                binary = false;
            else if (tok[1] == "binary_little_endian")
                binary = true;
            else
                throw ParseError("unsupported PLY format '" + std::string(tok[1]) + "'", line_no);
        } else if (tok[0] == "element") {
            if (tok.size() != 3) throw ParseError("malformed element line", line_no);
            const auto count = parse_int(tok[2], line_no);
            if (count < 0) throw ParseError("negative element count", line_no);
            elements.push_back({std::string(tok[1]), static_cast<std::size_t>(count), {}});
        } else if (tok[0] == "property") {
            if (elements.empty()) throw ParseError("property before any element", line_no);
            PlyProperty prop;
            if (tok.size() == 5 && tok[1] == "list") {
                prop.is_list = true;
                prop.count_type = ply_type(tok[2], line_no);
                prop.type = ply_type(tok[3], line_no);
                prop.name = std::string(tok[4]);
            } else if (tok.size() == 3) {
                prop.type = ply_type(tok[1], line_no);
                prop.name = std::string(tok[2]);
            } else {
                throw ParseError("malformed property line", line_no);
            }
            elements.back().properties.push_back(std::move(prop));
        } else {
            throw ParseError("unexpected header keyword '" + std::string(tok[0]) + "'", line_no);
        }
    }

    Mesh mesh;
    std::vector<Vec3> colors;
    std::vector<Vec3> normals;
    PlyCursor cur(data.substr(std::min(pos, data.size())), binary, line_no + 1);
    bool saw_vertices = false;
    for (const auto& el : elements) {
        if (el.name == "vertex") {
            saw_vertices = true;
            int ix = -1, iy = -1, iz = -1, ir = -1, ig = -1, ib = -1, inx = -1, iny = -1, inz = -1;
            for (int k = 0; k < static_cast<int>(el.properties.size()); ++k) {
                const auto& n = el.properties[k].name;
                if (n == "x") ix = k;
                else if (n == "y") iy = k;
                else if (n == "z") iz = k;
                else if (n == "red" || n == "r") ir = k;
                else if (n == "green" || n == "g") ig = k;
                else if (n == "blue" || n == "b") ib = k;
                else if (n == "nx") inx = k;
                else if (n == "ny") iny = k;
                else if (n == "nz") inz = k;
            }
            if (ix < 0 || iy < 0 || iz < 0) throw ParseError("vertex element lacks x/y/z");
            const bool has_color = ir >= 0 && ig >= 0 && ib >= 0;
            const bool has_normal = inx >= 0 && iny >= 0 && inz >= 0;
            std::vector<double> vals(el.properties.size());
            for (std::size_t v = 0; v < el.count; ++v) {
                for (std::size_t k = 0; k < el.properties.size(); ++k) {
                    const auto& p = el.properties[k];
                    if (p.is_list) {
                        auto n = static_cast<std::size_t>(cur.next(p.count_type));
                        for (std::size_t q = 0; q < n; ++q) cur.next(p.type);
                        vals[k] = 0.0;
                    } else {
                        vals[k] = cur.next(p.type);
                    }
                }
                cur.end_element();
                mesh.vertices.emplace_back(vals[ix], vals[iy], vals[iz]);
                if (has_color) {
                    Vec3 c(vals[ir], vals[ig], vals[ib]);
                    if (el.properties[ir].type == PlyType::u8) c /= 255.0;
                    else if (el.properties[ir].type == PlyType::u16) c /= 65535.0;
                    if (!(c.minCoeff() >= 0.0 && c.maxCoeff() <= 1.0))
                        throw ParseError("vertex color outside [0,1] at vertex " + std::to_string(v));
                    colors.push_back(c);
                }
                if (has_normal) normals.emplace_back(vals[inx], vals[iny], vals[inz]);
            }
            if (has_color) mesh.colors = std::move(colors);
            if (has_normal) {
                bool ok = true;
                for (auto& n : normals) {
                    const double len = n.norm();
                    if (!(len > 0.0)) {
                        ok = false;
                        break;
                    }
                    if (std::abs(len - 1.0) > 1e-12) n /= len;  // leave stored unit normals bit-exact
                }
                if (ok) mesh.normals = std::move(normals);
            }
        } else if (el.name == "face") {
            int il = -1;
            for (int k = 0; k < static_cast<int>(el.properties.size()); ++k) {
                const auto& p = el.properties[k];
                if (p.is_list && (p.name == "vertex_indices" || p.name == "vertex_index")) il = k;
            }
            if (il < 0) throw ParseError("face element lacks a vertex_indices list");
            for (std::size_t f = 0; f < el.count; ++f) {
                std::vector<std::uint32_t> poly;
                for (std::size_t k = 0; k < el.properties.size(); ++k) {
                    const auto& p = el.properties[k];
                    if (p.is_list) {
                        auto n = static_cast<std::size_t>(cur.next(p.count_type));
                        for (std::size_t q = 0; q < n; ++q) {
                            double idx = cur.next(p.type);
                            if (static_cast<int>(k) == il) {
                                if (idx < 0) throw ParseError("negative face index", cur.line());
                                poly.push_back(static_cast<std::uint32_t>(idx));
                            }
                        }
                    } else {
                        cur.next(p.type);
                    }
                }
                cur.end_element();
                if (poly.size() < 3) throw ParseError("face with fewer than 3 vertices", cur.line());
                for (std::size_t k = 1; k + 1 < poly.size(); ++k)
                    mesh.faces.push_back({poly[0], poly[k], poly[k + 1]});
            }
        } else {
            for (std::size_t i = 0; i < el.count; ++i) {
                for (const auto& p : el.properties) {
                    if (p.is_list) {
                        auto n = static_cast<std::size_t>(cur.next(p.count_type));
                        for (std::size_t q = 0; q < n; ++q) cur.next(p.type);
                    } else {
                        cur.next(p.type);
                    }
                }
                cur.end_element();
            }
        }
    }
    if (!saw_vertices) throw ParseError("PLY file has no vertex element");
    validate(mesh);
    return mesh;
}

/// PLY text or binary-little-endian bytes. Positions, normals and colors are
/// written as doubles so a round trip is lossless.
inline std::string format_ply(const Mesh& mesh, bool binary = true) {
    std::string out;
    out += "ply\n";
    out += binary ? "format binary_little_endian 1.0\n" : "format ascii 1.0\n";
    out += "element vertex " + std::to_string(mesh.vertices.size()) + "\n";
    out += "property double x\nproperty double y\nproperty double z\n";
    if (mesh.normals) out += "property double nx\nproperty double ny\nproperty double nz\n";
    if (mesh.colors) out += "property double red\nproperty double green\nproperty double blue\n";
    out += "element face " + std::to_string(mesh.faces.size()) + "\n";
    out += "property list uchar uint vertex_indices\n";
    out += "end_header\n";

    auto put = [&](auto v) { out.append(reinterpret_cast<const char*>(&v), sizeof(v)); };
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
        std::vector<double> row(mesh.vertices[i].data(), mesh.vertices[i].data() + 3);
        if (mesh.normals) row.insert(row.end(), (*mesh.normals)[i].data(), (*mesh.normals)[i].data() + 3);
        if (mesh.colors) row.insert(row.end(), (*mesh.colors)[i].data(), (*mesh.colors)[i].data() + 3);
        if (binary) {
            for (double v : row) put(v);
        } else {
            for (std::size_t k = 0; k < row.size(); ++k) {
                if (k) out += ' ';
                detail::append_double(out, row[k]);
            }
            out += '\n';
        }
    }
    for (const auto& f : mesh.faces) {
        if (binary) {
            put(std::uint8_t{3});
            for (auto idx : f) put(static_cast<std::uint32_t>(idx));
        } else {
            out += "3 " + std::to_string(f[0]) + ' ' + std::to_string(f[1]) + ' ' + std::to_string(f[2]) + '\n';
        }
    }
    return out;
}

inline Mesh load_mesh(const std::filesystem::path& path, MeshFormat format) {
    if (!std::filesystem::exists(path)) throw IoError("no such file: " + path.string());
    const auto bytes = detail::read_file(path);
    return format == MeshFormat::obj ? parse_obj(bytes) : parse_ply(bytes);
}

inline Mesh load_mesh(const std::filesystem::path& path) { return load_mesh(path, format_from_path(path)); }

inline std::string encode_mesh(const Mesh& mesh, MeshFormat format, bool binary_ply = true) {
    return format == MeshFormat::obj ? format_obj(mesh) : format_ply(mesh, binary_ply);
}

inline void save_mesh(const Mesh& mesh, const std::filesystem::path& path, bool binary_ply = true) {
    detail::write_file(path, encode_mesh(mesh, format_from_path(path), binary_ply));
}

}  // namespace hpn
