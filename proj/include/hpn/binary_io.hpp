#pragma once

// Little-endian binary container shared by the hierarchy and model files:
//
//   magic[4] | u32 version | payload ... | u64 FNV-1a checksum of all preceding bytes

#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "hpn/error.hpp"

namespace hpn::binary {

inline std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

class Writer {
public:
    Writer(std::string_view magic, std::uint32_t version) {
        buf_.append(magic.data(), magic.size());
        put(version);
    }

    template <typename T>
    void put(T v) {
        static_assert(std::is_trivially_copyable_v<T>);
        buf_.append(reinterpret_cast<const char*>(&v), sizeof(T));
    }

    void put_string(std::string_view s) {
        put(static_cast<std::uint64_t>(s.size()));
        buf_.append(s.data(), s.size());
    }

    template <typename T>
    void put_array(const std::vector<T>& v) {
        put(static_cast<std::uint64_t>(v.size()));
        for (const auto& x : v) put(x);
    }

    std::string finish() {
        std::string out = std::move(buf_);
        const auto sum = fnv1a(out);
        out.append(reinterpret_cast<const char*>(&sum), sizeof(sum));
        return out;
    }

private:
    std::string buf_;
};

class Reader {
public:
    /// Verifies magic, version and checksum before any payload is read.
    Reader(std::string_view bytes, std::string_view magic, std::uint32_t version) {
        const auto header = magic.size() + sizeof(std::uint32_t);
        if (bytes.size() < header + sizeof(std::uint64_t))
            throw FormatError("checksum failure: file is truncated");
        if (bytes.substr(0, magic.size()) != magic)
            throw FormatError("bad magic: not a " + std::string(magic) + " file");
        const auto body = bytes.substr(0, bytes.size() - sizeof(std::uint64_t));
        std::uint64_t stored;
        std::memcpy(&stored, bytes.data() + body.size(), sizeof(stored));
        if (stored != fnv1a(body)) throw FormatError("checksum failure: file is corrupt or truncated");
        data_ = body;
        pos_ = magic.size();
        const auto v = get<std::uint32_t>();
        if (v != version)
            throw FormatError("version mismatch: file has version " + std::to_string(v) + ", expected " +
                              std::to_string(version));
    }

    template <typename T>
    T get() {
        static_assert(std::is_trivially_copyable_v<T>);
        if (pos_ + sizeof(T) > data_.size()) throw FormatError("unexpected end of payload");
        T v;
        std::memcpy(&v, data_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }

    std::uint64_t get_count(std::uint64_t element_size) {
        const auto n = get<std::uint64_t>();
        if (element_size && n > (data_.size() - pos_) / element_size) throw FormatError("array length exceeds payload");
        return n;
    }

    std::string get_string() {
        const auto n = get_count(1);
        std::string s(data_.substr(pos_, n));
        pos_ += n;
        return s;
    }

    template <typename T>
    std::vector<T> get_array() {
        const auto n = get_count(sizeof(T));
        std::vector<T> v(n);
        for (auto& x : v) x = get<T>();
        return v;
    }

    bool at_end() const { return pos_ == data_.size(); }

private:
    std::string_view data_;
    std::size_t pos_ = 0;
};

}  // namespace hpn::binary
