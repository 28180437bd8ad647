#ifndef SOFTPATCH_JSON_SCHEMA_HPP
#define SOFTPATCH_JSON_SCHEMA_HPP

#include "error.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>

namespace softpatch::schema {

using nlohmann::json;

inline constexpr int schema_version = 1;

/// Builds a JSON pointer to child `key` of `base`, escaping per RFC 6901.
inline std::string child(const std::string& base, std::string_view key) {
    std::string escaped;
    for (char c : key) {
        if (c == '~') {
            escaped += "~0";
        } else if (c == '/') {
            escaped += "~1";
        } else {
            escaped += c;
        }
    }
    return base + "/" + escaped;
}

inline std::string child(const std::string& base, std::size_t index) { return base + "/" + std::to_string(index); }

inline void require_object(const json& j, const std::string& ptr) {
    if (!j.is_object()) {
        throw SchemaError(ptr, "expected an object");
    }
}

/// Rejects keys outside `allowed`.
inline void only_keys(const json& j, const std::string& ptr, std::initializer_list<std::string_view> allowed) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (auto a : allowed) {
            ok = ok || it.key() == a;
        }
        if (!ok) {
            throw SchemaError(child(ptr, it.key()), "unknown key");
        }
    }
}

inline const json& field(const json& j, const std::string& ptr, std::string_view key) {
    auto it = j.find(std::string(key));
    if (it == j.end()) {
        throw SchemaError(child(ptr, key), "missing required field '" + std::string(key) + "'");
    }
    return *it;
}

inline std::string get_string(const json& j, const std::string& ptr, std::string_view key) {
    const auto& v = field(j, ptr, key);
    if (!v.is_string()) {
        throw SchemaError(child(ptr, key), "expected a string");
    }
    return v.get<std::string>();
}

inline double get_number(const json& j, const std::string& ptr, std::string_view key) {
    const auto& v = field(j, ptr, key);
    if (!v.is_number()) {
        throw SchemaError(child(ptr, key), "expected a number");
    }
    return v.get<double>();
}

inline std::uint64_t get_unsigned(const json& j, const std::string& ptr, std::string_view key) {
    const auto& v = field(j, ptr, key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
        throw SchemaError(child(ptr, key), "expected a non-negative integer");
    }
    return v.get<std::uint64_t>();
}

inline bool get_bool(const json& j, const std::string& ptr, std::string_view key) {
    const auto& v = field(j, ptr, key);
    if (!v.is_boolean()) {
        throw SchemaError(child(ptr, key), "expected a boolean");
    }
    return v.get<bool>();
}

template<typename T, typename Getter>
std::optional<T> optional(const json& j, const std::string& ptr, std::string_view key, Getter getter) {
    auto it = j.find(std::string(key));
    if (it == j.end() || it->is_null()) {
        return std::nullopt;
    }
    return getter(j, ptr, key);
}

inline void check_version(const json& j, const std::string& ptr = "") {
    const auto v = get_unsigned(j, ptr, "schema_version");
    if (v != schema_version) {
        throw SchemaError(child(ptr, "schema_version"), "unsupported schema_version " + std::to_string(v));
    }
}

inline json parse_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorKind::Io, "cannot open " + path.string());
    }
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw SchemaError("", path.string() + ": invalid JSON: " + e.what());
    }
}

inline void write_file(const json& j, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
    }
    out << j.dump(2) << '\n';
    if (!out) {
        throw Error(ErrorKind::Io, "write failed for " + path.string());
    }
}

}

#endif
