// json_util.hpp: strict readers for configuration objects (internal)

#pragma once

#include "effenv/config_error.hpp"

#include <json.hpp>

#include <cstdint>
#include <initializer_list>
#include <string>

namespace effenv::detail {

using effenv::ConfigError;

inline std::string join_key(const std::string& context, const std::string& key) {
    return context.empty() ? key : context + "." + key;
}

inline void require_object(const nlohmann::json& j, const std::string& context) {
    if (!j.is_object()) throw ConfigError(context, "expected a JSON object");
}

inline void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                                const std::string& context) {
    for (const auto& item : j.items()) {
        bool known = false;
        for (const char* a : allowed) {
            if (item.key() == a) {
                known = true;
                break;
            }
        }
        if (!known) throw ConfigError(join_key(context, item.key()), "unknown key");
    }
}

inline void read_number(const nlohmann::json& j, const char* key, double& out, const std::string& context) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!v.is_number()) throw ConfigError(join_key(context, key), "expected a number");
    out = v.get<double>();
}

inline void read_int(const nlohmann::json& j, const char* key, int& out, const std::string& context) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!v.is_number_integer()) throw ConfigError(join_key(context, key), "expected an integer");
    out = v.get<int>();
}

inline void read_uint(const nlohmann::json& j, const char* key, std::uint64_t& out, const std::string& context) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
        throw ConfigError(join_key(context, key), "expected a non-negative integer");
    }
    out = v.get<std::uint64_t>();
}

inline void read_bool(const nlohmann::json& j, const char* key, bool& out, const std::string& context) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!v.is_boolean()) throw ConfigError(join_key(context, key), "expected a boolean");
    out = v.get<bool>();
}

inline void read_string(const nlohmann::json& j, const char* key, std::string& out, const std::string& context) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!v.is_string()) throw ConfigError(join_key(context, key), "expected a string");
    out = v.get<std::string>();
}

}  // namespace effenv::detail
