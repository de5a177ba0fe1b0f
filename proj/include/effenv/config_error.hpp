// config_error.hpp: error raised for malformed configuration documents

#pragma once

#include <stdexcept>
#include <string>

namespace effenv {

// Names the offending key (dotted path) so callers can report it verbatim.
class ConfigError : public std::invalid_argument {
public:
    ConfigError(std::string key, const std::string& message)
        : std::invalid_argument("config key '" + key + "': " + message), key_(std::move(key)) {}

    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

}  // namespace effenv
