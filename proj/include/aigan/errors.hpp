#pragma once

#include <stdexcept>
#include <string>

namespace aigan {

// Error taxonomy. Every throw site names the offending values in the message.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& what) : std::runtime_error("shape: " + what) {}
};

struct IndexError : std::runtime_error {
    explicit IndexError(const std::string& what) : std::runtime_error("index: " + what) {}
};

struct ContractError : std::runtime_error {
    explicit ContractError(const std::string& what) : std::runtime_error("contract: " + what) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error("io: " + what) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error("config: " + what) {}
};

} // namespace aigan
