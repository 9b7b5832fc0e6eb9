#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

#include "dgmnet/nn/network.hpp"

namespace dgmnet {

/// Lower-case hex SHA-256.
std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view text);
std::string sha256_file(const std::string& path);

/// SHA-256 over names, shapes and raw values of every parameter and buffer whose name
/// starts with `prefix` (all when empty).
std::string state_hash(nn::Network& net, const std::string& prefix = "");

}  // namespace dgmnet
