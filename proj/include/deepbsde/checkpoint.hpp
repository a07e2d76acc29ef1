#pragma once

// Parameter checkpoints: a JSON manifest of named arrays (name, shape,
// row-major values) plus the network configuration that produced them.
// Doubles are written in shortest round-trip form, so save/load is bit-exact.

#include "deepbsde/nets.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>

namespace deepbsde {

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string checkpoint_to_string(const NetworkParams& params);
NetworkParams checkpoint_from_string(const std::string& text);

void save_checkpoint(const std::filesystem::path& path, const NetworkParams& params);
NetworkParams load_checkpoint(const std::filesystem::path& path);

/// Throws CheckpointError naming both shapes when `params` cannot serve a
/// network built from `expected`.
void require_compatible(const NetworkParams& params, const NetConfig& expected);

}  // namespace deepbsde
