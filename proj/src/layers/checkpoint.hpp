#pragma once

#include <filesystem>
#include <memory>

#include "layers/network.hpp"

namespace capsnet {

/// Tensor container with magic "CAPSCKPT"; the header is the spec JSON plus
/// the seed, the records are the parameters in Network::parameters() order.
void save_checkpoint(const Network& net, const std::filesystem::path& path);

/// Rebuilds the network from the echoed spec and overwrites its parameters.
/// Format error when a parameter is missing or has the wrong shape.
std::unique_ptr<Network> load_checkpoint(const std::filesystem::path& path);

}  // namespace capsnet
