#pragma once

#include <string>

#include "dfg/net.hpp"

namespace dfg {

// Weight container: magic "DFGW", format version u32, layer count u32, then per
// layer rows u32, cols u32, activation tag u8, row-major weights and the bias
// as little-endian 32-bit reals. Layers appear in evaluation order, slab order
// within a node; expansion layers carry no parameters and are not stored.
void save_weights(const DistributedNet<float>& net, const std::string& path);

// Loads into an already-built net; every stored shape must match the topology.
void load_weights(DistributedNet<float>& net, const std::string& path);

}  // namespace dfg
