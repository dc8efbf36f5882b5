#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dfg/nn.hpp"

namespace dfg {

// Logical layer stack: input -> hidden widths -> softmax output. Layer index k
// covers the hidden layers 0..H-1 plus the output layer at index H.
struct DnnSpec {
    int input_dim = 0;
    std::vector<int> hidden_widths;
    int output_dim = 0;

    int layer_count() const { return static_cast<int>(hidden_widths.size()) + 1; }
    int layer_width(int k) const {
        return k < static_cast<int>(hidden_widths.size()) ? hidden_widths[k] : output_dim;
    }
    Activation layer_activation(int k) const {
        return k < static_cast<int>(hidden_widths.size()) ? Activation::Relu : Activation::Softmax;
    }
    void validate() const;
};

enum class Tier : uint8_t { Iot, Edge, Fog, Cloud };

const char* tier_name(Tier t);
Tier tier_from_name(const std::string& name);

struct PhysicalNode {
    std::string id;
    Tier tier = Tier::Edge;
    std::vector<int> assigned_layers;  // filled by build_distributed, consecutive
    bool fallible = true;
    // Dataflow children: the nodes this node's output feeds directly (the simple
    // hyperconnections). Left empty everywhere, the chain is derived from layer
    // adjacency instead.
    std::vector<std::string> feeds;

    bool holds_layers() const { return !assigned_layers.empty(); }
};

// layer index -> node id, total on 0..layer_count-1
struct PartitionMap {
    std::vector<std::string> layer_to_node;
};

enum class SkipPolicy : uint8_t { None, SkipOne };

enum class HcKind : uint8_t { Simple, Skip };

struct Hyperconnection {
    std::string src;
    std::string dst;
    HcKind kind = HcKind::Simple;
    int dim = 0;                 // width of the vector carried, = src output dim
    std::vector<double> weight;  // fixed to all-ones, length dim
};

struct LayerShape {
    int in = 0;
    int out = 0;
    Activation act = Activation::Relu;
};

struct DistributedDnn {
    DnnSpec spec;
    std::vector<PhysicalNode> nodes;  // declaration order
    std::vector<Hyperconnection> hyperconnections;
    std::map<std::string, int> expansion_width;  // per node with >= 1 in-edge, identity units
    std::vector<std::string> eval_order;         // topological over all hyperconnections

    const PhysicalNode* find_node(const std::string& id) const;
    const PhysicalNode& node(const std::string& id) const;
    int node_output_dim(const std::string& id) const;
    std::vector<const Hyperconnection*> in_edges(const std::string& id) const;  // sorted by src
    std::vector<const Hyperconnection*> out_edges(const std::string& id) const;
    std::vector<std::string> iot_ids() const;
    std::vector<std::string> fallible_ids() const;  // declaration order
    const std::string& output_node() const;         // holder of the last layer

    // Weight shapes of a node's dense slab; the head layer takes the expansion
    // layer's width as its input.
    std::vector<LayerShape> slab_shapes(const std::string& id) const;
};

// Assembles the distributed DNN: assigns slabs from the partition map, wires the
// simple hyperconnections (explicit feeds, or layer adjacency when no feeds are
// given), applies the skip policy, and sizes the expansion layers. extra_skips
// adds explicit skip hyperconnections on top of the policy, so wirings outside
// the one-node rule stay expressible.
DistributedDnn build_distributed(const DnnSpec& spec, std::vector<PhysicalNode> nodes,
                                 const PartitionMap& partition, SkipPolicy policy,
                                 const std::vector<std::pair<std::string, std::string>>& extra_skips = {});

// Invariant check; violations come back as data, an empty list means well-formed.
std::vector<std::string> validate_topology(const DistributedDnn& dnn);

struct ReferenceTopology {
    DnnSpec spec;
    std::vector<PhysicalNode> nodes;
    PartitionMap partition;
};

// Activity-classification chain: iot -> e1 (1 layer) -> f2 (2) -> f1 (3) -> cloud (4 + output),
// ten hidden layers of width 250 on 23 inputs and 12 classes. swap_fog_layers
// flips the 2/3 split between the fog nodes.
ReferenceTopology health_reference_topology(bool swap_fog_layers = false);

// Multi-camera tree: six 32x32x3 views feeding four edge nodes, two fog
// aggregators (f3, f4), the upper fogs f2 and f1, then the cloud. 14 hidden
// layers of width 32, 3 classes.
ReferenceTopology camera_reference_topology();

}  // namespace dfg
