#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dfg/data.hpp"
#include "dfg/resiliency.hpp"
#include "dfg/runtime.hpp"
#include "dfg/topology.hpp"
#include "dfg/training.hpp"

namespace dfg {

struct DatasetConfig {
    std::string kind;  // mhealth | synth_multiview | dfgd
    std::string path;
    uint64_t split_seed = 7;
    int max_rows = 0;
    SynthMultiViewSpec synth;
};

// One experiment, fully described: topology, data source, hyperparameters,
// reliability tiers, seeds, runtime wiring. The file hash rides along into
// every artifact the toolkit writes.
struct ExperimentConfig {
    std::string name;
    std::string source_path;
    std::string config_hash;

    DnnSpec spec;
    std::vector<PhysicalNode> nodes;
    PartitionMap partition;
    std::vector<std::pair<std::string, std::string>> extra_skips;

    DatasetConfig dataset;
    TrainConfig training;
    bool weighted_loss = false;

    std::map<std::string, ReliabilitySetting> reliability;  // keyed by tier label
    std::vector<uint64_t> seeds;
    std::string output_dir = "runs";

    int base_port = 7450;
    NodeEndpoints endpoints;  // derived from base_port when not given explicitly
    RuntimeTimeouts timeouts;

    // vanilla: simple hyperconnections only. deepfogguard: one-node skips plus
    // any explicit extras from the config.
    DistributedDnn build_variant(const std::string& variant) const;
    Dataset load_dataset() const;
    ReliabilitySetting tier_setting(const std::string& tier) const;
    std::vector<std::string> tier_labels() const;
};

ExperimentConfig load_config(const std::string& path);

// FNV-1a 64-bit over the raw file bytes, hex-encoded.
std::string fnv1a_hex(const std::string& bytes);

}  // namespace dfg
