#include "dfg/config.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

using nlohmann::json;

namespace dfg {

std::string fnv1a_hex(const std::string& bytes) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace {

[[noreturn]] void fail(const std::string& what) {
    throw std::invalid_argument("config: " + what);
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    auto it = j.find(key);
    return it == j.end() ? fallback : it->get<T>();
}

}  // namespace

ExperimentConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) fail("cannot open " + path);
    std::stringstream buf;
    buf << is.rdbuf();
    const std::string bytes = buf.str();

    json j;
    try {
        j = json::parse(bytes);
    } catch (const std::exception& e) {
        fail(path + " is not valid JSON: " + e.what());
    }

    ExperimentConfig cfg;
    cfg.source_path = path;
    cfg.config_hash = fnv1a_hex(bytes);
    cfg.name = get_or<std::string>(j, "name", "experiment");

    // topology
    if (!j.contains("topology")) fail("missing topology section");
    const json& t = j["topology"];
    cfg.spec.input_dim = t.at("input_dim").get<int>();
    cfg.spec.hidden_widths = t.at("hidden_widths").get<std::vector<int>>();
    cfg.spec.output_dim = t.at("output_dim").get<int>();
    cfg.spec.validate();

    for (const json& nj : t.at("nodes")) {
        PhysicalNode n;
        n.id = nj.at("id").get<std::string>();
        n.tier = tier_from_name(nj.at("tier").get<std::string>());
        n.fallible = get_or<bool>(nj, "fallible", n.tier == Tier::Edge || n.tier == Tier::Fog);
        n.feeds = get_or<std::vector<std::string>>(nj, "feeds", {});
        cfg.nodes.push_back(std::move(n));
    }
    if (cfg.nodes.empty()) fail("topology has no nodes");

    cfg.partition.layer_to_node.assign(cfg.spec.layer_count(), "");
    for (const auto& [node_id, layers] : t.at("partition").items()) {
        for (int k : layers.get<std::vector<int>>()) {
            if (k < 0 || k >= cfg.spec.layer_count())
                fail("partition layer index " + std::to_string(k) + " out of range");
            if (!cfg.partition.layer_to_node[k].empty())
                fail("layer " + std::to_string(k) + " assigned twice");
            cfg.partition.layer_to_node[k] = node_id;
        }
    }
    for (int k = 0; k < cfg.spec.layer_count(); ++k)
        if (cfg.partition.layer_to_node[k].empty())
            fail("layer " + std::to_string(k) + " unassigned in partition");

    for (const json& s : get_or<json>(t, "extra_skips", json::array()))
        cfg.extra_skips.emplace_back(s.at(0).get<std::string>(), s.at(1).get<std::string>());

    // dataset
    if (!j.contains("dataset")) fail("missing dataset section");
    const json& d = j["dataset"];
    cfg.dataset.kind = d.at("kind").get<std::string>();
    cfg.dataset.path = get_or<std::string>(d, "path", "");
    cfg.dataset.split_seed = get_or<uint64_t>(d, "split_seed", 7);
    cfg.dataset.max_rows = get_or<int>(d, "max_rows", 0);
    if (cfg.dataset.kind == "synth_multiview") {
        const json sj = get_or<json>(d, "synth", json::object());
        auto& s = cfg.dataset.synth;
        s.instances = get_or<int>(sj, "instances", s.instances);
        s.views = get_or<int>(sj, "views", s.views);
        s.view_dim = get_or<int>(sj, "view_dim", s.view_dim);
        s.classes = get_or<int>(sj, "classes", s.classes);
        s.class_skew = get_or<std::vector<double>>(sj, "class_skew", s.class_skew);
        s.occlusion_rate = get_or<double>(sj, "occlusion_rate", s.occlusion_rate);
        s.seed = get_or<uint64_t>(sj, "seed", s.seed);
        s.split_seed = cfg.dataset.split_seed;
    } else if (cfg.dataset.kind == "mhealth" || cfg.dataset.kind == "dfgd") {
        if (cfg.dataset.path.empty()) fail("dataset." + cfg.dataset.kind + " needs a path");
    } else {
        fail("unknown dataset kind " + cfg.dataset.kind);
    }

    // training
    if (!j.contains("training")) fail("missing training section");
    const json& tr = j["training"];
    cfg.training.epochs = get_or<int>(tr, "epochs", 50);
    cfg.training.optimizer.batch_size = get_or<int>(tr, "batch_size", 1024);
    cfg.training.optimizer.learning_rate = get_or<double>(tr, "learning_rate", 0.001);
    cfg.training.optimizer.beta1 = get_or<double>(tr, "beta1", 0.9);
    cfg.training.optimizer.beta2 = get_or<double>(tr, "beta2", 0.999);
    cfg.training.optimizer.epsilon = get_or<double>(tr, "epsilon", 1e-8);
    const std::string loss = get_or<std::string>(tr, "loss", "cross_entropy");
    if (loss == "cross_entropy") {
        cfg.weighted_loss = false;
    } else if (loss == "weighted_cross_entropy") {
        cfg.weighted_loss = true;
    } else {
        fail("unknown loss " + loss);
    }
    cfg.training.validate();

    // reliability tiers over fallible nodes, in declaration order
    std::vector<std::string> fallible;
    for (const auto& n : cfg.nodes)
        if (n.fallible) fallible.push_back(n.id);
    for (const auto& [tier, probs] : get_or<json>(j, "reliability", json::object()).items()) {
        ReliabilitySetting r;
        for (const auto& id : fallible) {
            if (!probs.contains(id)) fail("reliability." + tier + " missing node " + id);
            r.node_ids.push_back(id);
            r.survival.push_back(probs.at(id).get<double>());
        }
        r.validate();
        cfg.reliability[tier] = std::move(r);
    }

    cfg.seeds = get_or<std::vector<uint64_t>>(j, "seeds", {1});
    if (cfg.seeds.empty()) fail("seeds must not be empty");
    cfg.output_dir = get_or<std::string>(j, "output_dir", "runs/" + cfg.name);

    // runtime wiring
    const json rt = get_or<json>(j, "runtime", json::object());
    cfg.base_port = get_or<int>(rt, "base_port", 7450);
    cfg.timeouts.round_timeout_ms = get_or<int>(rt, "round_timeout_ms", 200);
    cfg.timeouts.heartbeat_interval_ms = get_or<int>(rt, "heartbeat_interval_ms", 100);
    cfg.timeouts.suspicion_timeout_ms = get_or<int>(rt, "suspicion_timeout_ms", 400);
    cfg.timeouts.handshake_timeout_ms = get_or<int>(rt, "handshake_timeout_ms", 15000);
    cfg.timeouts.coordinator_round_timeout_ms = get_or<int>(rt, "coordinator_round_timeout_ms", 500);
    if (cfg.timeouts.heartbeat_interval_ms >= cfg.timeouts.suspicion_timeout_ms)
        fail("heartbeat interval must be below the suspicion timeout");

    cfg.endpoints.coordinator_address =
        get_or<std::string>(rt, "coordinator", "127.0.0.1:" + std::to_string(cfg.base_port));
    const json addr = get_or<json>(rt, "addresses", json::object());
    int next_port = cfg.base_port + 1;
    for (const auto& n : cfg.nodes) {
        if (n.tier == Tier::Iot) continue;
        if (addr.contains(n.id))
            cfg.endpoints.node_address[n.id] = addr.at(n.id).get<std::string>();
        else
            cfg.endpoints.node_address[n.id] = "127.0.0.1:" + std::to_string(next_port);
        ++next_port;
    }
    return cfg;
}

DistributedDnn ExperimentConfig::build_variant(const std::string& variant) const {
    if (variant == "vanilla")
        return build_distributed(spec, nodes, partition, SkipPolicy::None);
    if (variant == "deepfogguard")
        return build_distributed(spec, nodes, partition, SkipPolicy::SkipOne, extra_skips);
    throw std::invalid_argument("unknown variant " + variant + " (vanilla|deepfogguard)");
}

Dataset ExperimentConfig::load_dataset() const {
    if (dataset.kind == "mhealth") {
        MhealthOptions opts;
        opts.split_seed = dataset.split_seed;
        opts.max_rows = dataset.max_rows;
        return load_mhealth(dataset.path, opts);
    }
    if (dataset.kind == "synth_multiview") return synth_multiview(dataset.synth);
    return load_dfgd(dataset.path, dataset.split_seed);
}

ReliabilitySetting ExperimentConfig::tier_setting(const std::string& tier) const {
    auto it = reliability.find(tier);
    if (it != reliability.end()) return it->second;
    if (tier == "no_failure") {
        ReliabilitySetting r;
        for (const auto& n : nodes)
            if (n.fallible) {
                r.node_ids.push_back(n.id);
                r.survival.push_back(1.0);
            }
        return r;
    }
    throw std::invalid_argument("config has no reliability tier '" + tier + "'");
}

std::vector<std::string> ExperimentConfig::tier_labels() const {
    std::vector<std::string> labels{"no_failure"};
    for (const auto& [tier, r] : reliability)
        if (tier != "no_failure") labels.push_back(tier);
    return labels;
}

}  // namespace dfg
