#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include "CLI11.hpp"
#include "dfg/config.hpp"
#include "dfg/weights_io.hpp"
#include "dfg/wire.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dfg;

namespace {

GuessMode parse_guess(const std::string& s) {
    if (s == "expectation") return GuessMode::expectation();
    if (s.rfind("sampled:", 0) == 0) return GuessMode::sampled(std::stoull(s.substr(8)));
    throw CLI::ValidationError("--guess must be 'expectation' or 'sampled:<seed>'");
}

std::string variant_tag(const std::string& variant, uint64_t seed) {
    return variant + "_seed" + std::to_string(seed);
}

TrainConfig resolve_training(const ExperimentConfig& cfg, const Dataset& data, uint64_t seed) {
    TrainConfig tc = cfg.training;
    tc.seed = seed;
    if (cfg.weighted_loss) {
        tc.loss.kind = LossKind::WeightedCrossEntropy;
        tc.loss.class_weights = class_weights(data);
    }
    return tc;
}

DistributedNet<float> load_model(const ExperimentConfig& cfg, const std::string& variant,
                                 const std::string& weights_path) {
    DistributedDnn graph = cfg.build_variant(variant);
    auto violations = validate_topology(graph);
    if (!violations.empty()) {
        for (const auto& v : violations) std::cerr << "topology: " << v << "\n";
        throw std::invalid_argument("invalid topology");
    }
    auto net = DistributedNet<float>::build(graph, 0);
    load_weights(net, weights_path);
    return net;
}

const std::vector<int>& split_rows(const Dataset& data, const std::string& split) {
    if (split == "train") return data.train_idx;
    if (split == "val") return data.val_idx;
    if (split == "test") return data.test_idx;
    throw CLI::ValidationError("--split must be train|val|test");
}

int cmd_train(const std::string& config_path, const std::string& variant, int64_t seed_flag,
              std::string out_dir) {
    ExperimentConfig cfg = load_config(config_path);
    const uint64_t seed = seed_flag >= 0 ? static_cast<uint64_t>(seed_flag) : cfg.seeds.front();
    if (out_dir.empty()) out_dir = cfg.output_dir;
    fs::create_directories(out_dir);

    DistributedDnn graph = cfg.build_variant(variant);
    auto violations = validate_topology(graph);
    if (!violations.empty()) {
        for (const auto& v : violations) std::cerr << "topology: " << v << "\n";
        return 2;
    }
    std::cout << "[train] " << cfg.name << " " << variant << " seed=" << seed << " ("
              << graph.hyperconnections.size() << " hyperconnections)\n";

    Dataset data = cfg.load_dataset();
    TrainConfig tc = resolve_training(cfg, data, seed);
    TrainedModel model = train(graph, data, tc);

    const std::string tag = variant_tag(variant, seed);
    const std::string weights_path = (fs::path(out_dir) / (tag + ".dfgw")).string();
    save_weights(model.net, weights_path);

    json manifest;
    manifest["config_hash"] = cfg.config_hash;
    manifest["config"] = config_path;
    manifest["name"] = cfg.name;
    manifest["variant"] = variant;
    manifest["seed"] = seed;
    manifest["best_epoch"] = model.best_epoch;
    manifest["val_accuracy"] = model.val_accuracy;
    manifest["weights"] = weights_path;
    manifest["weight_format_version"] = 1;
    manifest["wire_version"] = static_cast<int>(kWireVersion);
    manifest["history"] = json::array();
    for (const auto& e : model.history)
        manifest["history"].push_back(
            {{"train_loss", e.train_loss}, {"val_accuracy", e.val_accuracy}});
    std::ofstream os(fs::path(out_dir) / ("manifest_" + tag + ".json"));
    os << manifest.dump(2) << "\n";

    std::cout << "[train] best epoch " << model.best_epoch << ", val accuracy "
              << model.val_accuracy << "\n[train] wrote " << weights_path << "\n";
    return 0;
}

int cmd_evaluate(const std::string& config_path, const std::string& variant,
                 const std::string& weights_path, const std::string& split,
                 const std::string& failed_csv, const std::string& guess_str) {
    ExperimentConfig cfg = load_config(config_path);
    auto net = load_model(cfg, variant, weights_path);
    Dataset data = cfg.load_dataset();

    std::set<std::string> failed;
    std::stringstream ss(failed_csv);
    std::string id;
    while (std::getline(ss, id, ','))
        if (!id.empty()) failed.insert(id);

    const auto& rows = split_rows(data, split);
    const double acc = accuracy(net, make_iot_inputs(net.graph(), data, rows),
                                gather_labels(data, rows), failed, parse_guess(guess_str));
    std::cout << "accuracy[" << split << "] = " << acc << "\n";
    return 0;
}

int cmd_resiliency(const std::string& config_path, const std::string& variant,
                   const std::string& weights_path, std::string tiers_csv,
                   const std::string& mode, const std::string& guess_str, uint64_t mc_seed,
                   std::string out_dir) {
    ExperimentConfig cfg = load_config(config_path);
    auto net = load_model(cfg, variant, weights_path);
    Dataset data = cfg.load_dataset();
    if (out_dir.empty()) out_dir = cfg.output_dir;
    fs::create_directories(out_dir);

    std::vector<std::string> tiers;
    if (tiers_csv == "all") {
        tiers = cfg.tier_labels();
    } else {
        std::stringstream ss(tiers_csv);
        std::string t;
        while (std::getline(ss, t, ','))
            if (!t.empty()) tiers.push_back(t);
    }
    if (tiers.empty()) throw CLI::ValidationError("no tiers requested");

    long mc_samples = 0;
    if (mode.rfind("mc:", 0) == 0)
        mc_samples = std::stol(mode.substr(3));
    else if (mode != "exact")
        throw CLI::ValidationError("--mode must be 'exact' or 'mc:<samples>'");

    const auto inputs = make_iot_inputs(net.graph(), data, data.test_idx);
    const auto labels = gather_labels(data, data.test_idx);
    const GuessMode guess = parse_guess(guess_str);
    CombinationCache cache;  // shared across tiers: A(G ∅ B) is tier-independent

    // Pull the seed out of the weights file name for traceability.
    for (const auto& tier : tiers) {
        ReliabilitySetting r = cfg.tier_setting(tier);
        ResiliencyReport report =
            mc_samples > 0
                ? monte_carlo_average_accuracy(net, r, inputs, labels, guess, mc_samples, mc_seed,
                                               &cache)
                : average_accuracy(net, r, inputs, labels, guess, &cache);
        report.meta["config_hash"] = cfg.config_hash;
        report.meta["experiment"] = cfg.name;
        report.meta["variant"] = variant;
        report.meta["tier"] = tier;
        report.meta["weights"] = weights_path;
        report.meta["guess"] = guess.kind == GuessMode::Kind::Expectation
                                   ? "expectation"
                                   : "sampled:" + std::to_string(guess.seed);

        const std::string base =
            (fs::path(out_dir) / ("report_" + variant + "_" + fs::path(weights_path).stem().string() +
                                  "_" + tier + (mc_samples > 0 ? "_mc" : "_exact")))
                .string();
        write_report_tsv(report, base + ".tsv");
        write_report_json(report, base + ".json");
        std::cout << "[resiliency] " << tier << ": average accuracy " << report.average_accuracy;
        if (mc_samples > 0) std::cout << " (se " << report.std_error << ")";
        std::cout << " -> " << base << ".tsv\n";
    }
    return 0;
}

int cmd_serve_node(const std::string& config_path, const std::string& variant,
                   const std::string& node_id, const std::string& weights_path, int base_port,
                   const std::vector<std::string>& address_overrides,
                   const std::string& coordinator_override, int round_timeout_ms) {
    ExperimentConfig cfg = load_config(config_path);
    if (base_port > 0) {
        cfg.base_port = base_port;
        cfg.endpoints.node_address.clear();
        cfg.endpoints.coordinator_address = "127.0.0.1:" + std::to_string(base_port);
        int next_port = base_port + 1;
        for (const auto& n : cfg.nodes) {
            if (n.tier == Tier::Iot) continue;
            cfg.endpoints.node_address[n.id] = "127.0.0.1:" + std::to_string(next_port++);
        }
    }
    for (const auto& ov : address_overrides) {
        const auto eq = ov.find('=');
        if (eq == std::string::npos)
            throw CLI::ValidationError("--address expects id=host:port, got " + ov);
        cfg.endpoints.node_address[ov.substr(0, eq)] = ov.substr(eq + 1);
    }
    if (!coordinator_override.empty()) cfg.endpoints.coordinator_address = coordinator_override;
    if (round_timeout_ms > 0) cfg.timeouts.round_timeout_ms = round_timeout_ms;

    auto net = load_model(cfg, variant, weights_path);
    NodeDaemon daemon(std::move(net), node_id, cfg.endpoints, cfg.timeouts);
    return daemon.run();
}

ChaosPlan load_plan(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::invalid_argument("cannot open chaos plan " + path);
    json j = json::parse(is);
    ChaosPlan plan;
    for (const json& aj : j.at("actions")) {
        ChaosAction a;
        const std::string kind = aj.at("kind").get<std::string>();
        if (kind == "kill")
            a.kind = ChaosAction::Kind::Kill;
        else if (kind == "revive")
            a.kind = ChaosAction::Kind::Revive;
        else
            throw std::invalid_argument("chaos action kind must be kill|revive");
        a.node_id = aj.at("node").get<std::string>();
        if (aj.contains("at_round")) {
            a.at_round = aj.at("at_round").get<uint64_t>();
        } else if (aj.contains("at_ms")) {
            a.by_time = true;
            a.at_ms = aj.at("at_ms").get<long>();
        } else {
            throw std::invalid_argument("chaos action needs at_round or at_ms");
        }
        plan.actions.push_back(std::move(a));
    }
    return plan;
}

std::string self_binary() {
    char buf[4096];
    const ssize_t n = ::readlink("/proc/self/exe", buf, sizeof(buf) - 1);
    if (n <= 0) throw std::runtime_error("cannot resolve own binary path");
    buf[n] = '\0';
    return buf;
}

// Shared by chaos and run-distributed: spin up one daemon process per compute
// node against this binary's serve-node subcommand.
std::unique_ptr<DaemonProcessManager> launch_local_daemons(const ExperimentConfig& cfg,
                                                           const std::string& config_path,
                                                           const std::string& variant,
                                                           const std::string& weights_path) {
    auto manager = std::make_unique<DaemonProcessManager>();
    const std::string bin = self_binary();
    for (const auto& n : cfg.nodes) {
        if (n.tier == Tier::Iot) continue;
        manager->register_node(
            n.id, {bin, "serve-node", "--config", config_path, "--variant", variant, "--node",
                   n.id, "--weights", weights_path, "--base-port", std::to_string(cfg.base_port)});
    }
    manager->start_all();
    return manager;
}

int cmd_chaos(const std::string& config_path, const std::string& variant,
              const std::string& weights_path, const std::string& plan_path, int rows_limit,
              int base_port, const std::string& transcript_path) {
    ExperimentConfig cfg = load_config(config_path);
    if (base_port > 0) {
        // Re-derive all endpoints from the override so children agree.
        cfg.base_port = base_port;
        cfg.endpoints.node_address.clear();
        cfg.endpoints.coordinator_address = "127.0.0.1:" + std::to_string(base_port);
        int next_port = base_port + 1;
        for (const auto& n : cfg.nodes) {
            if (n.tier == Tier::Iot) continue;
            cfg.endpoints.node_address[n.id] = "127.0.0.1:" + std::to_string(next_port++);
        }
    }

    auto net = load_model(cfg, variant, weights_path);
    const DistributedDnn& graph = net.graph();
    ChaosPlan plan = plan_path.empty() ? ChaosPlan{} : load_plan(plan_path);
    plan.validate(graph);
    for (const auto& a : plan.actions)
        if (a.by_time)
            throw std::invalid_argument(
                "chaos verdicts need round-triggered actions; use at_round in the plan");

    Dataset data = cfg.load_dataset();
    std::vector<int> rows = data.test_idx;
    if (rows_limit > 0 && static_cast<int>(rows.size()) > rows_limit) rows.resize(rows_limit);
    const auto inputs = make_iot_inputs(graph, data, rows);

    auto manager = launch_local_daemons(cfg, config_path, variant, weights_path);
    std::vector<RoundOutcome> outcomes;
    try {
        outcomes = run_pipeline(graph, inputs, plan, cfg.endpoints, cfg.timeouts, manager.get());
    } catch (...) {
        manager->stop_all(500);
        throw;
    }
    manager->stop_all(2000);

    // Wire/simulator equivalence verdict.
    double max_dev = 0;
    long mismatches = 0;
    std::ofstream ts;
    if (!transcript_path.empty()) {
        ts.open(transcript_path);
        ts << "# config_hash\t" << cfg.config_hash << "\n";
        ts << "# variant\t" << variant << "\n";
        ts << "round\tfailed\twire\tsim\tdeviation\n";
    }
    for (size_t r = 0; r < outcomes.size(); ++r) {
        const auto failed = plan.failed_at_round(r);
        std::map<std::string, std::vector<float>> sample;
        for (const auto& [id, m] : inputs)
            sample[id] = std::vector<float>(m.row(static_cast<int>(r)),
                                            m.row(static_cast<int>(r)) + m.cols);
        const auto sim = distributed_forward(net, sample, failed);
        const bool sim_null = !sim.logits.has_value();
        double dev = 0;
        bool ok;
        if (sim_null || outcomes[r].null_outcome) {
            ok = sim_null == outcomes[r].null_outcome;
        } else {
            const auto& wire = outcomes[r].output;
            const auto& ref = *sim.logits;
            ok = wire.size() == ref.size();
            if (ok)
                for (size_t c = 0; c < wire.size(); ++c)
                    dev = std::max(dev, std::abs(static_cast<double>(wire[c]) - ref[c]));
            ok = ok && dev <= 1e-5;
        }
        max_dev = std::max(max_dev, dev);
        if (!ok) ++mismatches;
        if (ts.is_open()) {
            std::string failed_csv;
            for (const auto& f : failed) failed_csv += (failed_csv.empty() ? "" : ",") + f;
            ts << r << "\t" << (failed_csv.empty() ? "-" : failed_csv) << "\t"
               << (outcomes[r].null_outcome ? "null" : std::to_string(outcomes[r].predicted))
               << "\t" << (sim_null ? "null" : std::to_string(sim.predicted_class)) << "\t" << dev
               << "\n";
        }
    }
    std::cout << "[chaos] rounds=" << outcomes.size() << " mismatches=" << mismatches
              << " max_deviation=" << max_dev << "\n"
              << "[chaos] verdict: " << (mismatches == 0 ? "pass" : "FAIL") << "\n";
    return mismatches == 0 ? 0 : 1;
}

int cmd_run_distributed(const std::string& config_path, const std::string& variant,
                        const std::string& weights_path, int rows_limit, bool launch,
                        const std::string& out_path) {
    ExperimentConfig cfg = load_config(config_path);
    auto net = load_model(cfg, variant, weights_path);
    Dataset data = cfg.load_dataset();
    std::vector<int> rows = data.test_idx;
    if (rows_limit > 0 && static_cast<int>(rows.size()) > rows_limit) rows.resize(rows_limit);
    const auto inputs = make_iot_inputs(net.graph(), data, rows);
    const auto labels = gather_labels(data, rows);

    std::unique_ptr<DaemonProcessManager> manager;
    if (launch) manager = launch_local_daemons(cfg, config_path, variant, weights_path);
    std::vector<RoundOutcome> outcomes;
    try {
        outcomes = run_pipeline(net.graph(), inputs, {}, cfg.endpoints, cfg.timeouts, nullptr);
    } catch (...) {
        if (manager) manager->stop_all(500);
        throw;
    }
    if (manager) manager->stop_all(2000);

    long correct = 0, nulls = 0;
    for (size_t r = 0; r < outcomes.size(); ++r) {
        if (outcomes[r].null_outcome)
            ++nulls;
        else if (outcomes[r].predicted == labels[r])
            ++correct;
    }
    if (!out_path.empty()) {
        std::ofstream os(out_path);
        os << "# config_hash\t" << cfg.config_hash << "\n";
        os << "round\toutcome\tpredicted\tlabel\n";
        for (size_t r = 0; r < outcomes.size(); ++r)
            os << r << "\t" << (outcomes[r].null_outcome ? "null" : "ok") << "\t"
               << outcomes[r].predicted << "\t" << labels[r] << "\n";
    }
    std::cout << "[run] rounds=" << outcomes.size() << " correct=" << correct
              << " null_outcomes=" << nulls << "\n";
    return 0;
}

int cmd_report(const std::string& dir, const std::string& out_path) {
    struct Key {
        std::string experiment, variant, tier;
        bool operator<(const Key& o) const {
            return std::tie(experiment, variant, tier) < std::tie(o.experiment, o.variant, o.tier);
        }
    };
    std::map<Key, std::vector<double>> groups;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".json") continue;
        const std::string name = entry.path().filename().string();
        if (name.rfind("report_", 0) != 0) continue;
        std::ifstream is(entry.path());
        json j = json::parse(is, nullptr, false);
        if (j.is_discarded() || !j.contains("meta") || !j.contains("average_accuracy")) continue;
        Key key{j["meta"].value("experiment", "?"), j["meta"].value("variant", "?"),
                j["meta"].value("tier", "?")};
        groups[key].push_back(j["average_accuracy"].get<double>());
    }
    if (groups.empty()) {
        std::cerr << "no report_*.json files under " << dir << "\n";
        return 1;
    }
    std::ostream* os = &std::cout;
    std::ofstream file;
    if (!out_path.empty()) {
        file.open(out_path);
        os = &file;
    }
    *os << "experiment\tvariant\ttier\truns\tmean_avg_accuracy\tmin\tmax\n";
    for (const auto& [key, vals] : groups) {
        double mean = 0, lo = vals[0], hi = vals[0];
        for (double v : vals) {
            mean += v;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        mean /= vals.size();
        char line[256];
        std::snprintf(line, sizeof(line), "%s\t%s\t%s\t%zu\t%.6f\t%.6f\t%.6f", key.experiment.c_str(),
                      key.variant.c_str(), key.tier.c_str(), vals.size(), mean, lo, hi);
        *os << line << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"failure-resilient distributed DNN toolkit"};
    app.require_subcommand(1);

    std::string config, variant = "deepfogguard", weights, split = "test", failed_csv;
    std::string guess = "expectation", tiers = "all", mode = "exact", out_dir, out_path;
    std::string node_id, plan_path, coordinator_override, transcript;
    std::vector<std::string> address_overrides;
    int64_t seed = -1;
    uint64_t mc_seed = 99;
    int base_port = 0, rows_limit = 0, round_timeout_ms = 0;
    bool launch = false;

    auto add_common = [&](CLI::App* cmd, bool need_weights) {
        cmd->add_option("--config", config, "experiment config (JSON)")->required();
        cmd->add_option("--variant", variant, "vanilla | deepfogguard");
        if (need_weights)
            cmd->add_option("--weights", weights, "trained DFGW weight file")->required();
    };

    auto* c_train = app.add_subcommand("train", "train one variant on the configured dataset");
    add_common(c_train, false);
    c_train->add_option("--seed", seed, "training seed (default: first config seed)");
    c_train->add_option("--out", out_dir, "output directory (default: config output_dir)");

    auto* c_eval = app.add_subcommand("evaluate", "accuracy of a trained model on one split");
    add_common(c_eval, true);
    c_eval->add_option("--split", split, "train | val | test");
    c_eval->add_option("--failed", failed_csv, "comma-separated failed node ids");
    c_eval->add_option("--guess", guess, "expectation | sampled:<seed>");

    auto* c_res = app.add_subcommand("resiliency", "average accuracy across failure combinations");
    add_common(c_res, true);
    c_res->add_option("--tiers", tiers, "comma-separated tier labels, or 'all'");
    c_res->add_option("--mode", mode, "exact | mc:<samples>");
    c_res->add_option("--guess", guess, "expectation | sampled:<seed>");
    c_res->add_option("--mc-seed", mc_seed, "sampling seed for mc mode");
    c_res->add_option("--out", out_dir, "output directory");

    auto* c_serve = app.add_subcommand("serve-node", "run one physical node daemon");
    add_common(c_serve, true);
    c_serve->add_option("--node", node_id, "node id to serve")->required();
    c_serve->add_option("--base-port", base_port, "derive all addresses from this port");
    c_serve->add_option("--address", address_overrides, "override: id=host:port (repeatable)");
    c_serve->add_option("--coordinator", coordinator_override, "coordinator host:port");
    c_serve->add_option("--round-timeout-ms", round_timeout_ms, "per-round input wait");

    auto* c_run = app.add_subcommand("run-distributed", "stream the test split through daemons");
    add_common(c_run, true);
    c_run->add_option("--rows", rows_limit, "limit instance count");
    c_run->add_flag("--launch", launch, "launch local daemons first");
    c_run->add_option("--out", out_path, "outcome transcript path");

    auto* c_chaos = app.add_subcommand("chaos", "fault-injected run checked against the simulator");
    add_common(c_chaos, true);
    c_chaos->add_option("--plan", plan_path, "chaos plan (JSON)");
    c_chaos->add_option("--rows", rows_limit, "limit instance count");
    c_chaos->add_option("--base-port", base_port, "derive all addresses from this port");
    c_chaos->add_option("--transcript", transcript, "per-round transcript path");

    auto* c_report = app.add_subcommand("report", "aggregate resiliency reports across seeds");
    c_report->add_option("--dir", out_dir, "directory holding report_*.json files")->required();
    c_report->add_option("--out", out_path, "write the table here instead of stdout");

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(c_train)) return cmd_train(config, variant, seed, out_dir);
        if (app.got_subcommand(c_eval))
            return cmd_evaluate(config, variant, weights, split, failed_csv, guess);
        if (app.got_subcommand(c_res))
            return cmd_resiliency(config, variant, weights, tiers, mode, guess, mc_seed, out_dir);
        if (app.got_subcommand(c_serve))
            return cmd_serve_node(config, variant, node_id, weights, base_port, address_overrides,
                                  coordinator_override, round_timeout_ms);
        if (app.got_subcommand(c_run))
            return cmd_run_distributed(config, variant, weights, rows_limit, launch, out_path);
        if (app.got_subcommand(c_chaos))
            return cmd_chaos(config, variant, weights, plan_path, rows_limit, base_port, transcript);
        if (app.got_subcommand(c_report)) return cmd_report(out_dir, out_path);
    } catch (const CLI::ValidationError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
