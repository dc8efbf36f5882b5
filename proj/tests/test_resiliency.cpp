#include <cmath>
#include <filesystem>
#include <random>

#include "dfg/resiliency.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace dfg;

namespace {

ReliabilitySetting setting(std::vector<std::string> ids, std::vector<double> r) {
    ReliabilitySetting s;
    s.node_ids = std::move(ids);
    s.survival = std::move(r);
    return s;
}

// A small trained-ish model over the iot -> e1 -> cloud chain: weights are
// random but fixed, which is all the probability algebra needs.
struct TinyModel {
    DistributedDnn graph;
    DistributedNet<float> net;
    std::map<std::string, Mat<float>> inputs;
    std::vector<int> labels;

    explicit TinyModel(int classes = 12, int rows = 96) {
        DnnSpec spec;
        spec.input_dim = 6;
        spec.hidden_widths = {10};
        spec.output_dim = classes;
        PhysicalNode iot{"iot", Tier::Iot, {}, false, {"e1"}};
        PhysicalNode e1{"e1", Tier::Edge, {}, true, {"cloud"}};
        PhysicalNode cloud{"cloud", Tier::Cloud, {}, false, {}};
        PartitionMap part;
        part.layer_to_node = {"e1", "cloud"};
        graph = build_distributed(spec, {iot, e1, cloud}, part, SkipPolicy::None);
        net = DistributedNet<float>::build(graph, 33);

        std::mt19937_64 rng(8);
        std::uniform_real_distribution<float> dist(-1, 1);
        Mat<float> x(rows, 6);
        for (auto& v : x.a) v = dist(rng);
        inputs.emplace("iot", std::move(x));
        for (int i = 0; i < rows; ++i) labels.push_back(static_cast<int>(rng() % classes));
    }
};

}  // namespace

TEST_CASE("combination probability reproduces the worked example") {
    auto r = setting({"a", "b", "c", "d"}, {0.98, 0.98, 0.95, 0.94});
    FailureCombination b;
    b.alive = {1, 1, 1, 0};
    CHECK(combination_probability(b, r) ==
          doctest::Approx(0.98 * 0.98 * 0.95 * 0.06).epsilon(1e-9));
    CHECK(combination_probability(b, r) == doctest::Approx(0.0547428).epsilon(1e-9));

    auto ones = setting({"a", "b", "c"}, {1, 1, 1});
    FailureCombination all;
    all.alive = {1, 1, 1};
    CHECK(combination_probability(all, ones) == 1.0);

    FailureCombination wrong;
    wrong.alive = {1, 1};
    CHECK_THROWS_AS(combination_probability(wrong, ones), std::invalid_argument);
}

TEST_CASE("combination probabilities sum to one for random settings") {
    std::mt19937_64 rng(61);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int trial = 0; trial < 40; ++trial) {
        const int n = 1 + static_cast<int>(rng() % 12);
        ReliabilitySetting r;
        for (int i = 0; i < n; ++i) {
            r.node_ids.push_back("n" + std::to_string(i));
            r.survival.push_back(unit(rng));
        }
        double total = 0;
        for (uint64_t mask = 0; mask < (uint64_t(1) << n); ++mask)
            total += combination_probability(FailureCombination::from_mask(mask, n), r);
        CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("average accuracy with all survival probabilities at one") {
    TinyModel m;
    const double alive_acc =
        accuracy(m.net, m.inputs, m.labels, {}, GuessMode::expectation());
    auto report = average_accuracy(m.net, setting({"e1"}, {1.0}), m.inputs, m.labels,
                                   GuessMode::expectation());
    CHECK(report.average_accuracy == doctest::Approx(alive_acc).epsilon(1e-12));
    CHECK(report.rows.size() == 2);
}

TEST_CASE("single fallible chain node: two-combination hand enumeration") {
    TinyModel m;
    const double a = accuracy(m.net, m.inputs, m.labels, {}, GuessMode::expectation());
    const double r = 0.9;
    auto report = average_accuracy(m.net, setting({"e1"}, {r}), m.inputs, m.labels,
                                   GuessMode::expectation());
    // Failed chain -> null outcome -> expectation guessing contributes 1/12.
    CHECK(report.average_accuracy == doctest::Approx(r * a + (1 - r) / 12.0).epsilon(1e-12));

    double prob_sum = 0;
    for (const auto& row : report.rows) prob_sum += row.probability;
    CHECK(prob_sum == doctest::Approx(1.0).epsilon(1e-12));

    // Aggregate lies between the per-combination extremes.
    double lo = 1, hi = 0;
    for (const auto& row : report.rows) {
        lo = std::min(lo, row.accuracy);
        hi = std::max(hi, row.accuracy);
    }
    CHECK(report.average_accuracy >= lo);
    CHECK(report.average_accuracy <= hi);
}

TEST_CASE("per-combination accuracies match an independent re-evaluation oracle") {
    std::mt19937_64 rng(62);
    testing::RandomTopologyOptions opt;
    opt.force_fallible_middle = true;
    DistributedDnn g = testing::random_topology(rng, opt);
    auto net = DistributedNet<float>::build(g, 12);
    const auto fallible = g.fallible_ids();
    REQUIRE(!fallible.empty());
    const int n = static_cast<int>(fallible.size());

    const int rows = 48;
    std::map<std::string, Mat<float>> inputs;
    std::uniform_real_distribution<float> dist(-2, 2);
    for (const auto& id : g.iot_ids()) {
        Mat<float> m(rows, g.spec.input_dim);
        for (auto& v : m.a) v = dist(rng);
        inputs.emplace(id, std::move(m));
    }
    std::vector<int> labels(rows);
    for (auto& l : labels) l = static_cast<int>(rng() % g.spec.output_dim);

    ReliabilitySetting r;
    std::uniform_real_distribution<double> unit(0.2, 1.0);
    for (const auto& id : fallible) {
        r.node_ids.push_back(id);
        r.survival.push_back(unit(rng));
    }
    auto report = average_accuracy(net, r, inputs, labels, GuessMode::expectation());
    REQUIRE(report.rows.size() == size_t(1) << n);

    double oracle_avg = 0;
    for (const auto& row : report.rows) {
        // Re-run every instance through the independent flat oracle with the
        // same failure mask.
        std::set<std::string> failed;
        for (int i = 0; i < n; ++i)
            if (!row.combination.alive[i]) failed.insert(fallible[i]);
        double correct = 0;
        for (int inst = 0; inst < rows; ++inst) {
            std::map<std::string, std::vector<double>> sample;
            for (const auto& [id, m] : inputs)
                sample[id] = std::vector<double>(m.row(inst), m.row(inst) + m.cols);
            auto out = testing::flat_forward(net, sample, failed);
            if (!out) {
                correct += 1.0 / g.spec.output_dim;
                continue;
            }
            int best = 0;
            for (size_t c = 1; c < out->size(); ++c)
                if ((*out)[c] > (*out)[best]) best = static_cast<int>(c);
            correct += best == labels[inst];
        }
        CHECK(row.accuracy == doctest::Approx(correct / rows).epsilon(1e-9));
        oracle_avg += row.probability * (correct / rows);
    }
    CHECK(report.average_accuracy == doctest::Approx(oracle_avg).epsilon(1e-9));
}

TEST_CASE("raising any per-combination accuracy never lowers the aggregate") {
    std::mt19937_64 rng(63);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 2 + static_cast<int>(rng() % 4);
        ReliabilitySetting r;
        for (int i = 0; i < n; ++i) {
            r.node_ids.push_back("n" + std::to_string(i));
            r.survival.push_back(unit(rng));
        }
        std::vector<double> acc(size_t(1) << n);
        for (auto& a : acc) a = unit(rng);
        auto aggregate = [&](const std::vector<double>& accs) {
            double s = 0;
            for (uint64_t m = 0; m < accs.size(); ++m)
                s += combination_probability(FailureCombination::from_mask(m, n), r) * accs[m];
            return s;
        };
        const double base = aggregate(acc);
        auto bumped = acc;
        bumped[rng() % bumped.size()] += 0.25;
        CHECK(aggregate(bumped) >= base - 1e-15);
    }
}

TEST_CASE("monte carlo: degenerate setting, determinism, cache sharing") {
    TinyModel m;
    const double alive_acc = accuracy(m.net, m.inputs, m.labels, {}, GuessMode::expectation());

    auto all_ones = monte_carlo_average_accuracy(m.net, setting({"e1"}, {1.0}), m.inputs, m.labels,
                                                 GuessMode::expectation(), 500, 7);
    CHECK(all_ones.average_accuracy == doctest::Approx(alive_acc).epsilon(1e-12));
    CHECK(all_ones.std_error == 0.0);
    CHECK(all_ones.rows.size() == 1);

    auto a = monte_carlo_average_accuracy(m.net, setting({"e1"}, {0.7}), m.inputs, m.labels,
                                          GuessMode::expectation(), 400, 101);
    auto b = monte_carlo_average_accuracy(m.net, setting({"e1"}, {0.7}), m.inputs, m.labels,
                                          GuessMode::expectation(), 400, 101);
    CHECK(a.average_accuracy == b.average_accuracy);
    CHECK(a.std_error == b.std_error);

    // Against the exact enumerator, within two standard errors.
    auto exact = average_accuracy(m.net, setting({"e1"}, {0.7}), m.inputs, m.labels,
                                  GuessMode::expectation());
    CHECK(std::abs(a.average_accuracy - exact.average_accuracy) <= 2.0 * a.std_error + 1e-12);
}

TEST_CASE("enumeration guard points at monte carlo") {
    TinyModel m;
    ReliabilitySetting r;
    for (int i = 0; i < 21; ++i) {
        r.node_ids.push_back("n" + std::to_string(i));
        r.survival.push_back(0.9);
    }
    try {
        average_accuracy(m.net, r, m.inputs, m.labels, GuessMode::expectation());
        FAIL("expected the guard to trip");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("monte_carlo") != std::string::npos);
    }
}

TEST_CASE("published reliability settings") {
    auto hh = table1_settings(Experiment::Health, ReliabilityTier::Hazardous);
    CHECK(hh.node_ids == std::vector<std::string>{"f1", "f2", "e1"});
    CHECK(hh.survival == std::vector<double>{0.90, 0.85, 0.80});

    auto hn = table1_settings(Experiment::Health, ReliabilityTier::Normal);
    CHECK(hn.survival == std::vector<double>{0.99, 0.98, 0.96});
    auto hp = table1_settings(Experiment::Health, ReliabilityTier::Poor);
    CHECK(hp.survival == std::vector<double>{0.98, 0.96, 0.92});
    auto h0 = table1_settings(Experiment::Health, ReliabilityTier::NoFailure);
    CHECK(h0.survival == std::vector<double>{1.0, 1.0, 1.0});

    auto cn = table1_settings(Experiment::Camera, ReliabilityTier::Normal);
    CHECK(cn.node_ids ==
          std::vector<std::string>{"f1", "f2", "f3", "f4", "e1", "e2", "e3", "e4"});
    CHECK(cn.survival ==
          std::vector<double>{0.995, 0.99, 0.98, 0.97, 0.95, 0.95, 0.95, 0.95});
    auto cp = table1_settings(Experiment::Camera, ReliabilityTier::Poor);
    CHECK(cp.survival == std::vector<double>{0.99, 0.98, 0.94, 0.93, 0.90, 0.90, 0.87, 0.87});
    auto ch = table1_settings(Experiment::Camera, ReliabilityTier::Hazardous);
    CHECK(ch.survival == std::vector<double>{0.90, 0.90, 0.80, 0.80, 0.70, 0.60, 0.70, 0.66});

    CHECK(tier_from_label("hazardous") == ReliabilityTier::Hazardous);
    CHECK_THROWS_AS(tier_from_label("stormy"), std::invalid_argument);
}

TEST_CASE("report files parse back losslessly") {
    TinyModel m;
    auto report = average_accuracy(m.net, setting({"e1"}, {0.825}), m.inputs, m.labels,
                                   GuessMode::expectation());
    report.meta["config_hash"] = "deadbeef01234567";
    report.meta["variant"] = "deepfogguard";

    namespace fs = std::filesystem;
    const std::string path = (fs::temp_directory_path() / "dfg_report.tsv").string();
    write_report_tsv(report, path);
    auto back = read_report_tsv(path);

    CHECK(back.average_accuracy == report.average_accuracy);
    CHECK(back.node_ids == report.node_ids);
    CHECK(back.meta.at("config_hash") == "deadbeef01234567");
    REQUIRE(back.rows.size() == report.rows.size());
    for (size_t i = 0; i < back.rows.size(); ++i) {
        CHECK(back.rows[i].combination.alive == report.rows[i].combination.alive);
        CHECK(back.rows[i].probability == report.rows[i].probability);
        CHECK(back.rows[i].accuracy == report.rows[i].accuracy);
    }
    fs::remove(path);
}
