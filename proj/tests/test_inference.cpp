#include <algorithm>

#include "dfg/inference.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace dfg;
using dfg::testing::flat_forward;

namespace {

ActivationVector<double> vec(std::initializer_list<double> v) { return std::vector<double>(v); }
const ActivationVector<double> null_vec = std::nullopt;

std::vector<ActivationVector<double>> random_operands(std::mt19937_64& rng, int count) {
    std::uniform_real_distribution<double> dist(-3, 3);
    std::vector<ActivationVector<double>> ops;
    for (int i = 0; i < count; ++i) {
        if (rng() % 4 == 0) {
            ops.push_back(std::nullopt);
        } else {
            std::vector<double> v(1 + rng() % 5);
            for (auto& x : v) x = dist(rng);
            ops.push_back(std::move(v));
        }
    }
    return ops;
}

}  // namespace

TEST_CASE("add_inputs: element-wise sum, tail padding, null handling") {
    CHECK(add_inputs<double>({vec({1, 2}), vec({3, 4})}) == vec({4, 6}));
    CHECK(add_inputs<double>({vec({1, 2}), null_vec}) == vec({1, 2}));
    CHECK(add_inputs<double>({vec({1, 2, 3}), vec({4, 5})}) == vec({5, 7, 3}));
    CHECK(add_inputs<double>({null_vec, null_vec, null_vec}) == null_vec);
    CHECK_THROWS_AS(add_inputs<double>({}), std::invalid_argument);
}

TEST_CASE("add_inputs is commutative and associative, with the null vector as identity") {
    std::mt19937_64 rng(51);
    auto check_close = [](const ActivationVector<double>& a, const ActivationVector<double>& b) {
        REQUIRE(a.has_value() == b.has_value());
        if (!a) return;
        REQUIRE(a->size() == b->size());
        for (size_t i = 0; i < a->size(); ++i)
            CHECK((*a)[i] == doctest::Approx((*b)[i]).epsilon(1e-12));
    };
    for (int trial = 0; trial < 300; ++trial) {
        auto ops = random_operands(rng, 2 + rng() % 4);

        auto direct = add_inputs(ops);

        auto shuffled = ops;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        check_close(add_inputs(shuffled), direct);

        // Fold from the left: add(add(a, b), c, ...) equals the n-ary add.
        ActivationVector<double> acc = ops[0];
        for (size_t i = 1; i < ops.size(); ++i) acc = add_inputs<double>({acc, ops[i]});
        check_close(acc, direct);

        // Appending nulls never changes the result, bit for bit.
        auto padded = ops;
        padded.push_back(std::nullopt);
        padded.insert(padded.begin(), std::nullopt);
        CHECK(add_inputs(padded) == direct);
    }
}

TEST_CASE("node_forward absorbs the null vector and validates dimensions") {
    std::mt19937_64 rng(52);
    DistributedDnn g = testing::random_topology(rng);
    auto net = DistributedNet<double>::build(g, 3);
    for (const auto& node : net.nodes()) {
        if (node.iot) continue;
        CHECK(node_forward(node, null_vec) == null_vec);
        std::vector<double> wrong(node.expansion + 1, 0.5);
        CHECK_THROWS_AS(node_forward(node, ActivationVector<double>(wrong)), std::invalid_argument);
    }
}

TEST_CASE("a chain of identity slabs is a passthrough") {
    DnnSpec spec;
    spec.input_dim = 3;
    spec.hidden_widths = {3, 3};
    spec.output_dim = 3;
    PhysicalNode iot{"iot", Tier::Iot, {}, false, {"a"}};
    PhysicalNode a{"a", Tier::Edge, {}, true, {"b"}};
    PhysicalNode b{"b", Tier::Cloud, {}, false, {}};
    PartitionMap part;
    part.layer_to_node = {"a", "b", "b"};
    auto g = build_distributed(spec, {iot, a, b}, part, SkipPolicy::None);
    auto net = DistributedNet<double>::build(g, 1);
    for (auto& node : net.nodes())
        for (auto& layer : node.layers) {
            layer.act = Activation::Identity;
            layer.w.fill(0);
            for (int i = 0; i < layer.w.rows; ++i) layer.w(i, i) = 1.0;
            std::fill(layer.b.begin(), layer.b.end(), 0.0);
        }
    auto out = distributed_forward(net, {{"iot", {0.25, -1.0, 2.0}}}, {});
    REQUIRE(out.logits.has_value());
    CHECK(*out.logits == std::vector<double>{0.25, -1.0, 2.0});
}

TEST_CASE("all-alive distributed forward equals the monolithic oracle") {
    std::mt19937_64 rng(53);
    for (int trial = 0; trial < 30; ++trial) {
        DistributedDnn g = testing::random_topology(rng);
        auto net = DistributedNet<double>::build(g, 100 + trial);
        auto inputs = testing::random_inputs(g, rng);

        auto expected = flat_forward(net, inputs);
        auto got = distributed_forward(net, testing::cast_inputs<double>(inputs), {});
        REQUIRE(expected.has_value());
        REQUIRE(got.logits.has_value());
        REQUIRE(got.logits->size() == expected->size());
        for (size_t i = 0; i < expected->size(); ++i)
            CHECK((*got.logits)[i] == doctest::Approx((*expected)[i]).epsilon(1e-9));
    }
}

TEST_CASE("two-node split of a chain equals the unsplit network") {
    // Same weights evaluated as one flat layer stack vs. through the
    // distributed machinery.
    DnnSpec spec;
    spec.input_dim = 5;
    spec.hidden_widths = {6, 4, 6};
    spec.output_dim = 3;
    PhysicalNode iot{"iot", Tier::Iot, {}, false, {"v2"}};
    PhysicalNode v2{"v2", Tier::Edge, {}, true, {"v1"}};
    PhysicalNode v1{"v1", Tier::Cloud, {}, false, {}};
    PartitionMap part;
    part.layer_to_node = {"v2", "v2", "v1", "v1"};
    auto g = build_distributed(spec, {iot, v2, v1}, part, SkipPolicy::None);
    auto net = DistributedNet<float>::build(g, 77);

    std::vector<float> input{0.1f, -0.4f, 1.2f, 0.8f, -1.0f};
    auto split_out = distributed_forward(net, {{"iot", input}}, {});

    // Unsplit: apply the four layers directly in order.
    Mat<float> x(1, 5);
    std::copy(input.begin(), input.end(), x.row(0));
    for (const auto& id : {"v2", "v1"})
        for (const auto& layer : net.nodes()[net.node_index(id)].layers) x = layer.forward(x);

    REQUIRE(split_out.logits.has_value());
    for (int c = 0; c < x.cols; ++c)
        CHECK((*split_out.logits)[c] == doctest::Approx(x(0, c)).epsilon(1e-6));
}

TEST_CASE("failure masking: chains die, skip routes survive") {
    auto ref = health_reference_topology();
    auto vanilla_g = build_distributed(ref.spec, ref.nodes, ref.partition, SkipPolicy::None);
    auto dfg_g = build_distributed(ref.spec, ref.nodes, ref.partition, SkipPolicy::SkipOne);
    auto vanilla = DistributedNet<float>::build(vanilla_g, 5);
    auto dfg = DistributedNet<float>::build(dfg_g, 5);

    std::vector<float> input(23, 0.5f);
    auto dead = distributed_forward(vanilla, {{"iot", input}}, {"e1"});
    CHECK(dead.random_guess);
    CHECK_FALSE(dead.logits.has_value());
    CHECK(dead.predicted_class == -1);

    auto alive = distributed_forward(dfg, {{"iot", input}}, {"e1"});
    CHECK_FALSE(alive.random_guess);
    REQUIRE(alive.logits.has_value());
    CHECK(alive.logits->size() == 12);

    // e1 + f1 down still routes iot -> f2 -> cloud over skips; e1 + f2 down
    // severs every path.
    auto rerouted = distributed_forward(dfg, {{"iot", input}}, {"e1", "f1"});
    CHECK(rerouted.logits.has_value());
    auto severed = distributed_forward(dfg, {{"iot", input}}, {"e1", "f2"});
    CHECK_FALSE(severed.logits.has_value());
}

TEST_CASE("failure masks must name fallible nodes") {
    std::mt19937_64 rng(54);
    testing::RandomTopologyOptions opt;
    opt.force_fallible_middle = true;
    DistributedDnn g = testing::random_topology(rng, opt);
    auto net = DistributedNet<double>::build(g, 5);
    auto inputs = testing::cast_inputs<double>(testing::random_inputs(g, rng));
    CHECK_THROWS_AS(distributed_forward(net, inputs, {"no-such-node"}), std::invalid_argument);
    CHECK_THROWS_AS(distributed_forward(net, inputs, {g.output_node()}), std::invalid_argument);
}

TEST_CASE("monotonicity: a larger alive-set never produces the null outcome instead") {
    std::mt19937_64 rng(55);
    testing::RandomTopologyOptions opt;
    opt.force_fallible_middle = true;
    for (int trial = 0; trial < 40; ++trial) {
        DistributedDnn g = testing::random_topology(rng, opt);
        auto net = DistributedNet<double>::build(g, trial);
        auto inputs = testing::cast_inputs<double>(testing::random_inputs(g, rng));
        auto fallible = g.fallible_ids();
        if (fallible.empty()) continue;

        std::set<std::string> failed_small, failed_big;
        for (const auto& id : fallible) {
            const int coin = static_cast<int>(rng() % 3);
            if (coin == 0) {  // fails in both
                failed_small.insert(id);
                failed_big.insert(id);
            } else if (coin == 1) {  // fails only in the smaller alive-set
                failed_big.insert(id);
            }
        }
        auto small_alive = distributed_forward(net, inputs, failed_big);
        auto big_alive = distributed_forward(net, inputs, failed_small);
        if (small_alive.logits.has_value()) CHECK(big_alive.logits.has_value());
    }
}

TEST_CASE("accuracy: forced random guessing scores exactly 1/K in expectation mode") {
    auto ref = health_reference_topology();
    auto g = build_distributed(ref.spec, ref.nodes, ref.partition, SkipPolicy::None);
    auto net = DistributedNet<float>::build(g, 2);

    const int n = 60;
    Mat<float> x(n, 23, 0.1f);
    std::vector<int> labels(n);
    for (int i = 0; i < n; ++i) labels[i] = i % 12;
    std::map<std::string, Mat<float>> inputs{{"iot", x}};

    const double acc =
        accuracy(net, inputs, labels, {"e1", "f2", "f1"}, GuessMode::expectation());
    CHECK(acc == doctest::Approx(1.0 / 12).epsilon(1e-12));

    // Sampled mode is deterministic per seed.
    const double s1 = accuracy(net, inputs, labels, {"e1"}, GuessMode::sampled(404));
    const double s2 = accuracy(net, inputs, labels, {"e1"}, GuessMode::sampled(404));
    CHECK(s1 == s2);
}

TEST_CASE("accuracy with no failures equals the monolithic score") {
    std::mt19937_64 rng(57);
    DistributedDnn g = testing::random_topology(rng);
    auto net = DistributedNet<double>::build(g, 6);

    const int n = 40;
    std::map<std::string, Mat<double>> inputs;
    std::uniform_real_distribution<double> dist(-2, 2);
    for (const auto& id : g.iot_ids()) {
        Mat<double> m(n, g.spec.input_dim);
        for (auto& v : m.a) v = dist(rng);
        inputs.emplace(id, m);
    }
    std::vector<int> labels(n);
    for (auto& l : labels) l = static_cast<int>(rng() % g.spec.output_dim);

    long correct = 0;
    for (int r = 0; r < n; ++r) {
        std::map<std::string, std::vector<double>> row;
        for (const auto& [id, m] : inputs)
            row[id] = std::vector<double>(m.row(r), m.row(r) + m.cols);
        auto flat = flat_forward(net, row);
        REQUIRE(flat.has_value());
        int best = 0;
        for (size_t c = 1; c < flat->size(); ++c)
            if ((*flat)[c] > (*flat)[best]) best = static_cast<int>(c);
        correct += best == labels[r];
    }
    const double expect = static_cast<double>(correct) / n;
    CHECK(accuracy(net, inputs, labels, {}, GuessMode::expectation()) ==
          doctest::Approx(expect).epsilon(1e-12));
}
