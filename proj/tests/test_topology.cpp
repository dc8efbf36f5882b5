#include <algorithm>

#include "dfg/topology.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace dfg;

namespace {

int count_kind(const DistributedDnn& g, HcKind kind) {
    int n = 0;
    for (const auto& hc : g.hyperconnections) n += hc.kind == kind;
    return n;
}

// Hyperconnections between layer-holding nodes only (the iot feed lines are
// data delivery, not part of the split DNN's own link count).
int compute_links(const DistributedDnn& g, HcKind kind) {
    int n = 0;
    for (const auto& hc : g.hyperconnections)
        n += hc.kind == kind && g.node(hc.src).tier != Tier::Iot;
    return n;
}

}  // namespace

TEST_CASE("four-layer DNN split over two nodes gets one link and one expansion layer") {
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

    CHECK(compute_links(g, HcKind::Simple) == 1);
    CHECK(count_kind(g, HcKind::Skip) == 0);
    REQUIRE(g.expansion_width.count("v1"));
    CHECK(g.expansion_width.at("v1") == 4);  // width of the layer below the split
    CHECK(g.expansion_width.at("v2") == 5);
    CHECK(validate_topology(g).empty());

    // The expansion layer is the identity on the slab head's input.
    auto shapes = g.slab_shapes("v1");
    REQUIRE(shapes.size() == 2);
    CHECK(shapes[0].in == 4);
    CHECK(shapes[1].act == Activation::Softmax);
}

TEST_CASE("health reference topology matches the published layout") {
    auto ref = health_reference_topology();
    CHECK(ref.spec.input_dim == 23);
    CHECK(ref.spec.output_dim == 12);
    CHECK(ref.spec.hidden_widths.size() == 10);

    auto g = build_distributed(ref.spec, ref.nodes, ref.partition, SkipPolicy::SkipOne);
    CHECK(validate_topology(g).empty());
    CHECK(count_kind(g, HcKind::Skip) == 3);

    CHECK(g.node("e1").assigned_layers.size() == 1);
    CHECK(g.node("f2").assigned_layers.size() == 2);
    CHECK(g.node("f1").assigned_layers.size() == 3);
    CHECK(g.node("cloud").assigned_layers.size() == 5);  // four hidden plus the output layer
    CHECK(g.fallible_ids() == std::vector<std::string>{"e1", "f2", "f1"});
    CHECK_FALSE(g.node("cloud").fallible);
    CHECK(g.output_node() == "cloud");

    // 1 + 2 + 3 + 4 hidden layers in total.
    int hidden = 0;
    for (const auto& n : g.nodes)
        for (int k : n.assigned_layers) hidden += k < 10;
    CHECK(hidden == 10);

    auto swapped = health_reference_topology(true);
    auto gs = build_distributed(swapped.spec, swapped.nodes, swapped.partition, SkipPolicy::SkipOne);
    CHECK(gs.node("f2").assigned_layers.size() == 3);
    CHECK(gs.node("f1").assigned_layers.size() == 2);
    CHECK(count_kind(gs, HcKind::Skip) == 3);
}

TEST_CASE("health skips are exactly the one-node bypasses") {
    auto ref = health_reference_topology();
    auto g = build_distributed(ref.spec, ref.nodes, ref.partition, SkipPolicy::SkipOne);
    std::set<std::pair<std::string, std::string>> skips;
    for (const auto& hc : g.hyperconnections)
        if (hc.kind == HcKind::Skip) skips.insert({hc.src, hc.dst});
    const std::set<std::pair<std::string, std::string>> expected{
        {"iot", "f2"}, {"e1", "f1"}, {"f2", "cloud"}};
    CHECK(skips == expected);
}

TEST_CASE("camera reference topology: nine compute nodes, seven skips") {
    auto ref = camera_reference_topology();
    CHECK(ref.spec.input_dim == 32 * 32 * 3);
    CHECK(ref.spec.hidden_widths.size() == 14);
    CHECK(ref.spec.output_dim == 3);

    auto g = build_distributed(ref.spec, ref.nodes, ref.partition, SkipPolicy::SkipOne);
    CHECK(validate_topology(g).empty());

    int compute = 0, cams = 0;
    for (const auto& n : g.nodes) {
        compute += n.tier != Tier::Iot;
        cams += n.tier == Tier::Iot;
    }
    CHECK(compute == 9);
    CHECK(cams == 6);
    CHECK(count_kind(g, HcKind::Skip) == 7);
    CHECK(g.fallible_ids().size() == 8);

    // A skip never widens an expansion layer beyond what the simple wiring set.
    auto vanilla = build_distributed(ref.spec, ref.nodes, ref.partition, SkipPolicy::None);
    for (const auto& [id, w] : g.expansion_width) CHECK(vanilla.expansion_width.at(id) == w);
}

TEST_CASE("vanilla and skip builds differ only in the hyperconnection set") {
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 30; ++trial) {
        DistributedDnn dfg = testing::random_topology(rng);
        DistributedDnn vanilla =
            build_distributed(dfg.spec, [&] {
                auto nodes = dfg.nodes;
                for (auto& n : nodes) n.assigned_layers.clear();
                return nodes;
            }(), [&] {
                PartitionMap p;
                p.layer_to_node.assign(dfg.spec.layer_count(), "");
                for (const auto& n : dfg.nodes)
                    for (int k : n.assigned_layers) p.layer_to_node[k] = n.id;
                return p;
            }(), SkipPolicy::None);

        // Same nodes, same slabs, same expansion widths.
        REQUIRE(vanilla.nodes.size() == dfg.nodes.size());
        for (size_t i = 0; i < dfg.nodes.size(); ++i) {
            CHECK(vanilla.nodes[i].id == dfg.nodes[i].id);
            CHECK(vanilla.nodes[i].assigned_layers == dfg.nodes[i].assigned_layers);
        }
        for (const auto& n : dfg.nodes) {
            if (n.tier == Tier::Iot) continue;
            CHECK(vanilla.slab_shapes(n.id).size() == dfg.slab_shapes(n.id).size());
        }

        // Dropping the skips reproduces the vanilla link set exactly.
        std::set<std::pair<std::string, std::string>> dfg_simple, vanilla_simple;
        for (const auto& hc : dfg.hyperconnections)
            if (hc.kind == HcKind::Simple) dfg_simple.insert({hc.src, hc.dst});
        for (const auto& hc : vanilla.hyperconnections) {
            CHECK(hc.kind == HcKind::Simple);
            vanilla_simple.insert({hc.src, hc.dst});
        }
        CHECK(dfg_simple == vanilla_simple);
    }
}

TEST_CASE("every layer lives on exactly one node") {
    std::mt19937_64 rng(43);
    for (int trial = 0; trial < 20; ++trial) {
        DistributedDnn g = testing::random_topology(rng);
        std::vector<int> owners(g.spec.layer_count(), 0);
        for (const auto& n : g.nodes)
            for (int k : n.assigned_layers) ++owners[k];
        for (int k = 0; k < g.spec.layer_count(); ++k) CHECK(owners[k] == 1);
        CHECK(validate_topology(g).empty());
    }
}

TEST_CASE("validate_topology reports violations as data") {
    auto ref = health_reference_topology();
    auto g = build_distributed(ref.spec, ref.nodes, ref.partition, SkipPolicy::SkipOne);

    SUBCASE("well-formed graph yields no violations") { CHECK(validate_topology(g).empty()); }

    SUBCASE("a skip whose destination is not an ancestor") {
        Hyperconnection bad;
        bad.src = "f1";
        bad.dst = "e1";  // points backwards
        bad.kind = HcKind::Skip;
        bad.dim = g.node_output_dim("f1");
        bad.weight.assign(bad.dim, 1.0);
        g.hyperconnections.push_back(bad);
        g.expansion_width["e1"] = std::max(g.expansion_width["e1"], bad.dim);
        auto v = validate_topology(g);
        REQUIRE(!v.empty());
        bool found = false;
        for (const auto& msg : v) found = found || msg.find("does not reach an ancestor") != std::string::npos;
        CHECK(found);
    }

    SUBCASE("expansion width below an incoming dim") {
        g.expansion_width["f2"] = 10;
        auto v = validate_topology(g);
        REQUIRE(v.size() == 1);
        CHECK(v[0].find("expansion width") != std::string::npos);
    }

    SUBCASE("non all-ones hyperconnection weight") {
        g.hyperconnections[0].weight[0] = 0.5;
        CHECK(validate_topology(g).size() == 1);
    }
}

TEST_CASE("build_distributed rejects malformed partitions") {
    DnnSpec spec;
    spec.input_dim = 4;
    spec.hidden_widths = {4, 4};
    spec.output_dim = 2;
    PhysicalNode iot{"iot", Tier::Iot, {}, false, {"a"}};
    PhysicalNode a{"a", Tier::Edge, {}, true, {"b"}};
    PhysicalNode b{"b", Tier::Cloud, {}, false, {}};

    PartitionMap non_contiguous;
    non_contiguous.layer_to_node = {"a", "b", "a"};
    CHECK_THROWS_AS(build_distributed(spec, {iot, a, b}, non_contiguous, SkipPolicy::None),
                    std::invalid_argument);

    PartitionMap incomplete;
    incomplete.layer_to_node = {"a", "b"};
    CHECK_THROWS_AS(build_distributed(spec, {iot, a, b}, incomplete, SkipPolicy::None),
                    std::invalid_argument);

    PartitionMap onto_iot;
    onto_iot.layer_to_node = {"iot", "a", "b"};
    CHECK_THROWS_AS(build_distributed(spec, {iot, a, b}, onto_iot, SkipPolicy::None),
                    std::invalid_argument);
}
