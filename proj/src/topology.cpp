#include "dfg/topology.hpp"

#include <algorithm>
#include <queue>
#include <set>
#include <sstream>
#include <stdexcept>

namespace dfg {

void DnnSpec::validate() const {
    if (input_dim < 1) throw std::invalid_argument("dnn spec: input_dim must be >= 1");
    if (output_dim < 1) throw std::invalid_argument("dnn spec: output_dim must be >= 1");
    for (int w : hidden_widths)
        if (w < 1) throw std::invalid_argument("dnn spec: widths must be >= 1");
}

const char* tier_name(Tier t) {
    switch (t) {
        case Tier::Iot: return "iot";
        case Tier::Edge: return "edge";
        case Tier::Fog: return "fog";
        case Tier::Cloud: return "cloud";
    }
    return "?";
}

Tier tier_from_name(const std::string& name) {
    if (name == "iot") return Tier::Iot;
    if (name == "edge") return Tier::Edge;
    if (name == "fog") return Tier::Fog;
    if (name == "cloud") return Tier::Cloud;
    throw std::invalid_argument("unknown tier: " + name);
}

const PhysicalNode* DistributedDnn::find_node(const std::string& id) const {
    for (const auto& n : nodes)
        if (n.id == id) return &n;
    return nullptr;
}

const PhysicalNode& DistributedDnn::node(const std::string& id) const {
    const PhysicalNode* n = find_node(id);
    if (!n) throw std::invalid_argument("unknown node: " + id);
    return *n;
}

int DistributedDnn::node_output_dim(const std::string& id) const {
    const PhysicalNode& n = node(id);
    if (n.tier == Tier::Iot) return spec.input_dim;
    if (n.assigned_layers.empty()) return 0;
    return spec.layer_width(n.assigned_layers.back());
}

std::vector<const Hyperconnection*> DistributedDnn::in_edges(const std::string& id) const {
    std::vector<const Hyperconnection*> out;
    for (const auto& hc : hyperconnections)
        if (hc.dst == id) out.push_back(&hc);
    std::sort(out.begin(), out.end(),
              [](const Hyperconnection* a, const Hyperconnection* b) { return a->src < b->src; });
    return out;
}

std::vector<const Hyperconnection*> DistributedDnn::out_edges(const std::string& id) const {
    std::vector<const Hyperconnection*> out;
    for (const auto& hc : hyperconnections)
        if (hc.src == id) out.push_back(&hc);
    std::sort(out.begin(), out.end(),
              [](const Hyperconnection* a, const Hyperconnection* b) { return a->dst < b->dst; });
    return out;
}

std::vector<std::string> DistributedDnn::iot_ids() const {
    std::vector<std::string> ids;
    for (const auto& n : nodes)
        if (n.tier == Tier::Iot) ids.push_back(n.id);
    return ids;
}

std::vector<std::string> DistributedDnn::fallible_ids() const {
    std::vector<std::string> ids;
    for (const auto& n : nodes)
        if (n.fallible) ids.push_back(n.id);
    return ids;
}

const std::string& DistributedDnn::output_node() const {
    const int last = spec.layer_count() - 1;
    for (const auto& n : nodes)
        if (!n.assigned_layers.empty() && n.assigned_layers.back() == last) return n.id;
    throw std::logic_error("no node holds the output layer");
}

std::vector<LayerShape> DistributedDnn::slab_shapes(const std::string& id) const {
    const PhysicalNode& n = node(id);
    std::vector<LayerShape> shapes;
    auto ew = expansion_width.find(id);
    for (size_t i = 0; i < n.assigned_layers.size(); ++i) {
        const int k = n.assigned_layers[i];
        LayerShape s;
        s.out = spec.layer_width(k);
        s.act = spec.layer_activation(k);
        if (i == 0) {
            if (ew == expansion_width.end())
                throw std::logic_error("node " + id + " has layers but no expansion layer");
            s.in = ew->second;
        } else {
            s.in = spec.layer_width(n.assigned_layers[i - 1]);
        }
        shapes.push_back(s);
    }
    return shapes;
}

namespace {

// Deterministic topological order: smallest ready node id first.
std::vector<std::string> topo_order(const std::vector<PhysicalNode>& nodes,
                                    const std::vector<Hyperconnection>& hcs) {
    std::map<std::string, int> indeg;
    for (const auto& n : nodes) indeg[n.id] = 0;
    for (const auto& hc : hcs) ++indeg[hc.dst];

    std::set<std::string> ready;
    for (const auto& [id, d] : indeg)
        if (d == 0) ready.insert(id);

    std::vector<std::string> order;
    while (!ready.empty()) {
        std::string id = *ready.begin();
        ready.erase(ready.begin());
        order.push_back(id);
        for (const auto& hc : hcs)
            if (hc.src == id && --indeg[hc.dst] == 0) ready.insert(hc.dst);
    }
    if (order.size() != nodes.size()) throw std::invalid_argument("topology: hyperconnection cycle");
    return order;
}

}  // namespace

DistributedDnn build_distributed(const DnnSpec& spec, std::vector<PhysicalNode> nodes,
                                 const PartitionMap& partition, SkipPolicy policy,
                                 const std::vector<std::pair<std::string, std::string>>& extra_skips) {
    spec.validate();
    DistributedDnn dnn;
    dnn.spec = spec;

    if (static_cast<int>(partition.layer_to_node.size()) != spec.layer_count())
        throw std::invalid_argument("partition must assign every layer (incl. the output layer)");

    std::map<std::string, size_t> index;
    for (size_t i = 0; i < nodes.size(); ++i) {
        if (index.count(nodes[i].id)) throw std::invalid_argument("duplicate node id: " + nodes[i].id);
        index[nodes[i].id] = i;
        nodes[i].assigned_layers.clear();
    }

    for (int k = 0; k < spec.layer_count(); ++k) {
        const std::string& id = partition.layer_to_node[k];
        auto it = index.find(id);
        if (it == index.end()) throw std::invalid_argument("partition references unknown node: " + id);
        if (nodes[it->second].tier == Tier::Iot)
            throw std::invalid_argument("iot node " + id + " cannot hold layers");
        nodes[it->second].assigned_layers.push_back(k);
    }
    for (const auto& n : nodes) {
        for (size_t i = 1; i < n.assigned_layers.size(); ++i)
            if (n.assigned_layers[i] != n.assigned_layers[i - 1] + 1)
                throw std::invalid_argument("non-contiguous layer assignment on node " + n.id);
        if (n.tier != Tier::Iot && n.assigned_layers.empty())
            throw std::invalid_argument("compute node " + n.id + " holds no layers");
    }
    dnn.nodes = std::move(nodes);

    // Simple hyperconnections. Explicit feeds describe trees and DAGs; without
    // them the chain follows layer adjacency, iot sources feeding the head.
    bool any_feeds = false;
    for (const auto& n : dnn.nodes) any_feeds = any_feeds || !n.feeds.empty();

    auto add_edge = [&](const std::string& src, const std::string& dst, HcKind kind) {
        Hyperconnection hc;
        hc.src = src;
        hc.dst = dst;
        hc.kind = kind;
        hc.dim = dnn.node_output_dim(src);
        hc.weight.assign(hc.dim, 1.0);
        dnn.hyperconnections.push_back(hc);
    };

    if (any_feeds) {
        for (const auto& n : dnn.nodes)
            for (const auto& dst : n.feeds) {
                if (!dnn.find_node(dst)) throw std::invalid_argument("feed to unknown node: " + dst);
                add_edge(n.id, dst, HcKind::Simple);
            }
    } else {
        const std::string& head = partition.layer_to_node[0];
        for (const auto& n : dnn.nodes) {
            if (n.tier == Tier::Iot) {
                add_edge(n.id, head, HcKind::Simple);
            } else if (n.assigned_layers.back() + 1 < spec.layer_count()) {
                const std::string& next = partition.layer_to_node[n.assigned_layers.back() + 1];
                if (next != n.id) add_edge(n.id, next, HcKind::Simple);
            }
        }
        for (auto& n : dnn.nodes)
            for (const auto& hc : dnn.hyperconnections)
                if (hc.src == n.id) n.feeds.push_back(hc.dst);
    }

    // Simple in-edges decide every expansion width before any skip is added: a
    // one-node skip is only taken when its vector fits the expansion layer the
    // simple wiring already requires.
    std::map<std::string, int> simple_in_max;
    for (const auto& hc : dnn.hyperconnections)
        simple_in_max[hc.dst] = std::max(simple_in_max[hc.dst], hc.dim);

    auto has_edge = [&](const std::string& src, const std::string& dst) {
        for (const auto& hc : dnn.hyperconnections)
            if (hc.src == src && hc.dst == dst) return true;
        return false;
    };

    if (policy == SkipPolicy::SkipOne) {
        std::vector<std::pair<std::string, std::string>> skips;
        for (const auto& ab : dnn.hyperconnections) {
            if (ab.kind != HcKind::Simple) continue;
            for (const auto& bc : dnn.hyperconnections) {
                if (bc.kind != HcKind::Simple || bc.src != ab.dst) continue;
                const std::string& u = ab.src;
                const std::string& w = bc.dst;
                if (dnn.node_output_dim(u) > simple_in_max[w]) continue;
                skips.emplace_back(u, w);
            }
        }
        std::sort(skips.begin(), skips.end());
        skips.erase(std::unique(skips.begin(), skips.end()), skips.end());
        for (const auto& [u, w] : skips)
            if (!has_edge(u, w)) add_edge(u, w, HcKind::Skip);
    }

    for (const auto& [u, w] : extra_skips) {
        if (!dnn.find_node(u) || !dnn.find_node(w))
            throw std::invalid_argument("explicit skip references unknown node");
        if (!has_edge(u, w)) add_edge(u, w, HcKind::Skip);
    }

    for (const auto& n : dnn.nodes) {
        int width = 0;
        for (const auto& hc : dnn.hyperconnections)
            if (hc.dst == n.id) width = std::max(width, hc.dim);
        if (width > 0) dnn.expansion_width[n.id] = width;
    }

    dnn.eval_order = topo_order(dnn.nodes, dnn.hyperconnections);
    return dnn;
}

namespace {

// Nodes reachable from src via >= min_hops simple hyperconnections.
bool reachable_simple(const DistributedDnn& dnn, const std::string& src, const std::string& dst,
                      int min_hops) {
    std::queue<std::pair<std::string, int>> q;
    q.push({src, 0});
    std::set<std::pair<std::string, int>> seen;
    while (!q.empty()) {
        auto [id, hops] = q.front();
        q.pop();
        if (id == dst && hops >= min_hops) return true;
        if (hops > static_cast<int>(dnn.nodes.size())) continue;
        for (const auto& hc : dnn.hyperconnections)
            if (hc.kind == HcKind::Simple && hc.src == id && seen.insert({hc.dst, hops + 1}).second)
                q.push({hc.dst, hops + 1});
    }
    return false;
}

}  // namespace

std::vector<std::string> validate_topology(const DistributedDnn& dnn) {
    std::vector<std::string> v;
    auto complain = [&](const std::string& msg) { v.push_back(msg); };

    // Partition: total, exclusive, consecutive.
    std::vector<int> owners(dnn.spec.layer_count(), 0);
    for (const auto& n : dnn.nodes) {
        for (size_t i = 0; i < n.assigned_layers.size(); ++i) {
            int k = n.assigned_layers[i];
            if (k < 0 || k >= dnn.spec.layer_count())
                complain("node " + n.id + ": layer index out of range");
            else
                ++owners[k];
            if (i > 0 && n.assigned_layers[i] != n.assigned_layers[i - 1] + 1)
                complain("node " + n.id + ": layers not consecutive");
        }
        if (n.tier == Tier::Iot && !n.assigned_layers.empty())
            complain("iot node " + n.id + " holds layers");
        if (n.tier == Tier::Iot && n.fallible)
            complain("iot node " + n.id + " marked fallible");
        if (n.tier == Tier::Cloud && n.fallible)
            complain("cloud node " + n.id + " marked fallible");
    }
    for (int k = 0; k < dnn.spec.layer_count(); ++k)
        if (owners[k] != 1)
            complain("layer " + std::to_string(k) + " assigned " + std::to_string(owners[k]) +
                     " times");

    std::map<std::string, int> simple_out;
    for (const auto& hc : dnn.hyperconnections) {
        if (!dnn.find_node(hc.src) || !dnn.find_node(hc.dst)) {
            complain("hyperconnection references unknown node " + hc.src + "->" + hc.dst);
            continue;
        }
        if (hc.dim != dnn.node_output_dim(hc.src))
            complain("hyperconnection " + hc.src + "->" + hc.dst + " dim mismatch");
        if (static_cast<int>(hc.weight.size()) != hc.dim)
            complain("hyperconnection " + hc.src + "->" + hc.dst + " weight length mismatch");
        for (double w : hc.weight)
            if (w != 1.0) {
                complain("hyperconnection " + hc.src + "->" + hc.dst + " weight not all-ones");
                break;
            }
        const PhysicalNode& src = dnn.node(hc.src);
        bool is_feed = std::find(src.feeds.begin(), src.feeds.end(), hc.dst) != src.feeds.end();
        if (hc.kind == HcKind::Simple) {
            if (!is_feed) complain("simple hyperconnection " + hc.src + "->" + hc.dst +
                                   " is not a parent link");
            ++simple_out[hc.src];
        } else {
            if (is_feed)
                complain("skip hyperconnection " + hc.src + "->" + hc.dst + " duplicates a parent link");
            else if (!reachable_simple(dnn, hc.src, hc.dst, 2))
                complain("skip hyperconnection " + hc.src + "->" + hc.dst +
                         " does not reach an ancestor");
        }
    }

    // Expansion layers: exactly where in-edges exist, sized to the widest one.
    for (const auto& n : dnn.nodes) {
        int width = 0;
        for (const auto& hc : dnn.hyperconnections)
            if (hc.dst == n.id) width = std::max(width, hc.dim);
        auto it = dnn.expansion_width.find(n.id);
        if (width == 0) {
            if (it != dnn.expansion_width.end())
                complain("node " + n.id + " has an expansion layer but no in-edges");
            if (n.tier != Tier::Iot) complain("compute node " + n.id + " is disconnected");
        } else {
            if (it == dnn.expansion_width.end())
                complain("node " + n.id + " lacks an expansion layer");
            else if (it->second != width)
                complain("node " + n.id + " expansion width " + std::to_string(it->second) +
                         " != max incoming dim " + std::to_string(width));
        }
    }

    // Single terminal holding the output layer, on the cloud.
    std::vector<std::string> terminals;
    for (const auto& n : dnn.nodes) {
        bool has_out = false;
        for (const auto& hc : dnn.hyperconnections) has_out = has_out || hc.src == n.id;
        if (!has_out && n.tier != Tier::Iot) terminals.push_back(n.id);
    }
    if (terminals.size() != 1) {
        complain("expected exactly one terminal node, found " + std::to_string(terminals.size()));
    } else {
        const PhysicalNode& t = dnn.node(terminals[0]);
        if (t.tier != Tier::Cloud) complain("terminal node " + t.id + " is not in the cloud tier");
        if (t.assigned_layers.empty() || t.assigned_layers.back() != dnn.spec.layer_count() - 1)
            complain("terminal node " + t.id + " does not hold the output layer");
    }

    return v;
}

ReferenceTopology health_reference_topology(bool swap_fog_layers) {
    ReferenceTopology t;
    t.spec.input_dim = 23;
    t.spec.hidden_widths.assign(10, 250);
    t.spec.output_dim = 12;

    auto mk = [](std::string id, Tier tier, bool fallible, std::vector<std::string> feeds) {
        PhysicalNode n;
        n.id = std::move(id);
        n.tier = tier;
        n.fallible = fallible;
        n.feeds = std::move(feeds);
        return n;
    };
    t.nodes.push_back(mk("iot", Tier::Iot, false, {"e1"}));
    t.nodes.push_back(mk("e1", Tier::Edge, true, {"f2"}));
    t.nodes.push_back(mk("f2", Tier::Fog, true, {"f1"}));
    t.nodes.push_back(mk("f1", Tier::Fog, true, {"cloud"}));
    t.nodes.push_back(mk("cloud", Tier::Cloud, false, {}));

    // e1 one hidden layer, then 2/3 over the fogs (or 3/2 swapped), cloud the
    // remaining four plus the output layer.
    const int f2_layers = swap_fog_layers ? 3 : 2;
    auto& p = t.partition.layer_to_node;
    p.push_back("e1");
    for (int i = 0; i < f2_layers; ++i) p.push_back("f2");
    for (int i = 0; i < 5 - f2_layers; ++i) p.push_back("f1");
    for (int i = 0; i < 4; ++i) p.push_back("cloud");
    p.push_back("cloud");  // output layer
    return t;
}

ReferenceTopology camera_reference_topology() {
    ReferenceTopology t;
    t.spec.input_dim = 32 * 32 * 3;
    t.spec.hidden_widths.assign(14, 32);
    t.spec.output_dim = 3;

    auto mk = [](std::string id, Tier tier, bool fallible, std::vector<std::string> feeds) {
        PhysicalNode n;
        n.id = std::move(id);
        n.tier = tier;
        n.fallible = fallible;
        n.feeds = std::move(feeds);
        return n;
    };
    // Overlapping camera coverage: cam2 and cam5 feed two edges each, so the
    // loss of a single edge never removes a viewpoint entirely.
    t.nodes.push_back(mk("cam1", Tier::Iot, false, {"e1"}));
    t.nodes.push_back(mk("cam2", Tier::Iot, false, {"e1", "e2"}));
    t.nodes.push_back(mk("cam3", Tier::Iot, false, {"e2"}));
    t.nodes.push_back(mk("cam4", Tier::Iot, false, {"e3"}));
    t.nodes.push_back(mk("cam5", Tier::Iot, false, {"e3", "e4"}));
    t.nodes.push_back(mk("cam6", Tier::Iot, false, {"e4"}));
    t.nodes.push_back(mk("e1", Tier::Edge, true, {"f3"}));
    t.nodes.push_back(mk("e2", Tier::Edge, true, {"f3"}));
    t.nodes.push_back(mk("e3", Tier::Edge, true, {"f4"}));
    t.nodes.push_back(mk("e4", Tier::Edge, true, {"f4"}));
    t.nodes.push_back(mk("f3", Tier::Fog, true, {"f2"}));
    t.nodes.push_back(mk("f4", Tier::Fog, true, {"f2"}));
    t.nodes.push_back(mk("f2", Tier::Fog, true, {"f1"}));
    t.nodes.push_back(mk("f1", Tier::Fog, true, {"cloud"}));
    t.nodes.push_back(mk("cloud", Tier::Cloud, false, {}));

    auto& p = t.partition.layer_to_node;
    p.insert(p.end(), {"e1", "e2", "e3", "e4"});
    p.insert(p.end(), {"f3", "f3", "f4", "f4", "f2", "f2", "f1", "f1"});
    p.insert(p.end(), {"cloud", "cloud", "cloud"});  // two hidden + output
    return t;
}

}  // namespace dfg
