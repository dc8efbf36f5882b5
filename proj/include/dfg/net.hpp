#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dfg/nn.hpp"
#include "dfg/topology.hpp"

namespace dfg {

// Batch activations of one node for one round: a matrix, or the null vector
// (a failed node's output carries no rows and no dimension).
template <typename T>
using ActivationBatch = std::optional<Mat<T>>;

template <typename T>
struct NetEdge {
    int src = -1;                // index into DistributedNet::nodes()
    std::vector<T> scale;        // hyperconnection weight, all-ones by construction
};

template <typename T>
struct NetNode {
    std::string id;
    bool iot = false;
    bool fallible = false;
    int out_dim = 0;
    int expansion = 0;  // identity expansion layer width; 0 for iot nodes
    std::vector<DenseLayer<T>> layers;
    std::vector<NetEdge<T>> ins;  // ordered by source id
};

template <typename T>
struct NetGrads {
    std::vector<std::vector<Mat<T>>> dw;              // [node][layer]
    std::vector<std::vector<std::vector<T>>> db;      // [node][layer]
};

// A DistributedDnn with its weights materialized, evaluated whole-graph in
// topological order. The wire runtime executes single node slices of the same
// structure, so this in-process path doubles as the simulator oracle there.
template <typename T>
class DistributedNet {
  public:
    DistributedNet() = default;

    static DistributedNet build(const DistributedDnn& graph, uint64_t seed) {
        DistributedNet net;
        net.graph_ = graph;
        std::mt19937 rng(static_cast<uint32_t>(seed ^ (seed >> 32)));
        for (const auto& id : graph.eval_order) {
            const PhysicalNode& pn = graph.node(id);
            NetNode<T> node;
            node.id = id;
            node.iot = pn.tier == Tier::Iot;
            node.fallible = pn.fallible;
            node.out_dim = graph.node_output_dim(id);
            if (!node.iot) {
                auto it = graph.expansion_width.find(id);
                node.expansion = it == graph.expansion_width.end() ? 0 : it->second;
                for (const LayerShape& s : graph.slab_shapes(id)) {
                    DenseLayer<T> layer;
                    layer.w = Mat<T>(s.out, s.in);
                    layer.b.assign(s.out, T(0));
                    layer.act = s.act;
                    init_dense(layer, rng);
                    node.layers.push_back(std::move(layer));
                }
            }
            net.index_[id] = static_cast<int>(net.nodes_.size());
            net.nodes_.push_back(std::move(node));
        }
        for (auto& node : net.nodes_) {
            for (const Hyperconnection* hc : graph.in_edges(node.id)) {
                NetEdge<T> e;
                e.src = net.index_.at(hc->src);
                e.scale.assign(hc->weight.begin(), hc->weight.end());
                node.ins.push_back(std::move(e));
            }
        }
        net.output_node_ = net.index_.at(graph.output_node());
        return net;
    }

    const DistributedDnn& graph() const { return graph_; }
    std::vector<NetNode<T>>& nodes() { return nodes_; }
    const std::vector<NetNode<T>>& nodes() const { return nodes_; }
    int node_index(const std::string& id) const { return index_.at(id); }
    int output_index() const { return output_node_; }
    int class_count() const { return graph_.spec.output_dim; }

    // Test hook: rescales one hyperconnection's contribution to the Add.
    void set_edge_scale(const std::string& src, const std::string& dst, T value) {
        NetNode<T>& d = nodes_[index_.at(dst)];
        for (auto& e : d.ins)
            if (nodes_[e.src].id == src) {
                std::fill(e.scale.begin(), e.scale.end(), value);
                return;
            }
        throw std::invalid_argument("no hyperconnection " + src + "->" + dst);
    }

    // The Add operation over one node's incoming activations: null operands are
    // ignored, the rest are zero-padded at the tail to the expansion width and
    // summed; all-null collapses to the null vector.
    static ActivationBatch<T> add_incoming(const std::vector<const ActivationBatch<T>*>& operands,
                                           const std::vector<const std::vector<T>*>& scales,
                                           int expansion, int rows) {
        bool any = false;
        for (const auto* op : operands) any = any || op->has_value();
        if (!any) return std::nullopt;
        Mat<T> sum(rows, expansion);
        for (size_t i = 0; i < operands.size(); ++i)
            if (operands[i]->has_value()) add_padded_inplace(sum, **operands[i], *scales[i]);
        return sum;
    }

    // Forward pass under a failure mask; per node, null in -> null out and a
    // failed node emits null regardless of its inputs. Returns the terminal
    // node's batch, pre-softmax logits included only via `logits` switch.
    ActivationBatch<T> forward(const std::map<std::string, Mat<T>>& iot_inputs,
                               const std::set<std::string>& failed, bool logits_only = false) const {
        check_failed_set(failed);
        const int rows = batch_rows(iot_inputs);
        std::vector<ActivationBatch<T>> value(nodes_.size());
        for (size_t i = 0; i < nodes_.size(); ++i) {
            const NetNode<T>& node = nodes_[i];
            if (node.iot) {
                auto it = iot_inputs.find(node.id);
                if (it == iot_inputs.end())
                    throw std::invalid_argument("missing input for iot node " + node.id);
                if (it->second.rows != rows || it->second.cols != node.out_dim)
                    throw std::invalid_argument("bad input shape for iot node " + node.id);
                value[i] = it->second;
                continue;
            }
            if (failed.count(node.id)) continue;  // stays null
            std::vector<const ActivationBatch<T>*> ops;
            std::vector<const std::vector<T>*> scales;
            for (const auto& e : node.ins) {
                ops.push_back(&value[e.src]);
                scales.push_back(&e.scale);
            }
            ActivationBatch<T> x = add_incoming(ops, scales, node.expansion, rows);
            if (!x) continue;
            Mat<T> h = std::move(*x);
            for (size_t j = 0; j < node.layers.size(); ++j) {
                const bool last_softmax = node.layers[j].act == Activation::Softmax;
                if (logits_only && last_softmax)
                    h = node.layers[j].affine(h);
                else
                    h = node.layers[j].forward(h);
            }
            value[i] = std::move(h);
        }
        return std::move(value[output_node_]);
    }

    struct Cache {
        int rows = 0;
        std::vector<Mat<T>> slab_in;             // per node; the expansion layer's output
        std::vector<std::vector<Mat<T>>> post;   // per node, per layer (softmax layer holds pre-activation)
        std::vector<Mat<T>> iot;                 // iot inputs by node index
    };

    // All-alive forward keeping what backward needs. Returns pre-softmax logits.
    Mat<T> forward_train(const std::map<std::string, Mat<T>>& iot_inputs, Cache& cache) const {
        cache.rows = batch_rows(iot_inputs);
        cache.slab_in.assign(nodes_.size(), Mat<T>());
        cache.post.assign(nodes_.size(), {});
        cache.iot.assign(nodes_.size(), Mat<T>());
        for (size_t i = 0; i < nodes_.size(); ++i) {
            const NetNode<T>& node = nodes_[i];
            if (node.iot) {
                auto it = iot_inputs.find(node.id);
                if (it == iot_inputs.end())
                    throw std::invalid_argument("missing input for iot node " + node.id);
                cache.iot[i] = it->second;
                continue;
            }
            Mat<T> x(cache.rows, node.expansion);
            for (const auto& e : node.ins)
                add_padded_inplace(x, node_output(cache, e.src), e.scale);
            cache.slab_in[i] = std::move(x);
            const Mat<T>* cur = &cache.slab_in[i];
            for (const auto& layer : node.layers) {
                Mat<T> z = layer.affine(*cur);
                if (layer.act == Activation::Relu) apply_activation(z, Activation::Relu);
                cache.post[i].push_back(std::move(z));
                cur = &cache.post[i].back();
            }
        }
        return cache.post[output_node_].back();
    }

    // Backprop from d(loss)/d(logits). Add junctions copy the upstream gradient
    // to each operand truncated to its own width; expansion layers are identity.
    void backward(const Cache& cache, const Mat<T>& dlogits, NetGrads<T>& grads) const {
        grads.dw.assign(nodes_.size(), {});
        grads.db.assign(nodes_.size(), {});
        for (size_t i = 0; i < nodes_.size(); ++i)
            for (const auto& layer : nodes_[i].layers) {
                grads.dw[i].emplace_back(layer.w.rows, layer.w.cols);
                grads.db[i].emplace_back(layer.w.rows, T(0));
            }
        std::vector<Mat<T>> dout(nodes_.size());
        dout[output_node_] = dlogits;
        for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
            const NetNode<T>& node = nodes_[i];
            if (node.iot || dout[i].rows == 0) continue;
            Mat<T> g = std::move(dout[i]);
            for (int j = static_cast<int>(node.layers.size()) - 1; j >= 0; --j) {
                const DenseLayer<T>& layer = node.layers[j];
                // dz: softmax is fused with the loss, relu masks by its output.
                if (layer.act == Activation::Relu) {
                    const Mat<T>& post = cache.post[i][j];
                    for (size_t k = 0; k < g.a.size(); ++k)
                        if (post.a[k] <= T(0)) g.a[k] = T(0);
                }
                const Mat<T>& x = j == 0 ? cache.slab_in[i] : cache.post[i][j - 1];
                Mat<T>& dw = grads.dw[i][j];
                std::vector<T>& db = grads.db[i][j];
                for (int n = 0; n < g.rows; ++n) {
                    const T* gr = g.row(n);
                    const T* xr = x.row(n);
                    for (int o = 0; o < layer.w.rows; ++o) {
                        const T gv = gr[o];
                        if (gv == T(0)) continue;
                        db[o] += gv;
                        T* dwr = dw.row(o);
                        for (int c = 0; c < layer.w.cols; ++c) dwr[c] += gv * xr[c];
                    }
                }
                Mat<T> dx(g.rows, layer.w.cols);
                for (int n = 0; n < g.rows; ++n) {
                    const T* gr = g.row(n);
                    T* dxr = dx.row(n);
                    for (int o = 0; o < layer.w.rows; ++o) {
                        const T gv = gr[o];
                        if (gv == T(0)) continue;
                        const T* wr = layer.w.row(o);
                        for (int c = 0; c < layer.w.cols; ++c) dxr[c] += gv * wr[c];
                    }
                }
                g = std::move(dx);
            }
            for (const auto& e : node.ins) {
                const NetNode<T>& src = nodes_[e.src];
                if (src.iot) continue;
                if (dout[e.src].rows == 0) dout[e.src] = Mat<T>(g.rows, src.out_dim);
                Mat<T>& acc = dout[e.src];
                for (int n = 0; n < g.rows; ++n) {
                    const T* gr = g.row(n);
                    T* ar = acc.row(n);
                    for (int c = 0; c < src.out_dim; ++c) ar[c] += e.scale[c] * gr[c];
                }
            }
        }
    }

    std::vector<TensorRef<T>> param_tensors() {
        std::vector<TensorRef<T>> refs;
        for (auto& node : nodes_)
            for (auto& layer : node.layers) {
                refs.push_back({layer.w.a.data(), layer.w.a.size()});
                refs.push_back({layer.b.data(), layer.b.size()});
            }
        return refs;
    }

    std::vector<TensorRef<T>> grad_tensors(NetGrads<T>& grads) const {
        std::vector<TensorRef<T>> refs;
        for (size_t i = 0; i < nodes_.size(); ++i)
            for (size_t j = 0; j < nodes_[i].layers.size(); ++j) {
                refs.push_back({grads.dw[i][j].a.data(), grads.dw[i][j].a.size()});
                refs.push_back({grads.db[i][j].data(), grads.db[i][j].size()});
            }
        return refs;
    }

    size_t param_count() const {
        size_t n = 0;
        for (const auto& node : nodes_)
            for (const auto& layer : node.layers) n += layer.w.a.size() + layer.b.size();
        return n;
    }

    template <typename U>
    DistributedNet<U> cast() const {
        DistributedNet<U> out;
        out.graph_ = graph_;
        out.index_ = index_;
        out.output_node_ = output_node_;
        for (const auto& node : nodes_) {
            NetNode<U> n;
            n.id = node.id;
            n.iot = node.iot;
            n.fallible = node.fallible;
            n.out_dim = node.out_dim;
            n.expansion = node.expansion;
            for (const auto& layer : node.layers) {
                DenseLayer<U> l;
                l.w = layer.w.template cast<U>();
                l.b.assign(layer.b.begin(), layer.b.end());
                l.act = layer.act;
                n.layers.push_back(std::move(l));
            }
            for (const auto& e : node.ins) {
                NetEdge<U> ne;
                ne.src = e.src;
                ne.scale.assign(e.scale.begin(), e.scale.end());
                n.ins.push_back(std::move(ne));
            }
            out.nodes_.push_back(std::move(n));
        }
        return out;
    }

  private:
    template <typename U>
    friend class DistributedNet;

    const Mat<T>& node_output(const Cache& cache, int idx) const {
        return nodes_[idx].iot ? cache.iot[idx] : cache.post[idx].back();
    }

    void check_failed_set(const std::set<std::string>& failed) const {
        for (const auto& id : failed) {
            auto it = index_.find(id);
            if (it == index_.end())
                throw std::invalid_argument("failure mask references unknown node " + id);
            if (!nodes_[it->second].fallible)
                throw std::invalid_argument("failure mask targets non-fallible node " + id);
        }
    }

    int batch_rows(const std::map<std::string, Mat<T>>& iot_inputs) const {
        if (iot_inputs.empty()) throw std::invalid_argument("no iot inputs");
        int rows = iot_inputs.begin()->second.rows;
        for (const auto& [id, m] : iot_inputs)
            if (m.rows != rows) throw std::invalid_argument("iot inputs disagree on batch size");
        return rows;
    }

    DistributedDnn graph_;
    std::vector<NetNode<T>> nodes_;
    std::map<std::string, int> index_;
    int output_node_ = -1;
};

}  // namespace dfg
