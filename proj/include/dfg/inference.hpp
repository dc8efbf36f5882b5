#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "dfg/net.hpp"

namespace dfg {

// A vector of unit outputs, or the null vector of a failed node. The null
// value carries no dimension; partially-null vectors cannot be represented.
template <typename T>
using ActivationVector = std::optional<std::vector<T>>;

// Element-wise sum of hyperconnection payloads: null operands are ignored,
// shorter vectors are zero-padded at the tail to the longest one, and an
// all-null list stays null.
template <typename T>
ActivationVector<T> add_inputs(const std::vector<ActivationVector<T>>& inputs) {
    if (inputs.empty()) throw std::invalid_argument("add_inputs: empty operand list");
    int width = 0;
    bool any = false;
    for (const auto& in : inputs)
        if (in) {
            any = true;
            width = std::max(width, static_cast<int>(in->size()));
        }
    if (!any) return std::nullopt;
    std::vector<T> sum(width, T(0));
    for (const auto& in : inputs)
        if (in)
            for (size_t i = 0; i < in->size(); ++i) sum[i] += (*in)[i];
    return sum;
}

// One node slice: null absorbs, otherwise the identity expansion layer feeds
// the dense slab. The input must already be the Add output at expansion width.
template <typename T>
ActivationVector<T> node_forward(const NetNode<T>& node, const ActivationVector<T>& input) {
    if (!input) return std::nullopt;
    if (static_cast<int>(input->size()) != node.expansion)
        throw std::invalid_argument("node_forward: input dim " + std::to_string(input->size()) +
                                    " != expansion width " + std::to_string(node.expansion));
    Mat<T> x(1, node.expansion);
    std::copy(input->begin(), input->end(), x.row(0));
    for (const auto& layer : node.layers) x = layer.forward(x);
    return std::vector<T>(x.row(0), x.row(0) + x.cols);
}

template <typename T>
struct InferenceOutcome {
    ActivationVector<T> logits;  // null when no information reached the output
    int predicted_class = -1;
    bool random_guess = false;   // set iff logits are null
};

template <typename T>
InferenceOutcome<T> distributed_forward(const DistributedNet<T>& net,
                                        const std::map<std::string, std::vector<T>>& inputs,
                                        const std::set<std::string>& failed) {
    std::map<std::string, Mat<T>> batches;
    for (const auto& [id, v] : inputs) {
        Mat<T> m(1, static_cast<int>(v.size()));
        std::copy(v.begin(), v.end(), m.row(0));
        batches.emplace(id, std::move(m));
    }
    ActivationBatch<T> out = net.forward(batches, failed);
    InferenceOutcome<T> result;
    if (!out) {
        result.random_guess = true;
        return result;
    }
    result.logits = std::vector<T>(out->row(0), out->row(0) + out->cols);
    result.predicted_class = 0;
    for (int c = 1; c < out->cols; ++c)
        if ((*result.logits)[c] > (*result.logits)[result.predicted_class]) result.predicted_class = c;
    return result;
}

// How a null outcome scores: its expected value 1/K, or an actual seeded draw.
struct GuessMode {
    enum class Kind : uint8_t { Expectation, Sampled } kind = Kind::Expectation;
    uint64_t seed = 0;

    static GuessMode expectation() { return {Kind::Expectation, 0}; }
    static GuessMode sampled(uint64_t seed) { return {Kind::Sampled, seed}; }
};

// Fraction correct over a labeled split under a fixed failure combination.
template <typename T>
double accuracy(const DistributedNet<T>& net, const std::map<std::string, Mat<T>>& iot_inputs,
                const std::vector<int>& labels, const std::set<std::string>& failed,
                const GuessMode& guess, int chunk_rows = 1024) {
    const int n = static_cast<int>(labels.size());
    if (n == 0) throw std::invalid_argument("accuracy: empty split");
    const int k = net.class_count();
    std::mt19937_64 rng(guess.seed);
    std::uniform_int_distribution<int> draw(0, k - 1);

    long correct = 0;
    long nulls = 0;
    for (int start = 0; start < n; start += chunk_rows) {
        const int rows = std::min(chunk_rows, n - start);
        std::map<std::string, Mat<T>> chunk;
        for (const auto& [id, m] : iot_inputs) {
            Mat<T> c(rows, m.cols);
            std::copy(m.row(start), m.row(start) + static_cast<size_t>(rows) * m.cols, c.row(0));
            chunk.emplace(id, std::move(c));
        }
        ActivationBatch<T> out = net.forward(chunk, failed, /*logits_only=*/true);
        if (!out) {
            if (guess.kind == GuessMode::Kind::Sampled) {
                for (int r = 0; r < rows; ++r)
                    if (draw(rng) == labels[start + r]) ++correct;
            } else {
                nulls += rows;
            }
            continue;
        }
        for (int r = 0; r < rows; ++r) {
            const T* row = out->row(r);
            int best = 0;
            for (int c = 1; c < out->cols; ++c)
                if (row[c] > row[best]) best = c;
            if (best == labels[start + r]) ++correct;
        }
    }
    return (static_cast<double>(correct) + static_cast<double>(nulls) / k) / n;
}

}  // namespace dfg
