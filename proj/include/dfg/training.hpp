#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dfg/data.hpp"
#include "dfg/inference.hpp"
#include "dfg/net.hpp"

namespace dfg {

struct TrainConfig {
    OptimizerSpec optimizer;
    LossSpec loss;
    int epochs = 50;
    uint64_t seed = 1;

    void validate() const {
        optimizer.validate();
        if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
    }
};

struct EpochStats {
    double train_loss = 0;
    double val_accuracy = 0;
};

struct TrainedModel {
    DistributedNet<float> net;  // weights of the best epoch
    int best_epoch = 0;         // 1-based
    double val_accuracy = 0;
    std::vector<EpochStats> history;
};

// Earliest epoch with the highest validation accuracy, 1-based.
int select_best(const std::vector<EpochStats>& history);

// Simulated-environment training: single process, no failures injected, the
// whole graph updated as one parameter set. Throws on divergence.
TrainedModel train(const DistributedDnn& graph, const Dataset& data, const TrainConfig& cfg);

// Max relative error between backprop and central finite differences over every
// parameter. Run this on a double-precision net; float forward noise swamps
// the quotient otherwise.
template <typename T>
double grad_check(DistributedNet<T>& net, const std::map<std::string, Mat<T>>& inputs,
                  const std::vector<int>& labels, T epsilon) {
    const LossSpec loss;
    auto eval_loss = [&]() {
        typename DistributedNet<T>::Cache cache;
        Mat<T> logits = net.forward_train(inputs, cache);
        Mat<T> dz;
        return loss_and_grad_batch(loss, logits, labels, dz);
    };

    typename DistributedNet<T>::Cache cache;
    Mat<T> logits = net.forward_train(inputs, cache);
    Mat<T> dz;
    loss_and_grad_batch(loss, logits, labels, dz);
    NetGrads<T> grads;
    net.backward(cache, dz, grads);

    auto params = net.param_tensors();
    auto grad_refs = net.grad_tensors(grads);
    double worst = 0;
    for (size_t t = 0; t < params.size(); ++t) {
        for (size_t j = 0; j < params[t].n; ++j) {
            T saved = params[t].data[j];
            params[t].data[j] = saved + epsilon;
            const double up = eval_loss();
            params[t].data[j] = saved - epsilon;
            const double down = eval_loss();
            params[t].data[j] = saved;
            const double numeric = (up - down) / (2.0 * static_cast<double>(epsilon));
            const double analytic = static_cast<double>(grad_refs[t].data[j]);
            const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
            worst = std::max(worst, std::abs(analytic - numeric) / denom);
        }
    }
    return worst;
}

}  // namespace dfg
