#include "dfg/training.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <stdexcept>

namespace dfg {

int select_best(const std::vector<EpochStats>& history) {
    if (history.empty()) throw std::invalid_argument("select_best: empty history");
    int best = 0;
    for (size_t i = 1; i < history.size(); ++i)
        if (history[i].val_accuracy > history[best].val_accuracy) best = static_cast<int>(i);
    return best + 1;
}

TrainedModel train(const DistributedDnn& graph, const Dataset& data, const TrainConfig& cfg) {
    cfg.validate();
    if (data.train_idx.empty() || data.val_idx.empty())
        throw std::invalid_argument("train: dataset has no train/val split");
    cfg.loss.validate(data.class_count);

    DistributedNet<float> net = DistributedNet<float>::build(graph, cfg.seed);
    Adam<float> adam(cfg.optimizer);
    auto params = net.param_tensors();

    const std::map<std::string, Mat<float>> val_inputs = make_iot_inputs(graph, data, data.val_idx);
    const std::vector<int> val_labels = gather_labels(data, data.val_idx);

    std::mt19937_64 shuffle_rng(cfg.seed);
    std::vector<int> order = data.train_idx;

    TrainedModel best;
    best.history.reserve(cfg.epochs);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double loss_sum = 0;
        long loss_rows = 0;
        const int bs = cfg.optimizer.batch_size;
        for (size_t start = 0; start < order.size(); start += bs) {
            const size_t end = std::min(order.size(), start + bs);
            std::vector<int> batch(order.begin() + start, order.begin() + end);
            auto inputs = make_iot_inputs(graph, data, batch);
            auto labels = gather_labels(data, batch);

            typename DistributedNet<float>::Cache cache;
            Mat<float> logits = net.forward_train(inputs, cache);
            Mat<float> dz;
            const double loss = loss_and_grad_batch(cfg.loss, logits, labels, dz);
            if (!std::isfinite(loss))
                throw std::runtime_error("training diverged: non-finite loss at epoch " +
                                         std::to_string(epoch) + ", batch " +
                                         std::to_string(start / bs));
            loss_sum += loss * static_cast<double>(batch.size());
            loss_rows += static_cast<long>(batch.size());

            NetGrads<float> grads;
            net.backward(cache, dz, grads);
            adam.step(params, net.grad_tensors(grads));
        }

        EpochStats stats;
        stats.train_loss = loss_sum / static_cast<double>(loss_rows);
        stats.val_accuracy = accuracy(net, val_inputs, val_labels, {}, GuessMode::expectation());
        best.history.push_back(stats);

        if (best.history.size() == 1 || stats.val_accuracy > best.val_accuracy) {
            best.val_accuracy = stats.val_accuracy;
            best.net = net;  // snapshot
        }
    }
    best.best_epoch = select_best(best.history);
    best.val_accuracy = best.history[best.best_epoch - 1].val_accuracy;
    return best;
}

}  // namespace dfg
