#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "dfg/mat.hpp"

namespace dfg {

enum class Activation : uint8_t { Identity = 0, Relu = 1, Softmax = 2 };

inline const char* activation_name(Activation a) {
    switch (a) {
        case Activation::Identity: return "identity";
        case Activation::Relu: return "relu";
        case Activation::Softmax: return "softmax";
    }
    return "?";
}

// Softmax over each row, with max-subtraction so large logits stay finite.
template <typename T>
void softmax_rows(Mat<T>& m) {
    for (int r = 0; r < m.rows; ++r) {
        T* p = m.row(r);
        T mx = p[0];
        for (int c = 1; c < m.cols; ++c) mx = std::max(mx, p[c]);
        T sum = T(0);
        for (int c = 0; c < m.cols; ++c) {
            p[c] = std::exp(p[c] - mx);
            sum += p[c];
        }
        for (int c = 0; c < m.cols; ++c) p[c] /= sum;
    }
}

template <typename T>
void apply_activation(Mat<T>& m, Activation act) {
    switch (act) {
        case Activation::Identity: break;
        case Activation::Relu:
            for (T& v : m.a) v = v > T(0) ? v : T(0);
            break;
        case Activation::Softmax: softmax_rows(m); break;
    }
}

template <typename T>
struct DenseLayer {
    Mat<T> w;           // out x in
    std::vector<T> b;   // out
    Activation act = Activation::Relu;

    int in_dim() const { return w.cols; }
    int out_dim() const { return w.rows; }

    // z = x * w^T + b (pre-activation). x is N x in.
    Mat<T> affine(const Mat<T>& x) const {
        if (x.cols != w.cols)
            throw std::invalid_argument("dense: input dim " + std::to_string(x.cols) +
                                        " != weight cols " + std::to_string(w.cols));
        Mat<T> wt = transpose(w);
        Mat<T> z;
        matmul_acc(x, wt, z);
        add_row_inplace(z, b);
        return z;
    }

    Mat<T> forward(const Mat<T>& x) const {
        Mat<T> z = affine(x);
        apply_activation(z, act);
        return z;
    }
};

// Single-vector convenience used by the per-sample API and tests.
template <typename T>
std::vector<T> dense_forward(const DenseLayer<T>& layer, const std::vector<T>& input) {
    Mat<T> x(1, static_cast<int>(input.size()));
    std::copy(input.begin(), input.end(), x.row(0));
    Mat<T> y = layer.forward(x);
    return std::vector<T>(y.row(0), y.row(0) + y.cols);
}

// ---- Initialization ----
// ReLU layers get He-uniform; identity and softmax layers get Glorot-uniform.
// Biases start at zero. One RNG stream, layers drawn in graph order, so a seed
// pins every weight.
template <typename T>
void init_dense(DenseLayer<T>& layer, std::mt19937& rng) {
    const double fan_in = layer.w.cols;
    const double fan_out = layer.w.rows;
    double limit = layer.act == Activation::Relu ? std::sqrt(6.0 / fan_in)
                                                 : std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (T& v : layer.w.a) v = static_cast<T>(dist(rng));
    std::fill(layer.b.begin(), layer.b.end(), T(0));
}

// ---- Loss ----

enum class LossKind : uint8_t { CrossEntropy = 0, WeightedCrossEntropy = 1 };

struct LossSpec {
    LossKind kind = LossKind::CrossEntropy;
    std::vector<double> class_weights;  // present iff weighted; all > 0

    void validate(int class_count) const {
        if (kind == LossKind::WeightedCrossEntropy) {
            if (static_cast<int>(class_weights.size()) != class_count)
                throw std::invalid_argument("loss: class_weights length != class count");
            for (double w : class_weights)
                if (!(w > 0)) throw std::invalid_argument("loss: class weights must be > 0");
        } else if (!class_weights.empty()) {
            throw std::invalid_argument("loss: class_weights given for unweighted loss");
        }
    }

    double weight_for(int label) const {
        return kind == LossKind::WeightedCrossEntropy ? class_weights[label] : 1.0;
    }
};

// Softmax cross-entropy from logits, fused with its gradient.
template <typename T>
std::pair<double, std::vector<T>> loss_and_grad(const LossSpec& spec, const std::vector<T>& logits,
                                                int label) {
    const int k = static_cast<int>(logits.size());
    if (label < 0 || label >= k) throw std::out_of_range("loss: label out of range");
    spec.validate(k);

    T mx = logits[0];
    for (T v : logits) mx = std::max(mx, v);
    double sum = 0;
    std::vector<double> p(k);
    for (int c = 0; c < k; ++c) {
        p[c] = std::exp(static_cast<double>(logits[c] - mx));
        sum += p[c];
    }
    for (int c = 0; c < k; ++c) p[c] /= sum;

    const double w = spec.weight_for(label);
    double loss = -w * std::log(std::max(p[label], 1e-300));
    std::vector<T> grad(k);
    for (int c = 0; c < k; ++c)
        grad[c] = static_cast<T>(w * (p[c] - (c == label ? 1.0 : 0.0)));
    return {loss, grad};
}

// Batch form over logits Z (N x K): returns mean loss; dZ is already divided by N.
template <typename T>
double loss_and_grad_batch(const LossSpec& spec, const Mat<T>& z, const std::vector<int>& labels,
                           Mat<T>& dz) {
    spec.validate(z.cols);
    if (static_cast<int>(labels.size()) != z.rows)
        throw std::invalid_argument("loss: batch size mismatch");
    dz = Mat<T>(z.rows, z.cols);
    double total = 0;
    const double inv_n = 1.0 / z.rows;
    for (int n = 0; n < z.rows; ++n) {
        const int label = labels[n];
        if (label < 0 || label >= z.cols) throw std::out_of_range("loss: label out of range");
        const T* zr = z.row(n);
        T mx = zr[0];
        for (int c = 1; c < z.cols; ++c) mx = std::max(mx, zr[c]);
        double sum = 0;
        T* dr = dz.row(n);
        for (int c = 0; c < z.cols; ++c) {
            double e = std::exp(static_cast<double>(zr[c] - mx));
            dr[c] = static_cast<T>(e);
            sum += e;
        }
        const double w = spec.weight_for(label);
        for (int c = 0; c < z.cols; ++c) {
            double p = static_cast<double>(dr[c]) / sum;
            if (c == label) total += -w * std::log(std::max(p, 1e-300));
            dr[c] = static_cast<T>(w * (p - (c == label ? 1.0 : 0.0)) * inv_n);
        }
    }
    return total * inv_n;
}

// ---- Optimizer ----

struct OptimizerSpec {
    double learning_rate = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int batch_size = 32;

    void validate() const {
        if (!(learning_rate > 0)) throw std::invalid_argument("adam: learning_rate must be > 0");
        if (!(beta1 > 0 && beta1 < 1) || !(beta2 > 0 && beta2 < 1))
            throw std::invalid_argument("adam: betas must lie in (0, 1)");
        if (batch_size < 1) throw std::invalid_argument("adam: batch_size must be >= 1");
    }
};

template <typename T>
struct TensorRef {
    T* data;
    size_t n;
};

// Adam with bias correction. One state instance owns the moments for a fixed
// list of parameter tensors; the tensor list must keep its order across steps.
template <typename T>
class Adam {
  public:
    explicit Adam(const OptimizerSpec& spec) : spec_(spec) { spec_.validate(); }

    long step_count() const { return t_; }

    void step(const std::vector<TensorRef<T>>& params, const std::vector<TensorRef<T>>& grads) {
        if (params.size() != grads.size())
            throw std::invalid_argument("adam: param/grad tensor count mismatch");
        if (m_.empty()) {
            for (const auto& p : params) {
                m_.emplace_back(p.n, T(0));
                v_.emplace_back(p.n, T(0));
            }
        }
        ++t_;
        const double bc1 = 1.0 - std::pow(spec_.beta1, t_);
        const double bc2 = 1.0 - std::pow(spec_.beta2, t_);
        for (size_t i = 0; i < params.size(); ++i) {
            if (params[i].n != grads[i].n || params[i].n != m_[i].size())
                throw std::invalid_argument("adam: tensor shape mismatch");
            T* p = params[i].data;
            const T* g = grads[i].data;
            T* m = m_[i].data();
            T* v = v_[i].data();
            for (size_t j = 0; j < params[i].n; ++j) {
                m[j] = static_cast<T>(spec_.beta1 * m[j] + (1.0 - spec_.beta1) * g[j]);
                v[j] = static_cast<T>(spec_.beta2 * v[j] + (1.0 - spec_.beta2) * g[j] * g[j]);
                const double mhat = m[j] / bc1;
                const double vhat = v[j] / bc2;
                p[j] -= static_cast<T>(spec_.learning_rate * mhat / (std::sqrt(vhat) + spec_.epsilon));
            }
        }
    }

  private:
    OptimizerSpec spec_;
    long t_ = 0;
    std::vector<std::vector<T>> m_, v_;
};

}  // namespace dfg
