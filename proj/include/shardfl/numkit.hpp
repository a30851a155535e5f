// Small dense models on flat parameter vectors: linear softmax and an
// optional one-hidden-layer MLP. Everything is double precision and
// deterministic; training results depend only on (params, data, config, seed).
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "shardfl/common.hpp"

namespace shardfl::numkit {

using ParamVector = std::vector<double>;

enum class Arch { Linear, Mlp };
enum class Activation { Tanh, Relu };

struct ModelSpec {
    Arch arch{Arch::Linear};
    int input_dim{0};
    int num_labels{0};
    int hidden{0};                     // MLP only
    Activation act{Activation::Tanh};  // MLP only

    // Canonical flat layout, layer by layer: weights row-major, then biases.
    //   Linear: W (L x d), b (L)
    //   Mlp:    W1 (H x d), b1 (H), W2 (L x H), b2 (L)
    int param_count() const;
    void validate() const;
};

struct Dataset {
    int feature_dim{0};
    std::vector<double> features;  // row-major, size() * feature_dim
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }
    std::span<const double> row(std::size_t i) const {
        return {features.data() + static_cast<std::ptrdiff_t>(i) * feature_dim,
                static_cast<std::size_t>(feature_dim)};
    }
    void append(std::span<const double> x, int label);
};

// ---- vector helpers (fixed evaluation order, no reordering) ----
double dot(const ParamVector& a, const ParamVector& b);
double norm2(const ParamVector& v);
ParamVector sub(const ParamVector& a, const ParamVector& b);
void axpy(double a, const ParamVector& x, ParamVector& y);  // y += a*x
void scale(ParamVector& v, double a);

// Seeded uniform init, entries scaled by 1/sqrt(fan_in) of their layer.
ParamVector init_params(const ModelSpec& spec, std::uint64_t seed);

// Mean softmax cross-entropy over `data` and its analytic gradient.
// Returns the loss; grad is resized and overwritten.
double loss_and_grad(const ParamVector& params, const ModelSpec& spec,
                     const Dataset& data, ParamVector& grad);
double loss_only(const ParamVector& params, const ModelSpec& spec, const Dataset& data);

struct TrainOptions {
    int steps{1};
    double lr{0.1};
    int batch_size{0};         // 0 = full batch
    std::uint64_t seed{0};     // sample order for mini-batches
};

// Gradient descent from `params`; full batch by default. With a positive
// batch_size the sample order is a seeded shuffle consumed cyclically.
ParamVector local_train(const ParamVector& params, const ModelSpec& spec,
                        const Dataset& data, const TrainOptions& opts);

// arccos of the clamped cosine between a and b, in [0, pi].
// Zero-length input is rejected; callers that want "no update -> angle 0"
// handle that case themselves.
double angle_between(const ParamVector& a, const ParamVector& b);

struct EvalResult {
    double accuracy{0.0};
    double mean_loss{0.0};
    std::size_t correct{0};
    std::size_t total{0};
};

// Argmax prediction; ties go to the lowest label index.
EvalResult evaluate(const ParamVector& params, const ModelSpec& spec, const Dataset& data);

}  // namespace shardfl::numkit
