#include "shardfl/numkit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace shardfl::numkit {

int ModelSpec::param_count() const {
    if (arch == Arch::Linear) return num_labels * input_dim + num_labels;
    return hidden * input_dim + hidden + num_labels * hidden + num_labels;
}

void ModelSpec::validate() const {
    if (input_dim <= 0) throw InvalidInputError("model: input_dim must be positive");
    if (num_labels < 2) throw InvalidInputError("model: need at least two labels");
    if (arch == Arch::Mlp && hidden <= 0)
        throw InvalidInputError("model: mlp requires a positive hidden width");
}

void Dataset::append(std::span<const double> x, int label) {
    if (feature_dim == 0) feature_dim = static_cast<int>(x.size());
    if (static_cast<int>(x.size()) != feature_dim)
        throw InvalidInputError("dataset: inconsistent feature width");
    features.insert(features.end(), x.begin(), x.end());
    labels.push_back(label);
}

double dot(const ParamVector& a, const ParamVector& b) {
    if (a.size() != b.size()) throw InvalidInputError("dot: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(const ParamVector& v) { return std::sqrt(dot(v, v)); }

ParamVector sub(const ParamVector& a, const ParamVector& b) {
    if (a.size() != b.size()) throw InvalidInputError("sub: size mismatch");
    ParamVector r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
    return r;
}

void axpy(double a, const ParamVector& x, ParamVector& y) {
    if (x.size() != y.size()) throw InvalidInputError("axpy: size mismatch");
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

void scale(ParamVector& v, double a) {
    for (auto& x : v) x *= a;
}

ParamVector init_params(const ModelSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(seed);
    ParamVector p(static_cast<std::size_t>(spec.param_count()));
    std::size_t k = 0;
    auto fill = [&](int count, int fan_in) {
        double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (int i = 0; i < count; ++i) p[k++] = rng.uniform(-s, s);
    };
    if (spec.arch == Arch::Linear) {
        fill(spec.num_labels * spec.input_dim, spec.input_dim);
        fill(spec.num_labels, spec.input_dim);
    } else {
        fill(spec.hidden * spec.input_dim, spec.input_dim);
        fill(spec.hidden, spec.input_dim);
        fill(spec.num_labels * spec.hidden, spec.hidden);
        fill(spec.num_labels, spec.hidden);
    }
    return p;
}

namespace {

struct Layout {
    // Offsets into the flat vector.
    std::size_t w1{0}, b1{0}, w2{0}, b2{0};
};

Layout layout_of(const ModelSpec& spec) {
    Layout l;
    if (spec.arch == Arch::Linear) {
        l.w1 = 0;
        l.b1 = static_cast<std::size_t>(spec.num_labels) * spec.input_dim;
    } else {
        l.w1 = 0;
        l.b1 = static_cast<std::size_t>(spec.hidden) * spec.input_dim;
        l.w2 = l.b1 + static_cast<std::size_t>(spec.hidden);
        l.b2 = l.w2 + static_cast<std::size_t>(spec.num_labels) * spec.hidden;
    }
    return l;
}

double act_fwd(Activation a, double x) {
    return a == Activation::Tanh ? std::tanh(x) : (x > 0.0 ? x : 0.0);
}

double act_bwd(Activation a, double pre, double post) {
    return a == Activation::Tanh ? 1.0 - post * post : (pre > 0.0 ? 1.0 : 0.0);
}

// Softmax of logits in place; returns log-sum-exp shift for the loss.
void softmax_inplace(std::vector<double>& z) {
    double m = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (auto& v : z) {
        v = std::exp(v - m);
        sum += v;
    }
    for (auto& v : z) v /= sum;
}

// Accumulates loss and gradient over rows [begin, end) of index list `idx`.
double accumulate_batch(const ParamVector& params, const ModelSpec& spec,
                        const Dataset& data, const std::vector<std::size_t>& idx,
                        std::size_t begin, std::size_t end, ParamVector* grad) {
    const Layout L = layout_of(spec);
    const int d = spec.input_dim;
    const int nl = spec.num_labels;
    const int h = spec.hidden;
    const double inv_n = 1.0 / static_cast<double>(end - begin);

    std::vector<double> logits(static_cast<std::size_t>(nl));
    std::vector<double> pre(spec.arch == Arch::Mlp ? static_cast<std::size_t>(h) : 0);
    std::vector<double> hid(pre.size());
    std::vector<double> dhid(pre.size());
    double loss = 0.0;

    for (std::size_t r = begin; r < end; ++r) {
        auto x = data.row(idx[r]);
        int y = data.labels[idx[r]];
        if (y < 0 || y >= nl) throw InvalidInputError("label out of range");

        if (spec.arch == Arch::Linear) {
            for (int j = 0; j < nl; ++j) {
                double s = params[L.b1 + static_cast<std::size_t>(j)];
                const double* w = params.data() + L.w1 + static_cast<std::size_t>(j) * d;
                for (int i = 0; i < d; ++i) s += w[i] * x[static_cast<std::size_t>(i)];
                logits[static_cast<std::size_t>(j)] = s;
            }
        } else {
            for (int j = 0; j < h; ++j) {
                double s = params[L.b1 + static_cast<std::size_t>(j)];
                const double* w = params.data() + L.w1 + static_cast<std::size_t>(j) * d;
                for (int i = 0; i < d; ++i) s += w[i] * x[static_cast<std::size_t>(i)];
                pre[static_cast<std::size_t>(j)] = s;
                hid[static_cast<std::size_t>(j)] = act_fwd(spec.act, s);
            }
            for (int j = 0; j < nl; ++j) {
                double s = params[L.b2 + static_cast<std::size_t>(j)];
                const double* w = params.data() + L.w2 + static_cast<std::size_t>(j) * h;
                for (int i = 0; i < h; ++i) s += w[i] * hid[static_cast<std::size_t>(i)];
                logits[static_cast<std::size_t>(j)] = s;
            }
        }

        softmax_inplace(logits);
        double py = std::max(logits[static_cast<std::size_t>(y)], 1e-300);
        loss -= std::log(py) * inv_n;
        if (!grad) continue;

        // dL/dlogit = (p - onehot(y)) / n
        logits[static_cast<std::size_t>(y)] -= 1.0;
        for (auto& v : logits) v *= inv_n;

        if (spec.arch == Arch::Linear) {
            for (int j = 0; j < nl; ++j) {
                double g = logits[static_cast<std::size_t>(j)];
                double* gw = grad->data() + L.w1 + static_cast<std::size_t>(j) * d;
                for (int i = 0; i < d; ++i) gw[i] += g * x[static_cast<std::size_t>(i)];
                (*grad)[L.b1 + static_cast<std::size_t>(j)] += g;
            }
        } else {
            std::fill(dhid.begin(), dhid.end(), 0.0);
            for (int j = 0; j < nl; ++j) {
                double g = logits[static_cast<std::size_t>(j)];
                double* gw = grad->data() + L.w2 + static_cast<std::size_t>(j) * h;
                const double* w = params.data() + L.w2 + static_cast<std::size_t>(j) * h;
                for (int i = 0; i < h; ++i) {
                    gw[i] += g * hid[static_cast<std::size_t>(i)];
                    dhid[static_cast<std::size_t>(i)] += g * w[i];
                }
                (*grad)[L.b2 + static_cast<std::size_t>(j)] += g;
            }
            for (int j = 0; j < h; ++j) {
                double g = dhid[static_cast<std::size_t>(j)] *
                           act_bwd(spec.act, pre[static_cast<std::size_t>(j)],
                                   hid[static_cast<std::size_t>(j)]);
                double* gw = grad->data() + L.w1 + static_cast<std::size_t>(j) * d;
                for (int i = 0; i < d; ++i) gw[i] += g * x[static_cast<std::size_t>(i)];
                (*grad)[L.b1 + static_cast<std::size_t>(j)] += g;
            }
        }
    }
    return loss;
}

std::vector<std::size_t> identity_index(std::size_t n) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return idx;
}

void check_inputs(const ParamVector& params, const ModelSpec& spec, const Dataset& data) {
    spec.validate();
    if (static_cast<int>(params.size()) != spec.param_count())
        throw InvalidInputError("params size does not match model spec");
    if (data.size() == 0) throw InvalidInputError("empty dataset");
    if (data.feature_dim != spec.input_dim)
        throw InvalidInputError("dataset feature width does not match model spec");
}

}  // namespace

double loss_and_grad(const ParamVector& params, const ModelSpec& spec,
                     const Dataset& data, ParamVector& grad) {
    check_inputs(params, spec, data);
    grad.assign(params.size(), 0.0);
    auto idx = identity_index(data.size());
    return accumulate_batch(params, spec, data, idx, 0, idx.size(), &grad);
}

double loss_only(const ParamVector& params, const ModelSpec& spec, const Dataset& data) {
    check_inputs(params, spec, data);
    auto idx = identity_index(data.size());
    return accumulate_batch(params, spec, data, idx, 0, idx.size(), nullptr);
}

ParamVector local_train(const ParamVector& params, const ModelSpec& spec,
                        const Dataset& data, const TrainOptions& opts) {
    check_inputs(params, spec, data);
    if (opts.steps < 0) throw InvalidInputError("local_train: negative step count");
    ParamVector theta = params;
    ParamVector grad(theta.size());

    if (opts.batch_size <= 0) {
        auto idx = identity_index(data.size());
        for (int s = 0; s < opts.steps; ++s) {
            grad.assign(theta.size(), 0.0);
            accumulate_batch(theta, spec, data, idx, 0, idx.size(), &grad);
            axpy(-opts.lr, grad, theta);
        }
        return theta;
    }

    // Mini-batch: one seeded shuffle, consumed cyclically across steps.
    auto idx = identity_index(data.size());
    Rng rng(opts.seed);
    rng.shuffle(idx);
    std::size_t bs = std::min<std::size_t>(static_cast<std::size_t>(opts.batch_size), idx.size());
    std::size_t cursor = 0;
    for (int s = 0; s < opts.steps; ++s) {
        if (cursor + bs > idx.size()) cursor = 0;
        grad.assign(theta.size(), 0.0);
        accumulate_batch(theta, spec, data, idx, cursor, cursor + bs, &grad);
        axpy(-opts.lr, grad, theta);
        cursor += bs;
    }
    return theta;
}

double angle_between(const ParamVector& a, const ParamVector& b) {
    double na = norm2(a);
    double nb = norm2(b);
    if (na == 0.0 || nb == 0.0)
        throw InvalidInputError("angle_between: zero-length vector");
    double c = dot(a, b) / (na * nb);
    c = std::clamp(c, -1.0, 1.0);
    return std::acos(c);
}

EvalResult evaluate(const ParamVector& params, const ModelSpec& spec, const Dataset& data) {
    check_inputs(params, spec, data);
    const Layout L = layout_of(spec);
    const int d = spec.input_dim;
    const int nl = spec.num_labels;
    const int h = spec.hidden;

    EvalResult r;
    r.total = data.size();
    std::vector<double> logits(static_cast<std::size_t>(nl));
    std::vector<double> hid(spec.arch == Arch::Mlp ? static_cast<std::size_t>(h) : 0);
    double loss = 0.0;

    for (std::size_t n = 0; n < data.size(); ++n) {
        auto x = data.row(n);
        if (spec.arch == Arch::Linear) {
            for (int j = 0; j < nl; ++j) {
                double s = params[L.b1 + static_cast<std::size_t>(j)];
                const double* w = params.data() + L.w1 + static_cast<std::size_t>(j) * d;
                for (int i = 0; i < d; ++i) s += w[i] * x[static_cast<std::size_t>(i)];
                logits[static_cast<std::size_t>(j)] = s;
            }
        } else {
            for (int j = 0; j < h; ++j) {
                double s = params[L.b1 + static_cast<std::size_t>(j)];
                const double* w = params.data() + L.w1 + static_cast<std::size_t>(j) * d;
                for (int i = 0; i < d; ++i) s += w[i] * x[static_cast<std::size_t>(i)];
                hid[static_cast<std::size_t>(j)] = act_fwd(spec.act, s);
            }
            for (int j = 0; j < nl; ++j) {
                double s = params[L.b2 + static_cast<std::size_t>(j)];
                const double* w = params.data() + L.w2 + static_cast<std::size_t>(j) * h;
                for (int i = 0; i < h; ++i) s += w[i] * hid[static_cast<std::size_t>(i)];
                logits[static_cast<std::size_t>(j)] = s;
            }
        }
        int best = 0;
        for (int j = 1; j < nl; ++j)
            if (logits[static_cast<std::size_t>(j)] > logits[static_cast<std::size_t>(best)])
                best = j;
        if (best == data.labels[n]) ++r.correct;

        softmax_inplace(logits);
        double py = std::max(logits[static_cast<std::size_t>(data.labels[n])], 1e-300);
        loss -= std::log(py);
    }
    r.accuracy = static_cast<double>(r.correct) / static_cast<double>(r.total);
    r.mean_loss = loss / static_cast<double>(r.total);
    return r;
}

}  // namespace shardfl::numkit
