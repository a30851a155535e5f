#include "shardfl/scenarios.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace shardfl::scenarios {

namespace {

// Stream purpose for the flat baseline, distinct from the engine's tags.
enum : std::uint64_t { kScratchSeed = 7 };

double accuracy_on(const ParamVector& model, const engine::RunConfig& rc,
                   const numkit::Dataset& test) {
    return numkit::evaluate(model, rc.model, test).accuracy;
}

std::map<int, double> alpha_table(const engine::ShardTree& tree) {
    std::map<int, double> out;
    for (const auto& [c, entry] : tree.client_alphas) out[c] = entry.alpha;
    return out;
}

}  // namespace

unlearn::UnlearnResult mock_unlearn(const engine::ShardTree& tree,
                                    const std::vector<engine::ClientData>& data,
                                    const std::vector<int>& leavers,
                                    const MockUnlearnParams& params) {
    if (params.gamma < 0) throw InvalidInputError("mock_unlearn: gamma must be >= 0");
    if (!(params.similar_fraction > 0.0) || params.similar_fraction > 1.0)
        throw InvalidInputError("mock_unlearn: similar_fraction must lie in (0, 1]");
    if (!(params.lr > 0.0)) throw InvalidInputError("mock_unlearn: lr must be positive");

    auto alphas = alpha_table(tree);
    auto res = unlearn::unlearn(tree, leavers, data);
    if (params.gamma == 0) return res;

    double leaver_mean = 0.0;
    for (int c : leavers) leaver_mean += alphas.at(c);
    leaver_mean /= static_cast<double>(leavers.size());

    std::vector<int> remaining = res.tree.surviving_clients();
    std::stable_sort(remaining.begin(), remaining.end(), [&](int a, int b) {
        return std::abs(alphas.at(a) - leaver_mean) < std::abs(alphas.at(b) - leaver_mean);
    });
    auto take = static_cast<std::size_t>(
        std::ceil(static_cast<double>(remaining.size()) * params.similar_fraction));
    take = std::clamp<std::size_t>(take, 1, remaining.size());
    std::vector<int> targets(remaining.begin(), remaining.begin() + static_cast<long>(take));
    std::sort(targets.begin(), targets.end());

    numkit::Dataset pooled;
    pooled.feature_dim = data.at(0).train.feature_dim;
    for (int c : targets) {
        const auto& d = data.at(static_cast<std::size_t>(c)).train;
        for (std::size_t i = 0; i < d.size(); ++i) pooled.append(d.row(i), d.labels[i]);
    }

    ParamVector theta = res.model;
    ParamVector grad;
    for (int step = 0; step < params.gamma; ++step) {
        numkit::loss_and_grad(theta, tree.config.model, pooled, grad);
        numkit::axpy(params.lr, grad, theta);
    }
    res.model = theta;
    return res;
}

CascadeOutcome run_cascade(const engine::RunConfig& rc, const datagen::DataConfig& dc,
                           const CascadeParams& params) {
    if (params.initial_leavers < 1 || params.initial_leavers > rc.clients - 2)
        throw InvalidInputError("cascade: initial_leavers must leave at least 2 clients");
    if (params.unlearner != "exact" && params.unlearner != "mock")
        throw InvalidInputError("cascade: unknown unlearner");

    auto data = datagen::build_client_data(dc, rc.clients);
    auto tree = engine::run_training(rc, dc, data);
    const ParamVector model_pre = tree.final_model();

    CascadeOutcome out;
    for (int c = rc.clients - params.initial_leavers; c < rc.clients; ++c)
        out.leavers.push_back(c);

    unlearn::UnlearnResult res;
    if (params.unlearner == "exact") {
        res = unlearn::unlearn(tree, out.leavers, data);
    } else {
        MockUnlearnParams mp{params.gamma, params.similar_fraction,
                             params.ascent_lr < 0.0 ? rc.lr : params.ascent_lr};
        res = mock_unlearn(tree, data, out.leavers, mp);
    }

    std::map<int, double> post_acc;
    for (int c = 0; c < rc.clients; ++c) {
        const auto& test = data[static_cast<std::size_t>(c)].test;
        double pre = accuracy_on(model_pre, rc, test);
        double post = accuracy_on(res.model, rc, test);
        post_acc[c] = post;
        out.delta_y[c] = pre - post;
    }

    // Leaving forfeits the model but saves the removal cost, measured
    // against a flat from-scratch retrain of everyone.
    auto sweep = unlearn::sweep_all_single_costs(res.tree, unlearn::SweepMode::CountOnly);
    double scratch = static_cast<double>(tree.num_stages) * static_cast<double>(rc.t0) *
                     static_cast<double>(rc.clients);
    std::vector<int> remaining = res.tree.surviving_clients();
    for (int c : remaining) {
        double z = sweep.cost.at(c) / scratch;
        out.threshold[c] = post_acc[c] - z;
        if (out.delta_y[c] > out.threshold[c]) out.second_wave.push_back(c);
    }
    out.cascade_count = static_cast<int>(out.second_wave.size());

    fairness::FairnessInputs fin;
    fin.delta_y = out.delta_y;
    fin.alpha = alpha_table(tree);
    fin.remaining = remaining;
    fin.leaving = out.leavers;
    out.mp = fairness::m_p(fin);
    return out;
}

DpaOutcome run_dpa(const engine::RunConfig& rc, const datagen::DataConfig& dc,
                   const DpaParams& params) {
    if (!(params.attacker_fraction > 0.0) || params.attacker_fraction > 0.5)
        throw InvalidInputError("dpa: attacker_fraction must lie in (0, 0.5]");
    if (params.tau < 0.0) throw InvalidInputError("dpa: tau must be >= 0");
    if (params.unlearner != "exact" && params.unlearner != "mock")
        throw InvalidInputError("dpa: unknown unlearner");

    datagen::DataConfig dc2 = dc;
    dc2.partition = datagen::PartitionMode::TwoGroup;
    dc2.majority_fraction = 1.0 - params.attacker_fraction;
    auto data = datagen::build_client_data(dc2, rc.clients);

    DpaOutcome out;
    int majority = datagen::majority_count(dc2.majority_fraction, rc.clients);
    for (int c = majority; c < rc.clients; ++c) out.attackers.push_back(c);

    auto tree = engine::run_training(rc, dc2, data);
    const ParamVector model_pre = tree.final_model();
    std::set<int> exclude(out.attackers.begin(), out.attackers.end());
    auto reference = engine::replay_training(tree, data, exclude);
    const ParamVector& model_ref = reference.final_model();

    unlearn::UnlearnResult res;
    if (params.unlearner == "exact") {
        res = unlearn::unlearn(tree, out.attackers, data);
    } else {
        MockUnlearnParams mp{params.gamma, params.similar_fraction,
                             params.ascent_lr < 0.0 ? rc.lr : params.ascent_lr};
        res = mock_unlearn(tree, data, out.attackers, mp);
    }

    double drop_sum = 0.0;
    std::vector<int> survivors = res.tree.surviving_clients();
    for (int c : survivors) {
        const auto& test = data[static_cast<std::size_t>(c)].test;
        double ref = accuracy_on(model_ref, rc, test);
        double post = accuracy_on(res.model, rc, test);
        drop_sum += ref - post;
        if (post < ref - params.tau) out.poisoned.push_back(c);
    }
    out.mean_accuracy_drop = drop_sum / static_cast<double>(survivors.size());
    out.precision =
        static_cast<double>(out.poisoned.size()) / static_cast<double>(rc.clients);

    for (int c = 0; c < rc.clients; ++c) {
        const auto& test = data[static_cast<std::size_t>(c)].test;
        out.delta_y[c] = accuracy_on(model_pre, rc, test) - accuracy_on(res.model, rc, test);
    }
    fairness::FairnessInputs fin;
    fin.delta_y = out.delta_y;
    fin.alpha = alpha_table(tree);
    fin.remaining = survivors;
    fin.leaving = out.attackers;
    out.mp = fairness::m_p(fin);
    return out;
}

BaselineResult scratch_retrain(const engine::RunConfig& rc,
                               const std::vector<engine::ClientData>& data,
                               const std::vector<int>& excluded, const ParamVector& theta_init) {
    rc.validate();
    std::set<int> gone(excluded.begin(), excluded.end());
    if (gone.size() != excluded.size())
        throw RequestError("scratch retrain: duplicate excluded client");
    for (int c : gone)
        if (c < 0 || c >= static_cast<int>(data.size()))
            throw RequestError("scratch retrain: unknown client id");
    std::vector<int> survivors;
    for (int c = 0; c < static_cast<int>(data.size()); ++c)
        if (!gone.count(c)) survivors.push_back(c);
    if (survivors.empty()) throw RequestError("scratch retrain: no clients left");

    BaselineResult out;
    out.rounds = engine::stages_for(rc.clients, rc.merge_rate) * rc.t0;
    out.client_rounds =
        static_cast<long long>(out.rounds) * static_cast<long long>(survivors.size());

    std::vector<double> weights(survivors.size());
    for (std::size_t i = 0; i < survivors.size(); ++i)
        weights[i] =
            static_cast<double>(data[static_cast<std::size_t>(survivors[i])].train.size());

    ParamVector theta = theta_init;
    std::vector<ParamVector> locals(survivors.size());
    std::vector<const ParamVector*> ptrs(survivors.size());
    for (int r = 0; r < out.rounds; ++r) {
        for (std::size_t i = 0; i < survivors.size(); ++i) {
            int c = survivors[i];
            numkit::TrainOptions opts;
            opts.steps = rc.local_steps;
            opts.lr = rc.lr;
            if (rc.batch_mode == engine::BatchMode::Minibatch) {
                opts.batch_size = rc.batch_size;
                opts.seed = digest64(rc.master_seed, kScratchSeed, static_cast<std::uint64_t>(r),
                                     static_cast<std::uint64_t>(c));
            }
            locals[i] = numkit::local_train(theta, rc.model,
                                            data[static_cast<std::size_t>(c)].train, opts);
            ptrs[i] = &locals[i];
        }
        theta = engine::weighted_average(ptrs, weights);
    }
    out.model = theta;
    return out;
}

}  // namespace shardfl::scenarios
