#include "shardfl/engine.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "shardfl/config.hpp"

namespace shardfl::engine {

namespace {

// Stream purposes, keyed into digest64 so independent choices never share
// a stream.
enum : std::uint64_t { kInitSeed = 1, kMergeSeed = 2, kBatchSeed = 3 };

void warn(const std::string& msg) { std::cerr << "[shardfl] warning: " << msg << "\n"; }

}  // namespace

void RunConfig::validate() const {
    if (clients < 2) throw InvalidInputError("config: need at least two clients");
    if (merge_rate < 2) throw InvalidInputError("config: merge rate must be >= 2");
    if (t0 < 1) throw InvalidInputError("config: fixed round count must be >= 1");
    if (round_range.t0_star < 1 || round_range.t1_star < round_range.t0_star)
        throw InvalidInputError("config: bad adaptive round range");
    if (lr < 0.0) throw InvalidInputError("config: negative learning rate");
    if (local_steps < 1) throw InvalidInputError("config: local steps must be >= 1");
    if (batch_mode == BatchMode::Minibatch && batch_size < 1)
        throw InvalidInputError("config: mini-batch mode needs a positive batch size");
    if (pilot_tolerance <= 0.0) throw InvalidInputError("config: pilot tolerance must be positive");
    if (threads < 0) throw InvalidInputError("config: negative thread count");
    model.validate();
}

bool ShardNode::contains(int client) const {
    return std::binary_search(clients.begin(), clients.end(), client);
}

const ShardNode& ShardTree::root() const {
    if (stages.empty() || stages.back().empty()) throw InvalidInputError("tree has no stages");
    for (const auto& n : stages.back())
        if (!n.dropped) return n;
    throw InvalidInputError("tree has no live root shard");
}

const ParamVector& ShardTree::final_model() const { return root().theta_final; }

int ShardTree::shard_of(int stage, int client) const {
    if (stage < 0 || stage >= static_cast<int>(stages.size()))
        throw InvalidInputError("shard_of: stage out of range");
    for (const auto& n : stages[static_cast<std::size_t>(stage)])
        if (!n.dropped && n.contains(client)) return n.index;
    return -1;
}

std::vector<int> ShardTree::surviving_clients() const { return root().clients; }

int stages_for(int clients, int merge_rate) {
    if (clients < 1) throw InvalidInputError("stages_for: need at least one client");
    if (merge_rate < 2) throw InvalidInputError("stages_for: merge rate must be >= 2");
    int p = 0;
    for (int n = clients; n > 1; n = (n + merge_rate - 1) / merge_rate) ++p;
    return p;
}

std::vector<ShardNode> build_initial_stage(const RunConfig& cfg) {
    cfg.validate();
    ParamVector theta0 = numkit::init_params(cfg.model, digest64(cfg.master_seed, kInitSeed));
    std::vector<ShardNode> stage;
    stage.reserve(static_cast<std::size_t>(cfg.clients));
    for (int i = 0; i < cfg.clients; ++i) {
        ShardNode n;
        n.stage = 0;
        n.index = i;
        n.clients = {i};
        n.weight = 1.0;
        n.theta_init = theta0;
        n.theta_final = theta0;
        stage.push_back(std::move(n));
    }
    return stage;
}

ParamVector weighted_average(const std::vector<const ParamVector*>& params,
                             const std::vector<double>& weights) {
    if (params.empty()) throw InvalidInputError("weighted_average: nothing to average");
    if (params.size() != weights.size())
        throw InvalidInputError("weighted_average: weight count mismatch");
    double wsum = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw InvalidInputError("weighted_average: negative weight");
        wsum += w;
    }
    if (wsum <= 0.0) throw InvalidInputError("weighted_average: weights sum to zero");
    ParamVector acc(params[0]->size(), 0.0);
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i]->size() != acc.size())
            throw InvalidInputError("weighted_average: parameter size mismatch");
        numkit::axpy(weights[i], *params[i], acc);
    }
    numkit::scale(acc, 1.0 / wsum);
    return acc;
}

ParamVector init_super_shard(const std::vector<const ShardNode*>& children) {
    if (children.empty()) throw InvalidInputError("init_super_shard: no children");
    std::vector<const ParamVector*> params;
    std::vector<double> weights;
    params.reserve(children.size());
    weights.reserve(children.size());
    for (const ShardNode* c : children) {
        params.push_back(&c->theta_final);
        weights.push_back(c->weight);
    }
    return weighted_average(params, weights);
}

namespace {

// Dominant direction of the stage's residual set (updates with the global
// component removed), via power iteration from the largest residual. Sign
// is canonicalized against that largest residual. Empty result means the
// residuals carry no usable direction.
ParamVector principal_direction(const std::vector<ParamVector>& residuals) {
    std::size_t dom = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < residuals.size(); ++i) {
        double n = numkit::norm2(residuals[i]);
        if (n > best) {
            best = n;
            dom = i;
        }
    }
    if (best < 1e-15) return {};
    ParamVector v = residuals[dom];
    numkit::scale(v, 1.0 / best);
    for (int it = 0; it < 30; ++it) {
        ParamVector w(v.size(), 0.0);
        for (const auto& r : residuals) numkit::axpy(numkit::dot(r, v), r, w);
        double n = numkit::norm2(w);
        if (n < 1e-30) break;
        numkit::scale(w, 1.0 / n);
        v = std::move(w);
    }
    if (numkit::dot(v, residuals[dom]) < 0.0) numkit::scale(v, -1.0);
    return v;
}

}  // namespace

void refresh_stage_alphas(std::vector<ShardNode>& stage, const std::set<int>* only_indices) {
    std::vector<ShardNode*> live;
    std::vector<const ParamVector*> finals, inits;
    std::vector<double> w;
    for (auto& n : stage) {
        if (n.dropped) continue;
        live.push_back(&n);
        finals.push_back(&n.theta_final);
        inits.push_back(&n.theta_init);
        w.push_back(n.weight);
    }
    if (live.empty()) return;

    ParamVector agg = weighted_average(finals, w);
    ParamVector init_mean = weighted_average(inits, w);
    ParamVector g = numkit::sub(agg, init_mean);
    double gn = numkit::norm2(g);
    if (gn == 0.0 && live.front()->stage > 0)
        warn("stage " + std::to_string(live.front()->stage) +
             " produced no aggregate update; contribution angles set to 0");

    std::vector<ParamVector> residuals;
    std::vector<double> alphas(live.size(), 0.0);
    residuals.reserve(live.size());
    for (std::size_t i = 0; i < live.size(); ++i) {
        ParamVector u = numkit::sub(live[i]->theta_final, live[i]->theta_init);
        double un = numkit::norm2(u);
        if (un == 0.0 || gn == 0.0) {
            if (un == 0.0 && gn != 0.0)
                warn("shard " + std::to_string(live[i]->index) + " at stage " +
                     std::to_string(live[i]->stage) +
                     " produced no update; contribution angle set to 0");
            alphas[i] = 0.0;
            residuals.emplace_back(u.size(), 0.0);
        } else {
            alphas[i] = numkit::angle_between(u, g);
            double coef = numkit::dot(u, g) / numkit::dot(g, g);
            numkit::axpy(-coef, g, u);
            residuals.push_back(std::move(u));
        }
    }
    ParamVector ref = principal_direction(residuals);
    for (std::size_t i = 0; i < live.size(); ++i) {
        if (only_indices && !only_indices->count(live[i]->index)) continue;
        double sign = 1.0;
        if (!ref.empty() && numkit::dot(residuals[i], ref) < 0.0) sign = -1.0;
        live[i]->alpha = alphas[i];
        live[i]->alpha_signed = sign * alphas[i];
    }
}

ShardTrainResult train_shard(const ParamVector& theta_init, const std::vector<int>& client_ids,
                             const std::vector<ClientData>& data, int rounds,
                             const RunConfig& cfg, int stage, int shard_index) {
    return train_shard_span(theta_init, client_ids, data, rounds, cfg, stage, shard_index, 0);
}

ShardTrainResult train_shard_span(const ParamVector& theta_init,
                                  const std::vector<int>& client_ids,
                                  const std::vector<ClientData>& data, int rounds,
                                  const RunConfig& cfg, int stage, int shard_index,
                                  int round_base) {
    if (client_ids.empty()) throw InvalidInputError("train_shard: no clients");
    if (rounds < 0) throw InvalidInputError("train_shard: negative round count");

    ShardTrainResult res;
    res.theta = theta_init;
    std::vector<double> weights(client_ids.size());
    for (std::size_t i = 0; i < client_ids.size(); ++i) {
        int c = client_ids[i];
        if (c < 0 || c >= static_cast<int>(data.size()))
            throw InvalidInputError("train_shard: client id out of range");
        if (data[static_cast<std::size_t>(c)].train.size() == 0)
            throw DataError("client " + std::to_string(c) + " has no training samples");
        weights[i] = static_cast<double>(data[static_cast<std::size_t>(c)].train.size());
    }

    std::vector<ParamVector> locals(client_ids.size());
    std::vector<const ParamVector*> ptrs(client_ids.size());
    for (int r = 0; r < rounds; ++r) {
        for (std::size_t i = 0; i < client_ids.size(); ++i) {
            int c = client_ids[i];
            numkit::TrainOptions opts;
            opts.steps = cfg.local_steps;
            opts.lr = cfg.lr;
            if (cfg.batch_mode == BatchMode::Minibatch) {
                opts.batch_size = cfg.batch_size;
                opts.seed = digest64(cfg.master_seed, kBatchSeed,
                                     static_cast<std::uint64_t>(stage),
                                     static_cast<std::uint64_t>(shard_index),
                                     static_cast<std::uint64_t>(round_base + r),
                                     static_cast<std::uint64_t>(c));
            }
            locals[i] = numkit::local_train(res.theta, cfg.model,
                                            data[static_cast<std::size_t>(c)].train, opts);
            ptrs[i] = &locals[i];
        }
        ParamVector next = weighted_average(ptrs, weights);
        if (r == rounds - 1) {
            ParamVector agg_update = numkit::sub(next, res.theta);
            double an = numkit::norm2(agg_update);
            for (std::size_t i = 0; i < client_ids.size(); ++i) {
                ParamVector cu = numkit::sub(locals[i], res.theta);
                double cn = numkit::norm2(cu);
                double a = 0.0;
                if (cn == 0.0 || an == 0.0) {
                    warn("client " + std::to_string(client_ids[i]) +
                         " update degenerate in shard " + std::to_string(shard_index) +
                         " at stage " + std::to_string(stage) + "; contribution angle set to 0");
                } else {
                    a = numkit::angle_between(cu, agg_update);
                }
                res.client_alphas[client_ids[i]] = a;
            }
        }
        res.theta = std::move(next);
    }
    return res;
}

namespace {

// Merge the previous stage and seed the new super-shards (no training yet).
std::vector<ShardNode> plan_stage(const std::vector<ShardNode>& prev, int p,
                                  const RunConfig& cfg) {
    std::vector<double> signed_alphas;
    std::vector<int> counts;
    signed_alphas.reserve(prev.size());
    counts.reserve(prev.size());
    for (const auto& n : prev) {
        signed_alphas.push_back(n.alpha_signed);
        counts.push_back(static_cast<int>(n.clients.size()));
    }
    std::uint64_t seed = digest64(cfg.master_seed, kMergeSeed, static_cast<std::uint64_t>(p));
    adaptive::MergePlan plan =
        cfg.merge_policy == MergePolicy::Random
            ? adaptive::random_merge(static_cast<int>(prev.size()), cfg.merge_rate, seed)
            : adaptive::merge_shards_a1(signed_alphas, counts, cfg.merge_rate, seed);

    std::vector<ShardNode> stage;
    stage.reserve(plan.groups.size());
    for (std::size_t g = 0; g < plan.groups.size(); ++g) {
        ShardNode node;
        node.stage = p;
        node.index = static_cast<int>(g);
        node.children = plan.groups[g];
        std::vector<const ShardNode*> kids;
        kids.reserve(node.children.size());
        for (int ci : node.children) kids.push_back(&prev[static_cast<std::size_t>(ci)]);
        for (const ShardNode* k : kids)
            node.clients.insert(node.clients.end(), k->clients.begin(), k->clients.end());
        std::sort(node.clients.begin(), node.clients.end());
        node.weight = static_cast<double>(node.clients.size());
        node.theta_init = init_super_shard(kids);
        stage.push_back(std::move(node));
    }
    return stage;
}

void assign_rounds(std::vector<ShardNode>& stage, const std::vector<ShardNode>& prev,
                   const RunConfig& cfg) {
    if (cfg.round_policy == RoundPolicy::Fixed) {
        for (auto& n : stage) n.rounds = cfg.t0;
        return;
    }
    std::vector<std::vector<double>> child_alphas;
    child_alphas.reserve(stage.size());
    for (const auto& n : stage) {
        std::vector<double> a;
        a.reserve(n.children.size());
        for (int ci : n.children) a.push_back(prev[static_cast<std::size_t>(ci)].alpha);
        child_alphas.push_back(std::move(a));
    }
    auto rounds = adaptive::allocate_rounds_a2(child_alphas, cfg.round_range,
                                               cfg.a2_compat_inverse);
    for (std::size_t i = 0; i < stage.size(); ++i) stage[i].rounds = rounds[i];
}

void check_client_table(const RunConfig& cfg, const std::vector<ClientData>& data) {
    if (static_cast<int>(data.size()) != cfg.clients)
        throw InvalidInputError("client table size does not match configured client count");
    for (int i = 0; i < cfg.clients; ++i)
        if (data[static_cast<std::size_t>(i)].client_id != i)
            throw InvalidInputError("client table must be ordered by id 0..K-1");
}

}  // namespace

ShardTree run_training(const RunConfig& cfg, const datagen::DataConfig& dcfg,
                       const std::vector<ClientData>& data) {
    cfg.validate();
    check_client_table(cfg, data);

    RunConfig rc = cfg;
    if (rc.round_policy == RoundPolicy::Adaptive && rc.pilot_round_range) {
        auto counts = pilot_round_counts(cfg, data, cfg.pilot_tolerance);
        rc.round_range = adaptive::range_from_pilot(counts);
    }

    ShardTree tree;
    tree.merge_rate = rc.merge_rate;
    tree.num_stages = stages_for(rc.clients, rc.merge_rate);
    tree.config = rc;
    tree.data_config = dcfg;
    tree.stages.push_back(build_initial_stage(rc));

    for (int p = 1; p <= tree.num_stages; ++p) {
        const auto& prev = tree.stages[static_cast<std::size_t>(p - 1)];
        auto stage = plan_stage(prev, p, rc);
        assign_rounds(stage, prev, rc);

        std::vector<ShardTrainResult> results(stage.size());
        parallel_for(static_cast<int>(stage.size()), rc.threads, [&](int s) {
            auto& node = stage[static_cast<std::size_t>(s)];
            results[static_cast<std::size_t>(s)] = train_shard(
                node.theta_init, node.clients, data, node.rounds, rc, p, node.index);
        });
        for (std::size_t s = 0; s < stage.size(); ++s) {
            stage[s].theta_final = std::move(results[s].theta);
            tree.counted_client_rounds +=
                static_cast<long long>(stage[s].rounds) *
                static_cast<long long>(stage[s].clients.size());
            for (const auto& [cid, a] : results[s].client_alphas)
                tree.client_alphas[cid] = ContributionEntry{a, p};
        }
        refresh_stage_alphas(stage, nullptr);
        tree.stages.push_back(std::move(stage));
    }

    tree.config_digest = config::config_digest_of(rc, dcfg);
    return tree;
}

ShardTree replay_training(const ShardTree& structure, const std::vector<ClientData>& data,
                          const std::set<int>& exclude) {
    const RunConfig& rc = structure.config;
    check_client_table(rc, data);

    ShardTree tree;
    tree.merge_rate = structure.merge_rate;
    tree.num_stages = structure.num_stages;
    tree.config = rc;
    tree.data_config = structure.data_config;
    tree.config_digest = structure.config_digest;

    tree.stages.push_back(build_initial_stage(rc));
    for (auto& n : tree.stages[0]) {
        const ShardNode& orig = structure.stages[0][static_cast<std::size_t>(n.index)];
        if (orig.dropped || exclude.count(n.index)) {
            n.dropped = true;
            n.clients.clear();
            n.weight = 0.0;
            n.theta_init.clear();
            n.theta_final.clear();
        }
    }

    for (int p = 1; p <= tree.num_stages; ++p) {
        const auto& orig_stage = structure.stages[static_cast<std::size_t>(p)];
        const auto& prev = tree.stages[static_cast<std::size_t>(p - 1)];
        std::vector<ShardNode> stage;
        stage.reserve(orig_stage.size());
        for (const auto& orig : orig_stage) {
            ShardNode n;
            n.stage = p;
            n.index = orig.index;
            n.children = orig.children;
            n.rounds = orig.rounds;
            n.dropped = orig.dropped;
            if (!n.dropped) {
                for (int c : orig.clients)
                    if (!exclude.count(c)) n.clients.push_back(c);
            }
            if (n.clients.empty()) {
                n.dropped = true;
            } else {
                n.weight = static_cast<double>(n.clients.size());
                std::vector<const ShardNode*> kids;
                for (int ci : n.children) {
                    const auto& child = prev[static_cast<std::size_t>(ci)];
                    if (!child.dropped) kids.push_back(&child);
                }
                n.theta_init = init_super_shard(kids);
            }
            stage.push_back(std::move(n));
        }

        std::vector<ShardTrainResult> results(stage.size());
        parallel_for(static_cast<int>(stage.size()), rc.threads, [&](int s) {
            auto& node = stage[static_cast<std::size_t>(s)];
            if (node.dropped) return;
            results[static_cast<std::size_t>(s)] = train_shard(
                node.theta_init, node.clients, data, node.rounds, rc, p, node.index);
        });
        for (std::size_t s = 0; s < stage.size(); ++s) {
            if (stage[s].dropped) continue;
            stage[s].theta_final = std::move(results[s].theta);
            tree.counted_client_rounds +=
                static_cast<long long>(stage[s].rounds) *
                static_cast<long long>(stage[s].clients.size());
            for (const auto& [cid, a] : results[s].client_alphas)
                tree.client_alphas[cid] = ContributionEntry{a, p};
        }
        refresh_stage_alphas(stage, nullptr);
        tree.stages.push_back(std::move(stage));
    }
    return tree;
}

std::vector<int> pilot_round_counts(const RunConfig& cfg, const std::vector<ClientData>& data,
                                    double tolerance, int cap) {
    cfg.validate();
    check_client_table(cfg, data);
    if (tolerance <= 0.0) throw InvalidInputError("pilot: tolerance must be positive");
    if (cap < 1) throw InvalidInputError("pilot: cap must be >= 1");

    auto shard_loss = [&](const ParamVector& theta, const std::vector<int>& ids) {
        double acc = 0.0;
        double n = 0.0;
        for (int c : ids) {
            const auto& d = data[static_cast<std::size_t>(c)].train;
            acc += numkit::loss_only(theta, cfg.model, d) * static_cast<double>(d.size());
            n += static_cast<double>(d.size());
        }
        return acc / n;
    };

    std::vector<std::vector<ShardNode>> stages;
    stages.push_back(build_initial_stage(cfg));
    std::vector<int> observed;
    int pilot_stages = std::min(2, stages_for(cfg.clients, cfg.merge_rate));

    for (int p = 1; p <= pilot_stages; ++p) {
        auto stage = plan_stage(stages[static_cast<std::size_t>(p - 1)], p, cfg);
        std::vector<int> rounds_taken(stage.size(), 0);
        parallel_for(static_cast<int>(stage.size()), cfg.threads, [&](int s) {
            auto& node = stage[static_cast<std::size_t>(s)];
            ParamVector theta = node.theta_init;
            double prev_loss = shard_loss(theta, node.clients);
            int r = 0;
            for (; r < cap;) {
                auto res = train_shard_span(theta, node.clients, data, 1, cfg, p, node.index, r);
                theta = std::move(res.theta);
                ++r;
                double cur = shard_loss(theta, node.clients);
                if (prev_loss - cur < tolerance) break;
                prev_loss = cur;
            }
            node.theta_final = std::move(theta);
            node.rounds = r;
            rounds_taken[static_cast<std::size_t>(s)] = r;
        });
        observed.insert(observed.end(), rounds_taken.begin(), rounds_taken.end());
        refresh_stage_alphas(stage, nullptr);
        stages.push_back(std::move(stage));
    }
    return observed;
}

std::string model_digest(const ParamVector& params) {
    if (params.empty()) return to_hex(fnv1a64("", 0));
    return to_hex(fnv1a64(params.data(), params.size() * sizeof(double)));
}

}  // namespace shardfl::engine
