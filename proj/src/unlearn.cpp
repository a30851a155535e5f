#include "shardfl/unlearn.hpp"

#include <algorithm>
#include <chrono>
#include <set>

namespace shardfl::unlearn {

using engine::ShardNode;
using engine::ShardTree;

namespace {

std::set<int> validate_request(const ShardTree& tree, const std::vector<int>& leavers) {
    if (leavers.empty()) throw RequestError("unlearn: empty leaver list");
    std::set<int> set(leavers.begin(), leavers.end());
    if (set.size() != leavers.size()) throw RequestError("unlearn: duplicate client id");
    auto surviving = tree.surviving_clients();
    for (int c : set) {
        if (!std::binary_search(surviving.begin(), surviving.end(), c))
            throw RequestError("unlearn: client " + std::to_string(c) +
                               " is not part of the trained population");
    }
    if (set.size() >= surviving.size())
        throw RequestError("unlearn: at least one client must remain");
    return set;
}

bool intersects(const ShardNode& node, const std::set<int>& leavers) {
    for (int c : leavers)
        if (node.contains(c)) return true;
    return false;
}

}  // namespace

std::vector<std::vector<int>> find_affected(const ShardTree& tree,
                                            const std::vector<int>& leavers) {
    auto set = validate_request(tree, leavers);
    std::vector<std::vector<int>> affected;
    for (int p = 1; p <= tree.num_stages; ++p) {
        std::vector<int> at_stage;
        for (const auto& n : tree.stages[static_cast<std::size_t>(p)])
            if (!n.dropped && intersects(n, set)) at_stage.push_back(n.index);
        affected.push_back(std::move(at_stage));
    }
    return affected;
}

UnlearnResult unlearn(const ShardTree& tree, const std::vector<int>& leavers,
                      const std::vector<engine::ClientData>& data) {
    auto t_begin = std::chrono::steady_clock::now();
    auto set = validate_request(tree, leavers);

    UnlearnResult out;
    out.tree = tree;
    ShardTree& work = out.tree;
    const engine::RunConfig& cfg = work.config;

    // p': the deepest stage that still has a shard outside every leaver's
    // path. Shallower stages than this keep untouched shards to reuse.
    for (int p = 1; p <= work.num_stages; ++p) {
        for (const auto& n : work.stages[static_cast<std::size_t>(p)]) {
            if (!n.dropped && !intersects(n, set)) {
                out.ledger.p_prime = p;
                break;
            }
        }
    }

    // Stage 0: leavers' singletons disappear; nothing retrains.
    for (auto& n : work.stages[0]) {
        if (!n.dropped && set.count(n.clients.front())) {
            n.dropped = true;
            n.clients.clear();
            n.weight = 0.0;
            n.theta_init.clear();
            n.theta_final.clear();
        }
    }
    for (int c : set) work.client_alphas.erase(c);

    for (int p = 1; p <= work.num_stages; ++p) {
        auto& stage = work.stages[static_cast<std::size_t>(p)];
        const auto& prev = work.stages[static_cast<std::size_t>(p - 1)];
        StageCost cost;
        cost.stage = p;

        std::vector<ShardNode*> retrain;
        for (auto& n : stage) {
            if (n.dropped || !intersects(n, set)) continue;
            cost.paper_client_rounds +=
                static_cast<long long>(n.rounds) * static_cast<long long>(n.clients.size());

            std::vector<int> survivors;
            survivors.reserve(n.clients.size());
            for (int c : n.clients)
                if (!set.count(c)) survivors.push_back(c);
            if (survivors.empty()) {
                n.dropped = true;
                n.clients.clear();
                n.weight = 0.0;
                n.theta_init.clear();
                n.theta_final.clear();
                cost.affected.push_back(n.index);
                continue;
            }
            n.clients = std::move(survivors);
            n.weight = static_cast<double>(n.clients.size());

            std::vector<const ShardNode*> kids;
            for (int ci : n.children) {
                const auto& child = prev[static_cast<std::size_t>(ci)];
                if (!child.dropped) kids.push_back(&child);
            }
            n.theta_init = engine::init_super_shard(kids);

            cost.affected.push_back(n.index);
            cost.actual_client_rounds +=
                static_cast<long long>(n.rounds) * static_cast<long long>(n.clients.size());
            retrain.push_back(&n);
        }

        std::vector<engine::ShardTrainResult> results(retrain.size());
        parallel_for(static_cast<int>(retrain.size()), cfg.threads, [&](int i) {
            ShardNode* n = retrain[static_cast<std::size_t>(i)];
            results[static_cast<std::size_t>(i)] =
                engine::train_shard(n->theta_init, n->clients, data, n->rounds, cfg, p, n->index);
        });
        for (std::size_t i = 0; i < retrain.size(); ++i) {
            retrain[i]->theta_final = std::move(results[i].theta);
            for (const auto& [cid, a] : results[i].client_alphas)
                work.client_alphas[cid] = engine::ContributionEntry{a, p};
        }

        // Refresh angles only for the retrained shards; untouched shards
        // keep their cached values along with their cached parameters.
        if (!retrain.empty()) {
            std::set<int> refreshed(cost.affected.begin(), cost.affected.end());
            engine::refresh_stage_alphas(stage, &refreshed);
        }

        out.ledger.paper_client_rounds += cost.paper_client_rounds;
        out.ledger.actual_client_rounds += cost.actual_client_rounds;
        out.ledger.stages.push_back(std::move(cost));
    }

    work.counted_client_rounds += out.ledger.actual_client_rounds;
    out.model = work.final_model();
    out.ledger.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_begin).count();
    return out;
}

SweepResult sweep_all_single_costs(const ShardTree& tree, SweepMode mode,
                                   const std::vector<engine::ClientData>* data) {
    SweepResult out;
    out.mode = mode;
    auto survivors = tree.surviving_clients();
    if (survivors.size() < 2)
        throw RequestError("sweep: need at least two clients to price a removal");

    if (mode == SweepMode::CountOnly) {
        for (int c : survivors) {
            long long rounds = 0;
            for (int p = 1; p <= tree.num_stages; ++p) {
                int s = tree.shard_of(p, c);
                if (s < 0) continue;
                const auto& n = tree.stages[static_cast<std::size_t>(p)]
                                           [static_cast<std::size_t>(s)];
                rounds += static_cast<long long>(n.rounds) *
                          static_cast<long long>(n.clients.size());
            }
            out.cost[c] = static_cast<double>(rounds);
        }
    } else {
        if (!data) throw InvalidInputError("sweep: full-retrain mode needs the data table");
        for (int c : survivors) {
            auto res = unlearn(tree, {c}, *data);
            out.cost[c] = res.ledger.wall_seconds;
        }
    }

    double sum = 0.0;
    for (const auto& [c, z] : out.cost) sum += z;
    out.average = sum / static_cast<double>(out.cost.size());
    return out;
}

}  // namespace shardfl::unlearn
