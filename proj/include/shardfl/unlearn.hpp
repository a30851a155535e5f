// Client removal by path-only retraining.
//
// A leaving client touches exactly one shard per stage (its merge path).
// Those shards are retrained from the re-averaged models of their surviving
// children, with the round counts and seed streams of the original run;
// every other shard keeps its cached parameters untouched. The result is
// bit-identical to retraining the whole tree from scratch without the
// leaver (see engine::replay_training), at a fraction of the cost.
#pragma once

#include <map>
#include <vector>

#include "shardfl/engine.hpp"

namespace shardfl::unlearn {

struct StageCost {
    int stage{0};
    std::vector<int> affected;            // shard indices retrained at this stage
    long long paper_client_rounds{0};     // pre-removal shard sizes x rounds
    long long actual_client_rounds{0};    // post-removal shard sizes x rounds
};

struct CostLedger {
    std::vector<StageCost> stages;        // stages 1..P
    long long paper_client_rounds{0};
    long long actual_client_rounds{0};
    int p_prime{0};  // last stage where some live shard holds no leaver
    double wall_seconds{0.0};
};

struct UnlearnResult {
    engine::ShardTree tree;
    CostLedger ledger;
    numkit::ParamVector model;  // final-stage model after removal
};

// Live shards per stage (1..P) whose client sets intersect the leavers.
// Validates the request: ids must be known, distinct, and leave at least
// one client behind. Throws RequestError otherwise.
std::vector<std::vector<int>> find_affected(const engine::ShardTree& tree,
                                            const std::vector<int>& leavers);

UnlearnResult unlearn(const engine::ShardTree& tree, const std::vector<int>& leavers,
                      const std::vector<engine::ClientData>& data);

enum class SweepMode { CountOnly, FullRetrain };

struct SweepResult {
    std::map<int, double> cost;  // per surviving client
    double average{0.0};
    SweepMode mode{SweepMode::CountOnly};
};

// Prospective single-removal cost for every surviving client. CountOnly
// reads client-rounds off the tree without training; FullRetrain unlearns
// a copy per client and reports wall-clock seconds (needs the data table).
SweepResult sweep_all_single_costs(const engine::ShardTree& tree, SweepMode mode,
                                   const std::vector<engine::ClientData>* data = nullptr);

}  // namespace shardfl::unlearn
