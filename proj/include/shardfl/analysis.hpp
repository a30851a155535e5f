// Closed-form cost model for hierarchical shard training and the ratio
// bounds used to sanity-check measured costs.
//
// With K clients, merge rate R, P stages and T0 rounds per stage:
//   training cost      P * T0 * K          client-rounds
//   single unlearning  T0 * R (R^P - 1)/(R - 1)
// and the speedup is their ratio. Costs are counted in client-rounds:
// one client training for one round costs 1.
#pragma once

#include <map>
#include <vector>

#include "shardfl/engine.hpp"
#include "shardfl/unlearn.hpp"

namespace shardfl::analysis {

struct CostModel {
    int clients{0};
    int merge_rate{0};
    int stages{0};
    double t0{0.0};
};

double training_cost(const CostModel& m);
double unlearning_cost(const CostModel& m);
double speedup(const CostModel& m);

// Fraction of all client-rounds touched when one client leaves, per the
// cost model: ((R - 1)/R) (K/(K - 1)) P touched client-rounds relative to
// retraining every client once per stage.
double r1(int clients, int merge_rate, int stages);

struct R2Bounds {
    double lower{1.0};  // removing m clients costs at least one removal
    double upper{0.0};  // and at most m independent removals
    // (R/(R-1)) ((K-1)/K) m/(P - p_prime); heuristic, can leave [lower, upper].
    double reported{0.0};
    bool reported_within_bounds{false};
};

// Bounds on the cost of removing m clients at once relative to removing
// one. p_prime is the deepest stage that still kept an untouched shard.
R2Bounds r2_bounds(int clients, int merge_rate, int stages, int leavers, int p_prime);

// Measured training cost of a tree: sum of rounds * shard size over all
// live shards above stage 0.
double measured_training_cost(const engine::ShardTree& tree);

struct EfficiencyReport {
    int clients{0};
    int merge_rate{0};
    int stages{0};
    double t0_mean{0.0};  // measured training cost / (P * K)
    double train_cost_measured{0.0};
    double train_cost_model{0.0};
    double unlearn_cost_model{0.0};  // single removal, at t0_mean
    double speedup_model{0.0};
    double r1_value{0.0};
};

EfficiencyReport analyze_tree(const engine::ShardTree& tree);

// Removal cost per client when clients joined a single sequential run at
// uniformly spaced times: the c-th joiner costs (horizon - join_c) * K.
struct StaggeredCost {
    std::map<int, double> cost;
    double horizon{0.0};
    double gap{0.0};
};

StaggeredCost staggered_cost_model(int clients, double horizon, double gap);

}  // namespace shardfl::analysis
