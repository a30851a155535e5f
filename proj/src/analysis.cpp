#include "shardfl/analysis.hpp"

#include <cmath>

namespace shardfl::analysis {

namespace {

void check_model(const CostModel& m) {
    if (m.clients < 2) throw InvalidInputError("cost model: need at least 2 clients");
    if (m.merge_rate < 2) throw InvalidInputError("cost model: merge rate must be >= 2");
    if (m.stages < 1) throw InvalidInputError("cost model: need at least one stage");
    if (!(m.t0 > 0.0)) throw InvalidInputError("cost model: t0 must be positive");
}

double pow_int(double base, int exp) {
    double out = 1.0;
    for (int i = 0; i < exp; ++i) out *= base;
    return out;
}

}  // namespace

double training_cost(const CostModel& m) {
    check_model(m);
    return static_cast<double>(m.stages) * m.t0 * static_cast<double>(m.clients);
}

double unlearning_cost(const CostModel& m) {
    check_model(m);
    double r = static_cast<double>(m.merge_rate);
    return m.t0 * r * (pow_int(r, m.stages) - 1.0) / (r - 1.0);
}

double speedup(const CostModel& m) { return training_cost(m) / unlearning_cost(m); }

double r1(int clients, int merge_rate, int stages) {
    CostModel m{clients, merge_rate, stages, 1.0};
    check_model(m);
    double r = static_cast<double>(merge_rate);
    double k = static_cast<double>(clients);
    return (r - 1.0) / r * k / (k - 1.0) * static_cast<double>(stages);
}

R2Bounds r2_bounds(int clients, int merge_rate, int stages, int leavers, int p_prime) {
    CostModel m{clients, merge_rate, stages, 1.0};
    check_model(m);
    if (leavers < 1 || leavers >= clients)
        throw InvalidInputError("r2_bounds: leavers must be in [1, clients)");
    if (p_prime < 0 || p_prime >= stages)
        throw InvalidInputError("r2_bounds: p_prime must be in [0, stages)");
    R2Bounds b;
    b.lower = 1.0;
    b.upper = static_cast<double>(leavers);
    double r = static_cast<double>(merge_rate);
    double k = static_cast<double>(clients);
    b.reported = r / (r - 1.0) * (k - 1.0) / k * static_cast<double>(leavers) /
                 static_cast<double>(stages - p_prime);
    b.reported_within_bounds = b.reported >= b.lower && b.reported <= b.upper;
    return b;
}

double measured_training_cost(const engine::ShardTree& tree) {
    double total = 0.0;
    for (std::size_t p = 1; p < tree.stages.size(); ++p)
        for (const auto& node : tree.stages[p])
            if (!node.dropped) total += static_cast<double>(node.rounds) * node.clients.size();
    return total;
}

EfficiencyReport analyze_tree(const engine::ShardTree& tree) {
    EfficiencyReport rep;
    rep.clients = static_cast<int>(tree.stages.at(0).size());
    rep.merge_rate = tree.merge_rate;
    rep.stages = tree.num_stages;
    rep.train_cost_measured = measured_training_cost(tree);
    rep.t0_mean = rep.train_cost_measured /
                  (static_cast<double>(rep.stages) * static_cast<double>(rep.clients));
    CostModel m{rep.clients, rep.merge_rate, rep.stages, rep.t0_mean};
    rep.train_cost_model = training_cost(m);
    rep.unlearn_cost_model = unlearning_cost(m);
    rep.speedup_model = speedup(m);
    rep.r1_value = r1(rep.clients, rep.merge_rate, rep.stages);
    return rep;
}

StaggeredCost staggered_cost_model(int clients, double horizon, double gap) {
    if (clients < 2) throw InvalidInputError("staggered cost: need at least 2 clients");
    if (!(horizon > 0.0) || !(gap >= 0.0))
        throw InvalidInputError("staggered cost: horizon must be positive, gap non-negative");
    if (gap * (clients - 1) >= horizon)
        throw InvalidInputError("staggered cost: last join must precede the horizon");
    StaggeredCost out;
    out.horizon = horizon;
    out.gap = gap;
    for (int c = 0; c < clients; ++c) {
        double join = gap * static_cast<double>(c);
        out.cost[c] = (horizon - join) * static_cast<double>(clients);
    }
    return out;
}

}  // namespace shardfl::analysis
