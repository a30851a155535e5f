// Unlearning fairness metrics.
//
// M_p scores how well performance changes line up with client uniqueness:
// each client contributes f_oplus of its normalized performance delta and
// its normalized distance to the nearest remaining contribution angle.
// Perfect rank alignment drives every term toward the minimum of 4.
//
// M_e scores cost parity: the population variance of removal costs, each
// squared deviation amplified by the reciprocal of the client's
// contribution magnitude.
#pragma once

#include <map>
#include <vector>

#include "shardfl/common.hpp"

namespace shardfl::fairness {

// Contribution distance between two angle values.
double dis(double alpha_a, double alpha_b);

// Min-max normalization with an epsilon floor: eps + (x - min)/(max - min),
// so every output is strictly positive; an all-equal family maps to eps.
std::vector<double> normalize(const std::vector<double>& values, double epsilon = 1e-6);

// (x + y)(1/x + 1/y); inputs must be positive; equals 4 exactly when x == y
// and grows without bound as the pair diverges.
double f_oplus(double x, double y);

struct FairnessInputs {
    std::map<int, double> delta_y;  // performance change per client (whole population)
    std::map<int, double> alpha;    // pre-removal contribution angle per client
    std::vector<int> remaining;
    std::vector<int> leaving;
};

struct MpReport {
    double value{0.0};
    std::map<int, double> terms;           // per-client f_oplus terms
    std::map<int, double> uniqueness_raw;  // min distance to another remaining client
};

// Population mean of the per-client terms. Normalization spans the whole
// population once, so subgroup means of `terms` compose exactly:
// M_p(C) = (|C1| M_p(C1) + |C2| M_p(C2)) / |C|.
MpReport m_p(const FairnessInputs& in, double epsilon = 1e-6);

// Mean of the precomputed global terms over a subset.
double m_p_of_subset(const MpReport& report, const std::vector<int>& subset);

struct MeReport {
    double value{0.0};
    std::map<int, double> terms;
};

// Mean of (avg cost - cost_c)^2 / |alpha_c|, with |alpha_c| floored.
MeReport m_e(const std::map<int, double>& cost, const std::map<int, double>& alpha,
             double alpha_floor = 1e-9);

// The alpha-free variant: plain population variance of the costs. Splits
// exactly into within-group and between-group parts across a partition.
double m_e_unweighted(const std::map<int, double>& cost);

struct RankAlignment {
    double best_value{0.0};
    std::vector<int> best_assignment;  // delta_y index paired to uniqueness slot i
    double aligned_value{0.0};         // value of the sorted-to-sorted pairing
    bool aligned_is_minimal{false};
};

// Exhaustive search over all pairings of the delta values onto the
// uniqueness values (n <= 8): confirms that the order-consistent pairing
// minimizes the mean f_oplus score.
RankAlignment rank_alignment_oracle(const std::vector<double>& delta_y,
                                    const std::vector<double>& uniqueness,
                                    double epsilon = 1e-6);

}  // namespace shardfl::fairness
