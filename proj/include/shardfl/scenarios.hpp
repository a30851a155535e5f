// Behavioral scenarios built on the training engine: cascaded leaving under
// a payoff model, poisoning attempted through removal requests, a
// deliberately unfair removal procedure to compare against, and a flat
// from-scratch retraining baseline.
#pragma once

#include <map>
#include <string>
#include <vector>

#include "shardfl/datagen.hpp"
#include "shardfl/engine.hpp"
#include "shardfl/fairmetrics.hpp"
#include "shardfl/unlearn.hpp"

namespace shardfl::scenarios {

using numkit::ParamVector;

struct MockUnlearnParams {
    int gamma{8};                  // ascent steps applied after the exact removal
    double similar_fraction{0.25};  // share of remaining clients to damage
    double lr{0.1};
};

// Unfair removal foil: performs the exact removal, then takes `gamma`
// gradient-ascent steps on the pooled training data of the remaining
// clients whose contribution angles sit closest to the leavers' mean
// angle. The tree keeps the exact parameters; only the published model is
// damaged.
unlearn::UnlearnResult mock_unlearn(const engine::ShardTree& tree,
                                    const std::vector<engine::ClientData>& data,
                                    const std::vector<int>& leavers,
                                    const MockUnlearnParams& params);

struct CascadeParams {
    int initial_leavers{3};
    std::string unlearner{"exact"};  // "exact" or "mock"
    int gamma{8};
    double similar_fraction{0.25};
    double ascent_lr{-1.0};  // negative: reuse the training lr
};

struct CascadeOutcome {
    std::vector<int> leavers;      // the initial wave (highest client ids)
    std::vector<int> second_wave;  // remaining clients whose payoff says leave
    int cascade_count{0};
    fairness::MpReport mp;
    std::map<int, double> delta_y;    // pre minus post accuracy, whole population
    std::map<int, double> threshold;  // per remaining client: own accuracy minus
                                      // its removal cost relative to a flat
                                      // from-scratch retrain
};

// One decision round: after the initial wave is removed, every remaining
// client compares its accuracy drop against what leaving would forfeit.
// A client leaves when delta_y exceeds its own post-removal accuracy minus
// its normalized removal cost.
CascadeOutcome run_cascade(const engine::RunConfig& rc, const datagen::DataConfig& dc,
                           const CascadeParams& params);

struct DpaParams {
    double attacker_fraction{0.25};  // minority group share, (0, 0.5]
    double tau{0.01};                // accuracy-drop threshold
    std::string unlearner{"exact"};
    int gamma{8};
    double similar_fraction{0.25};
    double ascent_lr{-1.0};
};

struct DpaOutcome {
    std::vector<int> attackers;
    std::vector<int> poisoned;  // survivors degraded below the reference
    double precision{0.0};      // |poisoned| / clients
    double mean_accuracy_drop{0.0};
    fairness::MpReport mp;            // pairing fairness of the removal
    std::map<int, double> delta_y;    // pre minus post accuracy, whole population
};

// Poisoning through removal: a colluding minority trains along, then
// requests removal together. The reference is a full replay that never saw
// the attackers; a surviving client counts as poisoned when the
// post-removal model scores more than tau below that reference on its test
// data. Exact removal reproduces the reference bit for bit, so nothing is
// poisoned.
DpaOutcome run_dpa(const engine::RunConfig& rc, const datagen::DataConfig& dc,
                   const DpaParams& params);

struct BaselineResult {
    ParamVector model;
    int rounds{0};
    long long client_rounds{0};  // rounds * survivors
};

// Flat federated retraining over the surviving clients from `theta_init`,
// for stages * t0 rounds: the cost yardstick for path-only removal.
BaselineResult scratch_retrain(const engine::RunConfig& rc,
                               const std::vector<engine::ClientData>& data,
                               const std::vector<int>& excluded, const ParamVector& theta_init);

}  // namespace shardfl::scenarios
