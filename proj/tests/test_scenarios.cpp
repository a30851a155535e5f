#include <algorithm>
#include <set>
#include <vector>

#include "doctest.h"
#include "shardfl/datagen.hpp"
#include "shardfl/engine.hpp"
#include "shardfl/scenarios.hpp"
#include "shardfl/unlearn.hpp"

using namespace shardfl;

namespace {

engine::RunConfig base_run(int clients) {
    engine::RunConfig rc;
    rc.clients = clients;
    rc.merge_rate = 2;
    rc.t0 = 3;
    rc.model = {numkit::Arch::Linear, 6, 4, 0, numkit::Activation::Tanh};
    rc.lr = 0.2;
    rc.local_steps = 2;
    rc.master_seed = 41;
    rc.threads = 2;
    return rc;
}

datagen::DataConfig base_data() {
    datagen::DataConfig dc;
    dc.samples_per_client = 20;
    dc.input_dim = 6;
    dc.num_labels = 4;
    dc.seed = 77;
    return dc;
}

}  // namespace

TEST_CASE("flat retraining baseline is deterministic and correctly priced") {
    auto rc = base_run(8);
    auto dc = base_data();
    auto data = datagen::build_client_data(dc, rc.clients);
    auto theta0 = numkit::init_params(rc.model, 123u);

    auto a = scenarios::scratch_retrain(rc, data, {}, theta0);
    auto b = scenarios::scratch_retrain(rc, data, {}, theta0);
    CHECK(a.rounds == 9);
    CHECK(a.client_rounds == 72);
    REQUIRE(a.model.size() == b.model.size());
    for (std::size_t i = 0; i < a.model.size(); ++i) CHECK(a.model[i] == b.model[i]);

    auto without = scenarios::scratch_retrain(rc, data, {3, 4}, theta0);
    CHECK(without.client_rounds == 9 * 6);
    bool differs = false;
    for (std::size_t i = 0; i < a.model.size(); ++i)
        if (without.model[i] != a.model[i]) differs = true;
    CHECK(differs);

    CHECK_THROWS_AS(scenarios::scratch_retrain(rc, data, {2, 2}, theta0), RequestError);
    CHECK_THROWS_AS(scenarios::scratch_retrain(rc, data, {99}, theta0), RequestError);
    CHECK_THROWS_AS(
        scenarios::scratch_retrain(rc, data, {0, 1, 2, 3, 4, 5, 6, 7}, theta0),
        RequestError);
}

TEST_CASE("the unfair foil with zero ascent steps collapses to the exact removal") {
    auto rc = base_run(8);
    auto dc = base_data();
    auto data = datagen::build_client_data(dc, rc.clients);
    auto tree = engine::run_training(rc, dc, data);

    scenarios::MockUnlearnParams p;
    p.gamma = 0;
    auto mock = scenarios::mock_unlearn(tree, data, {2, 6}, p);
    auto exact = unlearn::unlearn(tree, {2, 6}, data);
    REQUIRE(mock.model.size() == exact.model.size());
    for (std::size_t i = 0; i < mock.model.size(); ++i) CHECK(mock.model[i] == exact.model[i]);
}

TEST_CASE("the unfair foil damages the published model but not the tree") {
    auto rc = base_run(8);
    auto dc = base_data();
    auto data = datagen::build_client_data(dc, rc.clients);
    auto tree = engine::run_training(rc, dc, data);

    scenarios::MockUnlearnParams p;
    p.gamma = 8;
    auto mock = scenarios::mock_unlearn(tree, data, {2, 6}, p);
    auto exact = unlearn::unlearn(tree, {2, 6}, data);

    bool model_differs = false;
    for (std::size_t i = 0; i < mock.model.size(); ++i)
        if (mock.model[i] != exact.model[i]) model_differs = true;
    CHECK(model_differs);

    const auto& mt = mock.tree.final_model();
    const auto& et = exact.tree.final_model();
    REQUIRE(mt.size() == et.size());
    for (std::size_t i = 0; i < mt.size(); ++i) CHECK(mt[i] == et[i]);

    scenarios::MockUnlearnParams bad;
    bad.gamma = -1;
    CHECK_THROWS_AS(scenarios::mock_unlearn(tree, data, {2}, bad), InvalidInputError);
    bad = scenarios::MockUnlearnParams{};
    bad.similar_fraction = 0.0;
    CHECK_THROWS_AS(scenarios::mock_unlearn(tree, data, {2}, bad), InvalidInputError);
    bad = scenarios::MockUnlearnParams{};
    bad.lr = 0.0;
    CHECK_THROWS_AS(scenarios::mock_unlearn(tree, data, {2}, bad), InvalidInputError);
}

TEST_CASE("cascade outcome is internally consistent") {
    auto rc = base_run(16);
    auto dc = base_data();
    dc.partition = datagen::PartitionMode::Dirichlet;
    dc.dirichlet_rho = 0.5;

    scenarios::CascadeParams cp;
    cp.initial_leavers = 3;
    auto out = scenarios::run_cascade(rc, dc, cp);

    CHECK(out.leavers == std::vector<int>{13, 14, 15});
    CHECK(out.delta_y.size() == 16);
    CHECK(out.threshold.size() == 13);
    CHECK(out.cascade_count == static_cast<int>(out.second_wave.size()));
    for (int c : out.second_wave) {
        CHECK(out.threshold.count(c) == 1);
        CHECK(out.delta_y.at(c) > out.threshold.at(c));
    }
    std::set<int> wave(out.second_wave.begin(), out.second_wave.end());
    for (const auto& [c, th] : out.threshold)
        if (!wave.count(c)) CHECK(out.delta_y.at(c) <= th);
    CHECK(out.mp.value >= 4.0 - 1e-9);
    CHECK(out.mp.terms.size() == 16);

    scenarios::CascadeParams bad;
    bad.initial_leavers = 15;
    CHECK_THROWS_AS(scenarios::run_cascade(rc, dc, bad), InvalidInputError);
    bad = scenarios::CascadeParams{};
    bad.unlearner = "oracle";
    CHECK_THROWS_AS(scenarios::run_cascade(rc, dc, bad), InvalidInputError);
}

TEST_CASE("exact removal leaves nothing poisoned, the foil leaves a trace") {
    auto rc = base_run(16);
    auto dc = base_data();

    scenarios::DpaParams dp;
    dp.attacker_fraction = 0.25;
    auto exact = scenarios::run_dpa(rc, dc, dp);
    CHECK(exact.attackers == std::vector<int>{12, 13, 14, 15});
    CHECK(exact.poisoned.empty());
    CHECK(exact.precision == 0.0);
    CHECK(exact.mean_accuracy_drop == 0.0);
    CHECK(exact.delta_y.size() == 16);
    CHECK(exact.mp.terms.size() == 16);

    scenarios::DpaParams mp = dp;
    mp.unlearner = "mock";
    mp.gamma = 16;
    mp.similar_fraction = 0.5;
    mp.ascent_lr = 0.3;
    auto mock = scenarios::run_dpa(rc, dc, mp);
    CHECK(mock.precision > 0.0);
    CHECK(static_cast<int>(mock.poisoned.size()) ==
          static_cast<int>(mock.precision * 16.0 + 0.5));
    for (int c : mock.poisoned) CHECK(c < 12);

    scenarios::DpaParams bad = dp;
    bad.attacker_fraction = 0.0;
    CHECK_THROWS_AS(scenarios::run_dpa(rc, dc, bad), InvalidInputError);
    bad = dp;
    bad.attacker_fraction = 0.6;
    CHECK_THROWS_AS(scenarios::run_dpa(rc, dc, bad), InvalidInputError);
    bad = dp;
    bad.tau = -0.5;
    CHECK_THROWS_AS(scenarios::run_dpa(rc, dc, bad), InvalidInputError);
    bad = dp;
    bad.unlearner = "oracle";
    CHECK_THROWS_AS(scenarios::run_dpa(rc, dc, bad), InvalidInputError);
}
