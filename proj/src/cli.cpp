#include "shardfl/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <set>

#include <CLI11.hpp>
#include <json.hpp>

#include "shardfl/analysis.hpp"
#include "shardfl/config.hpp"
#include "shardfl/fairmetrics.hpp"
#include "shardfl/scenarios.hpp"
#include "shardfl/unlearn.hpp"

namespace shardfl::cli {

namespace {

using nlohmann::json;

struct Options {
    std::string config_path;
    std::string cache_dir;
    std::string out_path;
    std::vector<int> leave;
    int threads{-1};
    long long seed{-1};
    bool no_a1{false};
    bool no_a2{false};
    bool save{false};
};

config::ExperimentConfig load_config(const Options& o) {
    auto ec = config::parse_config_file(o.config_path);
    if (o.no_a1) ec.run.merge_policy = engine::MergePolicy::Random;
    if (o.no_a2) ec.run.round_policy = engine::RoundPolicy::Fixed;
    if (o.threads >= 0) ec.run.threads = o.threads;
    if (o.seed >= 0) ec.run.master_seed = static_cast<std::uint64_t>(o.seed);
    ec.run.validate();
    return ec;
}

json envelope(const std::string& command, const config::ExperimentConfig& ec) {
    return json{{"schema_version", config::kSchemaVersion},
                {"command", command},
                {"config_digest", config::config_digest_of(ec.run, ec.data)}};
}

void emit(const json& report, const std::string& out_path) {
    std::string text = report.dump(2);
    text.push_back('\n');
    if (out_path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream f(out_path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot open output file: " + out_path);
    f << text;
}

engine::ShardTree obtain_tree(const Options& o, const config::ExperimentConfig& ec,
                              const std::vector<engine::ClientData>& data) {
    if (o.cache_dir.empty()) return engine::run_training(ec.run, ec.data, data);
    auto tree = engine::load_cache(o.cache_dir);
    if (tree.config_digest != config::config_digest_of(ec.run, ec.data))
        throw CacheError(CacheError::Kind::DigestMismatch,
                         "cache was built from a different configuration");
    return tree;
}

json ledger_json(const unlearn::CostLedger& ledger) {
    json stages = json::array();
    for (const auto& sc : ledger.stages)
        stages.push_back(json{{"stage", sc.stage},
                              {"affected", sc.affected},
                              {"paper_client_rounds", sc.paper_client_rounds},
                              {"actual_client_rounds", sc.actual_client_rounds}});
    return json{{"stages", stages},
                {"paper_client_rounds", ledger.paper_client_rounds},
                {"actual_client_rounds", ledger.actual_client_rounds},
                {"p_prime", ledger.p_prime},
                {"wall_seconds", ledger.wall_seconds}};
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    std::size_t n = v.size();
    if (n % 2 == 1) return v[n / 2];
    return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

int cmd_train(const Options& o) {
    auto ec = load_config(o);
    auto data = datagen::build_client_data(ec.data, ec.run.clients);
    auto tree = engine::run_training(ec.run, ec.data, data);
    if (!o.cache_dir.empty()) engine::save_cache(tree, o.cache_dir);

    json rep = envelope("train", ec);
    rep["clients"] = ec.run.clients;
    rep["merge_rate"] = ec.run.merge_rate;
    rep["stages"] = tree.num_stages;
    rep["training_client_rounds"] = tree.counted_client_rounds;
    rep["final_model_digest"] = engine::model_digest(tree.final_model());
    json stage_rounds = json::array();
    for (int p = 1; p <= tree.num_stages; ++p) {
        json rounds = json::array();
        for (const auto& n : tree.stages[static_cast<std::size_t>(p)])
            if (!n.dropped) rounds.push_back(n.rounds);
        stage_rounds.push_back(json{{"stage", p}, {"rounds", rounds}});
    }
    rep["stage_rounds"] = stage_rounds;
    json alphas = json::object();
    for (const auto& [c, entry] : tree.client_alphas)
        alphas[std::to_string(c)] = entry.alpha;
    rep["client_alphas"] = alphas;
    if (!o.cache_dir.empty()) rep["cache_dir"] = o.cache_dir;
    emit(rep, o.out_path);
    return 0;
}

int cmd_unlearn(const Options& o) {
    auto ec = load_config(o);
    if (o.cache_dir.empty()) throw ConfigError("unlearn: --cache-dir is required");
    if (o.leave.empty()) throw RequestError("unlearn: provide at least one --leave id");
    auto data = datagen::build_client_data(ec.data, ec.run.clients);
    auto tree = obtain_tree(o, ec, data);
    auto res = unlearn::unlearn(tree, o.leave, data);
    if (o.save) engine::save_cache(res.tree, o.cache_dir);

    json rep = envelope("unlearn", ec);
    rep["leavers"] = o.leave;
    rep["survivors"] = res.tree.surviving_clients();
    rep["final_model_digest"] = engine::model_digest(res.model);
    rep["ledger"] = ledger_json(res.ledger);
    rep["cache_updated"] = o.save;
    emit(rep, o.out_path);
    return 0;
}

int cmd_metrics(const Options& o) {
    auto ec = load_config(o);
    if (o.leave.empty()) throw RequestError("metrics: provide at least one --leave id");
    auto data = datagen::build_client_data(ec.data, ec.run.clients);
    auto tree = obtain_tree(o, ec, data);
    const numkit::ParamVector model_pre = tree.final_model();
    auto res = unlearn::unlearn(tree, o.leave, data);

    fairness::FairnessInputs fin;
    for (const auto& [c, entry] : tree.client_alphas) fin.alpha[c] = entry.alpha;
    for (int c = 0; c < ec.run.clients; ++c) {
        const auto& test = data[static_cast<std::size_t>(c)].test;
        fin.delta_y[c] = numkit::evaluate(model_pre, ec.run.model, test).accuracy -
                         numkit::evaluate(res.model, ec.run.model, test).accuracy;
    }
    fin.remaining = res.tree.surviving_clients();
    fin.leaving = o.leave;
    auto mp = fairness::m_p(fin);

    auto sweep = unlearn::sweep_all_single_costs(res.tree, unlearn::SweepMode::CountOnly);
    auto me = fairness::m_e(sweep.cost, fin.alpha);

    json rep = envelope("metrics", ec);
    rep["leavers"] = o.leave;
    rep["m_p"] = mp.value;
    rep["m_e"] = me.value;
    json per_client = json::object();
    for (const auto& [c, dy] : fin.delta_y) {
        json entry{{"delta_y", dy}, {"alpha", fin.alpha.at(c)}};
        if (auto it = mp.terms.find(c); it != mp.terms.end()) entry["m_p_term"] = it->second;
        if (auto it = mp.uniqueness_raw.find(c); it != mp.uniqueness_raw.end())
            entry["uniqueness"] = it->second;
        if (auto it = sweep.cost.find(c); it != sweep.cost.end()) entry["removal_cost"] = it->second;
        per_client[std::to_string(c)] = entry;
    }
    rep["per_client"] = per_client;
    emit(rep, o.out_path);
    return 0;
}

int cmd_scenario(const Options& o) {
    auto ec = load_config(o);
    if (!ec.has_scenario) throw ConfigError("scenario: config has no scenario section");
    const auto& sc = ec.scenario;

    json rep = envelope("scenario", ec);
    rep["kind"] = sc.kind;
    rep["seeds"] = sc.seeds;
    json per_seed = json::array();

    if (sc.kind == "cascade") {
        scenarios::CascadeParams params;
        params.initial_leavers = sc.initial_leavers;
        params.unlearner = sc.unlearner;
        params.gamma = sc.gamma;
        params.similar_fraction = sc.similar_fraction;
        params.ascent_lr = sc.ascent_lr;
        std::vector<double> counts, mps;
        for (int s = 0; s < sc.seeds; ++s) {
            auto rc = ec.run;
            rc.master_seed += static_cast<std::uint64_t>(s);
            auto dc = ec.data;
            dc.seed += static_cast<std::uint64_t>(s);
            auto out = scenarios::run_cascade(rc, dc, params);
            counts.push_back(out.cascade_count);
            mps.push_back(out.mp.value);
            per_seed.push_back(json{{"seed_offset", s},
                                    {"cascade_count", out.cascade_count},
                                    {"second_wave", out.second_wave},
                                    {"m_p", out.mp.value}});
        }
        rep["median_cascade_count"] = median(counts);
        rep["median_m_p"] = median(mps);
    } else {
        scenarios::DpaParams params;
        params.attacker_fraction = sc.attacker_fraction;
        params.tau = sc.tau;
        params.unlearner = sc.unlearner;
        params.gamma = sc.gamma;
        params.similar_fraction = sc.similar_fraction;
        params.ascent_lr = sc.ascent_lr;
        std::vector<double> precisions, mps;
        for (int s = 0; s < sc.seeds; ++s) {
            auto rc = ec.run;
            rc.master_seed += static_cast<std::uint64_t>(s);
            auto dc = ec.data;
            dc.seed += static_cast<std::uint64_t>(s);
            auto out = scenarios::run_dpa(rc, dc, params);
            precisions.push_back(out.precision);
            mps.push_back(out.mp.value);
            per_seed.push_back(json{{"seed_offset", s},
                                    {"attackers", out.attackers},
                                    {"poisoned", out.poisoned},
                                    {"precision", out.precision},
                                    {"mean_accuracy_drop", out.mean_accuracy_drop},
                                    {"m_p", out.mp.value}});
        }
        rep["median_precision"] = median(precisions);
        rep["median_m_p"] = median(mps);
    }
    rep["per_seed"] = per_seed;
    emit(rep, o.out_path);
    return 0;
}

int cmd_analyze(const Options& o) {
    auto ec = load_config(o);
    auto data = datagen::build_client_data(ec.data, ec.run.clients);
    auto tree = obtain_tree(o, ec, data);
    auto eff = analysis::analyze_tree(tree);

    json rep = envelope("analyze", ec);
    rep["efficiency"] = json{{"clients", eff.clients},
                             {"merge_rate", eff.merge_rate},
                             {"stages", eff.stages},
                             {"t0_mean", eff.t0_mean},
                             {"train_cost_measured", eff.train_cost_measured},
                             {"train_cost_model", eff.train_cost_model},
                             {"unlearn_cost_model", eff.unlearn_cost_model},
                             {"speedup_model", eff.speedup_model},
                             {"r1", eff.r1_value}};
    if (!o.leave.empty()) {
        auto res = unlearn::unlearn(tree, o.leave, data);
        auto r2 = analysis::r2_bounds(eff.clients, eff.merge_rate, eff.stages,
                                      static_cast<int>(o.leave.size()), res.ledger.p_prime);
        double paper = static_cast<double>(res.ledger.paper_client_rounds);
        rep["removal"] = json{
            {"leavers", o.leave},
            {"ledger", ledger_json(res.ledger)},
            {"speedup_measured", paper > 0.0 ? eff.train_cost_measured / paper : 0.0},
            {"r2_lower", r2.lower},
            {"r2_upper", r2.upper},
            {"r2_reported", r2.reported},
            {"r2_reported_within_bounds", r2.reported_within_bounds}};
    }
    emit(rep, o.out_path);
    return 0;
}

int cmd_baseline(const Options& o) {
    auto ec = load_config(o);
    auto data = datagen::build_client_data(ec.data, ec.run.clients);
    auto theta0 = engine::build_initial_stage(ec.run).front().theta_final;
    auto base = scenarios::scratch_retrain(ec.run, data, o.leave, theta0);

    double acc_sum = 0.0;
    std::size_t n = 0;
    std::set<int> gone(o.leave.begin(), o.leave.end());
    for (int c = 0; c < ec.run.clients; ++c) {
        if (gone.count(c)) continue;
        acc_sum +=
            numkit::evaluate(base.model, ec.run.model, data[static_cast<std::size_t>(c)].test)
                .accuracy;
        ++n;
    }

    json rep = envelope("baseline", ec);
    rep["excluded"] = o.leave;
    rep["rounds"] = base.rounds;
    rep["client_rounds"] = base.client_rounds;
    rep["model_digest"] = engine::model_digest(base.model);
    rep["mean_test_accuracy"] = acc_sum / static_cast<double>(n);
    emit(rep, o.out_path);
    return 0;
}

}  // namespace

int run(std::vector<std::string> args) {
    CLI::App app{"hierarchical shard training with exact client removal"};
    app.require_subcommand(1);

    Options o;
    auto add_common = [&](CLI::App* cmd, bool needs_config = true) {
        auto* opt = cmd->add_option("--config", o.config_path, "experiment config JSON");
        if (needs_config) opt->required();
        cmd->add_option("--out", o.out_path, "write the JSON report here instead of stdout");
        cmd->add_option("--threads", o.threads, "worker threads (0 = hardware)");
        cmd->add_option("--seed", o.seed, "override the master seed");
        cmd->add_flag("--no-a1", o.no_a1, "merge randomly instead of by angle clusters");
        cmd->add_flag("--no-a2", o.no_a2, "fixed round counts instead of variance-based");
    };

    auto* train = app.add_subcommand("train", "train the shard tree");
    add_common(train);
    train->add_option("--cache-dir", o.cache_dir, "save the trained tree here");

    auto* unl = app.add_subcommand("unlearn", "remove clients by path retraining");
    add_common(unl);
    unl->add_option("--cache-dir", o.cache_dir, "cache of the trained tree")->required();
    unl->add_option("--leave", o.leave, "client id to remove (repeatable)");
    unl->add_flag("--save", o.save, "write the updated tree back to the cache");

    auto* met = app.add_subcommand("metrics", "fairness metrics for a removal");
    add_common(met);
    met->add_option("--cache-dir", o.cache_dir, "reuse a trained tree");
    met->add_option("--leave", o.leave, "client id to remove (repeatable)");

    auto* scen = app.add_subcommand("scenario", "run the configured scenario");
    add_common(scen);

    auto* ana = app.add_subcommand("analyze", "cost model versus measured costs");
    add_common(ana);
    ana->add_option("--cache-dir", o.cache_dir, "reuse a trained tree");
    ana->add_option("--leave", o.leave, "also measure this removal (repeatable)");

    auto* base = app.add_subcommand("baseline", "flat from-scratch retraining");
    add_common(base);
    base->add_option("--leave", o.leave, "client id to exclude (repeatable)");

    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (train->parsed()) return cmd_train(o);
        if (unl->parsed()) return cmd_unlearn(o);
        if (met->parsed()) return cmd_metrics(o);
        if (scen->parsed()) return cmd_scenario(o);
        if (ana->parsed()) return cmd_analyze(o);
        if (base->parsed()) return cmd_baseline(o);
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const CacheError& e) {
        std::cerr << "cache error: " << e.what() << "\n";
        return 4;
    } catch (const RequestError& e) {
        std::cerr << "request error: " << e.what() << "\n";
        return 5;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace shardfl::cli
