#include "shardfl/config.hpp"

#include <fstream>
#include <set>

namespace shardfl::config {

using nlohmann::json;

namespace {

void require_keys(const json& obj, const std::string& where,
                  const std::set<std::string>& allowed) {
    if (!obj.is_object()) throw ConfigError(where + ": expected an object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (!allowed.count(it.key()))
            throw ConfigError(where + ": unknown key '" + it.key() + "'");
    }
}

template <typename T>
T get_or(const json& obj, const std::string& key, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("bad value for '" + key + "'");
    }
}

std::string get_choice(const json& obj, const std::string& key, std::string fallback,
                       const std::set<std::string>& choices) {
    std::string v = get_or<std::string>(obj, key, std::move(fallback));
    if (!choices.count(v)) throw ConfigError("'" + key + "' must be one of the known choices");
    return v;
}

}  // namespace

json run_config_json(const engine::RunConfig& rc) {
    json rounds = {
        {"policy", rc.round_policy == engine::RoundPolicy::Fixed ? "fixed" : "adaptive"},
        {"t0", rc.t0},
        {"range", {rc.round_range.t0_star, rc.round_range.t1_star}},
        {"pilot", rc.pilot_round_range},
        {"pilot_tolerance", rc.pilot_tolerance},
        {"compat_inverse", rc.a2_compat_inverse},
    };
    json model = {
        {"arch", rc.model.arch == numkit::Arch::Linear ? "linear" : "mlp"},
        {"input_dim", rc.model.input_dim},
        {"num_labels", rc.model.num_labels},
        {"hidden", rc.model.hidden},
        {"activation", rc.model.act == numkit::Activation::Tanh ? "tanh" : "relu"},
    };
    json batch = {
        {"mode", rc.batch_mode == engine::BatchMode::Full ? "full" : "minibatch"},
        {"size", rc.batch_size},
    };
    return json{
        {"clients", rc.clients},
        {"merge_rate", rc.merge_rate},
        {"merge_policy", rc.merge_policy == engine::MergePolicy::Cluster ? "cluster" : "random"},
        {"rounds", rounds},
        {"model", model},
        {"lr", rc.lr},
        {"local_steps", rc.local_steps},
        {"batch", batch},
        {"master_seed", rc.master_seed},
        {"threads", rc.threads},
    };
}

engine::RunConfig run_config_from_json(const json& j) {
    require_keys(j, "run",
                 {"clients", "merge_rate", "merge_policy", "rounds", "model", "lr",
                  "local_steps", "batch", "master_seed", "threads"});
    engine::RunConfig rc;
    rc.clients = get_or(j, "clients", rc.clients);
    rc.merge_rate = get_or(j, "merge_rate", rc.merge_rate);
    rc.merge_policy = get_choice(j, "merge_policy", "cluster", {"cluster", "random"}) == "cluster"
                          ? engine::MergePolicy::Cluster
                          : engine::MergePolicy::Random;
    if (j.contains("rounds")) {
        const json& r = j.at("rounds");
        require_keys(r, "run.rounds",
                     {"policy", "t0", "range", "pilot", "pilot_tolerance", "compat_inverse"});
        rc.round_policy = get_choice(r, "policy", "fixed", {"fixed", "adaptive"}) == "fixed"
                              ? engine::RoundPolicy::Fixed
                              : engine::RoundPolicy::Adaptive;
        rc.t0 = get_or(r, "t0", rc.t0);
        if (r.contains("range")) {
            auto range = r.at("range");
            if (!range.is_array() || range.size() != 2)
                throw ConfigError("run.rounds.range must be [lo, hi]");
            rc.round_range.t0_star = range[0].get<int>();
            rc.round_range.t1_star = range[1].get<int>();
        }
        rc.pilot_round_range = get_or(r, "pilot", rc.pilot_round_range);
        rc.pilot_tolerance = get_or(r, "pilot_tolerance", rc.pilot_tolerance);
        rc.a2_compat_inverse = get_or(r, "compat_inverse", rc.a2_compat_inverse);
    }
    if (j.contains("model")) {
        const json& m = j.at("model");
        require_keys(m, "run.model", {"arch", "input_dim", "num_labels", "hidden", "activation"});
        rc.model.arch = get_choice(m, "arch", "linear", {"linear", "mlp"}) == "linear"
                            ? numkit::Arch::Linear
                            : numkit::Arch::Mlp;
        rc.model.input_dim = get_or(m, "input_dim", 8);
        rc.model.num_labels = get_or(m, "num_labels", 4);
        rc.model.hidden = get_or(m, "hidden", 0);
        rc.model.act = get_choice(m, "activation", "tanh", {"tanh", "relu"}) == "tanh"
                           ? numkit::Activation::Tanh
                           : numkit::Activation::Relu;
    } else {
        rc.model.input_dim = 8;
        rc.model.num_labels = 4;
    }
    rc.lr = get_or(j, "lr", rc.lr);
    rc.local_steps = get_or(j, "local_steps", rc.local_steps);
    if (j.contains("batch")) {
        const json& b = j.at("batch");
        require_keys(b, "run.batch", {"mode", "size"});
        rc.batch_mode = get_choice(b, "mode", "full", {"full", "minibatch"}) == "full"
                            ? engine::BatchMode::Full
                            : engine::BatchMode::Minibatch;
        rc.batch_size = get_or(b, "size", rc.batch_size);
    }
    rc.master_seed = get_or<std::uint64_t>(j, "master_seed", rc.master_seed);
    rc.threads = get_or(j, "threads", rc.threads);
    try {
        rc.validate();
    } catch (const InvalidInputError& e) {
        throw ConfigError(e.what());
    }
    return rc;
}

json data_config_json(const datagen::DataConfig& dc) {
    return json{
        {"source", dc.source == datagen::DataSource::Synthetic ? "synthetic" : "csv"},
        {"csv_path", dc.csv_path},
        {"input_dim", dc.input_dim},
        {"num_labels", dc.num_labels},
        {"samples_per_client", dc.samples_per_client},
        {"dirichlet_rho", dc.dirichlet_rho},
        {"class_separation", dc.class_separation},
        {"noise_scale", dc.noise_scale},
        {"test_fraction", dc.test_fraction},
        {"seed", dc.seed},
        {"partition", dc.partition == datagen::PartitionMode::Dirichlet ? "dirichlet" : "two_group"},
        {"majority_fraction", dc.majority_fraction},
    };
}

datagen::DataConfig data_config_from_json(const json& j) {
    require_keys(j, "data",
                 {"source", "csv_path", "input_dim", "num_labels", "samples_per_client",
                  "dirichlet_rho", "class_separation", "noise_scale", "test_fraction", "seed",
                  "partition", "majority_fraction"});
    datagen::DataConfig dc;
    dc.source = get_choice(j, "source", "synthetic", {"synthetic", "csv"}) == "synthetic"
                    ? datagen::DataSource::Synthetic
                    : datagen::DataSource::Csv;
    dc.csv_path = get_or<std::string>(j, "csv_path", dc.csv_path);
    dc.input_dim = get_or(j, "input_dim", dc.input_dim);
    dc.num_labels = get_or(j, "num_labels", dc.num_labels);
    dc.samples_per_client = get_or(j, "samples_per_client", dc.samples_per_client);
    dc.dirichlet_rho = get_or(j, "dirichlet_rho", dc.dirichlet_rho);
    dc.class_separation = get_or(j, "class_separation", dc.class_separation);
    dc.noise_scale = get_or(j, "noise_scale", dc.noise_scale);
    dc.test_fraction = get_or(j, "test_fraction", dc.test_fraction);
    dc.seed = get_or<std::uint64_t>(j, "seed", dc.seed);
    dc.partition = get_choice(j, "partition", "dirichlet", {"dirichlet", "two_group"}) ==
                           "dirichlet"
                       ? datagen::PartitionMode::Dirichlet
                       : datagen::PartitionMode::TwoGroup;
    dc.majority_fraction = get_or(j, "majority_fraction", dc.majority_fraction);

    if (dc.source == datagen::DataSource::Csv && dc.csv_path.empty())
        throw ConfigError("data.csv_path required when data.source is 'csv'");
    if (dc.samples_per_client < 2) throw ConfigError("data.samples_per_client must be >= 2");
    if (dc.dirichlet_rho <= 0.0) throw ConfigError("data.dirichlet_rho must be positive");
    if (dc.test_fraction < 0.0 || dc.test_fraction >= 1.0)
        throw ConfigError("data.test_fraction must be in [0, 1)");
    if (dc.majority_fraction <= 0.0 || dc.majority_fraction >= 1.0)
        throw ConfigError("data.majority_fraction must be in (0, 1)");
    return dc;
}

namespace {

ScenarioSection scenario_from_json(const json& j) {
    require_keys(j, "scenario",
                 {"kind", "initial_leavers", "attacker_fraction", "tau", "unlearner", "gamma",
                  "similar_fraction", "ascent_lr", "seeds"});
    ScenarioSection sc;
    sc.kind = get_choice(j, "kind", "cascade", {"cascade", "dpa"});
    sc.initial_leavers = get_or(j, "initial_leavers", sc.initial_leavers);
    sc.attacker_fraction = get_or(j, "attacker_fraction", sc.attacker_fraction);
    sc.tau = get_or(j, "tau", sc.tau);
    sc.unlearner = get_choice(j, "unlearner", "exact", {"exact", "mock"});
    sc.gamma = get_or(j, "gamma", sc.gamma);
    sc.similar_fraction = get_or(j, "similar_fraction", sc.similar_fraction);
    sc.ascent_lr = get_or(j, "ascent_lr", sc.ascent_lr);
    sc.seeds = get_or(j, "seeds", sc.seeds);
    if (sc.initial_leavers < 1) throw ConfigError("scenario.initial_leavers must be >= 1");
    if (sc.attacker_fraction <= 0.0 || sc.attacker_fraction >= 1.0)
        throw ConfigError("scenario.attacker_fraction must be in (0, 1)");
    if (sc.tau < 0.0) throw ConfigError("scenario.tau must be >= 0");
    if (sc.gamma < 0) throw ConfigError("scenario.gamma must be >= 0");
    if (sc.similar_fraction <= 0.0 || sc.similar_fraction > 1.0)
        throw ConfigError("scenario.similar_fraction must be in (0, 1]");
    if (sc.seeds < 1) throw ConfigError("scenario.seeds must be >= 1");
    return sc;
}

json scenario_json(const ScenarioSection& sc) {
    return json{
        {"kind", sc.kind},
        {"initial_leavers", sc.initial_leavers},
        {"attacker_fraction", sc.attacker_fraction},
        {"tau", sc.tau},
        {"unlearner", sc.unlearner},
        {"gamma", sc.gamma},
        {"similar_fraction", sc.similar_fraction},
        {"ascent_lr", sc.ascent_lr},
        {"seeds", sc.seeds},
    };
}

}  // namespace

ExperimentConfig parse_config_json(const json& doc) {
    require_keys(doc, "config", {"schema_version", "run", "data", "scenario"});
    if (!doc.contains("schema_version") || !doc.at("schema_version").is_number_integer())
        throw ConfigError("config: missing integer schema_version");
    if (doc.at("schema_version").get<int>() != kSchemaVersion)
        throw ConfigError("config: unsupported schema_version (expected " +
                          std::to_string(kSchemaVersion) + ")");
    if (!doc.contains("run")) throw ConfigError("config: missing 'run' section");
    if (!doc.contains("data")) throw ConfigError("config: missing 'data' section");

    ExperimentConfig ec;
    ec.run = run_config_from_json(doc.at("run"));
    ec.data = data_config_from_json(doc.at("data"));
    // The data pipeline inherits the model's dimensions.
    ec.data.input_dim = ec.run.model.input_dim;
    ec.data.num_labels = ec.run.model.num_labels;
    if (doc.contains("scenario")) {
        ec.scenario = scenario_from_json(doc.at("scenario"));
        ec.has_scenario = true;
    }
    return ec;
}

ExperimentConfig parse_config_file(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot open config file " + file.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ConfigError("config parse failure in " + file.string() + ": " + e.what());
    }
    return parse_config_json(doc);
}

json experiment_config_json(const ExperimentConfig& ec) {
    json doc = {
        {"schema_version", kSchemaVersion},
        {"run", run_config_json(ec.run)},
        {"data", data_config_json(ec.data)},
    };
    if (ec.has_scenario) doc["scenario"] = scenario_json(ec.scenario);
    return doc;
}

std::string config_digest_of(const engine::RunConfig& rc, const datagen::DataConfig& dc) {
    json doc = {{"run", run_config_json(rc)}, {"data", data_config_json(dc)}};
    // Thread count never changes results, so it must not pin a cache to one value.
    doc["run"].erase("threads");
    return to_hex(fnv1a64(doc.dump()));
}

}  // namespace shardfl::config
