// Experiment configuration: JSON schema, strict parsing, canonical digest.
#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "shardfl/datagen.hpp"
#include "shardfl/engine.hpp"

namespace shardfl::config {

inline constexpr int kSchemaVersion = 1;

// Scenario knobs consumed by the scenario harnesses.
struct ScenarioSection {
    std::string kind{"cascade"};  // "cascade" | "dpa"
    int initial_leavers{3};       // cascade: leaver count from the minority group
    double attacker_fraction{0.25};
    double tau{0.01};
    std::string unlearner{"exact"};  // "exact" | "mock"
    int gamma{8};                    // mock: ascent steps
    double similar_fraction{0.25};   // mock: share of remaining clients targeted
    double ascent_lr{-1.0};          // mock: <0 means reuse the training lr
    int seeds{1};
};

struct ExperimentConfig {
    engine::RunConfig run;
    datagen::DataConfig data;
    ScenarioSection scenario;
    bool has_scenario{false};
};

// Strict parse: schema_version must match, every key must be known, values
// must satisfy the component validators. Throws ConfigError.
ExperimentConfig parse_config_json(const nlohmann::json& doc);
ExperimentConfig parse_config_file(const std::filesystem::path& file);

// Full round-trip serialization (defaults included, so two configs with
// equal effective values serialize identically).
nlohmann::json run_config_json(const engine::RunConfig& rc);
engine::RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json data_config_json(const datagen::DataConfig& dc);
datagen::DataConfig data_config_from_json(const nlohmann::json& j);
nlohmann::json experiment_config_json(const ExperimentConfig& ec);

// Content hash of the effective run + data configuration, as hex.
std::string config_digest_of(const engine::RunConfig& rc, const datagen::DataConfig& dc);

}  // namespace shardfl::config
