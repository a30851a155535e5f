// Hierarchical shard training engine.
//
// Clients start as singleton shards sharing one initial model. Each stage
// groups the previous stage's shards (merge rate R), initializes every
// super-shard from the weighted average of its children, trains it with
// federated rounds, then aggregates the stage. After ceil(log_R K) stages a
// single root shard holds the final model. Every trained model is kept in
// the cache so client removal can retrain only the shards on the leaver's
// merge path and reuse the rest byte for byte.
//
// Determinism contract: with equal configuration, data and master seed,
// results are bit-identical regardless of thread count. Every stochastic
// choice draws from a stream keyed as digest64(master_seed, purpose, stage,
// shard, round, client), and all floating-point reductions run in a fixed
// order through shared helpers.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "shardfl/adaptive.hpp"
#include "shardfl/datagen.hpp"
#include "shardfl/numkit.hpp"

namespace shardfl::engine {

using datagen::ClientData;
using numkit::ModelSpec;
using numkit::ParamVector;

enum class RoundPolicy { Fixed, Adaptive };
enum class MergePolicy { Cluster, Random };
enum class BatchMode { Full, Minibatch };

struct RunConfig {
    int clients{8};
    int merge_rate{2};
    MergePolicy merge_policy{MergePolicy::Cluster};
    RoundPolicy round_policy{RoundPolicy::Fixed};
    int t0{5};                                  // fixed policy rounds
    adaptive::RoundRange round_range{};         // adaptive policy bounds
    bool a2_compat_inverse{false};
    bool pilot_round_range{false};              // derive bounds from a pilot
    double pilot_tolerance{1e-3};
    ModelSpec model;
    double lr{0.1};
    int local_steps{1};
    BatchMode batch_mode{BatchMode::Full};
    int batch_size{0};
    std::uint64_t master_seed{1};
    int threads{1};  // 0 = hardware concurrency

    void validate() const;
};

struct ShardNode {
    int stage{0};
    int index{0};               // position within the stage, stable across unlearning
    std::vector<int> clients;   // ascending ids
    std::vector<int> children;  // previous-stage indices, ascending
    double weight{1.0};         // client count
    int rounds{0};
    double alpha{0.0};          // angle to the stage update, [0, pi]
    double alpha_signed{0.0};   // alpha with a direction sign, drives merging
    bool dropped{false};        // emptied by unlearning
    ParamVector theta_init;
    ParamVector theta_final;

    bool contains(int client) const;
};

struct ContributionEntry {
    double alpha{0.0};
    int stage{0};  // stage of the last refresh
};

struct ShardTree {
    int merge_rate{2};
    int num_stages{0};  // P: merge stages after stage 0
    RunConfig config;
    datagen::DataConfig data_config;
    std::string config_digest;
    std::vector<std::vector<ShardNode>> stages;  // [0] singletons ... [P] root
    std::map<int, ContributionEntry> client_alphas;
    long long counted_client_rounds{0};  // sum over shards of rounds * |clients|

    const ShardNode& root() const;
    const ParamVector& final_model() const;
    // Index of the live shard holding `client` at `stage`, or -1.
    int shard_of(int stage, int client) const;
    std::vector<int> surviving_clients() const;
};

// ceil(log_R K), computed by iterating ceil-division so it matches the
// stage loop exactly.
int stages_for(int clients, int merge_rate);

// Stage-0 singleton shards sharing one seeded initial model.
std::vector<ShardNode> build_initial_stage(const RunConfig& cfg);

// Weighted average of parameter vectors, accumulated in input order. All
// aggregation in the engine funnels through this one routine so that every
// path producing the same list of inputs produces the same bits.
ParamVector weighted_average(const std::vector<const ParamVector*>& params,
                             const std::vector<double>& weights);

// Child-model average that seeds a super-shard: weights are the child
// client counts, order is ascending child index.
ParamVector init_super_shard(const std::vector<const ShardNode*>& children);

struct ShardTrainResult {
    ParamVector theta;
    std::map<int, double> client_alphas;  // final-round update angles
};

// `rounds` federated rounds on one shard: every client fits the current
// shard model locally, the round closes with a sample-count-weighted
// average. The final round also measures each client's update angle
// against the aggregate update.
ShardTrainResult train_shard(const ParamVector& theta_init, const std::vector<int>& client_ids,
                             const std::vector<ClientData>& data, int rounds,
                             const RunConfig& cfg, int stage, int shard_index);

// As train_shard, but round stream keys start at `round_base`; lets the
// pilot extend a shard round by round without reusing streams.
ShardTrainResult train_shard_span(const ParamVector& theta_init,
                                  const std::vector<int>& client_ids,
                                  const std::vector<ClientData>& data, int rounds,
                                  const RunConfig& cfg, int stage, int shard_index,
                                  int round_base);

// Recomputes contribution angles for a finished stage: each live shard's
// update (theta_final - theta_init) is measured against the weighted stage
// update, and signed by its residual's orientation along the stage's
// dominant residual direction. With `only_indices` set, angles are written
// back only for those shard indices (selective refresh after unlearning);
// the stage aggregate still spans every live shard.
void refresh_stage_alphas(std::vector<ShardNode>& stage, const std::set<int>* only_indices);

// Full protocol run over all clients.
ShardTree run_training(const RunConfig& cfg, const datagen::DataConfig& dcfg,
                       const std::vector<ClientData>& data);

// Re-trains every shard of an existing tree from scratch while keeping its
// structure: same groups, same round counts, same seed streams, minus the
// excluded clients (shards emptied by the exclusion are dropped). This is
// the reference an unlearning pass must match bit for bit.
ShardTree replay_training(const ShardTree& structure, const std::vector<ClientData>& data,
                          const std::set<int>& exclude);

// Convergence-driven round counts for the first two stages: each shard
// trains until its training loss improves by less than `tolerance` per
// round (capped). Feeds adaptive round-range estimation.
std::vector<int> pilot_round_counts(const RunConfig& cfg, const std::vector<ClientData>& data,
                                    double tolerance, int cap = 50);

// ---------------------------------------------------------------------------
// Cache persistence: <dir>/manifest.json (structure, config, blob table)
// and <dir>/params.blob (length-prefixed little-endian doubles). Writes go
// to temporaries and are renamed into place. Stage-0 shards share one blob;
// every live shard of later stages stores its final parameters.

inline constexpr int kCacheFormatVersion = 1;

void save_cache(const ShardTree& tree, const std::filesystem::path& dir);
ShardTree load_cache(const std::filesystem::path& dir);
std::size_t cache_blob_count(const std::filesystem::path& dir);

// FNV-1a digest of the raw parameter bytes, as hex.
std::string model_digest(const ParamVector& params);

}  // namespace shardfl::engine
