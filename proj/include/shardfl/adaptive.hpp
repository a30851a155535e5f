// Adaptive shard management: angle-based merge grouping and per-shard
// training-round allocation.
#pragma once

#include <cstdint>
#include <vector>

#include "shardfl/common.hpp"

namespace shardfl::adaptive {

// Three clusters of shard indices ordered by ascending centroid:
// negative / neutral / positive contribution directions.
struct Clusters {
    std::vector<int> negative;
    std::vector<int> neutral;
    std::vector<int> positive;
    double centroid_negative{0.0};
    double centroid_neutral{0.0};
    double centroid_positive{0.0};
};

// Scalar k-means, k = 3, deterministic: centroids start at the 1/6, 3/6 and
// 5/6 quantiles of the sorted input, ties in assignment go to the lower
// cluster, at most 100 sweeps. All-equal input lands entirely in `neutral`.
Clusters cluster_shards(const std::vector<double>& alphas);

struct MergePlan {
    // Partition of previous-stage shard indices. Members ascend within each
    // group; groups are ordered by their smallest member.
    std::vector<std::vector<int>> groups;
};

// Groups ceil(N / merge_rate) super-shards so that each mixes contribution
// directions and client counts stay level. Neutral shards are spread first,
// each to the currently smallest group; negative and positive shards then
// go to groups whose running mean angle has the opposite sign. Within a
// cluster the candidate that minimizes the client-count spread wins, ties
// to the lowest shard index. When every angle is equal (the first merge:
// nothing has trained yet) the grouping is a seeded random partition.
MergePlan merge_shards_a1(const std::vector<double>& signed_alphas,
                          const std::vector<int>& client_counts, int merge_rate,
                          std::uint64_t stage_seed);

// Seeded random partition into groups of merge_rate; the no-clustering
// baseline.
MergePlan random_merge(int count, int merge_rate, std::uint64_t stage_seed);

struct RoundRange {
    int t0_star{4};
    int t1_star{7};
};

// Per-shard round counts from the spread of each shard's child angles:
// low-variance shards get the most rounds, scaled linearly into
// [t0_star, t1_star] and rounded half-up. When all variances agree every
// shard receives round((t0 + t1) / 2). The `compat_inverse` switch selects
// the reciprocal scaling instead, which blows up as a shard's variance
// approaches the stage minimum; it is kept only for comparison runs and is
// capped at `kCompatRoundCap`.
inline constexpr int kCompatRoundCap = 50;
std::vector<int> allocate_rounds_a2(const std::vector<std::vector<double>>& child_alphas,
                                    const RoundRange& range, bool compat_inverse = false);

// Round range from pilot convergence counts; empty observations fall back
// to the [4, 7] default.
RoundRange range_from_pilot(const std::vector<int>& observed_rounds);

}  // namespace shardfl::adaptive
