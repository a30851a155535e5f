#include "shardfl/adaptive.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace shardfl::adaptive {

namespace {

bool all_equal(const std::vector<double>& v) {
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] != v[0]) return false;
    return true;
}

int round_half_up(double x) { return static_cast<int>(std::floor(x + 0.5)); }

double population_variance(const std::vector<double>& v) {
    if (v.empty()) throw InvalidInputError("variance of empty list");
    double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double acc = 0.0;
    for (double x : v) acc += (x - mean) * (x - mean);
    return acc / static_cast<double>(v.size());
}

}  // namespace

Clusters cluster_shards(const std::vector<double>& alphas) {
    if (alphas.empty()) throw InvalidInputError("cluster_shards: no shards");
    Clusters out;
    if (all_equal(alphas)) {
        out.neutral.resize(alphas.size());
        std::iota(out.neutral.begin(), out.neutral.end(), 0);
        out.centroid_negative = out.centroid_neutral = out.centroid_positive = alphas[0];
        return out;
    }

    std::vector<double> sorted = alphas;
    std::sort(sorted.begin(), sorted.end());
    auto quantile = [&](double q) {
        auto idx = static_cast<std::size_t>(
            std::floor(q * static_cast<double>(sorted.size() - 1) + 0.5));
        return sorted[idx];
    };
    double centroid[3] = {quantile(1.0 / 6.0), quantile(3.0 / 6.0), quantile(5.0 / 6.0)};

    std::vector<int> assign(alphas.size(), 0);
    for (int sweep = 0; sweep < 100; ++sweep) {
        bool changed = false;
        for (std::size_t i = 0; i < alphas.size(); ++i) {
            int best = 0;
            double best_d = std::abs(alphas[i] - centroid[0]);
            for (int c = 1; c < 3; ++c) {
                double d = std::abs(alphas[i] - centroid[c]);
                if (d < best_d) {
                    best = c;
                    best_d = d;
                }
            }
            if (assign[i] != best) {
                assign[i] = best;
                changed = true;
            }
        }
        if (!changed && sweep > 0) break;
        for (int c = 0; c < 3; ++c) {
            double sum = 0.0;
            int n = 0;
            for (std::size_t i = 0; i < alphas.size(); ++i) {
                if (assign[i] == c) {
                    sum += alphas[i];
                    ++n;
                }
            }
            if (n > 0) centroid[c] = sum / n;  // empty clusters keep their centroid
        }
        if (!changed) break;
    }

    // Order clusters by centroid; the quantile init keeps them sorted, but
    // make it explicit so empty clusters cannot scramble the labels.
    int order[3] = {0, 1, 2};
    std::stable_sort(std::begin(order), std::end(order),
                     [&](int a, int b) { return centroid[a] < centroid[b]; });
    std::vector<int>* buckets[3] = {&out.negative, &out.neutral, &out.positive};
    double* cents[3] = {&out.centroid_negative, &out.centroid_neutral, &out.centroid_positive};
    for (int rank = 0; rank < 3; ++rank) {
        *cents[rank] = centroid[order[rank]];
        for (std::size_t i = 0; i < alphas.size(); ++i)
            if (assign[i] == order[rank]) buckets[rank]->push_back(static_cast<int>(i));
    }
    return out;
}

namespace {

struct GroupState {
    std::vector<std::vector<int>> members;
    std::vector<long> clients;
    std::vector<double> alpha_sum;
    int cap;

    explicit GroupState(int n, int cap_) : members(static_cast<std::size_t>(n)),
                                           clients(static_cast<std::size_t>(n), 0),
                                           alpha_sum(static_cast<std::size_t>(n), 0.0),
                                           cap(cap_) {}

    // Smallest eligible group by member count, ties to the lowest index.
    int pick() const {
        int best = -1;
        for (std::size_t g = 0; g < members.size(); ++g) {
            if (static_cast<int>(members[g].size()) >= cap) continue;
            if (best < 0 || members[g].size() < members[static_cast<std::size_t>(best)].size())
                best = static_cast<int>(g);
        }
        return best;
    }

    double mean_alpha(int g) const {
        const auto& m = members[static_cast<std::size_t>(g)];
        if (m.empty()) return 0.0;
        return alpha_sum[static_cast<std::size_t>(g)] / static_cast<double>(m.size());
    }

    long spread_if(int g, int extra_clients) const {
        long lo = std::numeric_limits<long>::max();
        long hi = std::numeric_limits<long>::min();
        for (std::size_t i = 0; i < clients.size(); ++i) {
            long c = clients[i] + (static_cast<int>(i) == g ? extra_clients : 0);
            lo = std::min(lo, c);
            hi = std::max(hi, c);
        }
        return hi - lo;
    }

    void place(int g, int shard, double alpha, int count) {
        members[static_cast<std::size_t>(g)].push_back(shard);
        clients[static_cast<std::size_t>(g)] += count;
        alpha_sum[static_cast<std::size_t>(g)] += alpha;
    }
};

// Move the cluster member that keeps client counts most level into group g.
void place_best(GroupState& gs, int g, std::vector<int>& cluster,
                const std::vector<double>& alphas, const std::vector<int>& counts) {
    std::size_t best = 0;
    long best_spread = std::numeric_limits<long>::max();
    for (std::size_t i = 0; i < cluster.size(); ++i) {
        long s = gs.spread_if(g, counts[static_cast<std::size_t>(cluster[i])]);
        if (s < best_spread) {
            best_spread = s;
            best = i;
        }
    }
    int shard = cluster[best];
    cluster.erase(cluster.begin() + static_cast<std::ptrdiff_t>(best));
    gs.place(g, shard, alphas[static_cast<std::size_t>(shard)],
             counts[static_cast<std::size_t>(shard)]);
}

MergePlan finish_plan(std::vector<std::vector<int>> groups) {
    for (auto& g : groups) std::sort(g.begin(), g.end());
    std::sort(groups.begin(), groups.end(),
              [](const auto& a, const auto& b) { return a.front() < b.front(); });
    MergePlan plan;
    plan.groups = std::move(groups);
    return plan;
}

}  // namespace

MergePlan random_merge(int count, int merge_rate, std::uint64_t stage_seed) {
    if (count <= 0) throw InvalidInputError("random_merge: no shards");
    if (merge_rate < 2) throw InvalidInputError("random_merge: merge rate must be >= 2");
    std::vector<int> order(static_cast<std::size_t>(count));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(stage_seed);
    rng.shuffle(order);
    std::vector<std::vector<int>> groups;
    for (int i = 0; i < count; i += merge_rate) {
        int end = std::min(count, i + merge_rate);
        groups.emplace_back(order.begin() + i, order.begin() + end);
    }
    return finish_plan(std::move(groups));
}

MergePlan merge_shards_a1(const std::vector<double>& signed_alphas,
                          const std::vector<int>& client_counts, int merge_rate,
                          std::uint64_t stage_seed) {
    if (signed_alphas.empty()) throw InvalidInputError("merge: no shards");
    if (signed_alphas.size() != client_counts.size())
        throw InvalidInputError("merge: alpha/count length mismatch");
    if (merge_rate < 2) throw InvalidInputError("merge: merge rate must be >= 2");

    // Before anything has trained every angle is identical and carries no
    // signal; fall back to a random grouping.
    if (all_equal(signed_alphas)) {
        return random_merge(static_cast<int>(signed_alphas.size()), merge_rate, stage_seed);
    }

    int n = static_cast<int>(signed_alphas.size());
    int num_groups = (n + merge_rate - 1) / merge_rate;
    GroupState gs(num_groups, merge_rate);
    Clusters cl = cluster_shards(signed_alphas);

    while (!cl.neutral.empty()) {
        int g = gs.pick();
        place_best(gs, g, cl.neutral, signed_alphas, client_counts);
    }
    while (!cl.negative.empty() && !cl.positive.empty()) {
        int g = gs.pick();
        auto& source = gs.mean_alpha(g) >= 0.0 ? cl.negative : cl.positive;
        place_best(gs, g, source, signed_alphas, client_counts);
    }
    for (auto* rest : {&cl.negative, &cl.positive}) {
        while (!rest->empty()) {
            int g = gs.pick();
            place_best(gs, g, *rest, signed_alphas, client_counts);
        }
    }
    return finish_plan(std::move(gs.members));
}

std::vector<int> allocate_rounds_a2(const std::vector<std::vector<double>>& child_alphas,
                                    const RoundRange& range, bool compat_inverse) {
    if (child_alphas.empty()) throw InvalidInputError("allocate_rounds: no shards");
    if (range.t0_star < 1 || range.t1_star < range.t0_star)
        throw InvalidInputError("allocate_rounds: bad round range");

    std::vector<double> var(child_alphas.size());
    for (std::size_t s = 0; s < child_alphas.size(); ++s)
        var[s] = population_variance(child_alphas[s]);
    double lo = *std::min_element(var.begin(), var.end());
    double hi = *std::max_element(var.begin(), var.end());
    double t0 = range.t0_star;
    double t1 = range.t1_star;

    std::vector<int> rounds(var.size());
    if (compat_inverse) {
        for (std::size_t s = 0; s < var.size(); ++s) {
            double denom = var[s] - lo;
            int t;
            if (denom < 1e-12) {
                t = kCompatRoundCap;
            } else {
                t = round_half_up((hi - lo) / denom * (t1 - t0) + t0);
            }
            rounds[s] = std::clamp(t, range.t0_star, kCompatRoundCap);
        }
        return rounds;
    }

    if (hi - lo < 1e-12) {
        int mid = round_half_up(0.5 * (t0 + t1));
        std::fill(rounds.begin(), rounds.end(), mid);
        return rounds;
    }
    for (std::size_t s = 0; s < var.size(); ++s) {
        int t = round_half_up(t0 + (t1 - t0) * (hi - var[s]) / (hi - lo));
        rounds[s] = std::clamp(t, range.t0_star, range.t1_star);
    }
    return rounds;
}

RoundRange range_from_pilot(const std::vector<int>& observed_rounds) {
    if (observed_rounds.empty()) return RoundRange{};
    auto [lo, hi] = std::minmax_element(observed_rounds.begin(), observed_rounds.end());
    RoundRange r;
    r.t0_star = std::max(1, *lo);
    r.t1_star = std::max(r.t0_star, *hi);
    return r;
}

}  // namespace shardfl::adaptive
