#include "shardfl/fairmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

namespace shardfl::fairness {

double dis(double alpha_a, double alpha_b) { return std::abs(alpha_a - alpha_b); }

std::vector<double> normalize(const std::vector<double>& values, double epsilon) {
    if (values.empty()) throw InvalidInputError("normalize: empty family");
    if (!(epsilon > 0.0)) throw InvalidInputError("normalize: epsilon must be positive");
    auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    double lo = *lo_it, hi = *hi_it;
    if (!std::isfinite(lo) || !std::isfinite(hi))
        throw InvalidInputError("normalize: non-finite value");
    std::vector<double> out(values.size(), epsilon);
    double delta = hi - lo;
    if (delta > 0.0) {
        for (std::size_t i = 0; i < values.size(); ++i)
            out[i] = epsilon + (values[i] - lo) / delta;
    }
    return out;
}

double f_oplus(double x, double y) {
    if (!(x > 0.0) || !(y > 0.0)) throw InvalidInputError("f_oplus: inputs must be positive");
    return (x + y) * (1.0 / x + 1.0 / y);
}

namespace {

void check_population(const FairnessInputs& in, std::vector<int>& population) {
    if (in.remaining.empty())
        throw InvalidInputError("fairness: no remaining clients");
    std::set<int> pop(in.remaining.begin(), in.remaining.end());
    if (pop.size() != in.remaining.size())
        throw InvalidInputError("fairness: duplicate remaining client");
    for (int c : in.leaving)
        if (!pop.insert(c).second)
            throw InvalidInputError("fairness: client listed twice");
    if (pop.size() != in.delta_y.size())
        throw InvalidInputError("fairness: delta_y must cover exactly the population");
    for (int c : pop) {
        if (!in.delta_y.count(c)) throw InvalidInputError("fairness: missing delta_y entry");
        if (!in.alpha.count(c)) throw InvalidInputError("fairness: missing alpha entry");
    }
    population.assign(pop.begin(), pop.end());
}

}  // namespace

MpReport m_p(const FairnessInputs& in, double epsilon) {
    std::vector<int> population;
    check_population(in, population);

    MpReport rep;
    std::vector<double> dy, uniq;
    dy.reserve(population.size());
    uniq.reserve(population.size());
    for (int c : population) {
        dy.push_back(in.delta_y.at(c));
        double best = std::numeric_limits<double>::infinity();
        for (int r : in.remaining) {
            if (r == c) continue;
            best = std::min(best, dis(in.alpha.at(c), in.alpha.at(r)));
        }
        if (!std::isfinite(best))
            throw InvalidInputError("fairness: uniqueness needs another remaining client");
        uniq.push_back(best);
        rep.uniqueness_raw[c] = best;
    }

    std::vector<double> dy_n = normalize(dy, epsilon);
    std::vector<double> uniq_n = normalize(uniq, epsilon);
    double sum = 0.0;
    for (std::size_t i = 0; i < population.size(); ++i) {
        double term = f_oplus(dy_n[i], uniq_n[i]);
        rep.terms[population[i]] = term;
        sum += term;
    }
    rep.value = sum / static_cast<double>(population.size());
    return rep;
}

double m_p_of_subset(const MpReport& report, const std::vector<int>& subset) {
    if (subset.empty()) throw InvalidInputError("m_p_of_subset: empty subset");
    double sum = 0.0;
    for (int c : subset) {
        auto it = report.terms.find(c);
        if (it == report.terms.end())
            throw InvalidInputError("m_p_of_subset: client has no term");
        sum += it->second;
    }
    return sum / static_cast<double>(subset.size());
}

MeReport m_e(const std::map<int, double>& cost, const std::map<int, double>& alpha,
             double alpha_floor) {
    if (cost.empty()) throw InvalidInputError("m_e: no costs");
    if (!(alpha_floor > 0.0)) throw InvalidInputError("m_e: floor must be positive");
    double avg = 0.0;
    for (const auto& [c, z] : cost) {
        if (!alpha.count(c)) throw InvalidInputError("m_e: missing alpha entry");
        avg += z;
    }
    avg /= static_cast<double>(cost.size());

    MeReport rep;
    double sum = 0.0;
    for (const auto& [c, z] : cost) {
        double d = avg - z;
        double term = d * d / std::max(std::abs(alpha.at(c)), alpha_floor);
        rep.terms[c] = term;
        sum += term;
    }
    rep.value = sum / static_cast<double>(cost.size());
    return rep;
}

double m_e_unweighted(const std::map<int, double>& cost) {
    if (cost.empty()) throw InvalidInputError("m_e_unweighted: no costs");
    double avg = 0.0;
    for (const auto& [c, z] : cost) avg += z;
    avg /= static_cast<double>(cost.size());
    double sum = 0.0;
    for (const auto& [c, z] : cost) sum += (avg - z) * (avg - z);
    return sum / static_cast<double>(cost.size());
}

RankAlignment rank_alignment_oracle(const std::vector<double>& delta_y,
                                    const std::vector<double>& uniqueness,
                                    double epsilon) {
    const std::size_t n = delta_y.size();
    if (n == 0 || n != uniqueness.size())
        throw InvalidInputError("rank_alignment_oracle: size mismatch");
    if (n > 8) throw InvalidInputError("rank_alignment_oracle: n must be at most 8");

    std::vector<double> dy_n = normalize(delta_y, epsilon);
    std::vector<double> uniq_n = normalize(uniqueness, epsilon);

    auto mean_score = [&](const std::vector<int>& assign) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += f_oplus(dy_n[assign[i]], uniq_n[i]);
        return s / static_cast<double>(n);
    };

    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    RankAlignment out;
    out.best_value = std::numeric_limits<double>::infinity();
    std::vector<int> p = perm;
    std::sort(p.begin(), p.end());
    do {
        double s = mean_score(p);
        if (s < out.best_value) {
            out.best_value = s;
            out.best_assignment = p;
        }
    } while (std::next_permutation(p.begin(), p.end()));

    // Pair i-th smallest delta with i-th smallest uniqueness.
    std::vector<int> dy_rank(n), uniq_rank(n);
    std::iota(dy_rank.begin(), dy_rank.end(), 0);
    std::iota(uniq_rank.begin(), uniq_rank.end(), 0);
    std::stable_sort(dy_rank.begin(), dy_rank.end(),
                     [&](int a, int b) { return delta_y[a] < delta_y[b]; });
    std::stable_sort(uniq_rank.begin(), uniq_rank.end(),
                     [&](int a, int b) { return uniqueness[a] < uniqueness[b]; });
    std::vector<int> aligned(n);
    for (std::size_t i = 0; i < n; ++i) aligned[uniq_rank[i]] = dy_rank[i];
    out.aligned_value = mean_score(aligned);
    out.aligned_is_minimal = out.aligned_value <= out.best_value + 1e-12;
    return out;
}

}  // namespace shardfl::fairness
