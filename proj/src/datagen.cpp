#include "shardfl/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace shardfl::datagen {

namespace {

// Sub-stream tags so one data seed drives independent choices.
enum : std::uint64_t { kMeans = 1, kNoise = 2, kPartition = 3, kSplit = 4, kGroup = 5 };

std::vector<std::vector<double>> label_means(const DataConfig& cfg) {
    Rng rng(digest64(cfg.seed, kMeans));
    std::vector<std::vector<double>> means;
    means.reserve(static_cast<std::size_t>(cfg.num_labels));
    for (int l = 0; l < cfg.num_labels; ++l) {
        std::vector<double> m(static_cast<std::size_t>(cfg.input_dim));
        double n = 0.0;
        do {
            n = 0.0;
            for (auto& v : m) {
                v = rng.normal();
                n += v * v;
            }
            n = std::sqrt(n);
        } while (n < 1e-12);
        for (auto& v : m) v *= cfg.class_separation / n;
        means.push_back(std::move(m));
    }
    return means;
}

void emit_sample(Dataset& out, const std::vector<double>& mean, double noise, Rng& rng,
                 int label) {
    std::vector<double> x(mean.size());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = mean[i] + noise * rng.normal();
    out.append(x, label);
}

// Largest-remainder rounding of `total` into parts proportional to weights.
std::vector<int> largest_remainder(const std::vector<double>& weights, int total) {
    double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
    std::size_t n = weights.size();
    std::vector<int> counts(n, 0);
    if (total <= 0) return counts;
    if (wsum <= 0.0) {
        for (int i = 0; i < total; ++i) counts[static_cast<std::size_t>(i) % n] += 1;
        return counts;
    }
    std::vector<double> frac(n);
    int assigned = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double exact = weights[i] / wsum * total;
        counts[i] = static_cast<int>(std::floor(exact));
        frac[i] = exact - counts[i];
        assigned += counts[i];
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
    for (int i = 0; assigned < total; ++i, ++assigned) counts[order[static_cast<std::size_t>(i) % n]] += 1;
    return counts;
}

}  // namespace

Dataset gen_synthetic(const DataConfig& cfg, int total_samples) {
    if (cfg.input_dim <= 0 || cfg.num_labels < 2)
        throw InvalidInputError("gen_synthetic: bad dimensions");
    if (total_samples <= 0) throw InvalidInputError("gen_synthetic: nothing to generate");
    auto means = label_means(cfg);
    Rng rng(digest64(cfg.seed, kNoise));
    Dataset out;
    out.feature_dim = cfg.input_dim;
    for (int i = 0; i < total_samples; ++i) {
        int label = i % cfg.num_labels;
        emit_sample(out, means[static_cast<std::size_t>(label)], cfg.noise_scale, rng, label);
    }
    return out;
}

std::vector<Dataset> dirichlet_partition(const Dataset& data, int clients, double rho,
                                         std::uint64_t seed) {
    if (clients <= 0) throw InvalidInputError("dirichlet_partition: need at least one client");
    if (rho <= 0.0) throw InvalidInputError("dirichlet_partition: rho must be positive");
    if (data.size() < static_cast<std::size_t>(clients))
        throw InvalidInputError("dirichlet_partition: fewer samples than clients");

    int num_labels = 0;
    for (int y : data.labels) num_labels = std::max(num_labels, y + 1);

    // Per-label index pools, each in seeded order, consumed front to back.
    std::vector<std::vector<std::size_t>> pool(static_cast<std::size_t>(num_labels));
    for (std::size_t i = 0; i < data.size(); ++i)
        pool[static_cast<std::size_t>(data.labels[i])].push_back(i);
    Rng shuffler(digest64(seed, kPartition, 0));
    for (auto& p : pool) shuffler.shuffle(p);
    std::vector<std::size_t> cursor(pool.size(), 0);
    auto remaining = [&](std::size_t l) { return pool[l].size() - cursor[l]; };

    // Near-equal client totals.
    int total = static_cast<int>(data.size());
    int base = total / clients;
    int extra = total % clients;

    Rng profile_rng(digest64(seed, kPartition, 1));
    std::vector<std::vector<std::size_t>> assigned(static_cast<std::size_t>(clients));
    for (int k = 0; k < clients; ++k) {
        int want = base + (k < extra ? 1 : 0);
        auto profile = dirichlet(profile_rng, rho, num_labels);
        auto desired = largest_remainder(profile, want);

        std::vector<std::size_t>& mine = assigned[static_cast<std::size_t>(k)];
        int got = 0;
        for (std::size_t l = 0; l < pool.size(); ++l) {
            int take = std::min<int>(desired[l], static_cast<int>(remaining(l)));
            for (int t = 0; t < take; ++t) mine.push_back(pool[l][cursor[l]++]);
            got += take;
        }
        // Supply ran short for some label: top up from the most abundant ones.
        while (got < want) {
            std::size_t best = 0;
            for (std::size_t l = 1; l < pool.size(); ++l)
                if (remaining(l) > remaining(best)) best = l;
            if (remaining(best) == 0) break;
            mine.push_back(pool[best][cursor[best]++]);
            ++got;
        }
    }

    std::vector<Dataset> out(static_cast<std::size_t>(clients));
    for (int k = 0; k < clients; ++k) {
        auto& idx = assigned[static_cast<std::size_t>(k)];
        std::sort(idx.begin(), idx.end());
        out[static_cast<std::size_t>(k)].feature_dim = data.feature_dim;
        for (std::size_t i : idx)
            out[static_cast<std::size_t>(k)].append(data.row(i), data.labels[i]);
    }
    return out;
}

void split_train_test(const Dataset& full, double test_fraction, std::uint64_t seed,
                      Dataset& train, Dataset& test) {
    if (test_fraction < 0.0 || test_fraction >= 1.0)
        throw InvalidInputError("split_train_test: fraction must be in [0, 1)");
    std::size_t n = full.size();
    if (n == 0) throw InvalidInputError("split_train_test: empty dataset");

    std::size_t t = static_cast<std::size_t>(std::ceil(test_fraction * static_cast<double>(n)));
    if (test_fraction > 0.0 && t == 0) t = 1;
    if (t >= n) t = n - 1;  // keep the train side non-empty

    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(digest64(seed, kSplit));
    rng.shuffle(idx);
    std::vector<bool> is_test(n, false);
    for (std::size_t i = 0; i < t; ++i) is_test[idx[i]] = true;

    train = Dataset{};
    test = Dataset{};
    train.feature_dim = full.feature_dim;
    test.feature_dim = full.feature_dim;
    for (std::size_t i = 0; i < n; ++i)
        (is_test[i] ? test : train).append(full.row(i), full.labels[i]);
}

Dataset load_csv(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw DataError("cannot open " + file.string());
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty file: " + file.string());
    if (line.rfind("label", 0) != 0)
        throw DataError("missing 'label,...' header in " + file.string());
    auto header_features = std::count(line.begin(), line.end(), ',');
    if (header_features < 1) throw DataError("header declares no features in " + file.string());

    Dataset out;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> row;
        int label = -1;
        bool first = true;
        while (std::getline(ss, cell, ',')) {
            try {
                if (first) {
                    label = std::stoi(cell);
                    first = false;
                } else {
                    row.push_back(std::stod(cell));
                }
            } catch (const std::exception&) {
                throw DataError(file.string() + ":" + std::to_string(lineno) +
                                ": unparsable cell '" + cell + "'");
            }
        }
        if (first || label < 0)
            throw DataError(file.string() + ":" + std::to_string(lineno) + ": bad label");
        if (row.empty())
            throw DataError(file.string() + ":" + std::to_string(lineno) + ": no features");
        if (static_cast<long long>(row.size()) != header_features)
            throw DataError(file.string() + ":" + std::to_string(lineno) +
                            ": row width does not match header");
        out.append(row, label);
    }
    if (out.size() == 0) throw DataError("no samples in " + file.string());
    return out;
}

void save_csv(const Dataset& data, const std::filesystem::path& file) {
    std::ofstream out(file);
    if (!out) throw DataError("cannot write " + file.string());
    out << "label";
    for (int i = 1; i <= data.feature_dim; ++i) out << ",f" << i;
    out << "\n";
    char buf[40];
    for (std::size_t i = 0; i < data.size(); ++i) {
        out << data.labels[i];
        auto row = data.row(i);
        for (double v : row) {
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            out << ',' << buf;
        }
        out << "\n";
    }
}

std::vector<ClientData> build_client_data(const DataConfig& cfg, int clients) {
    if (clients <= 0) throw InvalidInputError("build_client_data: need at least one client");

    std::vector<Dataset> shares;
    if (cfg.partition == PartitionMode::TwoGroup) {
        if (cfg.source != DataSource::Synthetic)
            throw DataError("two-group partition requires synthetic data");
        if (cfg.num_labels < 2) throw InvalidInputError("two-group partition needs >= 2 labels");
        auto means = label_means(cfg);
        int majority = majority_count(cfg.majority_fraction, clients);
        int half = cfg.num_labels / 2;
        shares.resize(static_cast<std::size_t>(clients));
        for (int k = 0; k < clients; ++k) {
            int lo = k < majority ? 0 : half;
            int hi = k < majority ? half : cfg.num_labels;
            Rng rng(digest64(cfg.seed, kGroup, static_cast<std::uint64_t>(k)));
            Dataset& d = shares[static_cast<std::size_t>(k)];
            d.feature_dim = cfg.input_dim;
            for (int i = 0; i < cfg.samples_per_client; ++i) {
                int label = lo + i % (hi - lo);
                emit_sample(d, means[static_cast<std::size_t>(label)], cfg.noise_scale, rng,
                            label);
            }
        }
    } else {
        Dataset pool;
        if (cfg.source == DataSource::Synthetic) {
            pool = gen_synthetic(cfg, cfg.samples_per_client * clients);
        } else {
            pool = load_csv(cfg.csv_path);
            if (pool.feature_dim != cfg.input_dim)
                throw DataError("csv feature width does not match configured input_dim");
            for (int y : pool.labels)
                if (y >= cfg.num_labels)
                    throw DataError("csv label exceeds configured num_labels");
        }
        shares = dirichlet_partition(pool, clients, cfg.dirichlet_rho, cfg.seed);
    }

    std::vector<ClientData> out(static_cast<std::size_t>(clients));
    for (int k = 0; k < clients; ++k) {
        auto& cd = out[static_cast<std::size_t>(k)];
        cd.client_id = k;
        split_train_test(shares[static_cast<std::size_t>(k)], cfg.test_fraction,
                         digest64(cfg.seed, kSplit, static_cast<std::uint64_t>(k)), cd.train,
                         cd.test);
    }
    return out;
}

int majority_count(double majority_fraction, int clients) {
    if (clients < 2) throw InvalidInputError("two-group partition needs >= 2 clients");
    if (!(majority_fraction > 0.0) || !(majority_fraction < 1.0))
        throw InvalidInputError("majority_fraction must lie in (0, 1)");
    int majority = static_cast<int>(std::floor(majority_fraction * clients));
    return std::clamp(majority, 1, clients - 1);
}

double top_label_share(const Dataset& data, int num_labels) {
    if (data.size() == 0 || num_labels <= 0) return 0.0;
    std::vector<std::size_t> counts(static_cast<std::size_t>(num_labels), 0);
    for (int y : data.labels) counts[static_cast<std::size_t>(y)] += 1;
    std::size_t top = *std::max_element(counts.begin(), counts.end());
    return static_cast<double>(top) / static_cast<double>(data.size());
}

}  // namespace shardfl::datagen
