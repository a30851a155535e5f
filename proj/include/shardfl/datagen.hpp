// Synthetic data generation and client partitioning.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "shardfl/numkit.hpp"

namespace shardfl::datagen {

using numkit::Dataset;

enum class DataSource { Synthetic, Csv };
enum class PartitionMode { Dirichlet, TwoGroup };

struct DataConfig {
    DataSource source{DataSource::Synthetic};
    std::string csv_path;
    int input_dim{8};
    int num_labels{4};
    int samples_per_client{24};
    double dirichlet_rho{0.5};
    double class_separation{3.0};
    double noise_scale{1.0};
    double test_fraction{0.25};
    std::uint64_t seed{7};
    PartitionMode partition{PartitionMode::Dirichlet};
    double majority_fraction{0.75};  // TwoGroup only
};

struct ClientData {
    int client_id{0};
    Dataset train;
    Dataset test;
};

// Gaussian label clusters: one mean per label on a sphere of radius
// class_separation, isotropic noise around it. Labels are assigned
// round-robin so counts are as balanced as the total allows.
Dataset gen_synthetic(const DataConfig& cfg, int total_samples);

// Label-skewed split: each client draws a label profile from
// Dirichlet(rho * 1_L) and receives samples matching it as closely as
// integer rounding and per-label supply allow. Every input sample is
// assigned to exactly one client.
std::vector<Dataset> dirichlet_partition(const Dataset& data, int clients, double rho,
                                         std::uint64_t seed);

// Deterministic per-client split; the test side holds ceil(fraction * n)
// samples drawn by seeded choice without replacement.
void split_train_test(const Dataset& full, double test_fraction, std::uint64_t seed,
                      Dataset& train, Dataset& test);

// CSV with header "label,f1,...,fd".
Dataset load_csv(const std::filesystem::path& file);
void save_csv(const Dataset& data, const std::filesystem::path& file);

// End-to-end: generate or load, partition across `clients`, split each
// client's share. TwoGroup mode builds the two-label-group population used
// by the leaving and poisoning scenarios: the first floor(majority_fraction
// * clients) clients sample from the lower half of the label set, the rest
// from the upper half.
std::vector<ClientData> build_client_data(const DataConfig& cfg, int clients);

// Share of a client's most frequent label; the partition-skew statistic.
double top_label_share(const Dataset& data, int num_labels);

// Size of the majority group under TwoGroup partitioning: clients
// [0, majority_count) are majority, the rest minority.
int majority_count(double majority_fraction, int clients);

}  // namespace shardfl::datagen
