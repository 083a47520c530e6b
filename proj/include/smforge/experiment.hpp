#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <json.hpp>

#include "smforge/baselines.hpp"
#include "smforge/model.hpp"
#include "smforge/recon.hpp"
#include "smforge/sim.hpp"
#include "smforge/train.hpp"

namespace smforge::experiment {

/// How a collection of simulated matrices is drawn: gradients from a fixed
/// list (equal in x and y), particle diameters uniform in [d_min, d_max].
struct DatasetSpec {
    int n_train = 16;
    int n_val = 4;
    int n_test = 5;
    std::vector<double> gradients{2.0, 2.5, 3.0, 3.5, 4.0};
    double d_min = 20.0;
    double d_max = 35.0;
    std::optional<double> snr_db;  // calibration noise on every matrix when set

    void validate() const;
};

struct ExperimentConfig {
    std::uint64_t seed = 0;
    sim::SimConfig sim;
    DatasetSpec dataset;
    model::ModelConfig model;
    train::TrainConfig train;
    baselines::CsConfig cs;
    recon::ReconConfig recon;

    /// Copies `seed` into every sub-config that draws random numbers.
    void propagate_seed();
    [[nodiscard]] nlohmann::json to_json() const;
    /// Missing keys keep their defaults; unknown keys are rejected.
    static ExperimentConfig from_json(const nlohmann::json& j);
};

[[nodiscard]] nlohmann::json sim_to_json(const sim::SimConfig& c);
[[nodiscard]] sim::SimConfig sim_from_json(const nlohmann::json& j);

/// FNV-1a hash of the canonical JSON form of a simulator config.
[[nodiscard]] std::uint64_t config_hash(const nlohmann::json& j);

/// Per-matrix simulator configs, train first, then validation, then test.
[[nodiscard]] std::vector<sim::SimConfig> sample_configs(const sim::SimConfig& base,
                                                         const DatasetSpec& spec,
                                                         std::uint64_t seed);

struct SimDataset {
    std::vector<sim::SimConfig> configs;
    std::vector<SystemMatrix> train;
    std::vector<SystemMatrix> val;
    std::vector<SystemMatrix> test;
};

[[nodiscard]] SimDataset generate_dataset(const sim::SimConfig& base, const DatasetSpec& spec,
                                          std::uint64_t seed);

/// Training pairs from the train/validation matrices at scale `s`.
[[nodiscard]] train::Dataset training_set(const std::vector<SystemMatrix>& train,
                                          const std::vector<SystemMatrix>& val, ScaleFactor s,
                                          bool rim_input);

}  // namespace smforge::experiment
