#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "smforge/core.hpp"
#include "smforge/losses.hpp"
#include "smforge/model.hpp"

namespace smforge::train {

struct TrainConfig {
    int iterations = 2000;
    int batch_size = 8;
    double lr_init = 1e-3;
    double min_lr_ratio = 0.01;  // cosine decay ends at lr_init * min_lr_ratio
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 0.01;
    double eps = 1e-14;
    std::string loss_name = "fsc";
    bool rim_enabled = true;
    std::uint64_t rng_seed = 0;
    int val_every = 100;
    int val_max_samples = 128;
    int checkpoint_every = 0;  // 0 disables periodic checkpoint callbacks
    /// Losses see real/imag channels mapped from [-1, 1] to [0, 1] via (x + 1) / 2.
    bool unit_range = true;
    loss::LossConfig loss;

    void validate() const;
    [[nodiscard]] nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

/// Learning rate at iteration `it` (0-based) of a cosine schedule.
[[nodiscard]] double cosine_lr(const TrainConfig& cfg, int it);

/// One low-res / high-res frequency-component pair, both normalized by the
/// low-res RIM scale.
struct Sample {
    std::vector<RMatrix> input;   // real, imag[, magnitude]
    std::array<RMatrix, 2> target;
    double scale = 1.0;
    int source = 0;  // matrix id within the dataset
    int row = 0;     // frequency row within the source matrix
};

struct Dataset {
    std::vector<Sample> train;
    std::vector<Sample> val;

    /// Throws InvalidDataError when a (source, row) pair appears in both splits.
    void check_disjoint() const;
};

/// Samples for every row of `hr`, low-res side taken by offset-0 striding.
[[nodiscard]] std::vector<Sample> make_samples(const SystemMatrix& hr, ScaleFactor s, int source,
                                               bool rim_input);

struct TrainReport {
    std::vector<double> train_loss;      // one entry per iteration
    std::vector<int> val_iterations;
    std::vector<double> val_nrmse;
    double wall_seconds = 0.0;
    std::uint64_t init_fingerprint = 0;
    std::uint64_t batch_order_hash = 0;  // hash of the sample indices visited
    model::ModelParams params;
};

/// Thrown on a non-finite loss or gradient; carries the last finite parameters.
class TrainingDiverged : public DivergenceError {
public:
    TrainingDiverged(const std::string& what, int iteration, model::ModelParams last_good)
        : DivergenceError(what), iteration(iteration), last_good(std::move(last_good)) {}
    int iteration;
    model::ModelParams last_good;
};

using CheckpointFn = std::function<void(int iteration, const model::ModelParams&)>;

/// Decoupled-weight-decay Adam state over a parameter set.
class AdamW {
public:
    explicit AdamW(const model::ModelParams& like);
    void step(model::ModelParams& params, const model::ModelParams& grads, double lr,
              const TrainConfig& cfg);

private:
    model::ModelParams m_;
    model::ModelParams v_;
    int t_ = 0;
};

/// Batch loss; accumulates parameter gradients into `grads` when non-null.
/// Mean-type losses average over samples; the FSC product is formed from the
/// batch means of its structure and l1 factors.
double batch_loss_and_grad(const model::ModelParams& params, const model::ModelConfig& mcfg,
                           const TrainConfig& tcfg, std::span<const Sample* const> batch,
                           model::ModelParams* grads);

/// Frobenius nRMSE over the (de-normalized) predictions for `samples`.
[[nodiscard]] double evaluate_nrmse(const model::ModelParams& params, const model::ModelConfig& mcfg,
                                    const std::vector<Sample>& samples, int max_samples = 0);

[[nodiscard]] TrainReport train(const model::ModelConfig& mcfg, const TrainConfig& tcfg,
                                const Dataset& data, const CheckpointFn& on_checkpoint = {});

}  // namespace smforge::train
