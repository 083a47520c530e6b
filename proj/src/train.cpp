#include "smforge/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

namespace smforge::train {
namespace {

std::uint64_t fnv_mix(std::uint64_t h, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        h ^= (v >> (8 * i)) & 0xffu;
        h *= 1099511628211ULL;
    }
    return h;
}

bool decays(const std::string& name) {
    return name.size() >= 7 && name.compare(name.size() - 7, 7, ".weight") == 0;
}

}  // namespace

void TrainConfig::validate() const {
    if (iterations < 1) throw ConfigError("iterations must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(lr_init >= 0.0) || !std::isfinite(lr_init)) throw ConfigError("lr_init must be >= 0");
    if (!(min_lr_ratio >= 0.0 && min_lr_ratio <= 1.0)) throw ConfigError("min_lr_ratio must lie in [0, 1]");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
        throw ConfigError("adam betas must lie in [0, 1)");
    }
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
    if (!(eps > 0.0)) throw ConfigError("eps must be positive");
    if (val_every < 0 || val_max_samples < 0 || checkpoint_every < 0) {
        throw ConfigError("val_every, val_max_samples and checkpoint_every must be >= 0");
    }
    (void)loss::parse_loss_kind(loss_name);
    loss.validate();
}

nlohmann::json TrainConfig::to_json() const {
    return {{"iterations", iterations},
            {"batch_size", batch_size},
            {"lr_init", lr_init},
            {"min_lr_ratio", min_lr_ratio},
            {"beta1", beta1},
            {"beta2", beta2},
            {"weight_decay", weight_decay},
            {"eps", eps},
            {"loss_name", loss_name},
            {"rim_enabled", rim_enabled},
            {"rng_seed", rng_seed},
            {"val_every", val_every},
            {"val_max_samples", val_max_samples},
            {"checkpoint_every", checkpoint_every},
            {"unit_range", unit_range},
            {"loss",
             {{"window", loss.window},
              {"stride", loss.stride},
              {"c1", loss.c1},
              {"c2", loss.c2},
              {"c3", loss.c3},
              {"patch_norm_exponent", loss.patch_norm_exponent}}}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.iterations = j.value("iterations", c.iterations);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr_init = j.value("lr_init", c.lr_init);
    c.min_lr_ratio = j.value("min_lr_ratio", c.min_lr_ratio);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.eps = j.value("eps", c.eps);
    c.loss_name = j.value("loss_name", c.loss_name);
    c.rim_enabled = j.value("rim_enabled", c.rim_enabled);
    c.rng_seed = j.value("rng_seed", c.rng_seed);
    c.val_every = j.value("val_every", c.val_every);
    c.val_max_samples = j.value("val_max_samples", c.val_max_samples);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.unit_range = j.value("unit_range", c.unit_range);
    if (j.contains("loss")) {
        const auto& l = j.at("loss");
        c.loss.window = l.value("window", c.loss.window);
        c.loss.stride = l.value("stride", c.loss.stride);
        c.loss.c1 = l.value("c1", c.loss.c1);
        c.loss.c2 = l.value("c2", c.loss.c2);
        c.loss.c3 = l.value("c3", c.loss.c3);
        c.loss.patch_norm_exponent = l.value("patch_norm_exponent", c.loss.patch_norm_exponent);
    }
    c.validate();
    return c;
}

double cosine_lr(const TrainConfig& cfg, int it) {
    const double lo = cfg.lr_init * cfg.min_lr_ratio;
    const double progress =
        cfg.iterations > 1 ? static_cast<double>(it) / (cfg.iterations - 1) : 0.0;
    return lo + 0.5 * (cfg.lr_init - lo) * (1.0 + std::cos(std::numbers::pi * progress));
}

void Dataset::check_disjoint() const {
    std::set<std::pair<int, int>> seen;
    for (const Sample& s : train) seen.emplace(s.source, s.row);
    for (const Sample& s : val) {
        if (seen.contains({s.source, s.row})) {
            throw InvalidDataError("train and validation splits share component (" +
                                   std::to_string(s.source) + ", " + std::to_string(s.row) + ")");
        }
    }
}

std::vector<Sample> make_samples(const SystemMatrix& hr, ScaleFactor s, int source,
                                 bool rim_input) {
    const SystemMatrix lr = downsample(hr, s);
    std::vector<Sample> out;
    out.reserve(static_cast<std::size_t>(hr.rows()));
    for (int k = 0; k < hr.rows(); ++k) {
        const RimImage rim = rim_encode(sm_row_to_image(lr, k));
        const ComplexImage target = sm_row_to_image(hr, k);
        Sample smp;
        smp.input = model::encode_input(rim, rim_input);
        smp.scale = rim.scale;
        smp.target = {target.values.real() / rim.scale, target.values.imag() / rim.scale};
        smp.source = source;
        smp.row = k;
        out.push_back(std::move(smp));
    }
    return out;
}

AdamW::AdamW(const model::ModelParams& like) : m_(like.zeros_like()), v_(like.zeros_like()) {}

void AdamW::step(model::ModelParams& params, const model::ModelParams& grads, double lr,
                 const TrainConfig& cfg) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg.beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t_);
    for (auto& [name, p] : params.tensors) {
        const RMatrix& g = grads.at(name);
        RMatrix& m = m_.at(name);
        RMatrix& v = v_.at(name);
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
        if (decays(name)) p *= (1.0 - lr * cfg.weight_decay);
        p.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.eps);
    }
}

namespace {

struct OutputLoss {
    double value = 0.0;
    std::array<RMatrix, 2> grad;  // with respect to the raw real / imag outputs
};

OutputLoss output_loss(loss::LossKind kind, const std::array<RMatrix, 2>& out, const Sample& sample,
                       const TrainConfig& tcfg) {
    const RMatrix& re = out[0];
    const RMatrix& im = out[1];
    const double a = tcfg.unit_range ? 0.5 : 1.0;
    const double b = tcfg.unit_range ? 0.5 : 0.0;
    std::vector<RMatrix> pred{(a * re.array() + b).matrix(), (a * im.array() + b).matrix()};
    std::vector<RMatrix> gt{(a * sample.target[0].array() + b).matrix(),
                            (a * sample.target[1].array() + b).matrix()};
    if (tcfg.rim_enabled) {
        pred.push_back((re.array().square() + im.array().square()).sqrt().matrix());
        gt.push_back((sample.target[0].array().square() + sample.target[1].array().square())
                         .sqrt()
                         .matrix());
    }
    std::vector<RMatrix> g;
    OutputLoss r;
    r.value = loss::evaluate_channels(kind, pred, gt, tcfg.loss, g);
    r.grad = {g[0] * a, g[1] * a};
    if (tcfg.rim_enabled) {
        const RMatrix& mag = pred[2];
        for (Eigen::Index i = 0; i < mag.size(); ++i) {
            const double m = mag.data()[i];
            if (m == 0.0) continue;
            const double dm = g[2].data()[i] / m;
            r.grad[0].data()[i] += dm * re.data()[i];
            r.grad[1].data()[i] += dm * im.data()[i];
        }
    }
    return r;
}

}  // namespace

double batch_loss_and_grad(const model::ModelParams& params, const model::ModelConfig& mcfg,
                           const TrainConfig& tcfg, std::span<const Sample* const> batch,
                           model::ModelParams* grads) {
    if (batch.empty()) throw ConfigError("empty batch");
    const loss::LossKind kind = loss::parse_loss_kind(tcfg.loss_name);
    const double inv = 1.0 / static_cast<double>(batch.size());
    std::vector<model::ForwardPass> passes;
    passes.reserve(batch.size());
    for (const Sample* s : batch) passes.push_back(model::forward(params, mcfg, s->input));

    std::vector<std::array<RMatrix, 2>> d_out(batch.size());
    double value = 0.0;
    if (kind == loss::LossKind::fsc) {
        // Product of the batch-mean structure term and the batch-mean l1 term.
        std::vector<OutputLoss> structure;
        std::vector<OutputLoss> global;
        double s_mean = 0.0;
        double l_mean = 0.0;
        for (std::size_t i = 0; i < batch.size(); ++i) {
            structure.push_back(output_loss(loss::LossKind::ssim_ad, passes[i].output, *batch[i], tcfg));
            global.push_back(output_loss(loss::LossKind::l1, passes[i].output, *batch[i], tcfg));
            s_mean += inv * structure.back().value;
            l_mean += inv * global.back().value;
        }
        value = s_mean * l_mean;
        for (std::size_t i = 0; i < batch.size(); ++i) {
            for (int c = 0; c < 2; ++c) {
                d_out[i][c] = inv * (l_mean * structure[i].grad[c] + s_mean * global[i].grad[c]);
            }
        }
    } else {
        for (std::size_t i = 0; i < batch.size(); ++i) {
            OutputLoss r = output_loss(kind, passes[i].output, *batch[i], tcfg);
            value += inv * r.value;
            d_out[i] = {r.grad[0] * inv, r.grad[1] * inv};
        }
    }
    if (!std::isfinite(value) || grads == nullptr) return value;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        model::backward(params, mcfg, passes[i].cache, d_out[i], *grads);
    }
    return value;
}

double evaluate_nrmse(const model::ModelParams& params, const model::ModelConfig& mcfg,
                      const std::vector<Sample>& samples, int max_samples) {
    if (samples.empty()) throw UndefinedMetricError("nRMSE over an empty sample set");
    std::size_t stride = 1;
    if (max_samples > 0 && samples.size() > static_cast<std::size_t>(max_samples)) {
        stride = (samples.size() + max_samples - 1) / static_cast<std::size_t>(max_samples);
    }
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < samples.size(); i += stride) {
        const Sample& s = samples[i];
        const model::ForwardPass pass = model::forward(params, mcfg, s.input);
        const double s2 = s.scale * s.scale;
        for (int c = 0; c < 2; ++c) {
            num += s2 * (pass.output[c] - s.target[c]).squaredNorm();
            den += s2 * s.target[c].squaredNorm();
        }
    }
    if (den == 0.0) throw UndefinedMetricError("nRMSE reference is all zero");
    return std::sqrt(num / den);
}

TrainReport train(const model::ModelConfig& mcfg, const TrainConfig& tcfg, const Dataset& data,
                  const CheckpointFn& on_checkpoint) {
    mcfg.validate();
    tcfg.validate();
    if (mcfg.rim_input != tcfg.rim_enabled) {
        throw ConfigError("model rim_input and train rim_enabled disagree");
    }
    if (data.train.empty()) throw ConfigError("training split is empty");
    data.check_disjoint();
    for (const Sample& s : data.train) {
        if (s.input.size() != static_cast<std::size_t>(mcfg.in_channels())) {
            throw ShapeError("sample channel count does not match the model input");
        }
    }

    const auto start = std::chrono::steady_clock::now();
    TrainReport report;
    model::ModelParams params = model::ModelParams::initialize(mcfg);
    report.init_fingerprint = params.fingerprint();
    AdamW opt(params);
    model::ModelParams grads = params.zeros_like();

    std::mt19937_64 rng(tcfg.rng_seed);
    std::vector<std::size_t> order(data.train.size());
    std::size_t cursor = order.size();
    std::uint64_t order_hash = 1469598103934665603ULL;

    for (int it = 0; it < tcfg.iterations; ++it) {
        for (auto& [name, g] : grads.tensors) g.setZero();
        std::vector<const Sample*> batch;
        for (int b = 0; b < tcfg.batch_size; ++b) {
            if (cursor == order.size()) {
                for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
                std::shuffle(order.begin(), order.end(), rng);
                cursor = 0;
            }
            const std::size_t idx = order[cursor++];
            order_hash = fnv_mix(order_hash, idx);
            batch.push_back(&data.train[idx]);
        }
        const double batch_loss = batch_loss_and_grad(params, mcfg, tcfg, batch, &grads);
        bool finite = std::isfinite(batch_loss);
        if (finite) {
            for (const auto& [name, g] : grads.tensors) finite = finite && g.allFinite();
        }
        if (!finite) {
            throw TrainingDiverged("non-finite loss at iteration " + std::to_string(it), it,
                                   std::move(params));
        }
        report.train_loss.push_back(batch_loss);
        model::ModelParams previous = params;
        opt.step(params, grads, cosine_lr(tcfg, it), tcfg);
        if (!params.all_finite()) {
            throw TrainingDiverged("non-finite parameters after iteration " + std::to_string(it),
                                   it, std::move(previous));
        }
        const bool last = it + 1 == tcfg.iterations;
        if (!data.val.empty() && tcfg.val_every > 0 && ((it + 1) % tcfg.val_every == 0 || last)) {
            report.val_iterations.push_back(it + 1);
            report.val_nrmse.push_back(evaluate_nrmse(params, mcfg, data.val, tcfg.val_max_samples));
        }
        if (on_checkpoint && tcfg.checkpoint_every > 0 && (it + 1) % tcfg.checkpoint_every == 0) {
            on_checkpoint(it + 1, params);
        }
    }
    report.batch_order_hash = order_hash;
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report.params = std::move(params);
    return report;
}

}  // namespace smforge::train
