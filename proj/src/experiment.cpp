#include "smforge/experiment.hpp"

#include <random>

namespace smforge::experiment {
namespace {

nlohmann::json optional_json(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::optional<double> optional_from(const nlohmann::json& j, const char* key,
                                    std::optional<double> fallback) {
    if (!j.contains(key)) return fallback;
    if (j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<double>();
}

void reject_unknown(const nlohmann::json& given, const nlohmann::json& known, const std::string& path) {
    if (!given.is_object()) return;
    for (const auto& [key, value] : given.items()) {
        const std::string full = path.empty() ? key : path + "." + key;
        if (!known.is_object() || !known.contains(key)) {
            throw ConfigError("unknown configuration key '" + full + "'");
        }
        if (known.at(key).is_object()) reject_unknown(value, known.at(key), full);
    }
}

}  // namespace

void DatasetSpec::validate() const {
    if (n_train < 0 || n_val < 0 || n_test < 0) throw ConfigError("split sizes must be >= 0");
    if (gradients.empty()) throw ConfigError("dataset gradient list is empty");
    for (double g : gradients) {
        if (!(g > 0.0)) throw ConfigError("dataset gradients must be positive");
    }
    if (!(d_min > 0.0 && d_max >= d_min)) throw ConfigError("diameter range must satisfy 0 < d_min <= d_max");
    if (snr_db && !std::isfinite(*snr_db)) throw ConfigError("snr_db must be finite");
}

nlohmann::json sim_to_json(const sim::SimConfig& c) {
    return {{"gradient_x", c.gradient_x},
            {"gradient_y", c.gradient_y},
            {"f_drive", c.f_drive},
            {"f_focus", c.f_focus},
            {"amp_drive", optional_json(c.amp_drive)},
            {"amp_focus", optional_json(c.amp_focus)},
            {"particle_diameter", c.particle_diameter},
            {"fov", {{"nx", c.fov.nx}, {"ny", c.fov.ny}, {"fov_x", c.fov.fov_x}, {"fov_y", c.fov.fov_y}}},
            {"n_periods", c.n_periods},
            {"samples_per_period", c.samples_per_period},
            {"temperature", c.temperature},
            {"saturation_magnetization", c.saturation_magnetization},
            {"quadrature_weight", c.quadrature_weight},
            {"n_freqs", c.n_freqs},
            {"max_mixing_order", c.max_mixing_order},
            {"rng_seed", c.rng_seed}};
}

sim::SimConfig sim_from_json(const nlohmann::json& j) {
    sim::SimConfig c;
    c.gradient_x = j.value("gradient_x", c.gradient_x);
    c.gradient_y = j.value("gradient_y", c.gradient_y);
    c.f_drive = j.value("f_drive", c.f_drive);
    c.f_focus = j.value("f_focus", c.f_focus);
    c.amp_drive = optional_from(j, "amp_drive", c.amp_drive);
    c.amp_focus = optional_from(j, "amp_focus", c.amp_focus);
    c.particle_diameter = j.value("particle_diameter", c.particle_diameter);
    if (j.contains("fov")) {
        const auto& f = j.at("fov");
        c.fov = Grid(f.value("nx", c.fov.nx), f.value("ny", c.fov.ny), f.value("fov_x", c.fov.fov_x),
                     f.value("fov_y", c.fov.fov_y));
    }
    c.n_periods = j.value("n_periods", c.n_periods);
    c.samples_per_period = j.value("samples_per_period", c.samples_per_period);
    c.temperature = j.value("temperature", c.temperature);
    c.saturation_magnetization = j.value("saturation_magnetization", c.saturation_magnetization);
    c.quadrature_weight = j.value("quadrature_weight", c.quadrature_weight);
    c.n_freqs = j.value("n_freqs", c.n_freqs);
    c.max_mixing_order = j.value("max_mixing_order", c.max_mixing_order);
    c.rng_seed = j.value("rng_seed", c.rng_seed);
    c.validate();
    return c;
}

std::uint64_t config_hash(const nlohmann::json& j) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : j.dump()) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return h;
}

void ExperimentConfig::propagate_seed() {
    sim.rng_seed = seed;
    model.rng_seed = seed;
    train.rng_seed = seed;
    recon.seed = seed;
}

nlohmann::json ExperimentConfig::to_json() const {
    nlohmann::json j;
    j["seed"] = seed;
    j["sim"] = sim_to_json(sim);
    j["sim"].erase("rng_seed");
    j["dataset"] = {{"n_train", dataset.n_train},
                    {"n_val", dataset.n_val},
                    {"n_test", dataset.n_test},
                    {"gradients", dataset.gradients},
                    {"d_min", dataset.d_min},
                    {"d_max", dataset.d_max},
                    {"snr_db", optional_json(dataset.snr_db)}};
    j["model"] = model.to_json();
    j["model"].erase("rng_seed");
    j["train"] = train.to_json();
    j["train"].erase("rng_seed");
    j["cs"] = {{"lambda", cs.lambda},
               {"iterations", cs.iterations},
               {"step_size", cs.step_size},
               {"tolerance", cs.tolerance}};
    j["recon"] = {{"sweeps", recon.sweeps},
                  {"lambda", recon.lambda},
                  {"nonneg", recon.nonneg},
                  {"relaxation", recon.relaxation}};
    return j;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
    const ExperimentConfig defaults;
    reject_unknown(j, defaults.to_json(), "");
    ExperimentConfig c;
    try {
        c.seed = j.value("seed", c.seed);
        if (j.contains("sim")) c.sim = sim_from_json(j.at("sim"));
        if (j.contains("dataset")) {
            const auto& d = j.at("dataset");
            c.dataset.n_train = d.value("n_train", c.dataset.n_train);
            c.dataset.n_val = d.value("n_val", c.dataset.n_val);
            c.dataset.n_test = d.value("n_test", c.dataset.n_test);
            c.dataset.gradients = d.value("gradients", c.dataset.gradients);
            c.dataset.d_min = d.value("d_min", c.dataset.d_min);
            c.dataset.d_max = d.value("d_max", c.dataset.d_max);
            c.dataset.snr_db = optional_from(d, "snr_db", c.dataset.snr_db);
        }
        if (j.contains("model")) c.model = model::ModelConfig::from_json(j.at("model"));
        if (j.contains("train")) c.train = train::TrainConfig::from_json(j.at("train"));
        if (j.contains("cs")) {
            const auto& s = j.at("cs");
            c.cs.lambda = s.value("lambda", c.cs.lambda);
            c.cs.iterations = s.value("iterations", c.cs.iterations);
            c.cs.step_size = s.value("step_size", c.cs.step_size);
            c.cs.tolerance = s.value("tolerance", c.cs.tolerance);
        }
        if (j.contains("recon")) {
            const auto& r = j.at("recon");
            c.recon.sweeps = r.value("sweeps", c.recon.sweeps);
            c.recon.lambda = r.value("lambda", c.recon.lambda);
            c.recon.nonneg = r.value("nonneg", c.recon.nonneg);
            c.recon.relaxation = r.value("relaxation", c.recon.relaxation);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("configuration value has the wrong type: ") + e.what());
    }
    c.propagate_seed();
    c.sim.validate();
    c.dataset.validate();
    c.model.validate();
    c.train.validate();
    c.cs.validate();
    c.recon.validate();
    return c;
}

std::vector<sim::SimConfig> sample_configs(const sim::SimConfig& base, const DatasetSpec& spec,
                                           std::uint64_t seed) {
    spec.validate();
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, spec.gradients.size() - 1);
    std::uniform_real_distribution<double> diameter(spec.d_min, spec.d_max);
    std::vector<sim::SimConfig> out;
    const int total = spec.n_train + spec.n_val + spec.n_test;
    for (int i = 0; i < total; ++i) {
        sim::SimConfig c = base;
        c.gradient_x = c.gradient_y = spec.gradients[pick(rng)];
        c.particle_diameter = diameter(rng);
        c.amp_drive.reset();
        c.amp_focus.reset();
        c.rng_seed = seed + static_cast<std::uint64_t>(i);
        out.push_back(c);
    }
    return out;
}

SimDataset generate_dataset(const sim::SimConfig& base, const DatasetSpec& spec, std::uint64_t seed) {
    SimDataset ds;
    ds.configs = sample_configs(base, spec, seed);
    for (std::size_t i = 0; i < ds.configs.size(); ++i) {
        SystemMatrix sm = sim::simulate_sm(ds.configs[i]);
        if (spec.snr_db) sm = sim::add_noise(sm, *spec.snr_db, ds.configs[i].rng_seed);
        const int idx = static_cast<int>(i);
        if (idx < spec.n_train) {
            ds.train.push_back(std::move(sm));
        } else if (idx < spec.n_train + spec.n_val) {
            ds.val.push_back(std::move(sm));
        } else {
            ds.test.push_back(std::move(sm));
        }
    }
    return ds;
}

train::Dataset training_set(const std::vector<SystemMatrix>& train,
                            const std::vector<SystemMatrix>& val, ScaleFactor s, bool rim_input) {
    train::Dataset d;
    int source = 0;
    for (const auto& sm : train) {
        auto samples = train::make_samples(sm, s, source++, rim_input);
        d.train.insert(d.train.end(), std::make_move_iterator(samples.begin()),
                       std::make_move_iterator(samples.end()));
    }
    for (const auto& sm : val) {
        auto samples = train::make_samples(sm, s, source++, rim_input);
        d.val.insert(d.val.end(), std::make_move_iterator(samples.begin()),
                     std::make_move_iterator(samples.end()));
    }
    d.check_disjoint();
    return d;
}

}  // namespace smforge::experiment
