#include "smforge/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <numeric>
#include <random>
#include <string>
#include <thread>

#include <fftw3.h>

namespace smforge::sim {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

long long integer_hz(double f, const char* what) {
    const double r = std::round(f);
    if (r != f || r <= 0.0) {
        throw ConfigError(std::string(what) + " must be a positive whole number of Hz");
    }
    return static_cast<long long>(r);
}

struct FrequencyLattice {
    long long base_hz;  // gcd(f_drive, f_focus)
    long long a;        // f_drive / base
    long long b;        // f_focus / base
};

FrequencyLattice lattice(const SimConfig& cfg) {
    const long long fd = integer_hz(cfg.f_drive, "f_drive");
    const long long fe = integer_hz(cfg.f_focus, "f_focus");
    const long long g = std::gcd(fd, fe);
    return {g, fd / g, fe / g};
}

struct FftwPlanDeleter {
    void operator()(fftw_plan_s* p) const { fftw_destroy_plan(p); }
};
struct FftwFree {
    void operator()(void* p) const { fftw_free(p); }
};
using PlanHandle = std::unique_ptr<fftw_plan_s, FftwPlanDeleter>;

std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

/// Real-to-complex transform of a fixed length with its own aligned buffers.
class RealFft {
public:
    explicit RealFft(int n)
        : n_(n),
          in_(static_cast<double*>(fftw_malloc(sizeof(double) * n))),
          out_(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1)))) {
        std::lock_guard lock(planner_mutex());
        plan_.reset(fftw_plan_dft_r2c_1d(n, in_.get(), out_.get(), FFTW_ESTIMATE));
    }

    /// Unnormalized forward DFT of `signal`; returns bins 0..n/2.
    CVector operator()(const std::vector<double>& signal) {
        std::copy(signal.begin(), signal.end(), in_.get());
        fftw_execute(plan_.get());
        CVector out(n_ / 2 + 1);
        for (int k = 0; k <= n_ / 2; ++k) out[k] = cplx(out_.get()[k][0], out_.get()[k][1]);
        return out;
    }

private:
    int n_;
    std::unique_ptr<double, FftwFree> in_;
    std::unique_ptr<fftw_complex, FftwFree> out_;
    PlanHandle plan_;
};

}  // namespace

void SimConfig::validate() const {
    fov.validate();
    const auto positive = [](double v, const char* name) {
        if (!(v > 0.0) || !std::isfinite(v)) {
            throw ConfigError(std::string(name) + " must be finite and strictly positive");
        }
    };
    positive(gradient_x, "gradient_x");
    positive(gradient_y, "gradient_y");
    positive(f_drive, "f_drive");
    positive(f_focus, "f_focus");
    positive(particle_diameter, "particle_diameter");
    positive(temperature, "temperature");
    positive(saturation_magnetization, "saturation_magnetization");
    positive(quadrature_weight, "quadrature_weight");
    if (amp_drive) positive(*amp_drive, "amp_drive");
    if (amp_focus) positive(*amp_focus, "amp_focus");
    if (f_drive == f_focus) throw ConfigError("f_drive and f_focus must differ");
    if (n_periods < 1) throw ConfigError("n_periods must be >= 1");
    if (samples_per_period < 4) throw ConfigError("samples_per_period must be >= 4");
    if (n_freqs < 0) throw ConfigError("n_freqs must be >= 0");
    if (max_mixing_order < 1) throw ConfigError("max_mixing_order must be >= 1");
    (void)lattice(*this);
}

Phantom::Phantom(Grid g, RMatrix c) : grid(g), concentration(std::move(c)) {
    grid.validate();
    if (concentration.rows() != grid.ny || concentration.cols() != grid.nx) {
        throw ShapeError("phantom does not match its grid");
    }
    for (Eigen::Index i = 0; i < concentration.size(); ++i) {
        const double v = concentration.data()[i];
        if (!std::isfinite(v) || v < 0.0) {
            throw InvalidDataError("phantom concentration must be finite and nonnegative");
        }
    }
}

Phantom Phantom::signed_map(Grid g, RMatrix c) {
    g.validate();
    if (c.rows() != g.ny || c.cols() != g.nx) throw ShapeError("phantom does not match its grid");
    if (!c.allFinite()) throw InvalidDataError("phantom concentration must be finite");
    Phantom p;
    p.grid = g;
    p.concentration = std::move(c);
    return p;
}

std::pair<double, double> drive_amplitudes(const SimConfig& cfg) {
    // mm * T/m = 1e-3 T = mT
    const double ax = cfg.amp_drive ? *cfg.amp_drive : cfg.fov.fov_x * cfg.gradient_x / 2.0;
    const double ay = cfg.amp_focus ? *cfg.amp_focus : cfg.fov.fov_y * cfg.gradient_y / 2.0;
    return {ax, ay};
}

std::array<double, 2> ffp_trajectory(const SimConfig& cfg, double t) {
    if (t < 0.0) throw ConfigError("ffp_trajectory: t must be >= 0");
    const auto [ax, ay] = drive_amplitudes(cfg);
    // mT / (T/m) = mm
    return {ax / cfg.gradient_x * std::sin(kTwoPi * cfg.f_drive * t),
            ay / cfg.gradient_y * std::sin(kTwoPi * cfg.f_focus * t)};
}

double repetition_period(const SimConfig& cfg) {
    return 1.0 / static_cast<double>(lattice(cfg).base_hz);
}

double langevin(double xi) {
    const double ax = std::abs(xi);
    if (ax < 1e-4) {
        const double x2 = xi * xi;
        return xi * (1.0 / 3.0 - x2 / 45.0);
    }
    return 1.0 / std::tanh(xi) - 1.0 / xi;
}

double particle_moment(const SimConfig& cfg) {
    const double d = cfg.particle_diameter * 1e-9;
    return std::numbers::pi / 6.0 * cfg.saturation_magnetization * d * d * d;
}

int samples_per_window(const SimConfig& cfg) {
    const auto lat = lattice(cfg);
    const long long n = static_cast<long long>(cfg.samples_per_period) * lat.a * cfg.n_periods;
    if (n > (1LL << 28)) throw ConfigError("acquisition window has too many samples");
    return static_cast<int>(n);
}

TimeSignal simulate_time_signal(const SimConfig& cfg, std::array<double, 2> pos) {
    cfg.validate();
    const auto lat = lattice(cfg);
    const auto [ax, ay] = drive_amplitudes(cfg);
    const int n = samples_per_window(cfg);
    const long long spp = cfg.samples_per_period;
    const long long focus_cycle = spp * lat.a;  // samples per focus phase wrap, in units of b
    const double beta = particle_moment(cfg) / (kBoltzmann * cfg.temperature);
    const double rx = ax / cfg.gradient_x;
    const double ry = ay / cfg.gradient_y;

    TimeSignal sig;
    sig.sample_rate = static_cast<double>(spp) * cfg.f_drive;
    sig.mx.resize(n);
    sig.my.resize(n);
    for (int i = 0; i < n; ++i) {
        // Phases from integer sample counts keep the signal exactly periodic.
        const double phase_d = kTwoPi * static_cast<double>(i % spp) / static_cast<double>(spp);
        const double phase_e = kTwoPi * static_cast<double>((i * lat.b) % focus_cycle) /
                               static_cast<double>(focus_cycle);
        const double bx = cfg.gradient_x * (pos[0] - rx * std::sin(phase_d)) * 1e-3;
        const double by = cfg.gradient_y * (pos[1] - ry * std::sin(phase_e)) * 1e-3;
        const double b = std::hypot(bx, by);
        if (b == 0.0) {
            sig.mx[i] = 0.0;
            sig.my[i] = 0.0;
            continue;
        }
        const double l = langevin(beta * b) / b;
        sig.mx[i] = l * bx;
        sig.my[i] = l * by;
    }
    return sig;
}

std::vector<FreqDescriptor> select_frequencies(const SimConfig& cfg) {
    cfg.validate();
    const auto lat = lattice(cfg);
    const int order = cfg.max_mixing_order;
    // bin (in units of base_hz) -> lowest-order (m, n)
    std::map<long long, std::pair<int, int>> best;
    for (int m = -order; m <= order; ++m) {
        for (int n = -order + std::abs(m); n <= order - std::abs(m); ++n) {
            if (m + n < 1) continue;
            const long long bin = m * lat.a + n * lat.b;
            if (bin <= 0) continue;
            const int o = std::abs(m) + std::abs(n);
            auto it = best.find(bin);
            if (it == best.end() || o < std::abs(it->second.first) + std::abs(it->second.second)) {
                best[bin] = {m, n};
            }
        }
    }
    if (static_cast<int>(best.size()) < cfg.n_freqs) {
        throw ConfigError("only " + std::to_string(best.size()) +
                          " mixing frequencies available below order " + std::to_string(order));
    }
    std::vector<FreqDescriptor> freqs;
    freqs.reserve(2 * static_cast<std::size_t>(cfg.n_freqs));
    const double nyquist = 0.5 * cfg.samples_per_period * cfg.f_drive;
    for (Channel ch : {Channel::x, Channel::y}) {
        int taken = 0;
        for (const auto& [bin, mn] : best) {
            if (taken == cfg.n_freqs) break;
            const double f = static_cast<double>(bin * lat.base_hz);
            if (f >= nyquist) {
                throw ConfigError("selected frequency " + std::to_string(f) +
                                  " Hz exceeds the Nyquist limit " + std::to_string(nyquist));
            }
            freqs.push_back({static_cast<int>(freqs.size()), f, ch, mn.first, mn.second});
            ++taken;
        }
    }
    return freqs;
}

namespace {

/// Induced-voltage spectrum from a magnetization signal: -d/dt via the DFT,
/// normalized by 2*pi*f_drive and the window length.
CVector to_voltage(const CVector& mhat, double bin_hz, double f_drive, double weight, int n) {
    CVector u(mhat.size());
    for (Eigen::Index k = 0; k < mhat.size(); ++k) {
        const double f = static_cast<double>(k) * bin_hz;
        u[k] = cplx(0.0, -f / f_drive) * mhat[k] * (weight / n);
    }
    return u;
}

}  // namespace

CVector voltage_spectrum(const SimConfig& cfg, std::array<double, 2> pos, Channel channel) {
    const TimeSignal sig = simulate_time_signal(cfg, pos);
    const int n = static_cast<int>(sig.mx.size());
    RealFft fft(n);
    const CVector mhat = fft(channel == Channel::x ? sig.mx : sig.my);
    const double bin_hz = sig.sample_rate / n;
    return to_voltage(mhat, bin_hz, cfg.f_drive, cfg.quadrature_weight, n);
}

int worker_count() {
    int n = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    if (const char* env = std::getenv("SMFORGE_THREADS")) {
        const int cap = std::atoi(env);
        if (cap >= 1) n = std::min(n, cap);
    }
    return n;
}

SystemMatrix simulate_sm(const SimConfig& cfg) {
    cfg.validate();
    const std::vector<FreqDescriptor> freqs = select_frequencies(cfg);
    const Grid& grid = cfg.fov;
    const int n_samples = samples_per_window(cfg);
    const double sample_rate = static_cast<double>(cfg.samples_per_period) * cfg.f_drive;
    const double bin_hz = sample_rate / n_samples;

    std::vector<int> bins(freqs.size());
    for (std::size_t k = 0; k < freqs.size(); ++k) {
        bins[k] = static_cast<int>(std::lround(freqs[k].freq_hz / bin_hz));
    }

    CMatrix data(static_cast<Eigen::Index>(freqs.size()), grid.size());
    const int workers = std::min(worker_count(), grid.size());
    const auto run = [&](int begin, int end) {
        RealFft fft(n_samples);
        for (int p = begin; p < end; ++p) {
            const auto pos = grid.position(p % grid.nx, p / grid.nx);
            const TimeSignal sig = simulate_time_signal(cfg, pos);
            const CVector ux = to_voltage(fft(sig.mx), bin_hz, cfg.f_drive,
                                          cfg.quadrature_weight, n_samples);
            const CVector uy = to_voltage(fft(sig.my), bin_hz, cfg.f_drive,
                                          cfg.quadrature_weight, n_samples);
            for (std::size_t k = 0; k < freqs.size(); ++k) {
                const CVector& u = freqs[k].channel == Channel::x ? ux : uy;
                data(static_cast<Eigen::Index>(k), p) = u[bins[k]];
            }
        }
    };
    if (workers <= 1) {
        run(0, grid.size());
    } else {
        std::vector<std::jthread> pool;
        const int chunk = (grid.size() + workers - 1) / workers;
        for (int w = 0; w < workers; ++w) {
            const int b = w * chunk;
            const int e = std::min(grid.size(), b + chunk);
            if (b < e) pool.emplace_back(run, b, e);
        }
    }
    return SystemMatrix(grid, freqs, std::move(data));
}

VoltageSpectrum simulate_voltage(const SystemMatrix& sm, const Phantom& ph) {
    if (!(sm.grid() == ph.grid)) throw ShapeError("simulate_voltage: grid mismatch");
    const Eigen::Map<const RVector> c(ph.concentration.data(), ph.concentration.size());
    VoltageSpectrum v;
    v.coefficients = sm.data() * c.cast<cplx>();
    v.freqs = sm.freqs();
    return v;
}

SystemMatrix add_noise(const SystemMatrix& sm, double snr_db, std::uint64_t seed) {
    if (!std::isfinite(snr_db)) throw ConfigError("add_noise: snr_db must be finite");
    if (sm.data().cwiseAbs2().sum() == 0.0) {
        throw UndefinedMetricError("add_noise: SNR is undefined for an all-zero matrix");
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    CMatrix data = sm.data();
    std::vector<double> snr(static_cast<std::size_t>(sm.rows()), 0.0);
    const double ratio = std::pow(10.0, snr_db / 10.0);
    for (Eigen::Index k = 0; k < data.rows(); ++k) {
        const double power = data.row(k).cwiseAbs2().mean();
        if (power == 0.0) continue;
        const double sigma = std::sqrt(power / ratio / 2.0);
        double noise_power = 0.0;
        for (Eigen::Index n = 0; n < data.cols(); ++n) {
            const cplx e(sigma * normal(rng), sigma * normal(rng));
            noise_power += std::norm(e);
            data(k, n) += e;
        }
        noise_power /= static_cast<double>(data.cols());
        snr[static_cast<std::size_t>(k)] = noise_power > 0.0 ? power / noise_power : 0.0;
    }
    return SystemMatrix(sm.grid(), sm.freqs(), std::move(data), std::move(snr));
}

}  // namespace smforge::sim
