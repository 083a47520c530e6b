#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "smforge/core.hpp"

namespace smforge::sim {

/// Physics and sampling parameters of the simulated field-free-point scanner.
///
/// Gradients are in T/m (as mu0 * G), frequencies in Hz, amplitudes in mT,
/// particle diameter in nm, temperature in K, saturation magnetization in A/m.
/// Temperature and saturation magnetization default to magnetite at room
/// temperature; they are assumptions, not measured values.
struct SimConfig {
    double gradient_x = 2.0;
    double gradient_y = 2.0;
    double f_drive = 25000.0;
    double f_focus = 24750.0;
    /// When unset, amplitudes follow fov * gradient / 2 so the trajectory spans the FOV.
    std::optional<double> amp_drive;
    std::optional<double> amp_focus;
    double particle_diameter = 30.0;
    Grid fov{32, 32, 32.0, 32.0};
    int n_periods = 1;             // full Lissajous periods per acquisition window
    int samples_per_period = 1000;  // samples per drive period
    double temperature = 300.0;
    double saturation_magnetization = 474e3;
    double quadrature_weight = 1.0;
    int n_freqs = 200;             // selected rows per receive channel
    int max_mixing_order = 14;     // |m| + |n| bound on selected mixing frequencies
    std::uint64_t rng_seed = 0;

    void validate() const;
};

/// A sampled time signal for one spatial position over the acquisition window.
struct TimeSignal {
    double sample_rate = 0.0;
    std::vector<double> mx;  // normalized magnetization along x
    std::vector<double> my;
};

struct Phantom {
    Grid grid;
    RMatrix concentration;  // ny x nx, nonnegative unless built by signed_map()

    Phantom() = default;
    Phantom(Grid g, RMatrix c);

    /// Finite values of either sign, e.g. an unconstrained solver estimate.
    static Phantom signed_map(Grid g, RMatrix c);
};

struct VoltageSpectrum {
    CVector coefficients;
    std::vector<FreqDescriptor> freqs;
};

constexpr double kBoltzmann = 1.380649e-23;

/// Drive amplitudes (mT) for the x and y channels.
[[nodiscard]] std::pair<double, double> drive_amplitudes(const SimConfig& cfg);

/// Field-free-point position (mm) at time t (s).
[[nodiscard]] std::array<double, 2> ffp_trajectory(const SimConfig& cfg, double t);

/// Repetition period 1 / gcd(f_drive, f_focus) in seconds.
[[nodiscard]] double repetition_period(const SimConfig& cfg);

/// coth(xi) - 1/xi, continuous through xi = 0.
[[nodiscard]] double langevin(double xi);

/// Particle moment m = (pi/6) Ms D^3 in A m^2.
[[nodiscard]] double particle_moment(const SimConfig& cfg);

/// Number of time samples in the acquisition window.
[[nodiscard]] int samples_per_window(const SimConfig& cfg);

/// Magnetization time signal of a unit point sample at `pos` (mm).
[[nodiscard]] TimeSignal simulate_time_signal(const SimConfig& cfg, std::array<double, 2> pos);

/// Selected frequency rows, channel x first then channel y, ascending in frequency.
/// Every descriptor carries the lowest-order (m, n) pair producing it.
[[nodiscard]] std::vector<FreqDescriptor> select_frequencies(const SimConfig& cfg);

/// Ground-truth system matrix; one row per selected frequency.
[[nodiscard]] SystemMatrix simulate_sm(const SimConfig& cfg);

/// Full one-sided induced-voltage spectrum of one position for one channel,
/// indexed by DFT bin over the acquisition window.
[[nodiscard]] CVector voltage_spectrum(const SimConfig& cfg, std::array<double, 2> pos,
                                       Channel channel);

[[nodiscard]] VoltageSpectrum simulate_voltage(const SystemMatrix& sm, const Phantom& ph);

/// Adds complex Gaussian noise to each row at the requested SNR (dB).
[[nodiscard]] SystemMatrix add_noise(const SystemMatrix& sm, double snr_db, std::uint64_t seed);

/// Worker count for data-parallel simulation, capped by SMFORGE_THREADS.
[[nodiscard]] int worker_count();

}  // namespace smforge::sim
