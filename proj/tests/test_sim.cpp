#include <doctest.h>

#include <cstdlib>

#include "helpers.hpp"
#include "smforge/sim.hpp"

using namespace smforge;
using namespace smforge::sim;

namespace {

SimConfig small_config() {
    SimConfig c;
    c.fov = Grid(8, 8, 32.0, 32.0);
    c.samples_per_period = 100;
    c.n_freqs = 40;
    return c;
}

}  // namespace

TEST_CASE("drive amplitudes follow fov * gradient / 2") {
    SimConfig c;
    CHECK(drive_amplitudes(c).first == doctest::Approx(32.0));
    c.gradient_x = 4.0;
    CHECK(drive_amplitudes(c).first == doctest::Approx(64.0));
    c.fov = Grid(32, 32, 1e-9, 1e-9);
    CHECK(drive_amplitudes(c).first < 1e-8);
    c.amp_drive = 40.0;
    CHECK(drive_amplitudes(c).first == 40.0);
}

TEST_CASE("trajectory and repetition period") {
    const SimConfig c;
    const auto p0 = ffp_trajectory(c, 0.0);
    CHECK(p0[0] == 0.0);
    CHECK(p0[1] == 0.0);
    CHECK(repetition_period(c) == doctest::Approx(4e-3).epsilon(1e-12));
    const auto q = ffp_trajectory(c, 1.0 / (4.0 * c.f_drive));
    CHECK(q[0] == doctest::Approx(16.0).epsilon(1e-12));
    const auto a = ffp_trajectory(c, 1.234e-4);
    const auto b = ffp_trajectory(c, 1.234e-4 + repetition_period(c));
    CHECK(std::abs(a[0] - b[0]) < 1e-9);
    CHECK(std::abs(a[1] - b[1]) < 1e-9);
    CHECK_THROWS_AS((void)ffp_trajectory(c, -1.0), ConfigError);
}

TEST_CASE("langevin examples") {
    CHECK(langevin(0.0) == 0.0);
    CHECK(std::abs(langevin(0.01) - 0.0033333) < 1e-6);
    CHECK(std::abs(langevin(0.01) - (0.01 / 3 - 1e-6 / 45)) < 1e-12);
    CHECK(std::abs(langevin(1000.0) - 0.999) < 1e-3);
    CHECK(langevin(-2.0) == doctest::Approx(-langevin(2.0)));
    // Continuity across the series switch-over.
    CHECK(std::abs(langevin(0.99e-4) - langevin(1.01e-4)) < 1e-6);
    for (double x : {-50.0, -1.0, 0.3, 7.0}) {
        CHECK(langevin(x) > -1.0);
        CHECK(langevin(x) < 1.0);
    }
}

TEST_CASE("time signal repeats exactly between Lissajous periods") {
    SimConfig c = small_config();
    c.n_periods = 2;
    const TimeSignal s = simulate_time_signal(c, {3.1, -7.4});
    const std::size_t half = s.mx.size() / 2;
    double peak = 0.0;
    double diff = 0.0;
    for (std::size_t i = 0; i < half; ++i) {
        peak = std::max({peak, std::abs(s.mx[i]), std::abs(s.my[i])});
        diff = std::max({diff, std::abs(s.mx[i] - s.mx[i + half]), std::abs(s.my[i] - s.my[i + half])});
    }
    CHECK(peak > 0.0);
    CHECK(diff <= 1e-9 * peak);
}

TEST_CASE("spectral energy lies on mixing frequencies") {
    // Over two repetition periods the bin spacing halves; odd bins are not
    // integer combinations of the drive and focus frequencies.
    SimConfig c = small_config();
    c.n_periods = 2;
    for (Channel ch : {Channel::x, Channel::y}) {
        const CVector u = voltage_spectrum(c, {5.0, -2.0}, ch);
        double peak = 0.0;
        double off = 0.0;
        for (Eigen::Index k = 0; k < u.size(); ++k) {
            if (k % 2 == 0) {
                peak = std::max(peak, std::abs(u[k]));
            } else {
                off = std::max(off, std::abs(u[k]));
            }
        }
        CHECK(peak > 0.0);
        CHECK(off <= 1e-9 * peak);
    }
}

TEST_CASE("frequency selection") {
    const SimConfig c;
    const auto f = select_frequencies(c);
    REQUIRE(f.size() == 400);
    for (std::size_t i = 0; i < f.size(); ++i) {
        CHECK(f[i].index == static_cast<int>(i));
        CHECK(f[i].freq_hz == doctest::Approx(f[i].mix_m * c.f_drive + f[i].mix_n * c.f_focus));
        CHECK(std::abs(f[i].mix_m) + std::abs(f[i].mix_n) <= c.max_mixing_order);
        CHECK(f[i].channel == (i < 200 ? Channel::x : Channel::y));
        if (i % 200 != 0) CHECK(f[i].freq_hz > f[i - 1].freq_hz);
    }
    CHECK(f[0].freq_hz == doctest::Approx(23250.0));  // 7 f_D - 6 f_E... lowest of order <= 14
}

TEST_CASE("configuration guards") {
    SimConfig c = small_config();
    c.samples_per_period = 4;
    CHECK_THROWS_AS((void)simulate_sm(c), ConfigError);
    c = small_config();
    c.particle_diameter = 0.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = small_config();
    c.f_focus = c.f_drive;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = small_config();
    c.n_freqs = 100000;
    CHECK_THROWS_AS((void)select_frequencies(c), ConfigError);
}

TEST_CASE("simulate_sm is deterministic and independent of the worker count") {
    const SimConfig c = small_config();
    const SystemMatrix a = simulate_sm(c);
    const SystemMatrix b = simulate_sm(c);
    CHECK(a.data() == b.data());
    setenv("SMFORGE_THREADS", "1", 1);
    const SystemMatrix d = simulate_sm(c);
    setenv("SMFORGE_THREADS", "3", 1);
    const SystemMatrix e = simulate_sm(c);
    unsetenv("SMFORGE_THREADS");
    CHECK(a.data() == d.data());
    CHECK(a.data() == e.data());
    CHECK(a.rows() == 2 * c.n_freqs);
    CHECK(a.cols() == 64);
    CHECK(a.data().cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("mirroring the grid in x mirrors every row pattern") {
    const SimConfig c = small_config();
    const SystemMatrix sm = simulate_sm(c);
    const int nx = c.fov.nx;
    for (int k = 0; k < sm.rows(); ++k) {
        const ComplexImage img = sm_row_to_image(sm, k);
        const double peak = img.values.cwiseAbs().maxCoeff();
        double worst = 0.0;
        for (int y = 0; y < c.fov.ny; ++y) {
            for (int x = 0; x < nx; ++x) {
                worst = std::max(worst, std::abs(std::abs(img.values(y, x)) -
                                                 std::abs(img.values(y, nx - 1 - x))));
            }
        }
        CHECK(worst <= 1e-9 * peak);
    }
}

TEST_CASE("simulate_voltage examples and linearity") {
    const SimConfig c = small_config();
    const SystemMatrix sm = simulate_sm(c);
    const Grid& g = sm.grid();
    CHECK(simulate_voltage(sm, Phantom(g, RMatrix::Zero(8, 8))).coefficients.norm() == 0.0);

    RMatrix one = RMatrix::Zero(8, 8);
    one(2, 5) = 1.0;
    const CVector col = sm.data().col(2 * 8 + 5);
    CHECK((simulate_voltage(sm, Phantom(g, one)).coefficients - col).norm() == 0.0);

    RMatrix two = one;
    two(6, 1) = 1.0;
    const CVector sum = col + sm.data().col(6 * 8 + 1);
    CHECK((simulate_voltage(sm, Phantom(g, two)).coefficients - sum).norm() <= 1e-12 * sum.norm());

    std::mt19937_64 rng(4);
    const RMatrix c1 = testutil::random_real(8, 8, rng, 0.0, 1.0);
    const RMatrix c2 = testutil::random_real(8, 8, rng, 0.0, 1.0);
    const double a = 2.5;
    const double b = 0.75;
    const CVector lhs = simulate_voltage(sm, Phantom(g, a * c1 + b * c2)).coefficients;
    const CVector rhs = a * simulate_voltage(sm, Phantom(g, c1)).coefficients +
                        b * simulate_voltage(sm, Phantom(g, c2)).coefficients;
    CHECK((lhs - rhs).norm() <= 1e-10 * rhs.norm());

    const CVector u1 = simulate_voltage(sm, Phantom(g, c1)).coefficients;
    const CVector u2 = simulate_voltage(sm, Phantom(g, 2.0 * c1)).coefficients;
    CHECK((u2 - 2.0 * u1).norm() <= 1e-12 * u1.norm());

    CHECK_THROWS_AS((void)simulate_voltage(sm, Phantom(Grid(4, 4, 1, 1), RMatrix::Zero(4, 4))), ShapeError);
    CHECK_THROWS_AS(Phantom(g, RMatrix::Constant(8, 8, -1.0)), InvalidDataError);
}

TEST_CASE("add_noise") {
    std::mt19937_64 rng(8);
    const SystemMatrix sm = testutil::random_sm(2, 100, 100, rng);

    const SystemMatrix quiet = add_noise(sm, 300.0, 1);
    CHECK((quiet.data() - sm.data()).norm() <= 1e-10 * sm.data().norm());

    const SystemMatrix noisy = add_noise(sm, 20.0, 2);
    for (int k = 0; k < 2; ++k) {
        const double signal = sm.data().row(k).cwiseAbs2().mean();
        const double noise = (noisy.data().row(k) - sm.data().row(k)).cwiseAbs2().mean();
        const double snr = 10.0 * std::log10(signal / noise);
        CHECK(std::abs(snr - 20.0) <= 0.5);
        REQUIRE(noisy.row_snr());
        CHECK(10.0 * std::log10((*noisy.row_snr())[k]) == doctest::Approx(snr));
    }
    CHECK(add_noise(sm, 20.0, 2).data() == noisy.data());
    CHECK(add_noise(sm, 20.0, 3).data() != noisy.data());

    const SystemMatrix zero(Grid(2, 2, 1, 1), testutil::dummy_freqs(1), CMatrix::Zero(1, 4));
    CHECK_THROWS_AS((void)add_noise(zero, 20.0, 1), UndefinedMetricError);
    CHECK_THROWS_AS((void)add_noise(sm, INFINITY, 1), ConfigError);
}
