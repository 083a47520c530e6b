#include <doctest.h>

#include "helpers.hpp"
#include "smforge/recon.hpp"

using namespace smforge;
using namespace smforge::recon;

namespace {

sim::VoltageSpectrum spectrum(const SystemMatrix& sm, const RMatrix& c) {
    return sim::simulate_voltage(sm, sim::Phantom(sm.grid(), c));
}

SystemMatrix real_identity(int n) {
    return SystemMatrix(Grid(n, 1, n, 1), testutil::dummy_freqs(n), CMatrix::Identity(n, n));
}

}  // namespace

TEST_CASE("phantoms") {
    const Grid g(16, 16, 16, 16);
    PhantomParams p;
    const sim::Phantom point = make_phantom(g, PhantomShape::point, p);
    CHECK(point.concentration(0, 0) == 1.0);
    CHECK(point.concentration.sum() == 1.0);

    p.x = 7;
    p.y = 9;
    p.radius = 0.0;
    const sim::Phantom dot = make_phantom(g, PhantomShape::disk, p);
    CHECK(dot.concentration(9, 7) == 1.0);
    CHECK(dot.concentration.sum() == 1.0);

    p.x = 3;
    p.y = 5;
    p.separation = 6;
    const sim::Phantom two = make_phantom(g, PhantomShape::two_point, p);
    CHECK((two.concentration.array() > 0.0).count() == 2);
    CHECK(two.concentration(5, 3) == 1.0);
    CHECK(two.concentration(5, 9) == 1.0);

    p.x = 8;
    p.y = 8;
    p.radius = 3.0;
    const sim::Phantom disk = make_phantom(g, PhantomShape::disk, p);
    CHECK((disk.concentration.array() > 0.0).count() > 20);
    CHECK(disk.concentration.minCoeff() >= 0.0);

    p.x = 2;
    p.y = 2;
    const sim::Phantom e = make_phantom(g, PhantomShape::letter_E, p);
    CHECK(e.concentration.sum() > 0.0);
    CHECK(make_phantom(g, PhantomShape::letter_E, p).concentration == e.concentration);

    p.x = 16;
    CHECK_THROWS(make_phantom(g, PhantomShape::point, p));
    CHECK(parse_phantom_shape("two_point") == PhantomShape::two_point);
    CHECK_THROWS_AS((void)parse_phantom_shape("star"), ConfigError);
}

TEST_CASE("identity system is solved in one sweep") {
    const SystemMatrix s = real_identity(6);
    RMatrix c(1, 6);
    c << 0.5, 0.0, 2.0, 1.0, 0.25, 3.0;
    ReconConfig cfg;
    cfg.sweeps = 1;
    cfg.lambda = 0.0;
    const sim::Phantom out = kaczmarz_solve(s, spectrum(s, c), cfg);
    CHECK((out.concentration - c).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("Kaczmarz matches a direct least-squares solve") {
    // Real unknowns: the complex system is the stacked real system [Re S; Im S].
    std::mt19937_64 rng(3);
    for (int t = 0; t < 5; ++t) {
        const CMatrix a = testutil::random_complex(8, 8, rng) + 4.0 * CMatrix::Identity(8, 8);
        const SystemMatrix s(Grid(8, 1, 8, 1), testutil::dummy_freqs(8), a);
        const RMatrix c = testutil::random_real(1, 8, rng, 0.0, 1.0);
        const sim::VoltageSpectrum u = spectrum(s, c);

        RMatrix stacked(16, 8);
        stacked << a.real(), a.imag();
        Eigen::VectorXd rhs(16);
        rhs << u.coefficients.real(), u.coefficients.imag();
        const Eigen::VectorXd ls = stacked.colPivHouseholderQr().solve(rhs);

        ReconConfig cfg;
        cfg.sweeps = 200;
        cfg.lambda = 0.0;
        cfg.nonneg = false;
        const sim::Phantom out = kaczmarz_solve(s, u, cfg);
        const Eigen::VectorXd est = out.concentration.transpose();
        CHECK((est - ls).norm() <= 1e-6 * ls.norm());
    }
}

TEST_CASE("heavy regularization shrinks the solution") {
    std::mt19937_64 rng(4);
    const SystemMatrix s = testutil::random_sm(12, 4, 2, rng);
    const RMatrix c = testutil::random_real(2, 4, rng, 0.0, 1.0);
    ReconConfig cfg;
    cfg.nonneg = false;
    cfg.lambda = 1e8;
    CHECK(kaczmarz_solve(s, spectrum(s, c), cfg).concentration.norm() <= 1e-6 * c.norm());
}

TEST_CASE("residual does not increase over sweeps on a consistent system") {
    std::mt19937_64 rng(5);
    const SystemMatrix s = testutil::random_sm(30, 4, 4, rng);
    const RMatrix c = testutil::random_real(4, 4, rng, 0.0, 1.0);
    const sim::VoltageSpectrum u = spectrum(s, c);
    double prev = INFINITY;
    for (int sweeps = 1; sweeps <= 15; ++sweeps) {
        ReconConfig cfg;
        cfg.sweeps = sweeps;
        cfg.lambda = 0.0;
        cfg.nonneg = false;
        const double r = residual_norm(s, u, kaczmarz_solve(s, u, cfg));
        CHECK(r <= prev * (1.0 + 1e-12));
        prev = r;
    }
}

TEST_CASE("point phantom reconstructs compactly with the exact simulated matrix") {
    sim::SimConfig sc;
    sc.fov = Grid(16, 16, 32.0, 32.0);
    sc.samples_per_period = 100;
    const SystemMatrix sm = sim::simulate_sm(sc);
    PhantomParams p;
    p.x = 6;
    p.y = 9;
    const sim::Phantom point = make_phantom(sm.grid(), PhantomShape::point, p);
    const sim::Phantom out = kaczmarz_solve(sm, sim::simulate_voltage(sm, point), ReconConfig{});
    const double near = out.concentration.block(8, 5, 3, 3).sum();
    CHECK(near >= 0.5 * out.concentration.sum());

    const PipelineReport same = evaluate_pipeline(sm, sm, point, ReconConfig{});
    CHECK(same.gap == 0.0);
    CHECK(same.psnr_reference.value == same.psnr_recovered.value);

    const sim::Phantom empty(sm.grid(), RMatrix::Zero(16, 16));
    CHECK_THROWS_AS((void)evaluate_pipeline(sm, sm, empty, ReconConfig{}), UndefinedMetricError);
}

TEST_CASE("solver guards") {
    const SystemMatrix zero(Grid(2, 2, 2, 2), testutil::dummy_freqs(3), CMatrix::Zero(3, 4));
    sim::VoltageSpectrum u{CVector::Zero(3), testutil::dummy_freqs(3)};
    CHECK_THROWS((void)kaczmarz_solve(zero, u, ReconConfig{}));
    const SystemMatrix id = real_identity(4);
    CHECK_THROWS_AS((void)kaczmarz_solve(id, u, ReconConfig{}), ShapeError);
    ReconConfig bad;
    bad.sweeps = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = ReconConfig{};
    bad.lambda = -1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}
