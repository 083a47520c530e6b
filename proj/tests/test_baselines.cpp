#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "smforge/baselines.hpp"
#include "smforge/metrics.hpp"

using namespace smforge;
using namespace smforge::baselines;

namespace {

// Direct cubic-convolution oracle with cell-centred alignment and edge replication.
CMatrix convolve_oracle(const CMatrix& in, int s) {
    const int h = static_cast<int>(in.rows());
    const int w = static_cast<int>(in.cols());
    CMatrix out(h * s, w * s);
    auto clamp = [](int v, int n) { return std::min(std::max(v, 0), n - 1); };
    for (int i = 0; i < h * s; ++i) {
        const double y = (i + 0.5) / s - 0.5;
        for (int j = 0; j < w * s; ++j) {
            const double x = (j + 0.5) / s - 0.5;
            cplx acc = 0.0;
            for (int a = static_cast<int>(std::floor(y)) - 1; a <= static_cast<int>(std::floor(y)) + 2; ++a) {
                for (int b = static_cast<int>(std::floor(x)) - 1; b <= static_cast<int>(std::floor(x)) + 2; ++b) {
                    acc += cubic_kernel(y - a) * cubic_kernel(x - b) * in(clamp(a, h), clamp(b, w));
                }
            }
            out(i, j) = acc;
        }
    }
    return out;
}

}  // namespace

TEST_CASE("cubic kernel") {
    CHECK(cubic_kernel(0.0) == 1.0);
    CHECK(cubic_kernel(1.0) == 0.0);
    CHECK(cubic_kernel(2.0) == 0.0);
    CHECK(cubic_kernel(2.5) == 0.0);
    CHECK(cubic_kernel(0.5) == doctest::Approx(0.5625));
    CHECK(cubic_kernel(-0.5) == cubic_kernel(0.5));
}

TEST_CASE("bicubic reproduces constants and is the identity at s=1") {
    const Grid g(5, 4, 5, 4);
    const ComplexImage c(g, CMatrix::Constant(4, 5, cplx(2.0, -1.0)));
    for (int s : {1, 2, 4, 8}) {
        CHECK((bicubic_upsample(c, ScaleFactor(s)).values.array() - cplx(2.0, -1.0)).abs().maxCoeff() <= 1e-12);
        CHECK((strided_bicubic(c, ScaleFactor(s)).values.array() - cplx(2.0, -1.0)).abs().maxCoeff() <= 1e-12);
    }
    std::mt19937_64 rng(1);
    const ComplexImage r(g, testutil::random_complex(4, 5, rng));
    CHECK(bicubic_upsample(r, ScaleFactor(1)).values == r.values);
    CHECK(strided_bicubic(r, ScaleFactor(1)).values == r.values);
    CHECK(bicubic_upsample(r, ScaleFactor(2)).grid == Grid(10, 8, 5, 4));
}

TEST_CASE("bicubic matches a direct convolution oracle") {
    CMatrix ramp(8, 8);
    for (int i = 0; i < 8; ++i) {
        for (int j = 0; j < 8; ++j) ramp(i, j) = cplx(i + 2.0 * j, 0.5 * i - j);
    }
    const ComplexImage img(Grid(8, 8, 8, 8), ramp);
    CHECK((bicubic_upsample(img, ScaleFactor(2)).values - convolve_oracle(ramp, 2)).cwiseAbs().maxCoeff() <= 1e-10);

    std::mt19937_64 rng(2);
    const CMatrix rnd = testutil::random_complex(6, 7, rng);
    const ComplexImage r(Grid(7, 6, 7, 6), rnd);
    CHECK((bicubic_upsample(r, ScaleFactor(4)).values - convolve_oracle(rnd, 4)).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("strided bicubic keeps the samples and differs from cell-centred bicubic") {
    std::mt19937_64 rng(3);
    const ComplexImage r(Grid(6, 6, 6, 6), testutil::random_complex(6, 6, rng));
    const ComplexImage st = strided_bicubic(r, ScaleFactor(4));
    const ComplexImage bc = bicubic_upsample(r, ScaleFactor(4));
    CHECK((downsample(st, ScaleFactor(4)).values - r.values).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((st.values - bc.values).cwiseAbs().maxCoeff() > 1e-3);
    const RMatrix re = r.values.real();
    CHECK((strided_bicubic(re, 4) - st.values.real()).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("bicubic weights are partitions of unity") {
    for (bool centred : {true, false}) {
        const RMatrix w = bicubic_weights(5, 4, centred);
        CHECK(w.rows() == 20);
        CHECK(w.cols() == 5);
        CHECK((w.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("soft threshold") {
    CHECK(soft_threshold(0.5, 1.0) == 0.0);
    CHECK(soft_threshold(2.0, 0.5) == 1.5);
    CHECK(soft_threshold(-2.0, 0.5) == -1.5);
    const cplx z = soft_threshold(cplx(3.0, 4.0), 1.0);
    CHECK(std::abs(z - cplx(2.4, 3.2)) <= 1e-12);
    CHECK(soft_threshold(cplx(0.1, 0.1), 1.0) == cplx(0.0, 0.0));
}

TEST_CASE("DCT is orthonormal") {
    std::mt19937_64 rng(4);
    const CMatrix x = testutil::random_complex(8, 6, rng);
    const CMatrix c = dct2(x);
    CHECK(std::abs(c.norm() - x.norm()) <= 1e-10 * x.norm());
    CHECK((idct2(c) - x).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("CS recovery") {
    SUBCASE("identity sensing without penalty returns the input") {
        std::mt19937_64 rng(5);
        const ComplexImage r(Grid(8, 8, 8, 8), testutil::random_complex(8, 8, rng));
        CsConfig cfg;
        cfg.lambda = 0.0;
        const CsResult res = cs_recover(r, ScaleFactor(1), cfg);
        CHECK((res.image.values - r.values).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK(res.converged);
    }
    SUBCASE("exactly sparse cosine image at s=2") {
        CMatrix coeffs = CMatrix::Zero(16, 16);
        coeffs(0, 0) = 3.0;
        coeffs(1, 2) = cplx(1.0, -0.5);
        coeffs(3, 1) = -2.0;
        coeffs(2, 5) = cplx(0.0, 1.5);
        coeffs(6, 3) = 1.0;
        const ComplexImage hr(Grid(16, 16, 16, 16), idct2(coeffs));
        const ComplexImage lr = downsample(hr, ScaleFactor(2));
        CsConfig cfg;
        cfg.lambda = 5e-4;
        cfg.iterations = 30000;
        cfg.tolerance = 1e-12;
        const CsResult res = cs_recover(lr, ScaleFactor(2), cfg);
        CHECK(metrics::nrmse(res.image, hr).value <= 1e-3);
        for (std::size_t i = 1; i < res.objective.size(); ++i) {
            CHECK(res.objective[i] <= res.objective[i - 1] * (1.0 + 1e-12));
        }
    }
    SUBCASE("deterministic row-wise application") {
        std::mt19937_64 rng(6);
        const SystemMatrix lr = testutil::random_sm(3, 4, 4, rng);
        CsConfig cfg;
        cfg.iterations = 30;
        const SystemMatrix a = recover_matrix(lr, ScaleFactor(2), Method::cs, cfg);
        const SystemMatrix b = recover_matrix(lr, ScaleFactor(2), Method::cs, cfg);
        CHECK(a.data() == b.data());
        CHECK(a.grid() == Grid(8, 8, 4, 4));
        CHECK(recover_matrix(lr, ScaleFactor(2), Method::bicubic).rows() == 3);
    }
    CsConfig bad;
    bad.lambda = -1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}
