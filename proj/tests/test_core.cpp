#include <doctest.h>

#include "helpers.hpp"

using namespace smforge;

TEST_CASE("grid validation and positions") {
    CHECK_THROWS_AS(Grid(0, 4, 1.0, 1.0), ShapeError);
    CHECK_THROWS_AS(Grid(4, 4, 0.0, 1.0), ConfigError);
    const Grid g(4, 2, 8.0, 4.0);
    CHECK(g.size() == 8);
    CHECK(g.pitch_x() == doctest::Approx(2.0));
    const auto p = g.position(0, 0);
    CHECK(p[0] == doctest::Approx(-3.0));
    CHECK(p[1] == doctest::Approx(-1.0));
    CHECK_THROWS_AS(g.coarsened(3), ShapeError);
}

TEST_CASE("scale factor accepts powers of two up to 16") {
    for (int v : {1, 2, 4, 8, 16}) CHECK(ScaleFactor(v).value() == v);
    for (int v : {0, 3, 32, -2}) CHECK_THROWS_AS((void)ScaleFactor{v}, ConfigError);
}

TEST_CASE("rim_encode examples") {
    SUBCASE("3+4i") {
        CMatrix v(1, 1);
        v(0, 0) = {3.0, 4.0};
        const RimImage r = rim_encode(ComplexImage(Grid(1, 1, 1, 1), v));
        CHECK(r.scale == 5.0);
        CHECK(r.real()(0, 0) == doctest::Approx(0.6));
        CHECK(r.imag()(0, 0) == doctest::Approx(0.8));
        CHECK(r.magnitude()(0, 0) == doctest::Approx(1.0));
        const ComplexImage back = rim_decode(r);
        CHECK(std::abs(back.values(0, 0) - cplx(3.0, 4.0)) < 1e-12);
    }
    SUBCASE("all zero") {
        const RimImage r = rim_encode(ComplexImage(Grid(3, 3, 1, 1)));
        CHECK(r.scale == 1.0);
        for (const auto& c : r.channels) CHECK(c.cwiseAbs().maxCoeff() == 0.0);
        CHECK(rim_decode(r).values.cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("unit circle entries") {
        CMatrix v(2, 2);
        v << cplx(1, 0), cplx(0, 1), cplx(-1, 0), cplx(0, -1);
        const RimImage r = rim_encode(ComplexImage(Grid(2, 2, 1, 1), v));
        CHECK(r.scale == doctest::Approx(1.0));
        CHECK((r.magnitude().array() - 1.0).abs().maxCoeff() < 1e-15);
    }
    SUBCASE("non-finite input") {
        CMatrix v(1, 1);
        v(0, 0) = {std::nan(""), 0.0};
        CHECK_THROWS_AS(rim_encode(ComplexImage(Grid(1, 1, 1, 1), v)), InvalidDataError);
    }
}

TEST_CASE("rim round trip and magnitude consistency on random images") {
    std::mt19937_64 rng(11);
    for (int t = 0; t < 20; ++t) {
        const ComplexImage img(Grid(8, 8, 1, 1), testutil::random_complex(8, 8, rng) * 37.0);
        const RimImage r = rim_encode(img);
        const ComplexImage back = rim_decode(r);
        CHECK((back.values - img.values).norm() / img.values.norm() <= 1e-12);
        const RMatrix resid = r.magnitude().array().square() - r.real().array().square() -
                              r.imag().array().square();
        CHECK(resid.cwiseAbs().maxCoeff() <= 1e-12);
        CHECK(std::max(r.real().cwiseAbs().maxCoeff(), r.imag().cwiseAbs().maxCoeff()) <= 1.0);
    }
}

TEST_CASE("rim_decode ignores the magnitude channel") {
    CMatrix v(1, 2);
    v << cplx(1, 2), cplx(-3, 0.5);
    RimImage r = rim_encode(ComplexImage(Grid(2, 1, 1, 1), v));
    r.channels[2].setConstant(123.0);
    CHECK((rim_decode(r).values - v).norm() < 1e-12);
}

TEST_CASE("downsample examples and composition") {
    CMatrix v(4, 4);
    for (int i = 0; i < 16; ++i) v.data()[i] = cplx(i, 0);
    const ComplexImage img(Grid(4, 4, 4, 4), v);
    const ComplexImage d = downsample(img, ScaleFactor(2));
    CHECK(d.values(0, 0).real() == 0);
    CHECK(d.values(0, 1).real() == 2);
    CHECK(d.values(1, 0).real() == 8);
    CHECK(d.values(1, 1).real() == 10);
    CHECK(d.grid.fov_x == img.grid.fov_x);
    CHECK(downsample(img, ScaleFactor(1)).values == img.values);
    CHECK_THROWS_AS(downsample(ComplexImage(Grid(6, 6, 1, 1)), ScaleFactor(4)), ShapeError);

    std::mt19937_64 rng(3);
    const ComplexImage big(Grid(32, 32, 32, 32), testutil::random_complex(32, 32, rng));
    const ComplexImage a = downsample(downsample(big, ScaleFactor(2)), ScaleFactor(2));
    const ComplexImage b = downsample(big, ScaleFactor(4));
    CHECK(a.values == b.values);
    for (int i = 0; i < 8; ++i) {
        for (int j = 0; j < 8; ++j) CHECK(b.values(i, j) == big.values(4 * i, 4 * j));
    }
}

TEST_CASE("system matrix downsample matches per-row image downsample") {
    std::mt19937_64 rng(5);
    const SystemMatrix sm = testutil::random_sm(3, 8, 8, rng);
    const SystemMatrix lr = downsample(sm, ScaleFactor(2));
    for (int k = 0; k < 3; ++k) {
        CHECK(sm_row_to_image(lr, k).values ==
              downsample(sm_row_to_image(sm, k), ScaleFactor(2)).values);
    }
}

TEST_CASE("row reshape") {
    CMatrix row(1, 4);
    row << cplx(1, 0), cplx(2, 0), cplx(3, 0), cplx(4, 0);
    const SystemMatrix sm(Grid(2, 2, 1, 1), testutil::dummy_freqs(1), row);
    const ComplexImage img = sm_row_to_image(sm, 0);
    CHECK(img.values(0, 0) == cplx(1, 0));
    CHECK(img.values(0, 1) == cplx(2, 0));
    CHECK(img.values(1, 0) == cplx(3, 0));
    CHECK(img.values(1, 1) == cplx(4, 0));
    CHECK_THROWS_AS((void)sm_row_to_image(sm, 1), IndexError);
    CHECK_THROWS_AS((void)sm_row_to_image(sm, -1), IndexError);

    std::mt19937_64 rng(9);
    const SystemMatrix r = testutil::random_sm(5, 6, 4, rng);
    std::vector<ComplexImage> imgs;
    for (int k = 0; k < 5; ++k) {
        imgs.push_back(sm_row_to_image(r, k));
        CHECK(image_to_row(imgs.back()).transpose() == r.data().row(k));
    }
    CHECK(sm_from_images(r.grid(), imgs, r.freqs()).data() == r.data());
}

TEST_CASE("system matrix invariants") {
    CHECK_THROWS_AS(SystemMatrix(Grid(2, 2, 1, 1), testutil::dummy_freqs(2), CMatrix::Zero(1, 4)),
                    ShapeError);
    CHECK_THROWS_AS(SystemMatrix(Grid(2, 2, 1, 1), testutil::dummy_freqs(1), CMatrix::Zero(1, 3)),
                    ShapeError);
    CMatrix bad = CMatrix::Zero(1, 4);
    bad(0, 2) = {INFINITY, 0.0};
    CHECK_THROWS_AS(SystemMatrix(Grid(2, 2, 1, 1), testutil::dummy_freqs(1), bad), InvalidDataError);
}
