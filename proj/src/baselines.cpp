#include "smforge/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

namespace smforge::baselines {
namespace {

ComplexImage apply_separable(const ComplexImage& img, int s, bool cell_centred) {
    const RMatrix wy = bicubic_weights(img.grid.ny, s, cell_centred);
    const RMatrix wx = bicubic_weights(img.grid.nx, s, cell_centred);
    const Grid hr(img.grid.nx * s, img.grid.ny * s, img.grid.fov_x, img.grid.fov_y);
    const RMatrix re = wy * img.values.real() * wx.transpose();
    const RMatrix im = wy * img.values.imag() * wx.transpose();
    CMatrix out(hr.ny, hr.nx);
    out.real() = re;
    out.imag() = im;
    return ComplexImage(hr, std::move(out));
}

/// Orthonormal DCT-II basis, rows indexed by frequency.
const RMatrix& dct_matrix(int n) {
    static std::mutex mutex;
    static std::map<int, RMatrix> cache;
    std::lock_guard lock(mutex);
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    RMatrix c(n, n);
    for (int k = 0; k < n; ++k) {
        const double alpha = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
        for (int i = 0; i < n; ++i) {
            c(k, i) = alpha * std::cos(std::numbers::pi * (2 * i + 1) * k / (2.0 * n));
        }
    }
    return cache.emplace(n, std::move(c)).first->second;
}

}  // namespace

double cubic_kernel(double x, double a) {
    const double t = std::abs(x);
    if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
    if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
    return 0.0;
}

RMatrix bicubic_weights(int n_in, int s, bool cell_centred) {
    const int n_out = n_in * s;
    RMatrix w = RMatrix::Zero(n_out, n_in);
    for (int o = 0; o < n_out; ++o) {
        const double src = cell_centred ? (o + 0.5) / s - 0.5 : static_cast<double>(o) / s;
        const int base = static_cast<int>(std::floor(src));
        for (int t = -1; t <= 2; ++t) {
            const int i = base + t;
            const int clamped = std::clamp(i, 0, n_in - 1);
            w(o, clamped) += cubic_kernel(src - i);
        }
    }
    return w;
}

ComplexImage bicubic_upsample(const ComplexImage& img, ScaleFactor s) {
    return apply_separable(img, s.value(), true);
}

ComplexImage strided_bicubic(const ComplexImage& img, ScaleFactor s) {
    return apply_separable(img, s.value(), false);
}

RMatrix strided_bicubic(const RMatrix& img, int s) {
    const RMatrix wy = bicubic_weights(static_cast<int>(img.rows()), s, false);
    const RMatrix wx = bicubic_weights(static_cast<int>(img.cols()), s, false);
    return wy * img * wx.transpose();
}

void CsConfig::validate() const {
    if (!(lambda >= 0.0)) throw ConfigError("cs lambda must be >= 0");
    if (iterations < 1) throw ConfigError("cs iterations must be >= 1");
    if (!(step_size > 0.0)) throw ConfigError("cs step_size must be positive");
}

double soft_threshold(double v, double t) {
    if (v > t) return v - t;
    if (v < -t) return v + t;
    return 0.0;
}

cplx soft_threshold(cplx v, double t) {
    const double mag = std::abs(v);
    if (mag <= t) return {0.0, 0.0};
    return v * ((mag - t) / mag);
}

CMatrix dct2(const CMatrix& x) {
    const RMatrix& cy = dct_matrix(static_cast<int>(x.rows()));
    const RMatrix& cx = dct_matrix(static_cast<int>(x.cols()));
    CMatrix out(x.rows(), x.cols());
    out.real() = cy * x.real() * cx.transpose();
    out.imag() = cy * x.imag() * cx.transpose();
    return out;
}

CMatrix idct2(const CMatrix& c) {
    const RMatrix& cy = dct_matrix(static_cast<int>(c.rows()));
    const RMatrix& cx = dct_matrix(static_cast<int>(c.cols()));
    CMatrix out(c.rows(), c.cols());
    out.real() = cy.transpose() * c.real() * cx;
    out.imag() = cy.transpose() * c.imag() * cx;
    return out;
}

CsResult cs_recover(const ComplexImage& lr, ScaleFactor s, const CsConfig& cfg) {
    cfg.validate();
    const int f = s.value();
    const Grid hr(lr.grid.nx * f, lr.grid.ny * f, lr.grid.fov_x, lr.grid.fov_y);
    const double peak = lr.values.cwiseAbs().maxCoeff();
    const double norm = peak > 0.0 ? peak : 1.0;

    // Zero-filled high-res measurement (the adjoint of the stride mask applied to y).
    CMatrix y_full = CMatrix::Zero(hr.ny, hr.nx);
    for (int i = 0; i < lr.grid.ny; ++i) {
        for (int j = 0; j < lr.grid.nx; ++j) y_full(f * i, f * j) = lr.values(i, j) / norm;
    }
    const auto masked_residual = [&](const CMatrix& x) {
        CMatrix r = CMatrix::Zero(hr.ny, hr.nx);
        for (int i = 0; i < lr.grid.ny; ++i) {
            for (int j = 0; j < lr.grid.nx; ++j) r(f * i, f * j) = x(f * i, f * j) - y_full(f * i, f * j);
        }
        return r;
    };
    const double threshold = cfg.lambda * cfg.step_size;
    const auto objective = [&](const CMatrix& coeffs, const CMatrix& x) {
        return 0.5 * masked_residual(x).squaredNorm() + cfg.lambda * coeffs.cwiseAbs().sum();
    };

    CMatrix coeffs = dct2(y_full);
    CMatrix x = idct2(coeffs);
    CsResult result;
    result.objective.push_back(objective(coeffs, x));
    for (int it = 0; it < cfg.iterations; ++it) {
        const CMatrix grad = dct2(masked_residual(x));
        CMatrix next = coeffs - cfg.step_size * grad;
        for (Eigen::Index k = 0; k < next.size(); ++k) {
            next.data()[k] = soft_threshold(next.data()[k], threshold);
        }
        const double change = (next - coeffs).norm();
        const double size = std::max(coeffs.norm(), 1e-300);
        coeffs = std::move(next);
        x = idct2(coeffs);
        result.objective.push_back(objective(coeffs, x));
        result.iterations = it + 1;
        if (change / size < cfg.tolerance) {
            result.converged = true;
            break;
        }
    }
    result.image = ComplexImage(hr, x * norm);
    return result;
}

SystemMatrix recover_matrix(const SystemMatrix& lr, ScaleFactor s, Method method,
                            const CsConfig& cs) {
    const Grid hr(lr.grid().nx * s.value(), lr.grid().ny * s.value(), lr.grid().fov_x,
                  lr.grid().fov_y);
    CMatrix data(lr.rows(), hr.size());
    for (int k = 0; k < lr.rows(); ++k) {
        const ComplexImage row = sm_row_to_image(lr, k);
        ComplexImage up;
        switch (method) {
            case Method::bicubic: up = bicubic_upsample(row, s); break;
            case Method::strided: up = strided_bicubic(row, s); break;
            case Method::cs: up = cs_recover(row, s, cs).image; break;
        }
        data.row(k) = image_to_row(up).transpose();
    }
    return SystemMatrix(hr, lr.freqs(), std::move(data));
}

}  // namespace smforge::baselines
