#pragma once

#include <vector>

#include "smforge/core.hpp"

namespace smforge::baselines {

/// Keys cubic convolution kernel with a = -0.5.
[[nodiscard]] double cubic_kernel(double x, double a = -0.5);

/// Separable bicubic upsampling with cell-centred sample alignment and edge
/// replication. Real and imaginary parts are interpolated independently.
[[nodiscard]] ComplexImage bicubic_upsample(const ComplexImage& img, ScaleFactor s);

/// Bicubic upsampling that treats the samples as anchored at the top-left of
/// each s x s cell, i.e. low-res pixel (i, j) sits exactly on high-res pixel (s*i, s*j).
[[nodiscard]] ComplexImage strided_bicubic(const ComplexImage& img, ScaleFactor s);

/// Same as strided_bicubic on a real single-channel image.
[[nodiscard]] RMatrix strided_bicubic(const RMatrix& img, int s);

/// Interpolation weights (n_in * s) x n_in along one axis.
[[nodiscard]] RMatrix bicubic_weights(int n_in, int s, bool cell_centred);

struct CsConfig {
    double lambda = 1e-3;  // relative to the peak measured magnitude
    int iterations = 300;
    double step_size = 1.0;
    double tolerance = 1e-7;  // relative coefficient change declaring convergence

    void validate() const;
};

struct CsResult {
    ComplexImage image;
    bool converged = false;
    int iterations = 0;
    std::vector<double> objective;  // 0.5 ||Ax - y||^2 + lambda ||coeffs||_1, per iteration
};

[[nodiscard]] double soft_threshold(double v, double t);
[[nodiscard]] cplx soft_threshold(cplx v, double t);

/// Orthonormal 2D DCT-II and its inverse.
[[nodiscard]] CMatrix dct2(const CMatrix& x);
[[nodiscard]] CMatrix idct2(const CMatrix& c);

/// Iterative shrinkage-thresholding recovery of the high-res image from its
/// stride-s samples, with sparsity in the 2D cosine basis.
[[nodiscard]] CsResult cs_recover(const ComplexImage& lr, ScaleFactor s, const CsConfig& cfg);

enum class Method { bicubic, strided, cs };

/// Applies a baseline row by row to a low-res matrix.
[[nodiscard]] SystemMatrix recover_matrix(const SystemMatrix& lr, ScaleFactor s, Method method,
                                          const CsConfig& cs = {});

}  // namespace smforge::baselines
