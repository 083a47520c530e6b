#pragma once

#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "smforge/core.hpp"

namespace smforge::loss {

/// Patch geometry and stabilizing constants for the structural losses.
/// Defaults assume unit dynamic range: c1 = (0.01)^2, c2 = (0.03)^2.
struct LossConfig {
    int window = 8;
    int stride = 0;  // 0 means stride == window (non-overlapping tiles)
    double c1 = 1e-4;
    double c2 = 9e-4;
    double c3 = 9e-4;  // kept for completeness; the simplified SSIM uses c3 == c2
    int patch_norm_exponent = 2;

    [[nodiscard]] int effective_stride() const { return stride > 0 ? stride : window; }
    void validate() const;
};

/// Loss value paired with its gradient with respect to the prediction.
struct LossEval {
    double value = 0.0;
    RMatrix grad;
};

struct PatchStats {
    double mu_x = 0.0;
    double mu_y = 0.0;
    double var_x = 0.0;
    double var_y = 0.0;
    double cov_xy = 0.0;
};

enum class LossKind { l1, l2, ssim, ssim_ad, fsc };

[[nodiscard]] LossKind parse_loss_kind(std::string_view name);
[[nodiscard]] std::string_view loss_name(LossKind kind);

[[nodiscard]] LossEval l1_loss(const RMatrix& pred, const RMatrix& gt);
[[nodiscard]] LossEval l2_loss(const RMatrix& pred, const RMatrix& gt);

/// Loss 1 - SSIM, with SSIM the patch mean of l * cs (c3 == c2 form).
[[nodiscard]] LossEval ssim(const RMatrix& pred, const RMatrix& gt, const LossConfig& cfg);

/// Mean SSIM itself (not the loss), for reporting.
[[nodiscard]] double ssim_index(const RMatrix& pred, const RMatrix& gt, const LossConfig& cfg);

/// Population statistics of one window x window patch with top-left corner (row, col).
[[nodiscard]] PatchStats patch_stats(const RMatrix& x, const RMatrix& y, int row, int col,
                                     int window);

/// Top-left corners of every patch visited under `cfg` for an image of the given size.
[[nodiscard]] std::vector<std::array<int, 2>> patch_origins(int rows, int cols,
                                                            const LossConfig& cfg);

/// Absolute-difference luminance term of one patch.
[[nodiscard]] double l_ad(const PatchStats& s, const LossConfig& cfg);
/// Absolute-difference structure term of one patch.
[[nodiscard]] double s_ad(const PatchStats& s, const LossConfig& cfg);

/// Sum over patches of l_ad * s_ad, scaled by 1 / N^e with N the patch count.
[[nodiscard]] LossEval ssim_ad(const RMatrix& pred, const RMatrix& gt, const LossConfig& cfg);

/// Frequency structure consistency loss: ssim_ad(pred, gt) * l1(pred, gt).
[[nodiscard]] LossEval fsc_loss(const RMatrix& pred, const RMatrix& gt, const LossConfig& cfg);

[[nodiscard]] LossEval evaluate(LossKind kind, const RMatrix& pred, const RMatrix& gt,
                                const LossConfig& cfg);

/// Channel-averaged loss; grads[c] receives the gradient for channel c.
[[nodiscard]] double evaluate_channels(LossKind kind, std::span<const RMatrix> pred,
                                       std::span<const RMatrix> gt, const LossConfig& cfg,
                                       std::vector<RMatrix>& grads);

using LossFn = std::function<double(const RMatrix& pred, const RMatrix& gt)>;

/// Central-difference gradient of `fn` with respect to `pred`.
[[nodiscard]] RMatrix finite_diff_grad(const LossFn& fn, const RMatrix& pred, const RMatrix& gt,
                                       double epsilon);

/// max |a - b| / max(max|b|, floor): the relative error used by gradient checks.
[[nodiscard]] double relative_error(const RMatrix& analytic, const RMatrix& numeric,
                                    double floor = 1e-12);

}  // namespace smforge::loss
