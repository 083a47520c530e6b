#include "smforge/losses.hpp"

#include <cmath>
#include <algorithm>
#include <string>

namespace smforge::loss {
namespace {

void check_shapes(const RMatrix& pred, const RMatrix& gt, const char* who) {
    if (pred.rows() != gt.rows() || pred.cols() != gt.cols()) {
        throw ShapeError(std::string(who) + ": prediction is " + std::to_string(pred.rows()) +
                         "x" + std::to_string(pred.cols()) + " but target is " +
                         std::to_string(gt.rows()) + "x" + std::to_string(gt.cols()));
    }
    if (pred.size() == 0) throw ShapeError(std::string(who) + ": empty image");
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

/// Partial derivatives of a per-patch scalar with respect to the prediction's
/// patch mean, variance and the cross covariance.
struct PatchPartials {
    double d_mu_x = 0.0;
    double d_var_x = 0.0;
    double d_cov = 0.0;
};

/// Scatters patch-statistic partials back onto the prediction pixels.
void scatter(RMatrix& grad, const RMatrix& x, const RMatrix& y, const PatchStats& s, int row,
             int col, int window, const PatchPartials& p, double weight) {
    const double inv_n = 1.0 / (window * window);
    for (int i = row; i < row + window; ++i) {
        for (int j = col; j < col + window; ++j) {
            const double g = p.d_mu_x * inv_n + p.d_var_x * 2.0 * (x(i, j) - s.mu_x) * inv_n +
                             p.d_cov * (y(i, j) - s.mu_y) * inv_n;
            grad(i, j) += weight * g;
        }
    }
}

void check_window(const RMatrix& pred, const LossConfig& cfg, const char* who) {
    cfg.validate();
    if (cfg.window > pred.rows() || cfg.window > pred.cols()) {
        throw ShapeError(std::string(who) + ": window " + std::to_string(cfg.window) +
                         " exceeds image size");
    }
}

}  // namespace

void LossConfig::validate() const {
    if (window < 1) throw ConfigError("loss window must be positive");
    if (stride < 0) throw ConfigError("loss stride must be nonnegative");
    if (!(c1 > 0.0) || !(c2 > 0.0)) throw ConfigError("c1 and c2 must be positive");
    if (patch_norm_exponent < 0) throw ConfigError("patch_norm_exponent must be >= 0");
}

LossKind parse_loss_kind(std::string_view name) {
    if (name == "l1") return LossKind::l1;
    if (name == "l2") return LossKind::l2;
    if (name == "ssim") return LossKind::ssim;
    if (name == "ssim_ad") return LossKind::ssim_ad;
    if (name == "fsc") return LossKind::fsc;
    throw ConfigError("unknown loss '" + std::string(name) + "'");
}

std::string_view loss_name(LossKind kind) {
    switch (kind) {
        case LossKind::l1: return "l1";
        case LossKind::l2: return "l2";
        case LossKind::ssim: return "ssim";
        case LossKind::ssim_ad: return "ssim_ad";
        case LossKind::fsc: return "fsc";
    }
    return "?";
}

LossEval l1_loss(const RMatrix& pred, const RMatrix& gt) {
    check_shapes(pred, gt, "l1_loss");
    const double n = static_cast<double>(pred.size());
    const RMatrix d = pred - gt;
    LossEval out;
    out.value = d.cwiseAbs().sum() / n;
    out.grad = d.unaryExpr([n](double v) { return sign(v) / n; });
    return out;
}

LossEval l2_loss(const RMatrix& pred, const RMatrix& gt) {
    check_shapes(pred, gt, "l2_loss");
    const double n = static_cast<double>(pred.size());
    const RMatrix d = pred - gt;
    LossEval out;
    out.value = d.squaredNorm() / n;
    out.grad = d * (2.0 / n);
    return out;
}

PatchStats patch_stats(const RMatrix& x, const RMatrix& y, int row, int col, int window) {
    const auto px = x.block(row, col, window, window);
    const auto py = y.block(row, col, window, window);
    const double n = static_cast<double>(window) * window;
    PatchStats s;
    s.mu_x = px.sum() / n;
    s.mu_y = py.sum() / n;
    for (int i = 0; i < window; ++i) {
        for (int j = 0; j < window; ++j) {
            const double dx = px(i, j) - s.mu_x;
            const double dy = py(i, j) - s.mu_y;
            s.var_x += dx * dx;
            s.var_y += dy * dy;
            s.cov_xy += dx * dy;
        }
    }
    s.var_x /= n;
    s.var_y /= n;
    s.cov_xy /= n;
    return s;
}

std::vector<std::array<int, 2>> patch_origins(int rows, int cols, const LossConfig& cfg) {
    const int w = cfg.window;
    const int step = cfg.effective_stride();
    std::vector<std::array<int, 2>> out;
    for (int r = 0; r + w <= rows; r += step) {
        for (int c = 0; c + w <= cols; c += step) out.push_back({r, c});
    }
    return out;
}

double ssim_index(const RMatrix& pred, const RMatrix& gt, const LossConfig& cfg) {
    return 1.0 - ssim(pred, gt, cfg).value;
}

LossEval ssim(const RMatrix& pred, const RMatrix& gt, const LossConfig& cfg) {
    check_shapes(pred, gt, "ssim");
    check_window(pred, cfg, "ssim");
    const auto origins = patch_origins(static_cast<int>(pred.rows()),
                                       static_cast<int>(pred.cols()), cfg);
    const double inv_p = 1.0 / static_cast<double>(origins.size());
    LossEval out;
    out.grad = RMatrix::Zero(pred.rows(), pred.cols());
    double total = 0.0;
    for (const auto& [r, c] : origins) {
        const PatchStats s = patch_stats(pred, gt, r, c, cfg.window);
        const double a1 = 2.0 * s.mu_x * s.mu_y + cfg.c1;
        const double b1 = s.mu_x * s.mu_x + s.mu_y * s.mu_y + cfg.c1;
        const double a2 = 2.0 * s.cov_xy + cfg.c2;
        const double b2 = s.var_x + s.var_y + cfg.c2;
        const double lum = a1 / b1;
        const double cs = a2 / b2;
        total += lum * cs;
        PatchPartials p;
        p.d_mu_x = cs * (2.0 * s.mu_y * b1 - a1 * 2.0 * s.mu_x) / (b1 * b1);
        p.d_var_x = -lum * a2 / (b2 * b2);
        p.d_cov = lum * 2.0 / b2;
        scatter(out.grad, pred, gt, s, r, c, cfg.window, p, -inv_p);
    }
    out.value = 1.0 - total * inv_p;
    return out;
}

double l_ad(const PatchStats& s, const LossConfig& cfg) {
    return std::abs(s.mu_x - s.mu_y) / (s.mu_x * s.mu_x + s.mu_y * s.mu_y + cfg.c1);
}

double s_ad(const PatchStats& s, const LossConfig& cfg) {
    const double sd = std::sqrt(std::max(s.var_x, 0.0)) * std::sqrt(std::max(s.var_y, 0.0));
    return std::abs(s.cov_xy - sd) / (s.var_x + s.var_y + cfg.c2);
}

LossEval ssim_ad(const RMatrix& pred, const RMatrix& gt, const LossConfig& cfg) {
    check_shapes(pred, gt, "ssim_ad");
    check_window(pred, cfg, "ssim_ad");
    const auto origins = patch_origins(static_cast<int>(pred.rows()),
                                       static_cast<int>(pred.cols()), cfg);
    const double norm =
        1.0 / std::pow(static_cast<double>(origins.size()), cfg.patch_norm_exponent);
    LossEval out;
    out.grad = RMatrix::Zero(pred.rows(), pred.cols());
    double total = 0.0;
    for (const auto& [r, c] : origins) {
        const PatchStats s = patch_stats(pred, gt, r, c, cfg.window);

        const double dmu = s.mu_x - s.mu_y;
        const double den_l = s.mu_x * s.mu_x + s.mu_y * s.mu_y + cfg.c1;
        const double lum = std::abs(dmu) / den_l;
        const double dlum_dmu = sign(dmu) / den_l - std::abs(dmu) * 2.0 * s.mu_x / (den_l * den_l);

        const double sx = std::sqrt(std::max(s.var_x, 0.0));
        const double sy = std::sqrt(std::max(s.var_y, 0.0));
        const double num = s.cov_xy - sx * sy;
        const double den_s = s.var_x + s.var_y + cfg.c2;
        const double str = std::abs(num) / den_s;
        // d(sx*sy)/d(var_x); subgradient 0 where the prediction patch is flat
        const double dsd_dvar = sx > 0.0 ? sy / (2.0 * sx) : 0.0;
        const double dstr_dvar = sign(num) * (-dsd_dvar) / den_s - std::abs(num) / (den_s * den_s);
        const double dstr_dcov = sign(num) / den_s;

        total += lum * str;
        PatchPartials p;
        p.d_mu_x = dlum_dmu * str;
        p.d_var_x = lum * dstr_dvar;
        p.d_cov = lum * dstr_dcov;
        scatter(out.grad, pred, gt, s, r, c, cfg.window, p, norm);
    }
    out.value = total * norm;
    return out;
}

LossEval fsc_loss(const RMatrix& pred, const RMatrix& gt, const LossConfig& cfg) {
    const LossEval structural = ssim_ad(pred, gt, cfg);
    const LossEval global = l1_loss(pred, gt);
    LossEval out;
    out.value = structural.value * global.value;
    out.grad = structural.grad * global.value + global.grad * structural.value;
    return out;
}

LossEval evaluate(LossKind kind, const RMatrix& pred, const RMatrix& gt, const LossConfig& cfg) {
    switch (kind) {
        case LossKind::l1: return l1_loss(pred, gt);
        case LossKind::l2: return l2_loss(pred, gt);
        case LossKind::ssim: return ssim(pred, gt, cfg);
        case LossKind::ssim_ad: return ssim_ad(pred, gt, cfg);
        case LossKind::fsc: return fsc_loss(pred, gt, cfg);
    }
    throw ConfigError("unknown loss kind");
}

double evaluate_channels(LossKind kind, std::span<const RMatrix> pred, std::span<const RMatrix> gt,
                         const LossConfig& cfg, std::vector<RMatrix>& grads) {
    if (pred.size() != gt.size() || pred.empty()) {
        throw ShapeError("evaluate_channels: channel count mismatch");
    }
    const double inv_c = 1.0 / static_cast<double>(pred.size());
    grads.resize(pred.size());
    double value = 0.0;
    for (std::size_t c = 0; c < pred.size(); ++c) {
        LossEval e = evaluate(kind, pred[c], gt[c], cfg);
        value += e.value * inv_c;
        grads[c] = e.grad * inv_c;
    }
    return value;
}

RMatrix finite_diff_grad(const LossFn& fn, const RMatrix& pred, const RMatrix& gt,
                         double epsilon) {
    if (!(epsilon >= 1e-7 && epsilon <= 1e-3)) {
        throw ConfigError("finite_diff_grad: epsilon must lie in [1e-7, 1e-3]");
    }
    RMatrix x = pred;
    RMatrix g(pred.rows(), pred.cols());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double orig = x.data()[i];
        x.data()[i] = orig + epsilon;
        const double up = fn(x, gt);
        x.data()[i] = orig - epsilon;
        const double down = fn(x, gt);
        x.data()[i] = orig;
        g.data()[i] = (up - down) / (2.0 * epsilon);
    }
    return g;
}

double relative_error(const RMatrix& analytic, const RMatrix& numeric, double floor) {
    const double scale = std::max(numeric.cwiseAbs().maxCoeff(), floor);
    return (analytic - numeric).cwiseAbs().maxCoeff() / scale;
}

}  // namespace smforge::loss
