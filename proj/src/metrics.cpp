#include "smforge/metrics.hpp"

#include <cmath>
#include <limits>

namespace smforge::metrics {

bool MetricReport::is_infinite() const { return std::isinf(value); }

nlohmann::json MetricReport::to_json() const {
    const auto encode = [](double v) -> nlohmann::json {
        if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
        return v;
    };
    nlohmann::json j;
    j["name"] = name;
    j["value"] = encode(value);
    if (per_row) {
        nlohmann::json rows = nlohmann::json::array();
        for (double v : *per_row) rows.push_back(encode(v));
        j["per_row"] = std::move(rows);
    }
    return j;
}

MetricReport nrmse(const ComplexImage& pred, const ComplexImage& gt) {
    if (pred.values.rows() != gt.values.rows() || pred.values.cols() != gt.values.cols()) {
        throw ShapeError("nrmse: shape mismatch");
    }
    const double ref = gt.values.norm();
    if (ref == 0.0) throw UndefinedMetricError("nrmse: reference is all zero");
    return {"nrmse", (pred.values - gt.values).norm() / ref, std::nullopt};
}

MetricReport nrmse(const SystemMatrix& pred, const SystemMatrix& gt) {
    if (pred.rows() != gt.rows() || pred.cols() != gt.cols()) {
        throw ShapeError("nrmse: shape mismatch");
    }
    const double ref = gt.data().norm();
    if (ref == 0.0) throw UndefinedMetricError("nrmse: reference is all zero");
    std::vector<double> rows(static_cast<std::size_t>(gt.rows()));
    for (int k = 0; k < gt.rows(); ++k) {
        const double rk = gt.data().row(k).norm();
        const double ek = (pred.data().row(k) - gt.data().row(k)).norm();
        rows[static_cast<std::size_t>(k)] =
            rk > 0.0 ? ek / rk : std::numeric_limits<double>::quiet_NaN();
    }
    return {"nrmse", (pred.data() - gt.data()).norm() / ref, std::move(rows)};
}

double mean_row_nrmse(const SystemMatrix& pred, const SystemMatrix& gt) {
    const MetricReport r = nrmse(pred, gt);
    double sum = 0.0;
    int count = 0;
    for (double v : *r.per_row) {
        if (std::isnan(v)) continue;
        sum += v;
        ++count;
    }
    if (count == 0) throw UndefinedMetricError("mean_row_nrmse: no row has nonzero energy");
    return sum / count;
}

MetricReport psnr(const RMatrix& pred, const RMatrix& ref) {
    if (pred.rows() != ref.rows() || pred.cols() != ref.cols()) {
        throw ShapeError("psnr: shape mismatch");
    }
    const double peak = ref.cwiseAbs().maxCoeff();
    if (peak == 0.0) throw UndefinedMetricError("psnr: reference image is all zero");
    const double residual = (pred - ref).norm();
    if (residual == 0.0) return {"psnr", std::numeric_limits<double>::infinity(), std::nullopt};
    const double k = static_cast<double>(ref.size());
    return {"psnr", 20.0 * std::log10(std::sqrt(k) * peak / residual), std::nullopt};
}

}  // namespace smforge::metrics
