#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "smforge/core.hpp"

namespace smforge::metrics {

struct MetricReport {
    std::string name;
    double value = 0.0;  // +inf for a perfect pSNR
    std::optional<std::vector<double>> per_row;

    [[nodiscard]] bool is_infinite() const;
    /// JSON object; infinite values serialize as the string "inf".
    [[nodiscard]] nlohmann::json to_json() const;
};

/// ||pred - gt||_F / ||gt||_F over complex entries.
[[nodiscard]] MetricReport nrmse(const ComplexImage& pred, const ComplexImage& gt);
/// Whole-matrix nRMSE with the per-row values in `per_row`.
[[nodiscard]] MetricReport nrmse(const SystemMatrix& pred, const SystemMatrix& gt);
/// Mean of per-row nRMSE values (rows with zero reference energy are skipped).
[[nodiscard]] double mean_row_nrmse(const SystemMatrix& pred, const SystemMatrix& gt);

/// 20 log10( sqrt(K) * max|ref| / ||pred - ref||_2 ), K the pixel count.
[[nodiscard]] MetricReport psnr(const RMatrix& pred, const RMatrix& ref);

}  // namespace smforge::metrics
