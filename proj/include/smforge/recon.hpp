#pragma once

#include <cstdint>
#include <string_view>

#include "smforge/core.hpp"
#include "smforge/metrics.hpp"
#include "smforge/sim.hpp"

namespace smforge::recon {

struct ReconConfig {
    int sweeps = 20;
    /// Tikhonov weight relative to the mean squared row norm of the matrix.
    double lambda = 1e-3;
    bool nonneg = true;
    double relaxation = 1.0;
    std::uint64_t seed = 0;

    void validate() const;
};

enum class PhantomShape { point, two_point, disk, letter_E };

[[nodiscard]] PhantomShape parse_phantom_shape(std::string_view name);

/// Geometry of a phantom in pixel units. `x`, `y` locate the point, the first
/// of the two points, the disk centre, or the top-left corner of the letter.
struct PhantomParams {
    int x = 0;
    int y = 0;
    int separation = 4;  // two_point: second point at (x + separation, y)
    double radius = 3.0;  // disk
    int width = 0;        // letter_E box; 0 selects 60% of the grid
    int height = 0;
    double value = 1.0;
};

[[nodiscard]] sim::Phantom make_phantom(const Grid& grid, PhantomShape shape,
                                        const PhantomParams& params);

/// Regularized Kaczmarz sweeps over the rows of `sm` in ascending order.
/// The concentration is real; each row update applies the real part of the
/// complex correction. Nonnegativity is enforced after every sweep when enabled.
[[nodiscard]] sim::Phantom kaczmarz_solve(const SystemMatrix& sm, const sim::VoltageSpectrum& u,
                                          const ReconConfig& cfg);

/// ||S c - u||_2 for a real concentration map.
[[nodiscard]] double residual_norm(const SystemMatrix& sm, const sim::VoltageSpectrum& u,
                                   const sim::Phantom& c);

struct PipelineReport {
    metrics::MetricReport psnr_reference;  // reconstruction with the ground-truth matrix
    metrics::MetricReport psnr_recovered;  // reconstruction with the recovered matrix
    double gap = 0.0;                      // psnr_reference - psnr_recovered
    sim::Phantom image_reference;
    sim::Phantom image_recovered;
};

/// Simulates voltages from the ground-truth matrix and the phantom, reconstructs
/// with both matrices and compares each reconstruction against the phantom.
[[nodiscard]] PipelineReport evaluate_pipeline(const SystemMatrix& sm_gt,
                                               const SystemMatrix& sm_recovered,
                                               const sim::Phantom& phantom,
                                               const ReconConfig& cfg);

}  // namespace smforge::recon
