#pragma once

#include <array>
#include <complex>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "smforge/errors.hpp"

namespace smforge {

using cplx = std::complex<double>;
using CMatrix = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CVector = Eigen::Matrix<cplx, Eigen::Dynamic, 1>;
using RVector = Eigen::VectorXd;

/// Regular 2D sampling grid over a rectangular field of view (lengths in mm).
struct Grid {
    int nx = 1;
    int ny = 1;
    double fov_x = 1.0;
    double fov_y = 1.0;

    Grid() = default;
    Grid(int nx_, int ny_, double fov_x_, double fov_y_);

    [[nodiscard]] int size() const { return nx * ny; }
    [[nodiscard]] double pitch_x() const { return fov_x / nx; }
    [[nodiscard]] double pitch_y() const { return fov_y / ny; }

    /// Pixel-centre position in mm, origin at the centre of the field of view.
    [[nodiscard]] std::array<double, 2> position(int ix, int iy) const;

    /// Same field of view, dimensions divided by `factor`.
    [[nodiscard]] Grid coarsened(int factor) const;

    void validate() const;

    bool operator==(const Grid&) const = default;
};

/// Integer ratio between high- and low-resolution grid sides.
class ScaleFactor {
public:
    explicit ScaleFactor(int value);
    [[nodiscard]] int value() const { return value_; }
    bool operator==(const ScaleFactor&) const = default;

private:
    int value_;
};

/// Receive channel of a frequency component.
enum class Channel : int { x = 0, y = 1 };

struct FreqDescriptor {
    int index = 0;          // position among the selected rows
    double freq_hz = 0.0;
    Channel channel = Channel::x;
    int mix_m = 0;          // freq = mix_m * f_drive + mix_n * f_focus
    int mix_n = 0;

    bool operator==(const FreqDescriptor&) const = default;
};

/// Complex K x N matrix of frequency responses; row k is frequency component k
/// sampled at every grid position (row-major over the grid).
class SystemMatrix {
public:
    SystemMatrix() = default;
    SystemMatrix(Grid grid, std::vector<FreqDescriptor> freqs, CMatrix data,
                 std::optional<std::vector<double>> row_snr = std::nullopt);

    [[nodiscard]] const Grid& grid() const { return grid_; }
    [[nodiscard]] const std::vector<FreqDescriptor>& freqs() const { return freqs_; }
    [[nodiscard]] const CMatrix& data() const { return data_; }
    [[nodiscard]] const std::optional<std::vector<double>>& row_snr() const { return row_snr_; }
    [[nodiscard]] int rows() const { return static_cast<int>(data_.rows()); }
    [[nodiscard]] int cols() const { return static_cast<int>(data_.cols()); }

private:
    Grid grid_;
    std::vector<FreqDescriptor> freqs_;
    CMatrix data_;
    std::optional<std::vector<double>> row_snr_;
};

/// One frequency component laid out on its grid (ny rows, nx columns).
struct ComplexImage {
    Grid grid;
    CMatrix values;

    ComplexImage() = default;
    ComplexImage(Grid g, CMatrix v);
    explicit ComplexImage(Grid g) : ComplexImage(g, CMatrix::Zero(g.ny, g.nx)) {}
};

/// Real / imaginary / magnitude encoding of a normalized complex image.
struct RimImage {
    Grid grid;
    std::array<RMatrix, 3> channels;
    double scale = 1.0;

    [[nodiscard]] const RMatrix& real() const { return channels[0]; }
    [[nodiscard]] const RMatrix& imag() const { return channels[1]; }
    [[nodiscard]] const RMatrix& magnitude() const { return channels[2]; }
};

[[nodiscard]] RimImage rim_encode(const ComplexImage& img);
[[nodiscard]] ComplexImage rim_decode(const RimImage& rim);

/// Keeps every s-th pixel starting at the top-left corner.
[[nodiscard]] ComplexImage downsample(const ComplexImage& img, ScaleFactor s);
[[nodiscard]] SystemMatrix downsample(const SystemMatrix& sm, ScaleFactor s);

[[nodiscard]] ComplexImage sm_row_to_image(const SystemMatrix& sm, int k);
[[nodiscard]] CVector image_to_row(const ComplexImage& img);

/// Assembles a matrix from per-row images that share one grid.
[[nodiscard]] SystemMatrix sm_from_images(const Grid& grid, const std::vector<ComplexImage>& rows,
                                          std::vector<FreqDescriptor> freqs);

[[nodiscard]] bool all_finite(const CMatrix& m);

}  // namespace smforge
