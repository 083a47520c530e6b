#include "smforge/core.hpp"

#include <cmath>
#include <string>

namespace smforge {

Grid::Grid(int nx_, int ny_, double fov_x_, double fov_y_)
    : nx(nx_), ny(ny_), fov_x(fov_x_), fov_y(fov_y_) {
    validate();
}

void Grid::validate() const {
    if (nx < 1 || ny < 1) {
        throw ShapeError("grid dimensions must be positive, got " + std::to_string(nx) + "x" +
                         std::to_string(ny));
    }
    if (!(fov_x > 0.0) || !(fov_y > 0.0) || !std::isfinite(fov_x) || !std::isfinite(fov_y)) {
        throw ConfigError("field of view must be finite and positive");
    }
    if (!std::isfinite(pitch_x()) || !std::isfinite(pitch_y()) || pitch_x() <= 0.0 ||
        pitch_y() <= 0.0) {
        throw ConfigError("pixel pitch must be finite and positive");
    }
}

std::array<double, 2> Grid::position(int ix, int iy) const {
    return {-0.5 * fov_x + (ix + 0.5) * pitch_x(), -0.5 * fov_y + (iy + 0.5) * pitch_y()};
}

Grid Grid::coarsened(int factor) const {
    if (factor < 1 || nx % factor != 0 || ny % factor != 0) {
        throw ShapeError("grid " + std::to_string(nx) + "x" + std::to_string(ny) +
                         " is not divisible by " + std::to_string(factor));
    }
    return Grid(nx / factor, ny / factor, fov_x, fov_y);
}

ScaleFactor::ScaleFactor(int value) : value_(value) {
    if (value != 1 && value != 2 && value != 4 && value != 8 && value != 16) {
        throw ConfigError("scale factor must be one of 1, 2, 4, 8, 16; got " +
                          std::to_string(value));
    }
}

bool all_finite(const CMatrix& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        const cplx v = m.data()[i];
        if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
    }
    return true;
}

SystemMatrix::SystemMatrix(Grid grid, std::vector<FreqDescriptor> freqs, CMatrix data,
                           std::optional<std::vector<double>> row_snr)
    : grid_(grid), freqs_(std::move(freqs)), data_(std::move(data)), row_snr_(std::move(row_snr)) {
    grid_.validate();
    if (static_cast<std::size_t>(data_.rows()) != freqs_.size()) {
        throw ShapeError("system matrix has " + std::to_string(data_.rows()) + " rows but " +
                         std::to_string(freqs_.size()) + " frequency descriptors");
    }
    if (data_.cols() != grid_.size()) {
        throw ShapeError("system matrix has " + std::to_string(data_.cols()) +
                         " columns but the grid has " + std::to_string(grid_.size()) + " points");
    }
    if (!all_finite(data_)) throw InvalidDataError("system matrix contains non-finite entries");
    if (row_snr_) {
        if (row_snr_->size() != freqs_.size()) throw ShapeError("row_snr length mismatch");
        for (double v : *row_snr_) {
            if (!(v >= 0.0)) throw InvalidDataError("row_snr entries must be nonnegative");
        }
    }
}

ComplexImage::ComplexImage(Grid g, CMatrix v) : grid(g), values(std::move(v)) {
    grid.validate();
    if (values.rows() != grid.ny || values.cols() != grid.nx) {
        throw ShapeError("image values do not match grid dimensions");
    }
}

RimImage rim_encode(const ComplexImage& img) {
    if (!all_finite(img.values)) throw InvalidDataError("rim_encode: non-finite input");
    const double peak = img.values.cwiseAbs().maxCoeff();
    RimImage rim;
    rim.grid = img.grid;
    rim.scale = peak > 0.0 ? peak : 1.0;
    const double inv = 1.0 / rim.scale;
    rim.channels[0] = img.values.real() * inv;
    rim.channels[1] = img.values.imag() * inv;
    rim.channels[2] = img.values.cwiseAbs() * inv;
    return rim;
}

ComplexImage rim_decode(const RimImage& rim) {
    if (!(rim.scale > 0.0)) throw InvalidDataError("rim_decode: scale must be positive");
    CMatrix v(rim.grid.ny, rim.grid.nx);
    for (int i = 0; i < rim.grid.ny; ++i) {
        for (int j = 0; j < rim.grid.nx; ++j) {
            v(i, j) = cplx(rim.channels[0](i, j), rim.channels[1](i, j)) * rim.scale;
        }
    }
    return ComplexImage(rim.grid, std::move(v));
}

ComplexImage downsample(const ComplexImage& img, ScaleFactor s) {
    const int f = s.value();
    const Grid lr = img.grid.coarsened(f);
    CMatrix v(lr.ny, lr.nx);
    for (int i = 0; i < lr.ny; ++i) {
        for (int j = 0; j < lr.nx; ++j) v(i, j) = img.values(f * i, f * j);
    }
    return ComplexImage(lr, std::move(v));
}

SystemMatrix downsample(const SystemMatrix& sm, ScaleFactor s) {
    const int f = s.value();
    const Grid hr = sm.grid();
    const Grid lr = hr.coarsened(f);
    CMatrix data(sm.rows(), lr.size());
    for (int i = 0; i < lr.ny; ++i) {
        for (int j = 0; j < lr.nx; ++j) {
            data.col(i * lr.nx + j) = sm.data().col((f * i) * hr.nx + f * j);
        }
    }
    return SystemMatrix(lr, sm.freqs(), std::move(data), sm.row_snr());
}

ComplexImage sm_row_to_image(const SystemMatrix& sm, int k) {
    if (k < 0 || k >= sm.rows()) {
        throw IndexError("frequency index " + std::to_string(k) + " out of range [0, " +
                         std::to_string(sm.rows()) + ")");
    }
    const Grid& g = sm.grid();
    CMatrix v = Eigen::Map<const CMatrix>(sm.data().row(k).data(), g.ny, g.nx);
    return ComplexImage(g, std::move(v));
}

CVector image_to_row(const ComplexImage& img) {
    return Eigen::Map<const CVector>(img.values.data(), img.values.size());
}

SystemMatrix sm_from_images(const Grid& grid, const std::vector<ComplexImage>& rows,
                            std::vector<FreqDescriptor> freqs) {
    CMatrix data(static_cast<Eigen::Index>(rows.size()), grid.size());
    for (std::size_t k = 0; k < rows.size(); ++k) {
        if (!(rows[k].grid == grid)) throw ShapeError("sm_from_images: grid mismatch");
        data.row(static_cast<Eigen::Index>(k)) = image_to_row(rows[k]).transpose();
    }
    return SystemMatrix(grid, std::move(freqs), std::move(data));
}

}  // namespace smforge
