#pragma once

#include <random>

#include "smforge/core.hpp"

namespace testutil {

inline smforge::RMatrix random_real(int r, int c, std::mt19937_64& rng, double lo = -1.0,
                                    double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    smforge::RMatrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
    return m;
}

inline smforge::CMatrix random_complex(int r, int c, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    smforge::CMatrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = {n(rng), n(rng)};
    return m;
}

inline std::vector<smforge::FreqDescriptor> dummy_freqs(int k) {
    std::vector<smforge::FreqDescriptor> f;
    for (int i = 0; i < k; ++i) f.push_back({i, 1000.0 * (i + 1), smforge::Channel::x, 1, 0});
    return f;
}

inline smforge::SystemMatrix random_sm(int k, int nx, int ny, std::mt19937_64& rng) {
    return smforge::SystemMatrix(smforge::Grid(nx, ny, nx, ny), dummy_freqs(k),
                                 random_complex(k, nx * ny, rng));
}

}  // namespace testutil
