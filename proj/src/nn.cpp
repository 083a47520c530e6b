#include "smforge/nn.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace smforge::nn {

RMatrix conv3x3(const RMatrix& x, int h, int w, const RMatrix& weight, const RMatrix& bias,
                ConvCache& cache) {
    const int c_in = static_cast<int>(x.cols());
    if (x.rows() != static_cast<Eigen::Index>(h) * w || weight.rows() != 9 * c_in) {
        throw ShapeError("conv3x3: input " + std::to_string(x.rows()) + "x" +
                         std::to_string(x.cols()) + " does not match weight " +
                         std::to_string(weight.rows()) + "x" + std::to_string(weight.cols()));
    }
    cache.h = h;
    cache.w = w;
    cache.c_in = c_in;
    cache.cols = RMatrix::Zero(static_cast<Eigen::Index>(h) * w, 9 * c_in);
    for (int y = 0; y < h; ++y) {
        for (int xx = 0; xx < w; ++xx) {
            const int row = y * w + xx;
            for (int ky = 0; ky < 3; ++ky) {
                const int sy = y + ky - 1;
                if (sy < 0 || sy >= h) continue;
                for (int kx = 0; kx < 3; ++kx) {
                    const int sx = xx + kx - 1;
                    if (sx < 0 || sx >= w) continue;
                    cache.cols.row(row).segment((ky * 3 + kx) * c_in, c_in) = x.row(sy * w + sx);
                }
            }
        }
    }
    RMatrix out = cache.cols * weight;
    out.rowwise() += bias.row(0);
    return out;
}

RMatrix conv3x3_backward(const RMatrix& dy, const RMatrix& weight, const ConvCache& cache,
                         RMatrix& d_weight, RMatrix& d_bias) {
    d_weight.noalias() += cache.cols.transpose() * dy;
    d_bias += dy.colwise().sum();
    const RMatrix dcols = dy * weight.transpose();
    const int h = cache.h;
    const int w = cache.w;
    const int c_in = cache.c_in;
    RMatrix dx = RMatrix::Zero(static_cast<Eigen::Index>(h) * w, c_in);
    for (int y = 0; y < h; ++y) {
        for (int xx = 0; xx < w; ++xx) {
            const int row = y * w + xx;
            for (int ky = 0; ky < 3; ++ky) {
                const int sy = y + ky - 1;
                if (sy < 0 || sy >= h) continue;
                for (int kx = 0; kx < 3; ++kx) {
                    const int sx = xx + kx - 1;
                    if (sx < 0 || sx >= w) continue;
                    dx.row(sy * w + sx) += dcols.row(row).segment((ky * 3 + kx) * c_in, c_in);
                }
            }
        }
    }
    return dx;
}

RMatrix linear(const RMatrix& x, const RMatrix& weight, const RMatrix& bias, LinearCache& cache) {
    if (x.cols() != weight.rows()) throw ShapeError("linear: input width mismatch");
    cache.x = x;
    RMatrix out = x * weight;
    out.rowwise() += bias.row(0);
    return out;
}

RMatrix linear_backward(const RMatrix& dy, const RMatrix& weight, const LinearCache& cache,
                        RMatrix& d_weight, RMatrix& d_bias) {
    d_weight.noalias() += cache.x.transpose() * dy;
    d_bias += dy.colwise().sum();
    return dy * weight.transpose();
}

RMatrix layer_norm(const RMatrix& x, const RMatrix& gamma, const RMatrix& beta,
                   LayerNormCache& cache, double eps) {
    const Eigen::Index n = x.rows();
    const double c = static_cast<double>(x.cols());
    cache.xhat.resize(n, x.cols());
    cache.inv_std.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double mu = x.row(i).sum() / c;
        const double var = (x.row(i).array() - mu).square().sum() / c;
        const double inv = 1.0 / std::sqrt(var + eps);
        cache.inv_std[i] = inv;
        cache.xhat.row(i) = (x.row(i).array() - mu) * inv;
    }
    RMatrix out = cache.xhat.array().rowwise() * gamma.row(0).array();
    out.rowwise() += beta.row(0);
    return out;
}

RMatrix layer_norm_backward(const RMatrix& dy, const RMatrix& gamma, const LayerNormCache& cache,
                            RMatrix& d_gamma, RMatrix& d_beta) {
    d_gamma += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
    d_beta += dy.colwise().sum();
    const double c = static_cast<double>(dy.cols());
    const RMatrix dxhat = dy.array().rowwise() * gamma.row(0).array();
    RMatrix dx(dy.rows(), dy.cols());
    for (Eigen::Index i = 0; i < dy.rows(); ++i) {
        const double mean_d = dxhat.row(i).sum() / c;
        const double mean_dx = dxhat.row(i).dot(cache.xhat.row(i)) / c;
        dx.row(i) = cache.inv_std[i] *
                    (dxhat.row(i).array() - mean_d - cache.xhat.row(i).array() * mean_dx).matrix();
    }
    return dx;
}

RMatrix gelu(const RMatrix& x) {
    return x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2)); });
}

RMatrix gelu_backward(const RMatrix& dy, const RMatrix& x) {
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    const RMatrix d = x.unaryExpr([inv_sqrt_2pi](double v) {
        return 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2)) +
               v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
    });
    return dy.cwiseProduct(d);
}

RMatrix relu(const RMatrix& x) { return x.cwiseMax(0.0); }

RMatrix relu_backward(const RMatrix& dy, const RMatrix& x) {
    return dy.array() * (x.array() > 0.0).cast<double>();
}

namespace {

constexpr double kMasked = -1e4;

/// Index into the relative-position table for each (query, key) pair of a window.
Eigen::MatrixXi relative_index(int window) {
    const int t = window * window;
    Eigen::MatrixXi idx(t, t);
    for (int i = 0; i < t; ++i) {
        for (int j = 0; j < t; ++j) {
            const int dy = i / window - j / window + window - 1;
            const int dx = i % window - j % window + window - 1;
            idx(i, j) = dy * (2 * window - 1) + dx;
        }
    }
    return idx;
}

int region_label(int coord, int size, int window, int shift) {
    if (coord < size - window) return 0;
    if (coord < size - shift) return 1;
    return 2;
}

}  // namespace

RMatrix window_attention(const RMatrix& x, int h, int w, int window, int shift, int heads,
                         const AttentionWeights& p, AttentionCache& cache) {
    const int c = static_cast<int>(x.cols());
    if (window < 1 || h % window != 0 || w % window != 0) {
        throw ShapeError("window_attention: window " + std::to_string(window) +
                         " does not tile a " + std::to_string(h) + "x" + std::to_string(w) + " map");
    }
    if (heads < 1 || c % heads != 0) throw ShapeError("window_attention: heads must divide channels");
    const int t = window * window;
    const int d = c / heads;
    const int n = h * w;
    cache.h = h;
    cache.w = w;
    cache.window = window;
    cache.shift = shift;
    cache.heads = heads;
    cache.order.assign(n, 0);
    cache.region.assign(n, 0);
    int pos = 0;
    for (int wy = 0; wy < h / window; ++wy) {
        for (int wx = 0; wx < w / window; ++wx) {
            for (int ty = 0; ty < window; ++ty) {
                for (int tx = 0; tx < window; ++tx) {
                    const int sy = wy * window + ty;
                    const int sx = wx * window + tx;
                    cache.order[pos] = ((sy + shift) % h) * w + (sx + shift) % w;
                    cache.region[pos] = shift > 0 ? 3 * region_label(sy, h, window, shift) +
                                                        region_label(sx, w, window, shift)
                                                  : 0;
                    ++pos;
                }
            }
        }
    }
    cache.xp.resize(n, c);
    for (int i = 0; i < n; ++i) cache.xp.row(i) = x.row(cache.order[i]);
    cache.qkv = cache.xp * p.qkv_weight;
    cache.qkv.rowwise() += p.qkv_bias.row(0);

    const Eigen::MatrixXi idx = relative_index(window);
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    const int n_windows = n / t;
    cache.attn.assign(static_cast<std::size_t>(n_windows) * heads, RMatrix());
    RMatrix o(n, c);
    for (int wi = 0; wi < n_windows; ++wi) {
        const int base = wi * t;
        for (int hd = 0; hd < heads; ++hd) {
            const auto q = cache.qkv.block(base, hd * d, t, d);
            const auto k = cache.qkv.block(base, c + hd * d, t, d);
            const auto v = cache.qkv.block(base, 2 * c + hd * d, t, d);
            RMatrix s = (q * k.transpose()) * scale;
            for (int i = 0; i < t; ++i) {
                for (int j = 0; j < t; ++j) {
                    s(i, j) += p.rel_bias(idx(i, j), hd);
                    if (cache.region[base + i] != cache.region[base + j]) s(i, j) += kMasked;
                }
            }
            for (int i = 0; i < t; ++i) {
                const double m = s.row(i).maxCoeff();
                s.row(i) = (s.row(i).array() - m).exp();
                s.row(i) /= s.row(i).sum();
            }
            o.block(base, hd * d, t, d) = s * v;
            cache.attn[static_cast<std::size_t>(wi) * heads + hd] = std::move(s);
        }
    }
    const RMatrix yp = linear(o, p.proj_weight, p.proj_bias, cache.proj);
    RMatrix y(n, c);
    for (int i = 0; i < n; ++i) y.row(cache.order[i]) = yp.row(i);
    return y;
}

RMatrix window_attention_backward(const RMatrix& dy, const AttentionWeights& p,
                                  const AttentionCache& cache, const AttentionGrads& g) {
    const int n = cache.h * cache.w;
    const int c = static_cast<int>(dy.cols());
    const int t = cache.window * cache.window;
    const int heads = cache.heads;
    const int d = c / heads;
    RMatrix dyp(n, c);
    for (int i = 0; i < n; ++i) dyp.row(i) = dy.row(cache.order[i]);
    const RMatrix d_o = linear_backward(dyp, p.proj_weight, cache.proj, g.proj_weight, g.proj_bias);

    const Eigen::MatrixXi idx = relative_index(cache.window);
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    RMatrix dqkv = RMatrix::Zero(n, 3 * c);
    const int n_windows = n / t;
    for (int wi = 0; wi < n_windows; ++wi) {
        const int base = wi * t;
        for (int hd = 0; hd < heads; ++hd) {
            const RMatrix& a = cache.attn[static_cast<std::size_t>(wi) * heads + hd];
            const auto q = cache.qkv.block(base, hd * d, t, d);
            const auto k = cache.qkv.block(base, c + hd * d, t, d);
            const auto v = cache.qkv.block(base, 2 * c + hd * d, t, d);
            const auto dout = d_o.block(base, hd * d, t, d);
            dqkv.block(base, 2 * c + hd * d, t, d) = a.transpose() * dout;
            const RMatrix da = dout * v.transpose();
            RMatrix ds = a.cwiseProduct(da);
            const RVector row_dot = ds.rowwise().sum();
            ds -= a.cwiseProduct(row_dot.replicate(1, t));
            for (int i = 0; i < t; ++i) {
                for (int j = 0; j < t; ++j) g.rel_bias(idx(i, j), hd) += ds(i, j);
            }
            dqkv.block(base, hd * d, t, d) = (ds * k) * scale;
            dqkv.block(base, c + hd * d, t, d) = (ds.transpose() * q) * scale;
        }
    }
    g.qkv_weight.noalias() += cache.xp.transpose() * dqkv;
    g.qkv_bias += dqkv.colwise().sum();
    const RMatrix dxp = dqkv * p.qkv_weight.transpose();
    RMatrix dx(n, c);
    for (int i = 0; i < n; ++i) dx.row(cache.order[i]) = dxp.row(i);
    return dx;
}

RMatrix pixel_shuffle(const RMatrix& x, int h, int w, int s) {
    const int ss = s * s;
    if (x.rows() != static_cast<Eigen::Index>(h) * w || x.cols() % ss != 0) {
        throw ShapeError("pixel_shuffle: channel count must be a multiple of s^2");
    }
    const int c = static_cast<int>(x.cols()) / ss;
    const int ws = w * s;
    RMatrix y(static_cast<Eigen::Index>(h) * s * ws, c);
    for (int r = 0; r < h; ++r) {
        for (int col = 0; col < w; ++col) {
            for (int cc = 0; cc < c; ++cc) {
                for (int i = 0; i < s; ++i) {
                    for (int j = 0; j < s; ++j) {
                        y((r * s + i) * ws + col * s + j, cc) = x(r * w + col, cc * ss + i * s + j);
                    }
                }
            }
        }
    }
    return y;
}

RMatrix pixel_unshuffle(const RMatrix& y, int h, int w, int s) {
    const int ss = s * s;
    const int c = static_cast<int>(y.cols());
    const int ws = w * s;
    RMatrix x(static_cast<Eigen::Index>(h) * w, c * ss);
    for (int r = 0; r < h; ++r) {
        for (int col = 0; col < w; ++col) {
            for (int cc = 0; cc < c; ++cc) {
                for (int i = 0; i < s; ++i) {
                    for (int j = 0; j < s; ++j) {
                        x(r * w + col, cc * ss + i * s + j) = y((r * s + i) * ws + col * s + j, cc);
                    }
                }
            }
        }
    }
    return x;
}

RMatrix to_tokens(const std::vector<RMatrix>& channels) {
    if (channels.empty()) throw ShapeError("to_tokens: no channels");
    const Eigen::Index h = channels[0].rows();
    const Eigen::Index w = channels[0].cols();
    RMatrix t(h * w, static_cast<Eigen::Index>(channels.size()));
    for (std::size_t c = 0; c < channels.size(); ++c) {
        if (channels[c].rows() != h || channels[c].cols() != w) {
            throw ShapeError("to_tokens: channel size mismatch");
        }
        t.col(static_cast<Eigen::Index>(c)) = Eigen::Map<const RVector>(channels[c].data(), h * w);
    }
    return t;
}

std::vector<RMatrix> from_tokens(const RMatrix& tokens, int h, int w) {
    std::vector<RMatrix> out;
    out.reserve(static_cast<std::size_t>(tokens.cols()));
    for (Eigen::Index c = 0; c < tokens.cols(); ++c) {
        const RVector col = tokens.col(c);
        out.emplace_back(Eigen::Map<const RMatrix>(col.data(), h, w));
    }
    return out;
}

}  // namespace smforge::nn
