#pragma once

// Layer primitives with explicit reverse-mode passes. Feature maps are stored
// token-major: an (h*w) x channels matrix, token index = row * w + col.

#include <vector>

#include "smforge/core.hpp"

namespace smforge::nn {

/// 3x3 convolution, zero padding 1. `weight` is (9*c_in) x c_out with input
/// column index (ky*3 + kx)*c_in + c; `bias` is 1 x c_out.
struct ConvCache {
    RMatrix cols;
    int h = 0;
    int w = 0;
    int c_in = 0;
};

[[nodiscard]] RMatrix conv3x3(const RMatrix& x, int h, int w, const RMatrix& weight,
                              const RMatrix& bias, ConvCache& cache);
/// Accumulates into d_weight / d_bias and returns the input gradient.
[[nodiscard]] RMatrix conv3x3_backward(const RMatrix& dy, const RMatrix& weight,
                                       const ConvCache& cache, RMatrix& d_weight,
                                       RMatrix& d_bias);

struct LinearCache {
    RMatrix x;
};

[[nodiscard]] RMatrix linear(const RMatrix& x, const RMatrix& weight, const RMatrix& bias,
                             LinearCache& cache);
[[nodiscard]] RMatrix linear_backward(const RMatrix& dy, const RMatrix& weight,
                                      const LinearCache& cache, RMatrix& d_weight,
                                      RMatrix& d_bias);

struct LayerNormCache {
    RMatrix xhat;
    RVector inv_std;
};

/// Per-token normalization over channels; gamma and beta are 1 x c.
[[nodiscard]] RMatrix layer_norm(const RMatrix& x, const RMatrix& gamma, const RMatrix& beta,
                                 LayerNormCache& cache, double eps = 1e-5);
[[nodiscard]] RMatrix layer_norm_backward(const RMatrix& dy, const RMatrix& gamma,
                                          const LayerNormCache& cache, RMatrix& d_gamma,
                                          RMatrix& d_beta);

[[nodiscard]] RMatrix gelu(const RMatrix& x);
[[nodiscard]] RMatrix gelu_backward(const RMatrix& dy, const RMatrix& x);

[[nodiscard]] RMatrix relu(const RMatrix& x);
[[nodiscard]] RMatrix relu_backward(const RMatrix& dy, const RMatrix& x);

/// Parameters of one window multi-head self-attention layer.
struct AttentionWeights {
    const RMatrix& qkv_weight;  // c x 3c
    const RMatrix& qkv_bias;    // 1 x 3c
    const RMatrix& rel_bias;    // (2w-1)^2 x heads
    const RMatrix& proj_weight; // c x c
    const RMatrix& proj_bias;   // 1 x c
};

struct AttentionGrads {
    RMatrix& qkv_weight;
    RMatrix& qkv_bias;
    RMatrix& rel_bias;
    RMatrix& proj_weight;
    RMatrix& proj_bias;
};

struct AttentionCache {
    std::vector<int> order;       // permuted position -> token index
    std::vector<int> region;      // permuted position -> shift region label
    RMatrix xp;                   // permuted input
    RMatrix qkv;                  // permuted q, k, v
    std::vector<RMatrix> attn;    // softmax weights per (window, head)
    LinearCache proj;
    int h = 0;
    int w = 0;
    int window = 0;
    int shift = 0;
    int heads = 0;
};

/// Window attention over a cyclically shifted map (shift 0 gives plain windows).
/// Windows of side `window` tile the map; tokens from different pre-shift
/// regions are masked from each other.
[[nodiscard]] RMatrix window_attention(const RMatrix& x, int h, int w, int window, int shift,
                                       int heads, const AttentionWeights& p,
                                       AttentionCache& cache);
[[nodiscard]] RMatrix window_attention_backward(const RMatrix& dy, const AttentionWeights& p,
                                                const AttentionCache& cache,
                                                const AttentionGrads& g);

/// Rearranges (h*w) x (c*s*s) into (h*s*w*s) x c: channel c*s*s + i*s + j
/// moves to output position (row*s + i, col*s + j).
[[nodiscard]] RMatrix pixel_shuffle(const RMatrix& x, int h, int w, int s);
[[nodiscard]] RMatrix pixel_unshuffle(const RMatrix& y, int h, int w, int s);

/// Channel images <-> token-major feature maps.
[[nodiscard]] RMatrix to_tokens(const std::vector<RMatrix>& channels);
[[nodiscard]] std::vector<RMatrix> from_tokens(const RMatrix& tokens, int h, int w);

}  // namespace smforge::nn
