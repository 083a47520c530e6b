#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "smforge/core.hpp"
#include "smforge/nn.hpp"

namespace smforge::model {

/// Shallow conv feature extractor -> residual shifted-window blocks -> conv +
/// pixel-shuffle head, plus a strided-bicubic skip of the real/imag inputs.
struct ModelConfig {
    int channels = 32;
    int blocks = 2;
    int window = 4;
    int heads = 2;
    int mlp_ratio = 2;
    int scale = 4;
    bool attention_enabled = true;
    bool rim_input = true;    // 3 input channels (real, imag, magnitude) or 2 (real, imag)
    bool bicubic_skip = true;
    std::uint64_t rng_seed = 0;

    [[nodiscard]] int in_channels() const { return rim_input ? 3 : 2; }
    void validate() const;
    /// Checks that a low-res input of the given size is admissible.
    void validate_input(int h, int w) const;

    [[nodiscard]] nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
};

/// Named parameter tensors, iterated in name order.
class ModelParams {
public:
    std::map<std::string, RMatrix> tensors;

    [[nodiscard]] RMatrix& at(const std::string& name);
    [[nodiscard]] const RMatrix& at(const std::string& name) const;

    /// Conv weights uniform in +-1/sqrt(fan_in); projections truncated normal (std 0.02);
    /// the output head starts at zero so an untrained model equals the bicubic skip.
    static ModelParams initialize(const ModelConfig& cfg);
    [[nodiscard]] ModelParams zeros_like() const;
    [[nodiscard]] std::size_t parameter_count() const;
    [[nodiscard]] bool all_finite() const;
    /// Verifies the tensor names and shapes expected by `cfg`.
    void check_shapes(const ModelConfig& cfg) const;

    /// FNV-1a hash of the raw parameter bytes, for reproducibility checks.
    [[nodiscard]] std::uint64_t fingerprint() const;
};

struct SwinLayerCache {
    RMatrix input;
    nn::LayerNormCache ln1;
    nn::AttentionCache attn;
    RMatrix mid;
    nn::LayerNormCache ln2;
    nn::LinearCache fc1;
    RMatrix hidden;  // pre-activation of the MLP
    nn::LinearCache fc2;
};

struct BlockCache {
    std::vector<SwinLayerCache> layers;
    nn::ConvCache conv;
    nn::ConvCache conv1;  // convolutional fallback
    RMatrix pre_relu;
    nn::ConvCache conv2;
};

struct ForwardCache {
    int h = 0;
    int w = 0;
    nn::ConvCache first;
    std::vector<BlockCache> blocks;
    nn::ConvCache body;
    nn::ConvCache up;
};

struct ForwardPass {
    std::array<RMatrix, 2> output;  // normalized real and imaginary high-res channels
    ForwardCache cache;
};

/// Runs the network on normalized low-res input channels.
[[nodiscard]] ForwardPass forward(const ModelParams& params, const ModelConfig& cfg,
                                  std::span<const RMatrix> input);

/// Reverse pass: accumulates d(loss)/d(param) into `grads` given d(loss)/d(output).
void backward(const ModelParams& params, const ModelConfig& cfg, const ForwardCache& cache,
              std::span<const RMatrix> grad_output, ModelParams& grads);

/// Network input channels for a low-res image (normalized by the RIM scale).
[[nodiscard]] std::vector<RMatrix> encode_input(const RimImage& rim, bool rim_input);

/// De-normalized high-res prediction for one low-res frequency component.
[[nodiscard]] ComplexImage predict(const ModelParams& params, const ModelConfig& cfg,
                                   const ComplexImage& lr);

/// Row-by-row recovery of a high-res matrix from a low-res one.
[[nodiscard]] SystemMatrix recover(const ModelParams& params, const ModelConfig& cfg,
                                   const SystemMatrix& sm_lr);

}  // namespace smforge::model
