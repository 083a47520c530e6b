#include "smforge/model.hpp"

#include <cmath>
#include <cstring>
#include <random>

#include "smforge/baselines.hpp"

namespace smforge::model {
namespace {

enum class Init { conv_weight, conv_bias, trunc_normal, zeros, ones };

struct TensorSpec {
    std::string name;
    int rows;
    int cols;
    Init init;
    int fan_in;
};

std::string block_prefix(int b) { return "blocks." + std::to_string(b) + "."; }
std::string layer_prefix(int b, int l) {
    return block_prefix(b) + "layers." + std::to_string(l) + ".";
}

int layers_per_block() { return 2; }

std::vector<TensorSpec> layout(const ModelConfig& cfg) {
    const int c = cfg.channels;
    const int s2 = cfg.scale * cfg.scale;
    std::vector<TensorSpec> specs;
    const auto conv = [&](const std::string& name, int c_in, int c_out) {
        specs.push_back({name + ".weight", 9 * c_in, c_out, Init::conv_weight, 9 * c_in});
        specs.push_back({name + ".bias", 1, c_out, Init::conv_bias, 9 * c_in});
    };
    const auto lin = [&](const std::string& name, int c_in, int c_out) {
        specs.push_back({name + ".weight", c_in, c_out, Init::trunc_normal, c_in});
        specs.push_back({name + ".bias", 1, c_out, Init::zeros, c_in});
    };
    const auto norm = [&](const std::string& name) {
        specs.push_back({name + ".gamma", 1, c, Init::ones, c});
        specs.push_back({name + ".beta", 1, c, Init::zeros, c});
    };
    conv("conv_first", cfg.in_channels(), c);
    for (int b = 0; b < cfg.blocks; ++b) {
        if (cfg.attention_enabled) {
            for (int l = 0; l < layers_per_block(); ++l) {
                const std::string p = layer_prefix(b, l);
                norm(p + "norm1");
                lin(p + "attn.qkv", c, 3 * c);
                const int table = (2 * cfg.window - 1) * (2 * cfg.window - 1);
                specs.push_back({p + "attn.rel_bias", table, cfg.heads, Init::trunc_normal, 1});
                lin(p + "attn.proj", c, c);
                norm(p + "norm2");
                lin(p + "mlp.fc1", c, cfg.mlp_ratio * c);
                lin(p + "mlp.fc2", cfg.mlp_ratio * c, c);
            }
            conv(block_prefix(b) + "conv", c, c);
        } else {
            conv(block_prefix(b) + "conv1", c, c);
            conv(block_prefix(b) + "conv2", c, c);
        }
    }
    conv("conv_body", c, c);
    specs.push_back({"conv_up.weight", 9 * c, 2 * s2, Init::zeros, 9 * c});
    specs.push_back({"conv_up.bias", 1, 2 * s2, Init::zeros, 9 * c});
    return specs;
}

double truncated_normal(std::mt19937_64& rng, double stddev) {
    std::normal_distribution<double> normal(0.0, stddev);
    for (;;) {
        const double v = normal(rng);
        if (std::abs(v) <= 2.0 * stddev) return v;
    }
}

struct Names {
    std::string weight;
    std::string bias;
};

Names conv_names(const std::string& base) { return {base + ".weight", base + ".bias"}; }

int shift_for(const ModelConfig& cfg, int layer, int h, int w) {
    if (layer % 2 == 0) return 0;
    if (cfg.window >= h || cfg.window >= w) return 0;
    return cfg.window / 2;
}

nn::AttentionWeights attention_weights(const ModelParams& p, const std::string& prefix) {
    return {p.at(prefix + "attn.qkv.weight"), p.at(prefix + "attn.qkv.bias"),
            p.at(prefix + "attn.rel_bias"), p.at(prefix + "attn.proj.weight"),
            p.at(prefix + "attn.proj.bias")};
}

nn::AttentionGrads attention_grads(ModelParams& g, const std::string& prefix) {
    return {g.at(prefix + "attn.qkv.weight"), g.at(prefix + "attn.qkv.bias"),
            g.at(prefix + "attn.rel_bias"), g.at(prefix + "attn.proj.weight"),
            g.at(prefix + "attn.proj.bias")};
}

RMatrix swin_layer(const ModelParams& p, const ModelConfig& cfg, const std::string& prefix,
                   const RMatrix& x, int h, int w, int shift, SwinLayerCache& cache) {
    cache.input = x;
    const RMatrix n1 = nn::layer_norm(x, p.at(prefix + "norm1.gamma"), p.at(prefix + "norm1.beta"),
                                      cache.ln1);
    const RMatrix a = nn::window_attention(n1, h, w, cfg.window, shift, cfg.heads,
                                           attention_weights(p, prefix), cache.attn);
    cache.mid = x + a;
    const RMatrix n2 = nn::layer_norm(cache.mid, p.at(prefix + "norm2.gamma"),
                                      p.at(prefix + "norm2.beta"), cache.ln2);
    cache.hidden = nn::linear(n2, p.at(prefix + "mlp.fc1.weight"), p.at(prefix + "mlp.fc1.bias"),
                              cache.fc1);
    const RMatrix act = nn::gelu(cache.hidden);
    const RMatrix f = nn::linear(act, p.at(prefix + "mlp.fc2.weight"),
                                 p.at(prefix + "mlp.fc2.bias"), cache.fc2);
    return cache.mid + f;
}

RMatrix swin_layer_backward(const ModelParams& p, const std::string& prefix, const RMatrix& dy,
                            const SwinLayerCache& cache, ModelParams& g) {
    const RMatrix d_act = nn::linear_backward(dy, p.at(prefix + "mlp.fc2.weight"), cache.fc2,
                                              g.at(prefix + "mlp.fc2.weight"),
                                              g.at(prefix + "mlp.fc2.bias"));
    const RMatrix d_hidden = nn::gelu_backward(d_act, cache.hidden);
    const RMatrix d_n2 = nn::linear_backward(d_hidden, p.at(prefix + "mlp.fc1.weight"), cache.fc1,
                                             g.at(prefix + "mlp.fc1.weight"),
                                             g.at(prefix + "mlp.fc1.bias"));
    RMatrix d_mid = dy + nn::layer_norm_backward(d_n2, p.at(prefix + "norm2.gamma"), cache.ln2,
                                                 g.at(prefix + "norm2.gamma"),
                                                 g.at(prefix + "norm2.beta"));
    const RMatrix d_n1 = nn::window_attention_backward(d_mid, attention_weights(p, prefix),
                                                       cache.attn, attention_grads(g, prefix));
    d_mid += nn::layer_norm_backward(d_n1, p.at(prefix + "norm1.gamma"), cache.ln1,
                                     g.at(prefix + "norm1.gamma"), g.at(prefix + "norm1.beta"));
    return d_mid;
}

RMatrix conv(const ModelParams& p, const std::string& base, const RMatrix& x, int h, int w,
             nn::ConvCache& cache) {
    const Names n = conv_names(base);
    return nn::conv3x3(x, h, w, p.at(n.weight), p.at(n.bias), cache);
}

RMatrix conv_backward(const ModelParams& p, const std::string& base, const RMatrix& dy,
                      const nn::ConvCache& cache, ModelParams& g) {
    const Names n = conv_names(base);
    return nn::conv3x3_backward(dy, p.at(n.weight), cache, g.at(n.weight), g.at(n.bias));
}

}  // namespace

void ModelConfig::validate() const {
    if (channels < 1 || blocks < 0 || heads < 1 || mlp_ratio < 1 || window < 1) {
        throw ConfigError("model dimensions must be positive");
    }
    if (attention_enabled && channels % heads != 0) {
        throw ConfigError("attention heads must divide the channel count");
    }
    (void)ScaleFactor(scale);
}

void ModelConfig::validate_input(int h, int w) const {
    validate();
    if (h < 1 || w < 1) throw ShapeError("model input must be non-empty");
    if (attention_enabled && blocks > 0 && (h % window != 0 || w % window != 0)) {
        throw ShapeError("attention window " + std::to_string(window) +
                         " does not divide the low-res input " + std::to_string(h) + "x" +
                         std::to_string(w));
    }
}

nlohmann::json ModelConfig::to_json() const {
    return {{"channels", channels},       {"blocks", blocks},
            {"window", window},           {"heads", heads},
            {"mlp_ratio", mlp_ratio},     {"scale", scale},
            {"attention_enabled", attention_enabled},
            {"rim_input", rim_input},     {"bicubic_skip", bicubic_skip},
            {"rng_seed", rng_seed}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.channels = j.value("channels", c.channels);
    c.blocks = j.value("blocks", c.blocks);
    c.window = j.value("window", c.window);
    c.heads = j.value("heads", c.heads);
    c.mlp_ratio = j.value("mlp_ratio", c.mlp_ratio);
    c.scale = j.value("scale", c.scale);
    c.attention_enabled = j.value("attention_enabled", c.attention_enabled);
    c.rim_input = j.value("rim_input", c.rim_input);
    c.bicubic_skip = j.value("bicubic_skip", c.bicubic_skip);
    c.rng_seed = j.value("rng_seed", c.rng_seed);
    c.validate();
    return c;
}

RMatrix& ModelParams::at(const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ShapeError("missing parameter tensor '" + name + "'");
    return it->second;
}

const RMatrix& ModelParams::at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ShapeError("missing parameter tensor '" + name + "'");
    return it->second;
}

ModelParams ModelParams::initialize(const ModelConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.rng_seed);
    ModelParams p;
    for (const TensorSpec& s : layout(cfg)) {
        RMatrix t(s.rows, s.cols);
        const double bound = 1.0 / std::sqrt(static_cast<double>(s.fan_in));
        std::uniform_real_distribution<double> uniform(-bound, bound);
        for (Eigen::Index i = 0; i < t.size(); ++i) {
            double v = 0.0;
            switch (s.init) {
                case Init::conv_weight:
                case Init::conv_bias: v = uniform(rng); break;
                case Init::trunc_normal: v = truncated_normal(rng, 0.02); break;
                case Init::zeros: v = 0.0; break;
                case Init::ones: v = 1.0; break;
            }
            t.data()[i] = v;
        }
        p.tensors.emplace(s.name, std::move(t));
    }
    return p;
}

ModelParams ModelParams::zeros_like() const {
    ModelParams z;
    for (const auto& [name, t] : tensors) z.tensors.emplace(name, RMatrix::Zero(t.rows(), t.cols()));
    return z;
}

std::size_t ModelParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : tensors) n += static_cast<std::size_t>(t.size());
    return n;
}

bool ModelParams::all_finite() const {
    for (const auto& [name, t] : tensors) {
        if (!t.allFinite()) return false;
    }
    return true;
}

void ModelParams::check_shapes(const ModelConfig& cfg) const {
    const auto specs = layout(cfg);
    if (specs.size() != tensors.size()) {
        throw ShapeError("parameter set has " + std::to_string(tensors.size()) +
                         " tensors, model expects " + std::to_string(specs.size()));
    }
    for (const TensorSpec& s : specs) {
        const RMatrix& t = at(s.name);
        if (t.rows() != s.rows || t.cols() != s.cols) {
            throw ShapeError("parameter '" + s.name + "' has shape " + std::to_string(t.rows()) +
                             "x" + std::to_string(t.cols()) + ", expected " +
                             std::to_string(s.rows) + "x" + std::to_string(s.cols));
        }
    }
}

std::uint64_t ModelParams::fingerprint() const {
    std::uint64_t h = 1469598103934665603ULL;
    const auto mix = [&h](const void* data, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 1099511628211ULL;
        }
    };
    for (const auto& [name, t] : tensors) {
        mix(name.data(), name.size());
        mix(t.data(), sizeof(double) * static_cast<std::size_t>(t.size()));
    }
    return h;
}

ForwardPass forward(const ModelParams& params, const ModelConfig& cfg,
                    std::span<const RMatrix> input) {
    if (input.size() != static_cast<std::size_t>(cfg.in_channels())) {
        throw ShapeError("model expects " + std::to_string(cfg.in_channels()) +
                         " input channels, got " + std::to_string(input.size()));
    }
    const int h = static_cast<int>(input[0].rows());
    const int w = static_cast<int>(input[0].cols());
    cfg.validate_input(h, w);
    const int s = cfg.scale;

    ForwardPass out;
    ForwardCache& cache = out.cache;
    cache.h = h;
    cache.w = w;
    const RMatrix x0 = nn::to_tokens(std::vector<RMatrix>(input.begin(), input.end()));
    const RMatrix f0 = conv(params, "conv_first", x0, h, w, cache.first);
    RMatrix f = f0;
    cache.blocks.resize(static_cast<std::size_t>(cfg.blocks));
    for (int b = 0; b < cfg.blocks; ++b) {
        BlockCache& bc = cache.blocks[static_cast<std::size_t>(b)];
        if (cfg.attention_enabled) {
            RMatrix y = f;
            bc.layers.resize(static_cast<std::size_t>(layers_per_block()));
            for (int l = 0; l < layers_per_block(); ++l) {
                y = swin_layer(params, cfg, layer_prefix(b, l), y, h, w, shift_for(cfg, l, h, w),
                               bc.layers[static_cast<std::size_t>(l)]);
            }
            f = f + conv(params, block_prefix(b) + "conv", y, h, w, bc.conv);
        } else {
            bc.pre_relu = conv(params, block_prefix(b) + "conv1", f, h, w, bc.conv1);
            f = f + conv(params, block_prefix(b) + "conv2", nn::relu(bc.pre_relu), h, w, bc.conv2);
        }
    }
    const RMatrix body = conv(params, "conv_body", f, h, w, cache.body) + f0;
    const RMatrix up = conv(params, "conv_up", body, h, w, cache.up);
    RMatrix hr = nn::pixel_shuffle(up, h, w, s);
    if (cfg.bicubic_skip) {
        for (int c = 0; c < 2; ++c) {
            const RMatrix base = baselines::strided_bicubic(input[static_cast<std::size_t>(c)], s);
            hr.col(c) += Eigen::Map<const RVector>(base.data(), base.size());
        }
    }
    auto channels = nn::from_tokens(hr, h * s, w * s);
    out.output = {std::move(channels[0]), std::move(channels[1])};
    return out;
}

void backward(const ModelParams& params, const ModelConfig& cfg, const ForwardCache& cache,
              std::span<const RMatrix> grad_output, ModelParams& grads) {
    if (grad_output.size() != 2) throw ShapeError("backward expects two output gradients");
    const int h = cache.h;
    const int w = cache.w;
    const RMatrix d_hr = nn::to_tokens(std::vector<RMatrix>(grad_output.begin(), grad_output.end()));
    const RMatrix d_up = nn::pixel_unshuffle(d_hr, h, w, cfg.scale);
    const RMatrix d_body = conv_backward(params, "conv_up", d_up, cache.up, grads);
    RMatrix d_f0 = d_body;
    RMatrix d_f = conv_backward(params, "conv_body", d_body, cache.body, grads);
    for (int b = cfg.blocks - 1; b >= 0; --b) {
        const BlockCache& bc = cache.blocks[static_cast<std::size_t>(b)];
        if (cfg.attention_enabled) {
            RMatrix d_y = conv_backward(params, block_prefix(b) + "conv", d_f, bc.conv, grads);
            for (int l = layers_per_block() - 1; l >= 0; --l) {
                d_y = swin_layer_backward(params, layer_prefix(b, l), d_y,
                                          bc.layers[static_cast<std::size_t>(l)], grads);
            }
            d_f += d_y;
        } else {
            const RMatrix d_act = conv_backward(params, block_prefix(b) + "conv2", d_f, bc.conv2, grads);
            d_f += conv_backward(params, block_prefix(b) + "conv1",
                                 nn::relu_backward(d_act, bc.pre_relu), bc.conv1, grads);
        }
    }
    d_f0 += d_f;
    (void)conv_backward(params, "conv_first", d_f0, cache.first, grads);
}

std::vector<RMatrix> encode_input(const RimImage& rim, bool rim_input) {
    std::vector<RMatrix> in{rim.channels[0], rim.channels[1]};
    if (rim_input) in.push_back(rim.channels[2]);
    return in;
}

ComplexImage predict(const ModelParams& params, const ModelConfig& cfg, const ComplexImage& lr) {
    const RimImage rim = rim_encode(lr);
    const auto input = encode_input(rim, cfg.rim_input);
    const ForwardPass pass = forward(params, cfg, input);
    const Grid hr(lr.grid.nx * cfg.scale, lr.grid.ny * cfg.scale, lr.grid.fov_x, lr.grid.fov_y);
    CMatrix v(hr.ny, hr.nx);
    v.real() = pass.output[0] * rim.scale;
    v.imag() = pass.output[1] * rim.scale;
    return ComplexImage(hr, std::move(v));
}

SystemMatrix recover(const ModelParams& params, const ModelConfig& cfg, const SystemMatrix& sm_lr) {
    const Grid& g = sm_lr.grid();
    cfg.validate_input(g.ny, g.nx);
    const Grid hr(g.nx * cfg.scale, g.ny * cfg.scale, g.fov_x, g.fov_y);
    CMatrix data(sm_lr.rows(), hr.size());
    for (int k = 0; k < sm_lr.rows(); ++k) {
        const ComplexImage up = predict(params, cfg, sm_row_to_image(sm_lr, k));
        data.row(k) = image_to_row(up).transpose();
    }
    return SystemMatrix(hr, sm_lr.freqs(), std::move(data));
}

}  // namespace smforge::model
