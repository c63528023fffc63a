#pragma once

#include <string>
#include <vector>

#include "rectdiff/layers.hpp"
#include "rectdiff/offsets.hpp"
#include "rectdiff/tensor.hpp"

namespace rectdiff {

enum class BlockKind { down, middle, up };
const char* block_kind_name(BlockKind k);

struct DenoiserConfig {
    int image_size = 16;
    int in_channels = 1;
    int width1 = 16;  // outer blocks
    int width2 = 32;  // inner blocks and middle
    int time_embed_dim = 32;
    int norm_groups = 4;

    void validate() const;
};

// the 8x8 configuration used by gradient-check tests
DenoiserConfig tiny_denoiser_config();

// conv -> +time -> norm -> silu -> conv -> norm -> silu
struct DenoiserBlock {
    BlockKind kind = BlockKind::down;
    Conv2dLayer conv1, conv2;
    LinearLayer temb_proj;
    NormAffine gn1, gn2;
};

// Kernel metadata for one modulatable conv layer.
struct ConvLayerMeta {
    std::string id;
    BlockKind kind;
    bool modulatable;
    int cout, cin, kh, kw;
};

// Tiny U-Net eps-predictor with layer-addressable parameters. Middle and
// up-block conv kernels are the modulation surface; biases and norms are
// never modulated.
struct DenoiserParams {
    DenoiserConfig config;
    Conv2dLayer stem, head;
    DenoiserBlock down1, down2, mid, up1, up2;

    ParamList registry() const;                 // ordered, stable ids
    std::vector<Tensor> trainable() const;
    std::vector<ConvLayerMeta> conv_meta() const;
    std::vector<ConvLayerMeta> modulatable_meta() const;
    int64_t parameter_count() const;
    uint64_t checksum() const;
    void set_trainable(bool rg) const;

    void save(const std::string& path) const;
    static DenoiserParams load(const std::string& path);
};

DenoiserParams build_denoiser(const DenoiserConfig& config, uint64_t seed);

// eps_theta(x_t, t); x: [B,C,H,W], one step index per batch item (or one
// shared index). Differentiable w.r.t. params and x.
Tensor predict_eps(const DenoiserParams& params, const Tensor& x_t, const std::vector<int>& ts);
Tensor predict_eps(const DenoiserParams& params, const Tensor& x_t, int t);

// Forward pass with kernel weights w*(1+delta) for every layer addressed by
// the offset map; all other layers use the stored weights. Offsets may only
// address modulatable layers. Stored params are never written.
Tensor modulated_predict_eps(const DenoiserParams& params, const OffsetMap& offsets,
                             const Tensor& x_t, const std::vector<int>& ts);
Tensor modulated_predict_eps(const DenoiserParams& params, const OffsetMap& offsets,
                             const Tensor& x_t, int t);

}  // namespace rectdiff
