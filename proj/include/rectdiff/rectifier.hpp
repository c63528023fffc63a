#pragma once

#include <string>
#include <vector>

#include "rectdiff/denoiser.hpp"
#include "rectdiff/layers.hpp"
#include "rectdiff/offsets.hpp"
#include "rectdiff/tensor.hpp"

namespace rectdiff {

struct RectifierConfig {
    int image_size = 16;
    int in_channels = 2;  // [x0 ; x0 estimate], channel-concatenated
    std::vector<int> encoder_widths = {8, 16, 32, 64};
    int time_embed_dim = 32;
    int subnet_hidden = 64;

    void validate() const;
    int feature_dim() const { return encoder_widths.back(); }
};

RectifierConfig tiny_rectifier_config();

// One branch per modulated denoiser layer: conditioning MLP plus two heads
// emitting the separable factors. Heads start at zero so a fresh rectifier
// is an exact no-op.
struct RectifierSubnet {
    std::string target_layer;
    int cout = 0, cin = 0, kh = 0, kw = 0;
    LinearLayer from_feature;  // [feature_dim, hidden]
    LinearLayer from_time;     // [time_embed_dim, hidden]
    LinearLayer head_in;       // [hidden, kh*kw*cin], zero-init
    LinearLayer head_out;      // [hidden, kh*kw*cout], zero-init
};

struct RectifierParams {
    RectifierConfig config;
    std::vector<Conv2dLayer> encoder;  // stride-1 convs, avg-pool halving between
    LinearLayer time_mlp;
    std::vector<RectifierSubnet> subnets;

    ParamList registry() const;
    std::vector<Tensor> trainable() const;
    RectifierParams deep_copy() const;
    int64_t parameter_count() const;
    // generated offset entries per forward pass: sum kh*kw*(Cin+Cout)
    int64_t generated_parameter_count() const;
    uint64_t checksum() const;
    void set_trainable(bool rg) const;

    void save(const std::string& path) const;
    static RectifierParams load(const std::string& path);
};

RectifierParams build_rectifier(const std::vector<ConvLayerMeta>& denoiser_meta,
                                const RectifierConfig& config, uint64_t seed);

// Delta = R(x0, x0_est, t): encodes the 2-channel concatenation, injects the
// time embedding into every subnet and emits one separable offset per
// modulated layer. Differentiable w.r.t. the rectifier parameters.
OffsetMap predict_offsets(const RectifierParams& r, const Tensor& x0, const Tensor& x0_est,
                          int t);

}  // namespace rectdiff
