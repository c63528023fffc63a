#include "rectdiff/denoiser.hpp"

#include "rectdiff/container.hpp"

namespace rectdiff {

const char* block_kind_name(BlockKind k) {
    switch (k) {
        case BlockKind::down: return "down";
        case BlockKind::middle: return "middle";
        case BlockKind::up: return "up";
    }
    return "?";
}

void DenoiserConfig::validate() const {
    if (image_size < 8 || image_size % 4 != 0)
        throw Error(ErrorCategory::config, "denoiser: image_size must be a multiple of 4, >= 8");
    if (in_channels < 1)
        throw Error(ErrorCategory::config, "denoiser: in_channels must be >= 1");
    if (width1 < norm_groups || width2 < norm_groups)
        throw Error(ErrorCategory::config, "denoiser: widths must be >= norm_groups");
    if (width1 % norm_groups != 0 || width2 % norm_groups != 0 ||
        (width1 + width2) % norm_groups != 0)
        throw Error(ErrorCategory::config, "denoiser: widths must divide into norm groups");
    if (time_embed_dim < 2 || time_embed_dim % 2 != 0)
        throw Error(ErrorCategory::config, "denoiser: time_embed_dim must be even");
}

DenoiserConfig tiny_denoiser_config() {
    DenoiserConfig c;
    c.image_size = 8;
    c.width1 = 4;
    c.width2 = 8;
    c.time_embed_dim = 8;
    c.norm_groups = 2;
    return c;
}

namespace {

DenoiserBlock make_block(const std::string& id, BlockKind kind, int cin, int cout, int temb_dim,
                         Rng& rng) {
    DenoiserBlock b;
    b.kind = kind;
    b.conv1 = make_conv(id + ".conv1", cout, cin, 3, rng);
    b.conv2 = make_conv(id + ".conv2", cout, cout, 3, rng);
    b.temb_proj = make_linear(id + ".temb", temb_dim, cout, rng);
    b.gn1 = make_norm(id + ".gn1", cout);
    b.gn2 = make_norm(id + ".gn2", cout);
    return b;
}

void block_meta(std::vector<ConvLayerMeta>& out, const DenoiserBlock& b) {
    bool mod = b.kind != BlockKind::down;
    for (const Conv2dLayer* c : {&b.conv1, &b.conv2}) {
        const Shape& s = c->weight.shape();
        out.push_back({c->id, b.kind, mod, s[0], s[1], s[2], s[3]});
    }
}

}  // namespace

DenoiserParams build_denoiser(const DenoiserConfig& config, uint64_t seed) {
    config.validate();
    Rng rng(mix_seed(seed, 0xd0));
    DenoiserParams p;
    p.config = config;
    int c0 = config.in_channels, w1 = config.width1, w2 = config.width2;
    int td = config.time_embed_dim;
    p.stem = make_conv("stem", w1, c0, 3, rng);
    p.down1 = make_block("down1", BlockKind::down, w1, w1, td, rng);
    p.down2 = make_block("down2", BlockKind::down, w1, w2, td, rng);
    p.mid = make_block("mid", BlockKind::middle, w2, w2, td, rng);
    p.up1 = make_block("up1", BlockKind::up, w2 + w2, w2, td, rng);
    p.up2 = make_block("up2", BlockKind::up, w2 + w1, w1, td, rng);
    p.head = make_conv("head", c0, w1, 3, rng);
    return p;
}

ParamList DenoiserParams::registry() const {
    ParamList out;
    collect(out, stem);
    for (const DenoiserBlock* b : {&down1, &down2, &mid, &up1, &up2}) {
        collect(out, b->conv1);
        collect(out, b->conv2);
        collect(out, b->temb_proj);
        collect(out, b->gn1);
        collect(out, b->gn2);
    }
    collect(out, head);
    return out;
}

std::vector<Tensor> DenoiserParams::trainable() const { return tensors_of(registry()); }

std::vector<ConvLayerMeta> DenoiserParams::conv_meta() const {
    std::vector<ConvLayerMeta> out;
    const Shape& ss = stem.weight.shape();
    out.push_back({stem.id, BlockKind::down, false, ss[0], ss[1], ss[2], ss[3]});
    for (const DenoiserBlock* b : {&down1, &down2, &mid, &up1, &up2}) block_meta(out, *b);
    const Shape& hs = head.weight.shape();
    out.push_back({head.id, BlockKind::up, false, hs[0], hs[1], hs[2], hs[3]});
    return out;
}

std::vector<ConvLayerMeta> DenoiserParams::modulatable_meta() const {
    std::vector<ConvLayerMeta> out;
    for (const auto& m : conv_meta())
        if (m.modulatable) out.push_back(m);
    return out;
}

int64_t DenoiserParams::parameter_count() const {
    int64_t n = 0;
    for (const auto& [name, t] : registry()) n += t.numel();
    return n;
}

uint64_t DenoiserParams::checksum() const { return params_checksum(registry()); }

void DenoiserParams::set_trainable(bool rg) const { set_requires_grad(registry(), rg); }

void DenoiserParams::save(const std::string& path) const {
    Container c("denoiser");
    c.set_meta("image_size", std::to_string(config.image_size));
    c.set_meta("in_channels", std::to_string(config.in_channels));
    c.set_meta("width1", std::to_string(config.width1));
    c.set_meta("width2", std::to_string(config.width2));
    c.set_meta("time_embed_dim", std::to_string(config.time_embed_dim));
    c.set_meta("norm_groups", std::to_string(config.norm_groups));
    // layer table: id, block kind, shape travel with each entry
    std::map<std::string, std::string> kinds;
    for (const auto& m : conv_meta())
        kinds[m.id] = std::string(block_kind_name(m.kind)) + (m.modulatable ? ":mod" : "");
    for (const auto& [name, t] : registry()) {
        auto dot = name.rfind('.');
        std::string layer = name.substr(0, dot);
        std::string kind = kinds.count(layer) ? "conv:" + kinds[layer] : "param";
        c.add_tensor(name, kind, t);
    }
    c.save(path);
}

DenoiserParams DenoiserParams::load(const std::string& path) {
    Container c = Container::load(path, "denoiser");
    DenoiserConfig cfg;
    cfg.image_size = std::stoi(c.meta_at("image_size"));
    cfg.in_channels = std::stoi(c.meta_at("in_channels"));
    cfg.width1 = std::stoi(c.meta_at("width1"));
    cfg.width2 = std::stoi(c.meta_at("width2"));
    cfg.time_embed_dim = std::stoi(c.meta_at("time_embed_dim"));
    cfg.norm_groups = std::stoi(c.meta_at("norm_groups"));
    DenoiserParams p = build_denoiser(cfg, 0);
    for (const auto& [name, t] : p.registry()) {
        Tensor stored = c.tensor(name);
        if (stored.shape() != t.shape())
            throw Error(ErrorCategory::io, "denoiser: entry '" + name + "' has shape " +
                                               shape_str(stored.shape()) + ", expected " +
                                               shape_str(t.shape()));
        Tensor dst = t;
        dst.leaf_value() = stored.value();
    }
    return p;
}

// ---------------------------------------------------------------------------
// forward

namespace {

Tensor effective_weight(const Conv2dLayer& layer, const OffsetMap* offsets) {
    if (offsets) {
        auto it = offsets->find(layer.id);
        if (it != offsets->end()) {
            Tensor delta = materialize_offset(it->second);
            if (delta.shape() != layer.weight.shape())
                throw Error(ErrorCategory::shape,
                            "modulation: offset for '" + layer.id + "' materializes to " +
                                shape_str(delta.shape()) + ", kernel is " +
                                shape_str(layer.weight.shape()));
            return add(layer.weight, mul(layer.weight, delta));
        }
    }
    return layer.weight;
}

Tensor run_block(const DenoiserBlock& b, const Tensor& x, const Tensor& temb, int groups,
                 const OffsetMap* offsets) {
    Tensor h = conv2d(x, effective_weight(b.conv1, offsets), b.conv1.bias, 1, 1);
    h = add_channel_bias(h, linear(temb, b.temb_proj.weight, b.temb_proj.bias));
    h = silu(channel_affine(group_norm(h, groups), b.gn1.gamma, b.gn1.beta));
    h = conv2d(h, effective_weight(b.conv2, offsets), b.conv2.bias, 1, 1);
    h = silu(channel_affine(group_norm(h, groups), b.gn2.gamma, b.gn2.beta));
    return h;
}

Tensor forward(const DenoiserParams& p, const Tensor& x_t, const std::vector<int>& ts,
               const OffsetMap* offsets) {
    const DenoiserConfig& cfg = p.config;
    if (x_t.shape().size() != 4 || x_t.shape()[1] != cfg.in_channels ||
        x_t.shape()[2] != cfg.image_size || x_t.shape()[3] != cfg.image_size)
        throw Error(ErrorCategory::shape,
                    "predict_eps: input " + shape_str(x_t.shape()) + " does not match config [B," +
                        std::to_string(cfg.in_channels) + "," + std::to_string(cfg.image_size) +
                        "," + std::to_string(cfg.image_size) + "]");
    if (ts.size() != 1 && static_cast<int>(ts.size()) != x_t.shape()[0])
        throw Error(ErrorCategory::shape, "predict_eps: got " + std::to_string(ts.size()) +
                                              " step indices for batch of " +
                                              std::to_string(x_t.shape()[0]));
    if (offsets) {
        auto meta = p.modulatable_meta();
        for (const auto& [id, off] : *offsets) {
            bool known = false;
            for (const auto& m : meta) known = known || m.id == id;
            if (!known)
                throw Error(ErrorCategory::state,
                            "modulation: '" + id + "' is not a modulatable layer");
        }
    }
    std::vector<int> ts_full = ts;
    if (ts.size() == 1 && x_t.shape()[0] > 1) ts_full.assign(x_t.shape()[0], ts[0]);
    Tensor temb = time_embedding_batch(ts_full, cfg.time_embed_dim);

    int g = cfg.norm_groups;
    Tensor h = conv2d(x_t, p.stem.weight, p.stem.bias, 1, 1);
    Tensor s1 = run_block(p.down1, h, temb, g, offsets);
    h = downsample_avg2x(s1);
    Tensor s2 = run_block(p.down2, h, temb, g, offsets);
    h = downsample_avg2x(s2);
    h = run_block(p.mid, h, temb, g, offsets);
    h = upsample_nearest2x(h);
    h = run_block(p.up1, concat_channels(h, s2), temb, g, offsets);
    h = upsample_nearest2x(h);
    h = run_block(p.up2, concat_channels(h, s1), temb, g, offsets);
    return conv2d(h, p.head.weight, p.head.bias, 1, 1);
}

}  // namespace

Tensor predict_eps(const DenoiserParams& params, const Tensor& x_t, const std::vector<int>& ts) {
    return forward(params, x_t, ts, nullptr);
}

Tensor predict_eps(const DenoiserParams& params, const Tensor& x_t, int t) {
    return forward(params, x_t, {t}, nullptr);
}

Tensor modulated_predict_eps(const DenoiserParams& params, const OffsetMap& offsets,
                             const Tensor& x_t, const std::vector<int>& ts) {
    return forward(params, x_t, ts, &offsets);
}

Tensor modulated_predict_eps(const DenoiserParams& params, const OffsetMap& offsets,
                             const Tensor& x_t, int t) {
    return forward(params, x_t, {t}, &offsets);
}

}  // namespace rectdiff
