#include "rectdiff/rectifier.hpp"

#include <cstdio>

#include "rectdiff/container.hpp"

namespace rectdiff {

void RectifierConfig::validate() const {
    if (encoder_widths.empty())
        throw Error(ErrorCategory::config, "rectifier: encoder_widths must be nonempty");
    int span = 1 << encoder_widths.size();
    if (image_size % span != 0 || image_size / span < 1)
        throw Error(ErrorCategory::config,
                    "rectifier: encoder with " + std::to_string(encoder_widths.size()) +
                        " halvings does not fit image size " + std::to_string(image_size));
    if (time_embed_dim < 2 || time_embed_dim % 2 != 0)
        throw Error(ErrorCategory::config, "rectifier: time_embed_dim must be even");
    if (subnet_hidden < 1)
        throw Error(ErrorCategory::config, "rectifier: subnet_hidden must be >= 1");
}

RectifierConfig tiny_rectifier_config() {
    RectifierConfig c;
    c.image_size = 8;
    c.encoder_widths = {4, 8, 16};
    c.time_embed_dim = 8;
    c.subnet_hidden = 16;
    return c;
}

RectifierParams build_rectifier(const std::vector<ConvLayerMeta>& denoiser_meta,
                                const RectifierConfig& config, uint64_t seed) {
    config.validate();
    if (denoiser_meta.empty())
        throw Error(ErrorCategory::config, "rectifier: no modulatable layers given");
    Rng rng(mix_seed(seed, 0xec));
    RectifierParams r;
    r.config = config;
    int cin = config.in_channels;
    for (size_t i = 0; i < config.encoder_widths.size(); ++i) {
        int cout = config.encoder_widths[i];
        r.encoder.push_back(make_conv("encoder" + std::to_string(i), cout, cin, 3, rng));
        cin = cout;
    }
    r.time_mlp = make_linear("time_mlp", config.time_embed_dim, config.time_embed_dim, rng);
    for (const auto& m : denoiser_meta) {
        if (!m.modulatable)
            throw Error(ErrorCategory::config,
                        "rectifier: layer '" + m.id + "' is not modulatable");
        RectifierSubnet sn;
        sn.target_layer = m.id;
        sn.cout = m.cout;
        sn.cin = m.cin;
        sn.kh = m.kh;
        sn.kw = m.kw;
        std::string base = "subnet." + m.id;
        sn.from_feature = make_linear(base + ".from_feature", config.feature_dim(),
                                      config.subnet_hidden, rng);
        sn.from_time = make_linear(base + ".from_time", config.time_embed_dim,
                                   config.subnet_hidden, rng);
        sn.head_in = make_linear(base + ".head_in", config.subnet_hidden, m.kh * m.kw * m.cin,
                                 rng, /*zero_init=*/true);
        sn.head_out = make_linear(base + ".head_out", config.subnet_hidden, m.kh * m.kw * m.cout,
                                  rng, /*zero_init=*/true);
        r.subnets.push_back(std::move(sn));
    }
    return r;
}

ParamList RectifierParams::registry() const {
    ParamList out;
    for (const auto& c : encoder) collect(out, c);
    collect(out, time_mlp);
    for (const auto& sn : subnets) {
        collect(out, sn.from_feature);
        collect(out, sn.from_time);
        collect(out, sn.head_in);
        collect(out, sn.head_out);
    }
    return out;
}

std::vector<Tensor> RectifierParams::trainable() const { return tensors_of(registry()); }

RectifierParams RectifierParams::deep_copy() const {
    RectifierParams out;
    out.config = config;
    for (const auto& c : encoder) out.encoder.push_back(clone(c));
    out.time_mlp = clone(time_mlp);
    for (const auto& sn : subnets) {
        RectifierSubnet c;
        c.target_layer = sn.target_layer;
        c.cout = sn.cout;
        c.cin = sn.cin;
        c.kh = sn.kh;
        c.kw = sn.kw;
        c.from_feature = clone(sn.from_feature);
        c.from_time = clone(sn.from_time);
        c.head_in = clone(sn.head_in);
        c.head_out = clone(sn.head_out);
        out.subnets.push_back(std::move(c));
    }
    return out;
}

int64_t RectifierParams::parameter_count() const {
    int64_t n = 0;
    for (const auto& [name, t] : registry()) n += t.numel();
    return n;
}

int64_t RectifierParams::generated_parameter_count() const {
    int64_t n = 0;
    for (const auto& sn : subnets)
        n += static_cast<int64_t>(sn.kh) * sn.kw * (sn.cin + sn.cout);
    return n;
}

uint64_t RectifierParams::checksum() const { return params_checksum(registry()); }

void RectifierParams::set_trainable(bool rg) const { set_requires_grad(registry(), rg); }

void RectifierParams::save(const std::string& path) const {
    Container c("rectifier");
    c.set_meta("image_size", std::to_string(config.image_size));
    c.set_meta("in_channels", std::to_string(config.in_channels));
    c.set_meta("time_embed_dim", std::to_string(config.time_embed_dim));
    c.set_meta("subnet_hidden", std::to_string(config.subnet_hidden));
    std::string widths;
    for (size_t i = 0; i < config.encoder_widths.size(); ++i)
        widths += (i ? "," : "") + std::to_string(config.encoder_widths[i]);
    c.set_meta("encoder_widths", widths);
    c.set_meta("subnet_count", std::to_string(subnets.size()));
    for (size_t i = 0; i < subnets.size(); ++i) {
        const auto& sn = subnets[i];
        std::string base = "subnet." + std::to_string(i);
        c.set_meta(base + ".target", sn.target_layer);
        c.set_meta(base + ".kernel", std::to_string(sn.cout) + "," + std::to_string(sn.cin) + "," +
                                         std::to_string(sn.kh) + "," + std::to_string(sn.kw));
    }
    for (const auto& [name, t] : registry()) c.add_tensor(name, "param", t);
    c.save(path);
}

RectifierParams RectifierParams::load(const std::string& path) {
    Container c = Container::load(path, "rectifier");
    RectifierConfig cfg;
    cfg.image_size = std::stoi(c.meta_at("image_size"));
    cfg.in_channels = std::stoi(c.meta_at("in_channels"));
    cfg.time_embed_dim = std::stoi(c.meta_at("time_embed_dim"));
    cfg.subnet_hidden = std::stoi(c.meta_at("subnet_hidden"));
    cfg.encoder_widths.clear();
    std::string widths = c.meta_at("encoder_widths");
    size_t pos = 0;
    while (pos < widths.size()) {
        size_t comma = widths.find(',', pos);
        if (comma == std::string::npos) comma = widths.size();
        cfg.encoder_widths.push_back(std::stoi(widths.substr(pos, comma - pos)));
        pos = comma + 1;
    }
    size_t nsub = std::stoull(c.meta_at("subnet_count"));
    std::vector<ConvLayerMeta> meta;
    for (size_t i = 0; i < nsub; ++i) {
        std::string base = "subnet." + std::to_string(i);
        ConvLayerMeta m;
        m.id = c.meta_at(base + ".target");
        m.kind = BlockKind::middle;
        m.modulatable = true;
        std::string k = c.meta_at(base + ".kernel");
        if (std::sscanf(k.c_str(), "%d,%d,%d,%d", &m.cout, &m.cin, &m.kh, &m.kw) != 4)
            throw Error(ErrorCategory::io, "rectifier: bad kernel metadata '" + k + "'");
        meta.push_back(std::move(m));
    }
    RectifierParams r = build_rectifier(meta, cfg, 0);
    for (const auto& [name, t] : r.registry()) {
        Tensor stored = c.tensor(name);
        if (stored.shape() != t.shape())
            throw Error(ErrorCategory::io, "rectifier: entry '" + name + "' has shape " +
                                               shape_str(stored.shape()) + ", expected " +
                                               shape_str(t.shape()));
        Tensor dst = t;
        dst.leaf_value() = stored.value();
    }
    return r;
}

namespace {

Tensor as_4d_image(const Tensor& img, int image_size, const char* what) {
    const Shape& s = img.shape();
    Shape target{1, 1, image_size, image_size};
    if (s == Shape{1, image_size, image_size} || s == target ||
        s == Shape{image_size, image_size}) {
        return reshape(img, target);
    }
    throw Error(ErrorCategory::shape, std::string("predict_offsets: ") + what + " has shape " +
                                          shape_str(s) + ", expected " + shape_str(target));
}

}  // namespace

OffsetMap predict_offsets(const RectifierParams& r, const Tensor& x0, const Tensor& x0_est,
                          int t) {
    const RectifierConfig& cfg = r.config;
    Tensor a = as_4d_image(x0, cfg.image_size, "x0");
    Tensor b = as_4d_image(x0_est, cfg.image_size, "x0 estimate");
    Tensor h = concat_channels(a, b);

    for (const auto& conv : r.encoder) {
        h = silu(conv2d(h, conv.weight, conv.bias, 1, 1));
        h = downsample_avg2x(h);
    }
    // spatial extent collapses to 1x1; global average pool is the identity
    int spatial = cfg.image_size >> r.encoder.size();
    Tensor feat = reshape(h, {1, cfg.feature_dim() * spatial * spatial});
    if (spatial != 1)
        throw Error(ErrorCategory::state, "predict_offsets: encoder did not reduce to 1x1");

    Tensor temb = time_embedding(t, cfg.time_embed_dim);
    Tensor tfeat = silu(linear(temb, r.time_mlp.weight, r.time_mlp.bias));

    OffsetMap out;
    for (const auto& sn : r.subnets) {
        Tensor hidden = silu(add(linear(feat, sn.from_feature.weight, sn.from_feature.bias),
                                 linear(tfeat, sn.from_time.weight)));
        Tensor fin = reshape(linear(hidden, sn.head_in.weight, sn.head_in.bias),
                             {sn.kh, sn.kw, sn.cin, 1});
        Tensor fout = reshape(linear(hidden, sn.head_out.weight, sn.head_out.bias),
                              {sn.kh, sn.kw, 1, sn.cout});
        out[sn.target_layer] = SeparableOffset{sn.target_layer, fin, fout};
    }
    return out;
}

}  // namespace rectdiff
