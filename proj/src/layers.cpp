#include "rectdiff/layers.hpp"

#include <cmath>

namespace rectdiff {

Conv2dLayer make_conv(std::string id, int cout, int cin, int k, Rng& rng) {
    double stddev = std::sqrt(2.0 / (static_cast<double>(cin) * k * k));
    Conv2dLayer l;
    l.id = std::move(id);
    l.weight = Tensor::from_data({cout, cin, k, k},
                                 rng.normal_vector(static_cast<size_t>(cout) * cin * k * k, stddev),
                                 true);
    l.bias = Tensor::zeros({cout}, true);
    return l;
}

LinearLayer make_linear(std::string id, int in, int out, Rng& rng, bool zero_init) {
    LinearLayer l;
    l.id = std::move(id);
    if (zero_init) {
        l.weight = Tensor::zeros({in, out}, true);
    } else {
        double stddev = std::sqrt(2.0 / static_cast<double>(in));
        l.weight = Tensor::from_data({in, out},
                                     rng.normal_vector(static_cast<size_t>(in) * out, stddev), true);
    }
    l.bias = Tensor::zeros({out}, true);
    return l;
}

NormAffine make_norm(std::string id, int channels) {
    NormAffine n;
    n.id = std::move(id);
    n.gamma = Tensor::full({channels}, 1.0, true);
    n.beta = Tensor::zeros({channels}, true);
    return n;
}

namespace {

Tensor clone_tensor(const Tensor& t) {
    return Tensor::from_data(t.shape(), t.value(), t.requires_grad());
}

}  // namespace

Conv2dLayer clone(const Conv2dLayer& l) {
    return {l.id, clone_tensor(l.weight), clone_tensor(l.bias)};
}

LinearLayer clone(const LinearLayer& l) {
    return {l.id, clone_tensor(l.weight), clone_tensor(l.bias)};
}

NormAffine clone(const NormAffine& l) {
    return {l.id, clone_tensor(l.gamma), clone_tensor(l.beta)};
}

Tensor time_embedding(int t, int dim) { return time_embedding_batch({t}, dim); }

Tensor time_embedding_batch(const std::vector<int>& ts, int dim) {
    if (dim < 2 || dim % 2 != 0)
        throw Error(ErrorCategory::config, "time_embedding: dim must be even and >= 2");
    int half = dim / 2;
    std::vector<double> v(ts.size() * static_cast<size_t>(dim));
    for (size_t b = 0; b < ts.size(); ++b) {
        if (ts[b] < 1)
            throw Error(ErrorCategory::state, "time_embedding: step must be >= 1");
        for (int i = 0; i < half; ++i) {
            double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / half);
            double angle = static_cast<double>(ts[b]) * freq;
            v[b * dim + i] = std::sin(angle);
            v[b * dim + half + i] = std::cos(angle);
        }
    }
    return Tensor::from_data({static_cast<int>(ts.size()), dim}, std::move(v));
}

void collect(ParamList& out, const Conv2dLayer& l) {
    out.emplace_back(l.id + ".weight", l.weight);
    out.emplace_back(l.id + ".bias", l.bias);
}

void collect(ParamList& out, const LinearLayer& l) {
    out.emplace_back(l.id + ".weight", l.weight);
    out.emplace_back(l.id + ".bias", l.bias);
}

void collect(ParamList& out, const NormAffine& l) {
    out.emplace_back(l.id + ".gamma", l.gamma);
    out.emplace_back(l.id + ".beta", l.beta);
}

std::vector<Tensor> tensors_of(const ParamList& params) {
    std::vector<Tensor> out;
    out.reserve(params.size());
    for (const auto& [name, t] : params) out.push_back(t);
    return out;
}

void set_requires_grad(const ParamList& params, bool rg) {
    for (const auto& [name, t] : params) {
        Tensor copy = t;
        copy.set_requires_grad(rg);
    }
}

uint64_t params_checksum(const ParamList& params) {
    uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](const void* data, size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 1099511628211ULL;
        }
    };
    for (const auto& [name, t] : params) {
        mix(name.data(), name.size());
        mix(t.value().data(), t.value().size() * sizeof(double));
    }
    return h;
}

}  // namespace rectdiff
