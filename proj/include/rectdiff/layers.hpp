#pragma once

#include <string>
#include <utility>
#include <vector>

#include "rectdiff/rng.hpp"
#include "rectdiff/tensor.hpp"

namespace rectdiff {

struct Conv2dLayer {
    std::string id;
    Tensor weight;  // [Cout,Cin,kh,kw]
    Tensor bias;    // [Cout]
};

struct LinearLayer {
    std::string id;
    Tensor weight;  // [in,out]
    Tensor bias;    // [out]
};

struct NormAffine {
    std::string id;
    Tensor gamma;
    Tensor beta;
};

Conv2dLayer make_conv(std::string id, int cout, int cin, int k, Rng& rng);
LinearLayer make_linear(std::string id, int in, int out, Rng& rng, bool zero_init = false);
NormAffine make_norm(std::string id, int channels);

Conv2dLayer clone(const Conv2dLayer& l);
LinearLayer clone(const LinearLayer& l);
NormAffine clone(const NormAffine& l);

// Sinusoidal embedding row vector [1,dim]; deterministic, distinct per step.
Tensor time_embedding(int t, int dim);
Tensor time_embedding_batch(const std::vector<int>& ts, int dim);

// Ordered (name, tensor) registry used for optimizers, serialization and
// checksums.
using ParamList = std::vector<std::pair<std::string, Tensor>>;

void collect(ParamList& out, const Conv2dLayer& l);
void collect(ParamList& out, const LinearLayer& l);
void collect(ParamList& out, const NormAffine& l);

std::vector<Tensor> tensors_of(const ParamList& params);
void set_requires_grad(const ParamList& params, bool rg);
// FNV-1a over the raw bit patterns, in registry order.
uint64_t params_checksum(const ParamList& params);

}  // namespace rectdiff
