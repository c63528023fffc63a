#pragma once

#include <map>
#include <string>

#include "rectdiff/tensor.hpp"

namespace rectdiff {

// Rank-1 factorization of one layer's multiplicative weight offset. The
// full offset is the broadcast product of the factors; generated parameter
// count is kh*kw*(Cin + Cout) instead of kh*kw*Cin*Cout.
struct SeparableOffset {
    std::string layer_id;
    Tensor factor_in;   // [kh,kw,Cin,1]
    Tensor factor_out;  // [kh,kw,1,Cout]
};

// Broadcast product reshaped to the conv kernel layout [Cout,Cin,kh,kw].
inline Tensor materialize_offset(const SeparableOffset& o) {
    return separable_kernel(o.factor_in, o.factor_out);
}

using OffsetMap = std::map<std::string, SeparableOffset>;

}  // namespace rectdiff
