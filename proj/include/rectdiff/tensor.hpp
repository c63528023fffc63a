#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rectdiff/error.hpp"

namespace rectdiff {

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

class Tensor;

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::vector<Tensor> parents;
    // Reads this->grad, accumulates into parents' grads.
    std::function<void(Node&)> backward;

    std::vector<double>& ensure_grad();
};

}  // namespace detail

// Dense n-dimensional double tensor participating in a reverse-mode tape.
// Value-semantic handle over a shared graph node: copies alias the node.
//
// Grad semantics: backward() accumulates (+=) into grads; callers zero
// grads between steps. Repeated backward calls without zeroing accumulate.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double v, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<double> data,
                            bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    int64_t numel() const;
    bool requires_grad() const;
    void set_requires_grad(bool rg);  // leaves only

    const std::vector<double>& value() const;
    // Mutable access for leaf tensors (optimizer updates, in-place init).
    std::vector<double>& leaf_value();

    bool has_grad() const;
    const std::vector<double>& grad() const;  // error if absent
    void zero_grad();

    double item() const;  // numel()==1 only
    double at(std::initializer_list<int> idx) const;

    bool is_leaf() const;

    detail::Node* node() const { return node_.get(); }

    static Tensor wrap(std::shared_ptr<detail::Node> n);

private:
    std::shared_ptr<detail::Node> node_;
};

// ---------------------------------------------------------------------------
// Grad mode

bool grad_enabled();

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

// ---------------------------------------------------------------------------
// Tape

// Reverse-topological record of the graph below a scalar loss. backward()
// visits each recorded node exactly once, in reverse topological order.
class Tape {
public:
    static Tape record(const Tensor& loss);
    // Testing hook: permutes sibling traversal during recording; any valid
    // topological order must produce the same gradients.
    static Tape record_shuffled(const Tensor& loss, uint64_t shuffle_seed);

    void backward();
    size_t size() const { return order_.size(); }

private:
    Tensor loss_;
    std::vector<detail::Node*> order_;  // topological (loss last)
};

// Convenience: record + run in one call.
void backward(const Tensor& loss);

// ---------------------------------------------------------------------------
// Ops. Elementwise binaries accept equal shapes or a scalar (numel==1) on
// either side; anything else is a shape error naming both shapes.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor neg(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }

Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k]x[k,n]

// y = x @ w (+ bias per column); x:[B,in], w:[in,out], bias:[out]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);
Tensor linear(const Tensor& x, const Tensor& w);

// Cross-correlation. x:[B,Cin,H,W], w:[Cout,Cin,kh,kw], bias:[Cout] or
// undefined. kh,kw odd; (H + 2*pad - kh) must divide stride evenly.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias,
              int stride, int pad);

Tensor silu(const Tensor& x);

// Per-(batch,group) normalization to zero mean / unit variance, no affine.
Tensor group_norm(const Tensor& x, int groups, double eps = 1e-5);

// y[b,c,h,w] = x[b,c,h,w] * gamma[c] + beta[c]
Tensor channel_affine(const Tensor& x, const Tensor& gamma, const Tensor& beta);

// bias shape [C] (shared) or [B,C] (per batch item)
Tensor add_channel_bias(const Tensor& x, const Tensor& bias);

Tensor upsample_nearest2x(const Tensor& x);
Tensor downsample_avg2x(const Tensor& x);
Tensor concat_channels(const Tensor& a, const Tensor& b);

Tensor sum_all(const Tensor& x);   // -> scalar (rank 0)
Tensor mean_all(const Tensor& x);  // -> scalar

Tensor abs(const Tensor& x);   // subgradient 0 at 0
Tensor sqrt(const Tensor& x);  // requires strictly positive input

Tensor reshape(const Tensor& x, Shape shape);
Tensor detach(const Tensor& x);

// [s0, s1, ...] from scalar tensors -> rank-1 tensor of length N
Tensor stack_scalars(const std::vector<Tensor>& scalars);

// Broadcast product of separable kernel factors, emitted in conv layout:
// fin:[kh,kw,Cin,1], fout:[kh,kw,1,Cout] -> [Cout,Cin,kh,kw]
Tensor separable_kernel(const Tensor& fin, const Tensor& fout);

// ---------------------------------------------------------------------------
// Plain value utilities (no tape participation)

Tensor batch_item(const Tensor& x, int b);              // [B,...] -> [1,...]
Tensor stack_batch(const std::vector<Tensor>& items);   // inverse of above
double max_abs_diff(const Tensor& a, const Tensor& b);
bool bit_equal(const Tensor& a, const Tensor& b);

}  // namespace rectdiff
