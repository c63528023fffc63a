#include "rectdiff/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_set>

namespace rectdiff {

int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) os << ",";
        os << s[i];
    }
    os << "]";
    return os.str();
}

namespace detail {

std::vector<double>& Node::ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
}

}  // namespace detail

namespace {

thread_local bool g_grad_enabled = true;

[[noreturn]] void shape_fail(const std::string& op, const Shape& a, const Shape& b) {
    throw Error(ErrorCategory::shape,
                op + ": incompatible shapes " + shape_str(a) + " vs " + shape_str(b));
}

void check_defined(const Tensor& t, const char* op) {
    if (!t.defined())
        throw Error(ErrorCategory::state, std::string(op) + ": undefined tensor operand");
}

using detail::Node;

Tensor make_node(Shape shape, std::vector<double> value, std::vector<Tensor> parents,
                 std::function<void(Node&)> backward) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    if (static_cast<int64_t>(n->value.size()) != shape_numel(n->shape))
        throw Error(ErrorCategory::state, "make_node: value size does not match shape");
    bool rg = false;
    if (g_grad_enabled) {
        for (const auto& p : parents) rg = rg || p.requires_grad();
    }
    n->requires_grad = rg;
    if (rg) {
        n->parents = std::move(parents);
        n->backward = std::move(backward);
    }
    return Tensor::wrap(std::move(n));
}

// Accumulate src into parent's grad if it participates.
void accum(const Tensor& parent, const double* g, size_t n) {
    Node* p = parent.node();
    if (!p->requires_grad) return;
    auto& pg = p->ensure_grad();
    for (size_t i = 0; i < n; ++i) pg[i] += g[i];
}

// ---------------------------------------------------------------------------
// gemm kernels, row-major. acc=true accumulates into C.

void gemm_nn(const double* a, const double* b, double* c, int m, int k, int n, bool acc) {
    if (!acc) std::fill(c, c + static_cast<size_t>(m) * n, 0.0);
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<size_t>(i) * k;
        double* crow = c + static_cast<size_t>(i) * n;
        for (int kk = 0; kk < k; ++kk) {
            double av = arow[kk];
            if (av == 0.0) continue;
            const double* brow = b + static_cast<size_t>(kk) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[m,n] (+)= A[m,k] * B[n,k]^T
void gemm_nt(const double* a, const double* b, double* c, int m, int k, int n, bool acc) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<size_t>(i) * k;
        double* crow = c + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const double* brow = b + static_cast<size_t>(j) * k;
            double s = 0.0;
            for (int kk = 0; kk < k; ++kk) s += arow[kk] * brow[kk];
            crow[j] = acc ? crow[j] + s : s;
        }
    }
}

// C[m,n] (+)= A[k,m]^T * B[k,n]
void gemm_tn(const double* a, const double* b, double* c, int m, int k, int n, bool acc) {
    if (!acc) std::fill(c, c + static_cast<size_t>(m) * n, 0.0);
    for (int kk = 0; kk < k; ++kk) {
        const double* arow = a + static_cast<size_t>(kk) * m;
        const double* brow = b + static_cast<size_t>(kk) * n;
        for (int i = 0; i < m; ++i) {
            double av = arow[i];
            if (av == 0.0) continue;
            double* crow = c + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::wrap(std::shared_ptr<detail::Node> n) {
    Tensor t;
    t.node_ = std::move(n);
    return t;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return from_data(shape, std::vector<double>(shape_numel(shape), 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
    return from_data(shape, std::vector<double>(shape_numel(shape), v), requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
    if (static_cast<int64_t>(data.size()) != shape_numel(shape))
        throw Error(ErrorCategory::shape,
                    "from_data: " + std::to_string(data.size()) + " values for shape " +
                        shape_str(shape));
    for (int d : shape)
        if (d <= 0)
            throw Error(ErrorCategory::shape, "from_data: nonpositive extent in " + shape_str(shape));
    auto n = std::make_shared<detail::Node>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->requires_grad = requires_grad;
    return wrap(std::move(n));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    return from_data({}, {v}, requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }
int64_t Tensor::numel() const { return static_cast<int64_t>(node_->value.size()); }
bool Tensor::requires_grad() const { return node_->requires_grad; }

void Tensor::set_requires_grad(bool rg) {
    if (!is_leaf())
        throw Error(ErrorCategory::state, "set_requires_grad: only leaf tensors may be toggled");
    node_->requires_grad = rg;
}

const std::vector<double>& Tensor::value() const { return node_->value; }

std::vector<double>& Tensor::leaf_value() {
    if (!is_leaf())
        throw Error(ErrorCategory::state, "leaf_value: tensor is not a leaf");
    return node_->value;
}

bool Tensor::has_grad() const { return !node_->grad.empty(); }

const std::vector<double>& Tensor::grad() const {
    if (!has_grad())
        throw Error(ErrorCategory::state, "grad: no gradient has been accumulated");
    return node_->grad;
}

void Tensor::zero_grad() { node_->grad.clear(); }

double Tensor::item() const {
    if (numel() != 1)
        throw Error(ErrorCategory::shape, "item: tensor has " + std::to_string(numel()) + " elements");
    return node_->value[0];
}

double Tensor::at(std::initializer_list<int> idx) const {
    const Shape& s = shape();
    if (idx.size() != s.size())
        throw Error(ErrorCategory::shape, "at: rank mismatch");
    int64_t off = 0;
    size_t d = 0;
    for (int i : idx) {
        off = off * s[d] + i;
        ++d;
    }
    return node_->value[off];
}

bool Tensor::is_leaf() const { return node_->parents.empty(); }

// ---------------------------------------------------------------------------
// Grad mode

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

// ---------------------------------------------------------------------------
// Tape

namespace {

struct TopoBuilder {
    std::vector<Node*> order;
    std::unordered_set<const Node*> seen;
    std::optional<uint64_t> shuffle_seed;

    void run(Node* root) {
        std::mt19937_64 rng(shuffle_seed.value_or(0));
        struct Frame {
            Node* n;
            std::vector<Node*> parents;
            size_t next = 0;
        };
        std::vector<Frame> stack;
        auto make_frame = [&](Node* n) {
            Frame f;
            f.n = n;
            f.parents.reserve(n->parents.size());
            for (const auto& p : n->parents) f.parents.push_back(p.node());
            if (shuffle_seed) std::shuffle(f.parents.begin(), f.parents.end(), rng);
            return f;
        };
        seen.insert(root);
        stack.push_back(make_frame(root));
        while (!stack.empty()) {
            Frame& f = stack.back();
            if (f.next < f.parents.size()) {
                Node* p = f.parents[f.next++];
                // only interior differentiable nodes go on the tape; leaves
                // just receive accumulations
                if (p->backward && !seen.count(p)) {
                    seen.insert(p);
                    stack.push_back(make_frame(p));
                }
            } else {
                order.push_back(f.n);
                stack.pop_back();
            }
        }
    }
};

}  // namespace

Tape Tape::record(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1)
        throw Error(ErrorCategory::shape, "backward: loss must be a defined scalar tensor");
    Tape t;
    t.loss_ = loss;
    if (!loss.requires_grad()) return t;
    TopoBuilder b;
    b.run(loss.node());
    t.order_ = std::move(b.order);
    return t;
}

Tape Tape::record_shuffled(const Tensor& loss, uint64_t shuffle_seed) {
    if (!loss.defined() || loss.numel() != 1)
        throw Error(ErrorCategory::shape, "backward: loss must be a defined scalar tensor");
    Tape t;
    t.loss_ = loss;
    if (!loss.requires_grad()) return t;
    TopoBuilder b;
    b.shuffle_seed = shuffle_seed;
    b.run(loss.node());
    t.order_ = std::move(b.order);
    return t;
}

void Tape::backward() {
    if (order_.empty()) return;
    Node* root = loss_.node();
    root->ensure_grad()[0] += 1.0;
    // order_ is topological with the loss last; replay in reverse. Interior
    // grads are transient scratch: they are cleared once consumed, so that
    // repeated backward calls cleanly accumulate into leaf grads.
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
        Node* n = *it;
        if (n->backward) {
            if (!n->grad.empty()) n->backward(*n);
            n->grad.clear();
        }
    }
}

void backward(const Tensor& loss) { Tape::record(loss).backward(); }

// ---------------------------------------------------------------------------
// Elementwise binaries

namespace {

enum class Bcast { equal, a_scalar, b_scalar };

Bcast classify(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() == b.shape()) return Bcast::equal;
    if (a.numel() == 1) return Bcast::a_scalar;
    if (b.numel() == 1) return Bcast::b_scalar;
    shape_fail(op, a.shape(), b.shape());
}

// dispatch helper for binary ops: fv(x, y) value, and gradient factors.
template <class FwdFn>
Tensor binary_forward(const char* op, const Tensor& a, const Tensor& b, FwdFn&& fv,
                      std::function<void(Node&, Bcast)> backward_with_mode) {
    check_defined(a, op);
    check_defined(b, op);
    Bcast m = classify(op, a, b);
    const auto& av = a.value();
    const auto& bv = b.value();
    size_t n = std::max(av.size(), bv.size());
    std::vector<double> out(n);
    switch (m) {
        case Bcast::equal:
            for (size_t i = 0; i < n; ++i) out[i] = fv(av[i], bv[i]);
            break;
        case Bcast::a_scalar:
            for (size_t i = 0; i < n; ++i) out[i] = fv(av[0], bv[i]);
            break;
        case Bcast::b_scalar:
            for (size_t i = 0; i < n; ++i) out[i] = fv(av[i], bv[0]);
            break;
    }
    Shape shape = (m == Bcast::a_scalar) ? b.shape() : a.shape();
    auto bw = [m, backward_with_mode](Node& self) { backward_with_mode(self, m); };
    return make_node(std::move(shape), std::move(out), {a, b}, std::move(bw));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_forward(
        "add", a, b, [](double x, double y) { return x + y; },
        [](Node& self, Bcast m) {
            const auto& g = self.grad;
            const Tensor& pa = self.parents[0];
            const Tensor& pb = self.parents[1];
            auto reduce_into = [&](const Tensor& p) {
                if (!p.node()->requires_grad) return;
                double s = std::accumulate(g.begin(), g.end(), 0.0);
                p.node()->ensure_grad()[0] += s;
            };
            if (m == Bcast::a_scalar) {
                reduce_into(pa);
                accum(pb, g.data(), g.size());
            } else if (m == Bcast::b_scalar) {
                accum(pa, g.data(), g.size());
                reduce_into(pb);
            } else {
                accum(pa, g.data(), g.size());
                accum(pb, g.data(), g.size());
            }
        });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_forward(
        "sub", a, b, [](double x, double y) { return x - y; },
        [](Node& self, Bcast m) {
            const auto& g = self.grad;
            const Tensor& pa = self.parents[0];
            const Tensor& pb = self.parents[1];
            if (pa.node()->requires_grad) {
                if (m == Bcast::a_scalar) {
                    double s = std::accumulate(g.begin(), g.end(), 0.0);
                    pa.node()->ensure_grad()[0] += s;
                } else {
                    accum(pa, g.data(), g.size());
                }
            }
            if (pb.node()->requires_grad) {
                auto& pg = pb.node()->ensure_grad();
                if (m == Bcast::b_scalar) {
                    double s = std::accumulate(g.begin(), g.end(), 0.0);
                    pg[0] -= s;
                } else {
                    for (size_t i = 0; i < g.size(); ++i) pg[i] -= g[i];
                }
            }
        });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_forward(
        "mul", a, b, [](double x, double y) { return x * y; },
        [](Node& self, Bcast m) {
            const auto& g = self.grad;
            const Tensor& pa = self.parents[0];
            const Tensor& pb = self.parents[1];
            const auto& av = pa.value();
            const auto& bv = pb.value();
            if (pa.node()->requires_grad) {
                auto& pg = pa.node()->ensure_grad();
                if (m == Bcast::a_scalar) {
                    double s = 0.0;
                    for (size_t i = 0; i < g.size(); ++i) s += g[i] * bv[i];
                    pg[0] += s;
                } else if (m == Bcast::b_scalar) {
                    for (size_t i = 0; i < g.size(); ++i) pg[i] += g[i] * bv[0];
                } else {
                    for (size_t i = 0; i < g.size(); ++i) pg[i] += g[i] * bv[i];
                }
            }
            if (pb.node()->requires_grad) {
                auto& pg = pb.node()->ensure_grad();
                if (m == Bcast::b_scalar) {
                    double s = 0.0;
                    for (size_t i = 0; i < g.size(); ++i) s += g[i] * av[i];
                    pg[0] += s;
                } else if (m == Bcast::a_scalar) {
                    for (size_t i = 0; i < g.size(); ++i) pg[i] += g[i] * av[0];
                } else {
                    for (size_t i = 0; i < g.size(); ++i) pg[i] += g[i] * av[i];
                }
            }
        });
}

Tensor div(const Tensor& a, const Tensor& b) {
    return binary_forward(
        "div", a, b, [](double x, double y) { return x / y; },
        [](Node& self, Bcast m) {
            const auto& g = self.grad;
            const auto& y = self.value;  // y = a/b
            const Tensor& pa = self.parents[0];
            const Tensor& pb = self.parents[1];
            const auto& bv = pb.value();
            if (pa.node()->requires_grad) {
                auto& pg = pa.node()->ensure_grad();
                if (m == Bcast::a_scalar) {
                    double s = 0.0;
                    for (size_t i = 0; i < g.size(); ++i) s += g[i] / bv[i];
                    pg[0] += s;
                } else if (m == Bcast::b_scalar) {
                    for (size_t i = 0; i < g.size(); ++i) pg[i] += g[i] / bv[0];
                } else {
                    for (size_t i = 0; i < g.size(); ++i) pg[i] += g[i] / bv[i];
                }
            }
            if (pb.node()->requires_grad) {
                auto& pg = pb.node()->ensure_grad();
                if (m == Bcast::b_scalar) {
                    double s = 0.0;
                    for (size_t i = 0; i < g.size(); ++i) s += -g[i] * y[i] / bv[0];
                    pg[0] += s;
                } else if (m == Bcast::a_scalar) {
                    for (size_t i = 0; i < g.size(); ++i) pg[i] += -g[i] * y[i] / bv[i];
                } else {
                    for (size_t i = 0; i < g.size(); ++i) pg[i] += -g[i] * y[i] / bv[i];
                }
            }
        });
}

Tensor scale(const Tensor& a, double c) {
    check_defined(a, "scale");
    std::vector<double> out(a.value());
    for (auto& v : out) v *= c;
    return make_node(a.shape(), std::move(out), {a}, [c](Node& self) {
        const Tensor& p = self.parents[0];
        if (!p.node()->requires_grad) return;
        auto& pg = p.node()->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) pg[i] += c * self.grad[i];
    });
}

Tensor add_scalar(const Tensor& a, double c) {
    check_defined(a, "add_scalar");
    std::vector<double> out(a.value());
    for (auto& v : out) v += c;
    return make_node(a.shape(), std::move(out), {a}, [](Node& self) {
        accum(self.parents[0], self.grad.data(), self.grad.size());
    });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

// ---------------------------------------------------------------------------
// matmul / linear

Tensor matmul(const Tensor& a, const Tensor& b) {
    check_defined(a, "matmul");
    check_defined(b, "matmul");
    if (a.shape().size() != 2 || b.shape().size() != 2)
        shape_fail("matmul: expects rank-2 operands", a.shape(), b.shape());
    int m = a.shape()[0], k = a.shape()[1];
    int k2 = b.shape()[0], n = b.shape()[1];
    if (k != k2) shape_fail("matmul: inner extents differ", a.shape(), b.shape());
    std::vector<double> out(static_cast<size_t>(m) * n);
    gemm_nn(a.value().data(), b.value().data(), out.data(), m, k, n, false);
    return make_node({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
        const Tensor& pa = self.parents[0];
        const Tensor& pb = self.parents[1];
        const double* g = self.grad.data();
        if (pa.node()->requires_grad) {
            auto& pg = pa.node()->ensure_grad();
            gemm_nt(g, pb.value().data(), pg.data(), m, n, k, true);  // dA = dY * B^T
        }
        if (pb.node()->requires_grad) {
            auto& pg = pb.node()->ensure_grad();
            gemm_tn(pa.value().data(), g, pg.data(), k, m, n, true);  // dB = A^T * dY
        }
    });
}

namespace {

Tensor linear_impl(const Tensor& x, const Tensor& w, const Tensor* bias) {
    check_defined(x, "linear");
    check_defined(w, "linear");
    if (x.shape().size() != 2 || w.shape().size() != 2)
        shape_fail("linear: expects rank-2 x and w", x.shape(), w.shape());
    int B = x.shape()[0], in = x.shape()[1];
    int in2 = w.shape()[0], out = w.shape()[1];
    if (in != in2) shape_fail("linear: inner extents differ", x.shape(), w.shape());
    if (bias && (bias->shape().size() != 1 || bias->shape()[0] != out))
        shape_fail("linear: bias shape", bias->shape(), {out});
    std::vector<double> y(static_cast<size_t>(B) * out);
    gemm_nn(x.value().data(), w.value().data(), y.data(), B, in, out, false);
    if (bias) {
        const auto& bv = bias->value();
        for (int i = 0; i < B; ++i)
            for (int j = 0; j < out; ++j) y[static_cast<size_t>(i) * out + j] += bv[j];
    }
    std::vector<Tensor> parents = {x, w};
    if (bias) parents.push_back(*bias);
    return make_node({B, out}, std::move(y), std::move(parents),
                     [B, in, out, has_bias = bias != nullptr](Node& self) {
                         const Tensor& px = self.parents[0];
                         const Tensor& pw = self.parents[1];
                         const double* g = self.grad.data();
                         if (px.node()->requires_grad) {
                             auto& pg = px.node()->ensure_grad();
                             gemm_nt(g, pw.value().data(), pg.data(), B, out, in, true);
                         }
                         if (pw.node()->requires_grad) {
                             auto& pg = pw.node()->ensure_grad();
                             gemm_tn(px.value().data(), g, pg.data(), in, B, out, true);
                         }
                         if (has_bias && self.parents[2].node()->requires_grad) {
                             auto& pg = self.parents[2].node()->ensure_grad();
                             for (int i = 0; i < B; ++i)
                                 for (int j = 0; j < out; ++j)
                                     pg[j] += g[static_cast<size_t>(i) * out + j];
                         }
                     });
}

}  // namespace

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
    return linear_impl(x, w, &bias);
}

Tensor linear(const Tensor& x, const Tensor& w) { return linear_impl(x, w, nullptr); }

// ---------------------------------------------------------------------------
// conv2d

namespace {

struct ConvDims {
    int B, Cin, H, W, Cout, kh, kw, stride, pad, Ho, Wo;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, int stride, int pad) {
    if (x.shape().size() != 4 || w.shape().size() != 4)
        shape_fail("conv2d: expects rank-4 x and w", x.shape(), w.shape());
    ConvDims d;
    d.B = x.shape()[0];
    d.Cin = x.shape()[1];
    d.H = x.shape()[2];
    d.W = x.shape()[3];
    d.Cout = w.shape()[0];
    d.kh = w.shape()[2];
    d.kw = w.shape()[3];
    d.stride = stride;
    d.pad = pad;
    if (w.shape()[1] != d.Cin)
        shape_fail("conv2d: channel mismatch", x.shape(), w.shape());
    if (d.kh % 2 == 0 || d.kw % 2 == 0)
        throw Error(ErrorCategory::shape, "conv2d: kernel extents must be odd, got " +
                                              shape_str(w.shape()));
    if (stride < 1) throw Error(ErrorCategory::shape, "conv2d: stride must be >= 1");
    if (pad < 0) throw Error(ErrorCategory::shape, "conv2d: pad must be >= 0");
    int hn = d.H + 2 * pad - d.kh;
    int wn = d.W + 2 * pad - d.kw;
    if (hn < 0 || wn < 0 || hn % stride != 0 || wn % stride != 0)
        throw Error(ErrorCategory::shape,
                    "conv2d: input " + shape_str(x.shape()) + " with kernel " +
                        shape_str(w.shape()) + " stride " + std::to_string(stride) + " pad " +
                        std::to_string(pad) + " does not yield integer output extents");
    d.Ho = hn / stride + 1;
    d.Wo = wn / stride + 1;
    return d;
}

// col[Cin*kh*kw][Ho*Wo] for one batch item
void im2col(const double* x, const ConvDims& d, double* col) {
    const int K = d.Cin * d.kh * d.kw;
    const int HW = d.Ho * d.Wo;
    for (int c = 0; c < d.Cin; ++c) {
        for (int ki = 0; ki < d.kh; ++ki) {
            for (int kj = 0; kj < d.kw; ++kj) {
                double* crow = col + (static_cast<size_t>(c) * d.kh * d.kw +
                                      static_cast<size_t>(ki) * d.kw + kj) *
                                         HW;
                for (int oi = 0; oi < d.Ho; ++oi) {
                    int ii = oi * d.stride + ki - d.pad;
                    if (ii < 0 || ii >= d.H) {
                        std::fill(crow + static_cast<size_t>(oi) * d.Wo,
                                  crow + static_cast<size_t>(oi + 1) * d.Wo, 0.0);
                        continue;
                    }
                    const double* xrow =
                        x + (static_cast<size_t>(c) * d.H + ii) * d.W;
                    for (int oj = 0; oj < d.Wo; ++oj) {
                        int jj = oj * d.stride + kj - d.pad;
                        crow[static_cast<size_t>(oi) * d.Wo + oj] =
                            (jj >= 0 && jj < d.W) ? xrow[jj] : 0.0;
                    }
                }
            }
        }
    }
    (void)K;
}

void col2im_accum(const double* col, const ConvDims& d, double* dx) {
    const int HW = d.Ho * d.Wo;
    for (int c = 0; c < d.Cin; ++c) {
        for (int ki = 0; ki < d.kh; ++ki) {
            for (int kj = 0; kj < d.kw; ++kj) {
                const double* crow = col + (static_cast<size_t>(c) * d.kh * d.kw +
                                            static_cast<size_t>(ki) * d.kw + kj) *
                                               HW;
                for (int oi = 0; oi < d.Ho; ++oi) {
                    int ii = oi * d.stride + ki - d.pad;
                    if (ii < 0 || ii >= d.H) continue;
                    double* xrow = dx + (static_cast<size_t>(c) * d.H + ii) * d.W;
                    for (int oj = 0; oj < d.Wo; ++oj) {
                        int jj = oj * d.stride + kj - d.pad;
                        if (jj >= 0 && jj < d.W)
                            xrow[jj] += crow[static_cast<size_t>(oi) * d.Wo + oj];
                    }
                }
            }
        }
    }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad) {
    check_defined(x, "conv2d");
    check_defined(w, "conv2d");
    ConvDims d = conv_dims(x, w, stride, pad);
    const bool has_bias = bias.defined();
    if (has_bias && (bias.shape().size() != 1 || bias.shape()[0] != d.Cout))
        shape_fail("conv2d: bias shape", bias.shape(), {d.Cout});

    const int K = d.Cin * d.kh * d.kw;
    const int HW = d.Ho * d.Wo;
    std::vector<double> col(static_cast<size_t>(K) * HW);
    std::vector<double> y(static_cast<size_t>(d.B) * d.Cout * HW);
    const size_t x_item = static_cast<size_t>(d.Cin) * d.H * d.W;
    const size_t y_item = static_cast<size_t>(d.Cout) * HW;
    for (int b = 0; b < d.B; ++b) {
        im2col(x.value().data() + b * x_item, d, col.data());
        gemm_nn(w.value().data(), col.data(), y.data() + b * y_item, d.Cout, K, HW, false);
        if (has_bias) {
            const auto& bv = bias.value();
            double* yb = y.data() + b * y_item;
            for (int co = 0; co < d.Cout; ++co) {
                double bval = bv[co];
                for (int i = 0; i < HW; ++i) yb[static_cast<size_t>(co) * HW + i] += bval;
            }
        }
    }
    std::vector<Tensor> parents = {x, w};
    if (has_bias) parents.push_back(bias);
    return make_node({d.B, d.Cout, d.Ho, d.Wo}, std::move(y), std::move(parents),
                     [d, has_bias](Node& self) {
                         const Tensor& px = self.parents[0];
                         const Tensor& pw = self.parents[1];
                         const int K = d.Cin * d.kh * d.kw;
                         const int HW = d.Ho * d.Wo;
                         const size_t x_item = static_cast<size_t>(d.Cin) * d.H * d.W;
                         const size_t y_item = static_cast<size_t>(d.Cout) * HW;
                         const bool need_x = px.node()->requires_grad;
                         const bool need_w = pw.node()->requires_grad;
                         std::vector<double> col(static_cast<size_t>(K) * HW);
                         std::vector<double> dcol(need_x ? col.size() : 0);
                         for (int b = 0; b < d.B; ++b) {
                             const double* g = self.grad.data() + b * y_item;
                             if (need_w) {
                                 im2col(px.value().data() + b * x_item, d, col.data());
                                 auto& wg = pw.node()->ensure_grad();
                                 // dW += dY * col^T
                                 gemm_nt(g, col.data(), wg.data(), d.Cout, HW, K, true);
                             }
                             if (need_x) {
                                 // dcol = W^T * dY ; dx += col2im(dcol)
                                 gemm_tn(pw.value().data(), g, dcol.data(), K, d.Cout, HW, false);
                                 auto& xg = px.node()->ensure_grad();
                                 col2im_accum(dcol.data(), d, xg.data() + b * x_item);
                             }
                         }
                         if (has_bias && self.parents[2].node()->requires_grad) {
                             auto& bg = self.parents[2].node()->ensure_grad();
                             for (int b = 0; b < d.B; ++b) {
                                 const double* g = self.grad.data() + b * y_item;
                                 for (int co = 0; co < d.Cout; ++co) {
                                     double s = 0.0;
                                     for (int i = 0; i < HW; ++i) s += g[static_cast<size_t>(co) * HW + i];
                                     bg[co] += s;
                                 }
                             }
                         }
                     });
}

// ---------------------------------------------------------------------------
// activations / normalization

Tensor silu(const Tensor& x) {
    check_defined(x, "silu");
    const auto& xv = x.value();
    std::vector<double> y(xv.size());
    for (size_t i = 0; i < xv.size(); ++i) {
        double s = 1.0 / (1.0 + std::exp(-xv[i]));
        y[i] = xv[i] * s;
    }
    return make_node(x.shape(), std::move(y), {x}, [](Node& self) {
        const Tensor& p = self.parents[0];
        if (!p.node()->requires_grad) return;
        const auto& xv = p.value();
        auto& pg = p.node()->ensure_grad();
        for (size_t i = 0; i < xv.size(); ++i) {
            double s = 1.0 / (1.0 + std::exp(-xv[i]));
            pg[i] += self.grad[i] * (s * (1.0 + xv[i] * (1.0 - s)));
        }
    });
}

Tensor group_norm(const Tensor& x, int groups, double eps) {
    check_defined(x, "group_norm");
    if (x.shape().size() != 4)
        throw Error(ErrorCategory::shape, "group_norm: expects [B,C,H,W], got " + shape_str(x.shape()));
    int B = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
    if (groups < 1 || C % groups != 0)
        throw Error(ErrorCategory::shape, "group_norm: C=" + std::to_string(C) +
                                              " not divisible by groups=" + std::to_string(groups));
    const int cg = C / groups;
    const int64_t gsize = static_cast<int64_t>(cg) * H * W;
    const auto& xv = x.value();
    std::vector<double> y(xv.size());
    std::vector<double> istds(static_cast<size_t>(B) * groups);
    for (int b = 0; b < B; ++b) {
        for (int g = 0; g < groups; ++g) {
            const double* xs = xv.data() + (static_cast<size_t>(b) * C + static_cast<size_t>(g) * cg) * H * W;
            double mean = 0.0;
            for (int64_t i = 0; i < gsize; ++i) mean += xs[i];
            mean /= static_cast<double>(gsize);
            double var = 0.0;
            for (int64_t i = 0; i < gsize; ++i) {
                double dlt = xs[i] - mean;
                var += dlt * dlt;
            }
            var /= static_cast<double>(gsize);
            double istd = 1.0 / std::sqrt(var + eps);
            istds[static_cast<size_t>(b) * groups + g] = istd;
            double* ys = y.data() + (static_cast<size_t>(b) * C + static_cast<size_t>(g) * cg) * H * W;
            for (int64_t i = 0; i < gsize; ++i) ys[i] = (xs[i] - mean) * istd;
        }
    }
    return make_node(x.shape(), std::move(y), {x},
                     [B, groups, cg, H, W, gsize, istds = std::move(istds)](Node& self) {
                         const Tensor& p = self.parents[0];
                         if (!p.node()->requires_grad) return;
                         auto& pg = p.node()->ensure_grad();
                         const int C = groups * cg;
                         for (int b = 0; b < B; ++b) {
                             for (int g = 0; g < groups; ++g) {
                                 size_t off = (static_cast<size_t>(b) * C + static_cast<size_t>(g) * cg) *
                                              static_cast<size_t>(H) * W;
                                 const double* yh = self.value.data() + off;  // normalized values
                                 const double* gy = self.grad.data() + off;
                                 double istd = istds[static_cast<size_t>(b) * groups + g];
                                 double mg = 0.0, mgy = 0.0;
                                 for (int64_t i = 0; i < gsize; ++i) {
                                     mg += gy[i];
                                     mgy += gy[i] * yh[i];
                                 }
                                 mg /= static_cast<double>(gsize);
                                 mgy /= static_cast<double>(gsize);
                                 double* dst = pg.data() + off;
                                 for (int64_t i = 0; i < gsize; ++i)
                                     dst[i] += istd * (gy[i] - mg - yh[i] * mgy);
                             }
                         }
                     });
}

namespace {

void check_bchw(const char* op, const Tensor& x) {
    if (x.shape().size() != 4)
        throw Error(ErrorCategory::shape,
                    std::string(op) + ": expects [B,C,H,W], got " + shape_str(x.shape()));
}

}  // namespace

Tensor channel_affine(const Tensor& x, const Tensor& gamma, const Tensor& beta) {
    check_defined(x, "channel_affine");
    check_bchw("channel_affine", x);
    int B = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
    if (gamma.shape() != Shape{C} || beta.shape() != Shape{C})
        shape_fail("channel_affine: per-channel params", gamma.shape(), {C});
    const int64_t HW = static_cast<int64_t>(H) * W;
    const auto& xv = x.value();
    std::vector<double> y(xv.size());
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            double gm = gamma.value()[c], bt = beta.value()[c];
            size_t off = (static_cast<size_t>(b) * C + c) * HW;
            for (int64_t i = 0; i < HW; ++i) y[off + i] = xv[off + i] * gm + bt;
        }
    return make_node(x.shape(), std::move(y), {x, gamma, beta}, [B, C, HW](Node& self) {
        const Tensor& px = self.parents[0];
        const Tensor& pgm = self.parents[1];
        const Tensor& pbt = self.parents[2];
        const auto& g = self.grad;
        if (px.node()->requires_grad) {
            auto& pg = px.node()->ensure_grad();
            for (int b = 0; b < B; ++b)
                for (int c = 0; c < C; ++c) {
                    double gm = pgm.value()[c];
                    size_t off = (static_cast<size_t>(b) * C + c) * HW;
                    for (int64_t i = 0; i < HW; ++i) pg[off + i] += g[off + i] * gm;
                }
        }
        if (pgm.node()->requires_grad) {
            auto& pg = pgm.node()->ensure_grad();
            for (int b = 0; b < B; ++b)
                for (int c = 0; c < C; ++c) {
                    size_t off = (static_cast<size_t>(b) * C + c) * HW;
                    double s = 0.0;
                    for (int64_t i = 0; i < HW; ++i) s += g[off + i] * px.value()[off + i];
                    pg[c] += s;
                }
        }
        if (pbt.node()->requires_grad) {
            auto& pg = pbt.node()->ensure_grad();
            for (int b = 0; b < B; ++b)
                for (int c = 0; c < C; ++c) {
                    size_t off = (static_cast<size_t>(b) * C + c) * HW;
                    double s = 0.0;
                    for (int64_t i = 0; i < HW; ++i) s += g[off + i];
                    pg[c] += s;
                }
        }
    });
}

Tensor add_channel_bias(const Tensor& x, const Tensor& bias) {
    check_defined(x, "add_channel_bias");
    check_defined(bias, "add_channel_bias");
    check_bchw("add_channel_bias", x);
    int B = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
    bool per_item;
    if (bias.shape() == Shape{C}) {
        per_item = false;
    } else if (bias.shape() == Shape{B, C}) {
        per_item = true;
    } else {
        shape_fail("add_channel_bias: bias must be [C] or [B,C]", bias.shape(), x.shape());
    }
    const int64_t HW = static_cast<int64_t>(H) * W;
    std::vector<double> y(x.value());
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            double bv = per_item ? bias.value()[static_cast<size_t>(b) * C + c] : bias.value()[c];
            size_t off = (static_cast<size_t>(b) * C + c) * HW;
            for (int64_t i = 0; i < HW; ++i) y[off + i] += bv;
        }
    return make_node(x.shape(), std::move(y), {x, bias}, [B, C, HW, per_item](Node& self) {
        const Tensor& px = self.parents[0];
        const Tensor& pb = self.parents[1];
        const auto& g = self.grad;
        if (px.node()->requires_grad) accum(px, g.data(), g.size());
        if (pb.node()->requires_grad) {
            auto& pg = pb.node()->ensure_grad();
            for (int b = 0; b < B; ++b)
                for (int c = 0; c < C; ++c) {
                    size_t off = (static_cast<size_t>(b) * C + c) * HW;
                    double s = 0.0;
                    for (int64_t i = 0; i < HW; ++i) s += g[off + i];
                    pg[per_item ? static_cast<size_t>(b) * C + c : static_cast<size_t>(c)] += s;
                }
        }
    });
}

// ---------------------------------------------------------------------------
// resampling / concat

Tensor upsample_nearest2x(const Tensor& x) {
    check_defined(x, "upsample_nearest2x");
    check_bchw("upsample_nearest2x", x);
    int B = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
    std::vector<double> y(static_cast<size_t>(B) * C * 4 * H * W);
    const auto& xv = x.value();
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
            for (int i = 0; i < H; ++i)
                for (int j = 0; j < W; ++j) {
                    double v = xv[((static_cast<size_t>(b) * C + c) * H + i) * W + j];
                    size_t base = ((static_cast<size_t>(b) * C + c) * 2 * H + 2 * i) * 2 * W + 2 * j;
                    y[base] = v;
                    y[base + 1] = v;
                    y[base + 2 * W] = v;
                    y[base + 2 * W + 1] = v;
                }
    return make_node({B, C, 2 * H, 2 * W}, std::move(y), {x}, [B, C, H, W](Node& self) {
        const Tensor& p = self.parents[0];
        if (!p.node()->requires_grad) return;
        auto& pg = p.node()->ensure_grad();
        const auto& g = self.grad;
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < C; ++c)
                for (int i = 0; i < H; ++i)
                    for (int j = 0; j < W; ++j) {
                        size_t base = ((static_cast<size_t>(b) * C + c) * 2 * H + 2 * i) * 2 * W + 2 * j;
                        pg[((static_cast<size_t>(b) * C + c) * H + i) * W + j] +=
                            g[base] + g[base + 1] + g[base + 2 * W] + g[base + 2 * W + 1];
                    }
    });
}

Tensor downsample_avg2x(const Tensor& x) {
    check_defined(x, "downsample_avg2x");
    check_bchw("downsample_avg2x", x);
    int B = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
    if (H % 2 != 0 || W % 2 != 0)
        throw Error(ErrorCategory::shape, "downsample_avg2x: spatial extents must be even, got " +
                                              shape_str(x.shape()));
    int Ho = H / 2, Wo = W / 2;
    std::vector<double> y(static_cast<size_t>(B) * C * Ho * Wo);
    const auto& xv = x.value();
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
            for (int i = 0; i < Ho; ++i)
                for (int j = 0; j < Wo; ++j) {
                    size_t base = ((static_cast<size_t>(b) * C + c) * H + 2 * i) * W + 2 * j;
                    y[((static_cast<size_t>(b) * C + c) * Ho + i) * Wo + j] =
                        0.25 * (xv[base] + xv[base + 1] + xv[base + W] + xv[base + W + 1]);
                }
    return make_node({B, C, Ho, Wo}, std::move(y), {x}, [B, C, H, W, Ho, Wo](Node& self) {
        const Tensor& p = self.parents[0];
        if (!p.node()->requires_grad) return;
        auto& pg = p.node()->ensure_grad();
        const auto& g = self.grad;
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < C; ++c)
                for (int i = 0; i < Ho; ++i)
                    for (int j = 0; j < Wo; ++j) {
                        double gv = 0.25 * g[((static_cast<size_t>(b) * C + c) * Ho + i) * Wo + j];
                        size_t base = ((static_cast<size_t>(b) * C + c) * H + 2 * i) * W + 2 * j;
                        pg[base] += gv;
                        pg[base + 1] += gv;
                        pg[base + W] += gv;
                        pg[base + W + 1] += gv;
                    }
    });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    check_defined(a, "concat_channels");
    check_defined(b, "concat_channels");
    check_bchw("concat_channels", a);
    check_bchw("concat_channels", b);
    int B = a.shape()[0], Ca = a.shape()[1], H = a.shape()[2], W = a.shape()[3];
    int Cb = b.shape()[1];
    if (b.shape()[0] != B || b.shape()[2] != H || b.shape()[3] != W)
        shape_fail("concat_channels", a.shape(), b.shape());
    const int64_t HW = static_cast<int64_t>(H) * W;
    std::vector<double> y(static_cast<size_t>(B) * (Ca + Cb) * HW);
    for (int bi = 0; bi < B; ++bi) {
        std::copy_n(a.value().data() + static_cast<size_t>(bi) * Ca * HW, Ca * HW,
                    y.data() + static_cast<size_t>(bi) * (Ca + Cb) * HW);
        std::copy_n(b.value().data() + static_cast<size_t>(bi) * Cb * HW, Cb * HW,
                    y.data() + static_cast<size_t>(bi) * (Ca + Cb) * HW + Ca * HW);
    }
    return make_node({B, Ca + Cb, H, W}, std::move(y), {a, b}, [B, Ca, Cb, HW](Node& self) {
        const Tensor& pa = self.parents[0];
        const Tensor& pb = self.parents[1];
        const auto& g = self.grad;
        if (pa.node()->requires_grad) {
            auto& pg = pa.node()->ensure_grad();
            for (int bi = 0; bi < B; ++bi) {
                const double* gs = g.data() + static_cast<size_t>(bi) * (Ca + Cb) * HW;
                double* ps = pg.data() + static_cast<size_t>(bi) * Ca * HW;
                for (int64_t i = 0; i < Ca * HW; ++i) ps[i] += gs[i];
            }
        }
        if (pb.node()->requires_grad) {
            auto& pg = pb.node()->ensure_grad();
            for (int bi = 0; bi < B; ++bi) {
                const double* gs = g.data() + static_cast<size_t>(bi) * (Ca + Cb) * HW + Ca * HW;
                double* ps = pg.data() + static_cast<size_t>(bi) * Cb * HW;
                for (int64_t i = 0; i < Cb * HW; ++i) ps[i] += gs[i];
            }
        }
    });
}

// ---------------------------------------------------------------------------
// reductions / pointwise

Tensor sum_all(const Tensor& x) {
    check_defined(x, "sum_all");
    double s = std::accumulate(x.value().begin(), x.value().end(), 0.0);
    return make_node({}, {s}, {x}, [](Node& self) {
        const Tensor& p = self.parents[0];
        if (!p.node()->requires_grad) return;
        auto& pg = p.node()->ensure_grad();
        double g = self.grad[0];
        for (auto& v : pg) v += g;
    });
}

Tensor mean_all(const Tensor& x) {
    check_defined(x, "mean_all");
    double inv = 1.0 / static_cast<double>(x.numel());
    double s = std::accumulate(x.value().begin(), x.value().end(), 0.0) * inv;
    return make_node({}, {s}, {x}, [inv](Node& self) {
        const Tensor& p = self.parents[0];
        if (!p.node()->requires_grad) return;
        auto& pg = p.node()->ensure_grad();
        double g = self.grad[0] * inv;
        for (auto& v : pg) v += g;
    });
}

Tensor abs(const Tensor& x) {
    check_defined(x, "abs");
    std::vector<double> y(x.value());
    for (auto& v : y) v = std::fabs(v);
    return make_node(x.shape(), std::move(y), {x}, [](Node& self) {
        const Tensor& p = self.parents[0];
        if (!p.node()->requires_grad) return;
        auto& pg = p.node()->ensure_grad();
        const auto& xv = p.value();
        for (size_t i = 0; i < xv.size(); ++i) {
            double s = xv[i] > 0.0 ? 1.0 : (xv[i] < 0.0 ? -1.0 : 0.0);
            pg[i] += self.grad[i] * s;
        }
    });
}

Tensor sqrt(const Tensor& x) {
    check_defined(x, "sqrt");
    std::vector<double> y(x.value());
    for (auto& v : y) {
        if (!(v > 0.0))
            throw Error(ErrorCategory::numeric, "sqrt: input must be strictly positive");
        v = std::sqrt(v);
    }
    return make_node(x.shape(), std::move(y), {x}, [](Node& self) {
        const Tensor& p = self.parents[0];
        if (!p.node()->requires_grad) return;
        auto& pg = p.node()->ensure_grad();
        for (size_t i = 0; i < pg.size(); ++i) pg[i] += self.grad[i] * 0.5 / self.value[i];
    });
}

Tensor reshape(const Tensor& x, Shape shape) {
    check_defined(x, "reshape");
    if (shape_numel(shape) != x.numel())
        shape_fail("reshape", x.shape(), shape);
    return make_node(std::move(shape), x.value(), {x}, [](Node& self) {
        accum(self.parents[0], self.grad.data(), self.grad.size());
    });
}

Tensor detach(const Tensor& x) {
    check_defined(x, "detach");
    return Tensor::from_data(x.shape(), x.value(), false);
}

Tensor stack_scalars(const std::vector<Tensor>& scalars) {
    if (scalars.empty())
        throw Error(ErrorCategory::shape, "stack_scalars: empty list");
    std::vector<double> v;
    v.reserve(scalars.size());
    for (const auto& s : scalars) {
        check_defined(s, "stack_scalars");
        if (s.numel() != 1)
            throw Error(ErrorCategory::shape,
                        "stack_scalars: operand has shape " + shape_str(s.shape()));
        v.push_back(s.value()[0]);
    }
    return make_node({static_cast<int>(scalars.size())}, std::move(v), scalars, [](Node& self) {
        for (size_t i = 0; i < self.parents.size(); ++i) {
            Node* p = self.parents[i].node();
            if (p->requires_grad) p->ensure_grad()[0] += self.grad[i];
        }
    });
}

Tensor separable_kernel(const Tensor& fin, const Tensor& fout) {
    check_defined(fin, "separable_kernel");
    check_defined(fout, "separable_kernel");
    const Shape& si = fin.shape();
    const Shape& so = fout.shape();
    if (si.size() != 4 || so.size() != 4 || si[3] != 1 || so[2] != 1 || si[0] != so[0] ||
        si[1] != so[1])
        shape_fail("separable_kernel: expects [kh,kw,Cin,1] and [kh,kw,1,Cout]", si, so);
    int kh = si[0], kw = si[1], Ci = si[2], Co = so[3];
    std::vector<double> y(static_cast<size_t>(Co) * Ci * kh * kw);
    const auto& iv = fin.value();
    const auto& ov = fout.value();
    for (int co = 0; co < Co; ++co)
        for (int ci = 0; ci < Ci; ++ci)
            for (int i = 0; i < kh; ++i)
                for (int j = 0; j < kw; ++j)
                    y[((static_cast<size_t>(co) * Ci + ci) * kh + i) * kw + j] =
                        iv[(static_cast<size_t>(i) * kw + j) * Ci + ci] *
                        ov[(static_cast<size_t>(i) * kw + j) * Co + co];
    return make_node({Co, Ci, kh, kw}, std::move(y), {fin, fout}, [kh, kw, Ci, Co](Node& self) {
        const Tensor& pi = self.parents[0];
        const Tensor& po = self.parents[1];
        const auto& g = self.grad;
        if (pi.node()->requires_grad) {
            auto& pg = pi.node()->ensure_grad();
            for (int i = 0; i < kh; ++i)
                for (int j = 0; j < kw; ++j)
                    for (int ci = 0; ci < Ci; ++ci) {
                        double s = 0.0;
                        for (int co = 0; co < Co; ++co)
                            s += g[((static_cast<size_t>(co) * Ci + ci) * kh + i) * kw + j] *
                                 po.value()[(static_cast<size_t>(i) * kw + j) * Co + co];
                        pg[(static_cast<size_t>(i) * kw + j) * Ci + ci] += s;
                    }
        }
        if (po.node()->requires_grad) {
            auto& pg = po.node()->ensure_grad();
            for (int i = 0; i < kh; ++i)
                for (int j = 0; j < kw; ++j)
                    for (int co = 0; co < Co; ++co) {
                        double s = 0.0;
                        for (int ci = 0; ci < Ci; ++ci)
                            s += g[((static_cast<size_t>(co) * Ci + ci) * kh + i) * kw + j] *
                                 pi.value()[(static_cast<size_t>(i) * kw + j) * Ci + ci];
                        pg[(static_cast<size_t>(i) * kw + j) * Co + co] += s;
                    }
        }
    });
}

// ---------------------------------------------------------------------------
// value utilities

Tensor batch_item(const Tensor& x, int b) {
    check_defined(x, "batch_item");
    if (x.shape().empty())
        throw Error(ErrorCategory::shape, "batch_item: scalar tensor has no batch dim");
    int B = x.shape()[0];
    if (b < 0 || b >= B)
        throw Error(ErrorCategory::shape, "batch_item: index " + std::to_string(b) +
                                              " out of range for " + shape_str(x.shape()));
    Shape s = x.shape();
    s[0] = 1;
    int64_t item = shape_numel(s);
    std::vector<double> v(x.value().begin() + b * item, x.value().begin() + (b + 1) * item);
    return Tensor::from_data(std::move(s), std::move(v), false);
}

Tensor stack_batch(const std::vector<Tensor>& items) {
    if (items.empty())
        throw Error(ErrorCategory::shape, "stack_batch: empty list");
    Shape s = items[0].shape();
    if (s.empty() || s[0] != 1)
        throw Error(ErrorCategory::shape, "stack_batch: items must have leading extent 1");
    int64_t item = shape_numel(s);
    std::vector<double> v;
    v.reserve(item * items.size());
    for (const auto& t : items) {
        if (t.shape() != s)
            shape_fail("stack_batch", s, t.shape());
        v.insert(v.end(), t.value().begin(), t.value().end());
    }
    s[0] = static_cast<int>(items.size());
    return Tensor::from_data(std::move(s), std::move(v), false);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        shape_fail("max_abs_diff", a.shape(), b.shape());
    double m = 0.0;
    for (size_t i = 0; i < a.value().size(); ++i)
        m = std::max(m, std::fabs(a.value()[i] - b.value()[i]));
    return m;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return false;
    return std::memcmp(a.value().data(), b.value().data(),
                       a.value().size() * sizeof(double)) == 0;
}

}  // namespace rectdiff
