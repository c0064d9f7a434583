#pragma once

// Dense tensors with reverse-mode gradients. The op set is exactly what the
// sequence kernels, world model and policy learners need; shapes are static
// per tensor and ops throw on mismatch instead of broadcasting implicitly
// (leading-batch broadcast is available only through explicit ops).

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace ssmrl {

using Shape = std::vector<int64_t>;
using Rng = std::mt19937_64;

inline int64_t numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
}

[[noreturn]] inline void op_fail(const std::string& op, const std::string& what) {
    throw std::invalid_argument(op + ": " + what);
}

// Running byte counter over live tensor buffers. The scaling benchmark reads
// the peak to compare memory growth across scan modes.
struct MemStats {
    inline static std::atomic<int64_t> current{0};
    inline static std::atomic<int64_t> peak{0};

    static void add(int64_t bytes) {
        int64_t cur = current.fetch_add(bytes) + bytes;
        int64_t p = peak.load();
        while (cur > p && !peak.compare_exchange_weak(p, cur)) {
        }
    }
    static void sub(int64_t bytes) { current.fetch_sub(bytes); }
    static void reset_peak() { peak.store(current.load()); }
    static int64_t peak_bytes() { return peak.load(); }
    static int64_t current_bytes() { return current.load(); }
};

// Graph recording is on by default; imagination rollouts and evaluation turn
// it off so value nodes carry no parents and memory stays flat.
inline bool& grad_mode() {
    thread_local bool enabled = true;
    return enabled;
}

struct NoGrad {
    bool prev;
    NoGrad() : prev(grad_mode()) { grad_mode() = false; }
    ~NoGrad() { grad_mode() = prev; }
};

inline int64_t next_node_id() {
    static std::atomic<int64_t> id{0};
    return id.fetch_add(1);
}

template <class S>
struct NodeT {
    Shape shape;
    std::vector<S> value;
    std::vector<S> grad;  // allocated on first accumulation
    bool requires_grad = false;
    const char* op = "leaf";
    int64_t id = 0;
    std::vector<std::shared_ptr<NodeT>> parents;
    std::function<void()> backprop;

    NodeT(Shape sh, std::vector<S> v) : shape(std::move(sh)), value(std::move(v)) {
        id = next_node_id();
        MemStats::add(int64_t(value.size() * sizeof(S)));
    }
    ~NodeT() { MemStats::sub(int64_t((value.size() + grad.size()) * sizeof(S))); }

    S* grad_data() {
        if (grad.empty()) {
            grad.assign(value.size(), S(0));
            MemStats::add(int64_t(grad.size() * sizeof(S)));
        }
        return grad.data();
    }
};

struct IntArray {
    Shape shape;
    std::vector<int64_t> v;

    IntArray() = default;
    IntArray(Shape sh, std::vector<int64_t> data) : shape(std::move(sh)), v(std::move(data)) {
        if (numel(shape) != int64_t(v.size())) op_fail("IntArray", "shape/data size mismatch");
    }
    int64_t size() const { return int64_t(v.size()); }
};

template <class S>
class TensorT {
public:
    TensorT() = default;
    explicit TensorT(std::shared_ptr<NodeT<S>> n) : n_(std::move(n)) {}

    static TensorT from_data(Shape shape, std::vector<S> data) {
        if (numel(shape) != int64_t(data.size())) op_fail("from_data", "shape/data size mismatch");
        return TensorT(std::make_shared<NodeT<S>>(std::move(shape), std::move(data)));
    }
    static TensorT zeros(Shape shape) {
        auto n = numel(shape);
        return from_data(std::move(shape), std::vector<S>(size_t(n), S(0)));
    }
    static TensorT ones(Shape shape) { return full(std::move(shape), S(1)); }
    static TensorT full(Shape shape, S v) {
        auto n = numel(shape);
        return from_data(std::move(shape), std::vector<S>(size_t(n), v));
    }
    static TensorT scalar(S v) { return from_data({}, {v}); }
    static TensorT randn(Shape shape, Rng& rng, double stddev = 1.0) {
        std::normal_distribution<double> d(0.0, stddev);
        auto n = numel(shape);
        std::vector<S> data(size_t(n));
        for (auto& x : data) x = S(d(rng));
        return from_data(std::move(shape), std::move(data));
    }
    static TensorT uniform(Shape shape, Rng& rng, double lo, double hi) {
        std::uniform_real_distribution<double> d(lo, hi);
        auto n = numel(shape);
        std::vector<S> data(size_t(n));
        for (auto& x : data) x = S(d(rng));
        return from_data(std::move(shape), std::move(data));
    }

    bool defined() const { return n_ != nullptr; }
    const Shape& shape() const { return n_->shape; }
    int64_t size() const { return int64_t(n_->value.size()); }
    int64_t dim(int i) const {
        int r = int(n_->shape.size());
        if (i < 0) i += r;
        return n_->shape[size_t(i)];
    }
    int rank() const { return int(n_->shape.size()); }
    S* data() { return n_->value.data(); }
    const S* data() const { return n_->value.data(); }
    S item() const {
        if (size() != 1) op_fail("item", "tensor has " + std::to_string(size()) + " elements");
        return n_->value[0];
    }

    TensorT& set_requires_grad(bool rg = true) {
        n_->requires_grad = rg;
        return *this;
    }
    bool requires_grad() const { return n_->requires_grad; }
    bool has_grad() const { return !n_->grad.empty(); }
    const std::vector<S>& grad() const { return n_->grad; }
    void zero_grad() {
        if (!n_->grad.empty()) std::fill(n_->grad.begin(), n_->grad.end(), S(0));
    }

    std::shared_ptr<NodeT<S>> node() const { return n_; }

private:
    std::shared_ptr<NodeT<S>> n_;
};

namespace detail {

template <class S>
std::shared_ptr<NodeT<S>> make_node(const char* op, Shape shape, std::vector<S> value,
                                    std::vector<std::shared_ptr<NodeT<S>>> parents) {
    auto node = std::make_shared<NodeT<S>>(std::move(shape), std::move(value));
    node->op = op;
    bool rg = false;
    if (grad_mode()) {
        for (auto& p : parents)
            if (p && p->requires_grad) rg = true;
    }
    if (rg) {
        node->requires_grad = true;
        node->parents = std::move(parents);
    }
    return node;
}

template <class S>
void check_same_shape(const char* op, const TensorT<S>& a, const TensorT<S>& b) {
    if (a.shape() != b.shape())
        op_fail(op, "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <class S, class F, class DF>
TensorT<S> unary_op(const char* name, const TensorT<S>& x, F f, DF df) {
    const auto& xv = x.node()->value;
    std::vector<S> out(xv.size());
    for (size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
    auto n = detail::make_node<S>(name, x.shape(), std::move(out), {x.node()});
    if (n->requires_grad) {
        auto xn = x.node();
        NodeT<S>* self = n.get();
        n->backprop = [self, xn, df]() {
            if (!xn->requires_grad) return;
            S* xg = xn->grad_data();
            const S* g = self->grad.data();
            const S* xv2 = xn->value.data();
            const S* yv = self->value.data();
            for (size_t i = 0; i < self->value.size(); ++i) xg[i] += g[i] * df(xv2[i], yv[i]);
        };
    }
    return TensorT<S>(n);
}

template <class S, class F, class DA, class DB>
TensorT<S> binary_op(const char* name, const TensorT<S>& a, const TensorT<S>& b, F f, DA da, DB db) {
    detail::check_same_shape(name, a, b);
    const auto& av = a.node()->value;
    const auto& bv = b.node()->value;
    std::vector<S> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = f(av[i], bv[i]);
    auto n = detail::make_node<S>(name, a.shape(), std::move(out), {a.node(), b.node()});
    if (n->requires_grad) {
        auto an = a.node(), bn = b.node();
        NodeT<S>* self = n.get();
        n->backprop = [self, an, bn, da, db]() {
            const S* g = self->grad.data();
            const S* av2 = an->value.data();
            const S* bv2 = bn->value.data();
            if (an->requires_grad) {
                S* ag = an->grad_data();
                for (size_t i = 0; i < self->value.size(); ++i) ag[i] += g[i] * da(av2[i], bv2[i]);
            }
            if (bn->requires_grad) {
                S* bg = bn->grad_data();
                for (size_t i = 0; i < self->value.size(); ++i) bg[i] += g[i] * db(av2[i], bv2[i]);
            }
        };
    }
    return TensorT<S>(n);
}

template <class S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
    return binary_op(
        "add", a, b, [](S x, S y) { return x + y; }, [](S, S) { return S(1); },
        [](S, S) { return S(1); });
}
template <class S>
TensorT<S> sub(const TensorT<S>& a, const TensorT<S>& b) {
    return binary_op(
        "sub", a, b, [](S x, S y) { return x - y; }, [](S, S) { return S(1); },
        [](S, S) { return S(-1); });
}
template <class S>
TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b) {
    return binary_op(
        "mul", a, b, [](S x, S y) { return x * y; }, [](S, S y) { return y; },
        [](S x, S) { return x; });
}
template <class S>
TensorT<S> scale(const TensorT<S>& x, double c) {
    return unary_op(
        "scale", x, [c](S v) { return S(v * c); }, [c](S, S) { return S(c); });
}
template <class S>
TensorT<S> neg(const TensorT<S>& x) {
    return scale(x, -1.0);
}
template <class S>
TensorT<S> add_scalar(const TensorT<S>& x, double c) {
    return unary_op(
        "add_scalar", x, [c](S v) { return S(v + c); }, [](S, S) { return S(1); });
}
template <class S>
TensorT<S> vexp(const TensorT<S>& x) {
    return unary_op(
        "exp", x, [](S v) { return S(std::exp(double(v))); }, [](S, S y) { return y; });
}
template <class S>
TensorT<S> vlog(const TensorT<S>& x) {
    return unary_op(
        "log", x, [](S v) { return S(std::log(double(v))); }, [](S v, S) { return S(1) / v; });
}
template <class S>
TensorT<S> sigmoid(const TensorT<S>& x) {
    return unary_op(
        "sigmoid", x, [](S v) { return S(1.0 / (1.0 + std::exp(-double(v)))); },
        [](S, S y) { return y * (S(1) - y); });
}
template <class S>
TensorT<S> silu(const TensorT<S>& x) {
    return unary_op(
        "silu", x,
        [](S v) {
            double s = 1.0 / (1.0 + std::exp(-double(v)));
            return S(double(v) * s);
        },
        [](S v, S) {
            double s = 1.0 / (1.0 + std::exp(-double(v)));
            return S(s * (1.0 + double(v) * (1.0 - s)));
        });
}
template <class S>
TensorT<S> vtanh(const TensorT<S>& x) {
    return unary_op(
        "tanh", x, [](S v) { return S(std::tanh(double(v))); },
        [](S, S y) { return S(1) - y * y; });
}

// max(c, x) with gradient only where x strictly exceeds the floor. At a tie
// the constant wins, so an exactly-clamped term contributes zero gradient.
template <class S>
TensorT<S> clamp_min(const TensorT<S>& x, double c) {
    return unary_op(
        "clamp_min", x, [c](S v) { return double(v) > c ? v : S(c); },
        [c](S v, S) { return double(v) > c ? S(1) : S(0); });
}

// ---------------------------------------------------------------------------
// matmul (batched over leading axes; a rank-2 operand is shared per batch)
// ---------------------------------------------------------------------------

namespace detail {

template <class S>
void mm(const S* A, const S* B, S* C, int64_t m, int64_t k, int64_t n, bool ta, bool tb) {
    // C[m,n] += op(A) * op(B); A is [m,k] or [k,m] when ta, B is [k,n] or [n,k] when tb.
    if (!ta && !tb) {
        for (int64_t i = 0; i < m; ++i) {
            S* c = C + i * n;
            const S* arow = A + i * k;
            for (int64_t p = 0; p < k; ++p) {
                S a = arow[p];
                if (a == S(0)) continue;
                const S* brow = B + p * n;
                for (int64_t j = 0; j < n; ++j) c[j] += a * brow[j];
            }
        }
    } else if (!ta && tb) {
        for (int64_t i = 0; i < m; ++i) {
            const S* arow = A + i * k;
            S* c = C + i * n;
            for (int64_t j = 0; j < n; ++j) {
                const S* brow = B + j * k;
                S acc = S(0);
                for (int64_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
                c[j] += acc;
            }
        }
    } else if (ta && !tb) {
        for (int64_t p = 0; p < k; ++p) {
            const S* acol = A + p * m;
            const S* brow = B + p * n;
            for (int64_t i = 0; i < m; ++i) {
                S a = acol[i];
                if (a == S(0)) continue;
                S* c = C + i * n;
                for (int64_t j = 0; j < n; ++j) c[j] += a * brow[j];
            }
        }
    } else {
        for (int64_t i = 0; i < m; ++i) {
            S* c = C + i * n;
            for (int64_t j = 0; j < n; ++j) {
                const S* brow = B + j * k;
                S acc = S(0);
                for (int64_t p = 0; p < k; ++p) acc += A[p * m + i] * brow[p];
                c[j] += acc;
            }
        }
    }
}

inline void matmul_dims(const char* op, const Shape& sa, const Shape& sb, bool ta, bool tb,
                        int64_t& m, int64_t& k, int64_t& n, int64_t& batch, bool& a_bcast,
                        bool& b_bcast, Shape& out_shape) {
    if (sa.size() < 2 || sb.size() < 2) op_fail(op, "operands must have rank >= 2");
    int64_t am = sa[sa.size() - 2], ak = sa[sa.size() - 1];
    if (ta) std::swap(am, ak);
    int64_t bk = sb[sb.size() - 2], bn = sb[sb.size() - 1];
    if (tb) std::swap(bk, bn);
    if (ak != bk)
        op_fail(op, "inner dims differ: " + shape_str(sa) + (ta ? "^T" : "") + " x " +
                        shape_str(sb) + (tb ? "^T" : ""));
    m = am;
    k = ak;
    n = bn;
    Shape lead_a(sa.begin(), sa.end() - 2), lead_b(sb.begin(), sb.end() - 2);
    a_bcast = lead_a.empty() && !lead_b.empty();
    b_bcast = lead_b.empty() && !lead_a.empty();
    if (!a_bcast && !b_bcast && lead_a != lead_b)
        op_fail(op, "batch dims differ: " + shape_str(sa) + " x " + shape_str(sb));
    const Shape& lead = a_bcast ? lead_b : lead_a;
    batch = numel(lead);
    out_shape = lead;
    out_shape.push_back(m);
    out_shape.push_back(n);
}

}  // namespace detail

template <class S>
TensorT<S> matmul(const TensorT<S>& a, const TensorT<S>& b, bool ta = false, bool tb = false) {
    int64_t m, k, n, batch;
    bool a_bcast, b_bcast;
    Shape out_shape;
    detail::matmul_dims("matmul", a.shape(), b.shape(), ta, tb, m, k, n, batch, a_bcast, b_bcast,
                        out_shape);
    const S* A = a.data();
    const S* B = b.data();
    std::vector<S> out(size_t(batch * m * n), S(0));
    int64_t asz = m * k, bsz = k * n, csz = m * n;
    for (int64_t z = 0; z < batch; ++z)
        detail::mm(A + (a_bcast ? 0 : z * asz), B + (b_bcast ? 0 : z * bsz), out.data() + z * csz,
                   m, k, n, ta, tb);
    auto node = detail::make_node<S>("matmul", std::move(out_shape), std::move(out),
                                     {a.node(), b.node()});
    if (node->requires_grad) {
        auto an = a.node(), bn = b.node();
        NodeT<S>* self = node.get();
        node->backprop = [self, an, bn, ta, tb, m, k, n, batch, a_bcast, b_bcast]() {
            const S* G = self->grad.data();
            const S* A2 = an->value.data();
            const S* B2 = bn->value.data();
            int64_t asz2 = m * k, bsz2 = k * n, csz2 = m * n;
            if (an->requires_grad) {
                S* ag = an->grad_data();
                for (int64_t z = 0; z < batch; ++z) {
                    const S* g = G + z * csz2;
                    const S* Bz = B2 + (b_bcast ? 0 : z * bsz2);
                    S* dA = ag + (a_bcast ? 0 : z * asz2);
                    if (!ta && !tb)
                        detail::mm(g, Bz, dA, m, n, k, false, true);  // dA[m,k] = g * B^T
                    else if (!ta && tb)
                        detail::mm(g, Bz, dA, m, n, k, false, false);  // dA[m,k] = g * B
                    else if (ta && !tb)
                        detail::mm(Bz, g, dA, k, n, m, false, true);  // dA[k,m] = B * g^T
                    else
                        detail::mm(Bz, g, dA, k, n, m, true, true);  // dA[k,m] = B^T * g^T
                }
            }
            if (bn->requires_grad) {
                S* bg = bn->grad_data();
                for (int64_t z = 0; z < batch; ++z) {
                    const S* g = G + z * csz2;
                    const S* Az = A2 + (a_bcast ? 0 : z * asz2);
                    S* dB = bg + (b_bcast ? 0 : z * bsz2);
                    if (!ta && !tb)
                        detail::mm(Az, g, dB, k, m, n, true, false);  // dB[k,n] = A^T * g
                    else if (!ta && tb)
                        detail::mm(g, Az, dB, n, m, k, true, false);  // dB[n,k] = g^T * A
                    else if (ta && !tb)
                        detail::mm(Az, g, dB, k, m, n, false, false);  // dB[k,n] = A * g
                    else
                        detail::mm(g, Az, dB, n, m, k, true, true);  // dB[n,k] = g^T * A^T
                }
            }
        };
    }
    return TensorT<S>(node);
}

// ---------------------------------------------------------------------------
// structural ops
// ---------------------------------------------------------------------------

template <class S>
TensorT<S> reshape(const TensorT<S>& x, Shape shape) {
    if (numel(shape) != x.size())
        op_fail("reshape", shape_str(x.shape()) + " -> " + shape_str(shape) + " changes size");
    auto n = detail::make_node<S>("reshape", std::move(shape), x.node()->value, {x.node()});
    if (n->requires_grad) {
        auto xn = x.node();
        NodeT<S>* self = n.get();
        n->backprop = [self, xn]() {
            if (!xn->requires_grad) return;
            S* xg = xn->grad_data();
            const S* g = self->grad.data();
            for (size_t i = 0; i < self->value.size(); ++i) xg[i] += g[i];
        };
    }
    return TensorT<S>(n);
}

namespace detail {
inline void axis_split(const Shape& s, int axis, int64_t& outer, int64_t& len, int64_t& inner) {
    outer = 1;
    inner = 1;
    for (int i = 0; i < axis; ++i) outer *= s[size_t(i)];
    len = s[size_t(axis)];
    for (size_t i = size_t(axis) + 1; i < s.size(); ++i) inner *= s[i];
}
inline int norm_axis(const char* op, const Shape& s, int axis) {
    int r = int(s.size());
    if (axis < 0) axis += r;
    if (axis < 0 || axis >= r) op_fail(op, "axis out of range for " + shape_str(s));
    return axis;
}
}  // namespace detail

template <class S>
TensorT<S> slice(const TensorT<S>& x, int axis, int64_t lo, int64_t hi) {
    axis = detail::norm_axis("slice", x.shape(), axis);
    int64_t outer, len, inner;
    detail::axis_split(x.shape(), axis, outer, len, inner);
    if (lo < 0 || hi > len || lo >= hi)
        op_fail("slice", "range [" + std::to_string(lo) + "," + std::to_string(hi) +
                             ") invalid for axis of length " + std::to_string(len));
    Shape out_shape = x.shape();
    out_shape[size_t(axis)] = hi - lo;
    int64_t w = hi - lo;
    std::vector<S> out(size_t(outer * w * inner));
    const S* xv = x.data();
    for (int64_t o = 0; o < outer; ++o)
        std::copy(xv + (o * len + lo) * inner, xv + (o * len + hi) * inner,
                  out.begin() + o * w * inner);
    auto n = detail::make_node<S>("slice", std::move(out_shape), std::move(out), {x.node()});
    if (n->requires_grad) {
        auto xn = x.node();
        NodeT<S>* self = n.get();
        n->backprop = [self, xn, outer, len, inner, lo, w]() {
            if (!xn->requires_grad) return;
            S* xg = xn->grad_data();
            const S* g = self->grad.data();
            for (int64_t o = 0; o < outer; ++o) {
                S* dst = xg + (o * len + lo) * inner;
                const S* src = g + o * w * inner;
                for (int64_t i = 0; i < w * inner; ++i) dst[i] += src[i];
            }
        };
    }
    return TensorT<S>(n);
}

template <class S>
TensorT<S> concat(const std::vector<TensorT<S>>& parts, int axis) {
    if (parts.empty()) op_fail("concat", "no inputs");
    axis = detail::norm_axis("concat", parts[0].shape(), axis);
    Shape out_shape = parts[0].shape();
    int64_t total = 0;
    for (const auto& p : parts) {
        if (p.rank() != int(out_shape.size())) op_fail("concat", "rank mismatch");
        for (int i = 0; i < p.rank(); ++i)
            if (i != axis && p.shape()[size_t(i)] != out_shape[size_t(i)])
                op_fail("concat", "shape mismatch " + shape_str(p.shape()) + " vs " +
                                      shape_str(out_shape) + " off axis " + std::to_string(axis));
        total += p.shape()[size_t(axis)];
    }
    out_shape[size_t(axis)] = total;
    int64_t outer, len, inner;
    detail::axis_split(out_shape, axis, outer, len, inner);
    std::vector<S> out(size_t(numel(out_shape)));
    std::vector<std::shared_ptr<NodeT<S>>> pnodes;
    int64_t off = 0;
    std::vector<int64_t> offsets;
    for (const auto& p : parts) {
        int64_t w = p.shape()[size_t(axis)];
        const S* pv = p.data();
        for (int64_t o = 0; o < outer; ++o)
            std::copy(pv + o * w * inner, pv + (o + 1) * w * inner,
                      out.begin() + (o * len + off) * inner);
        offsets.push_back(off);
        off += w;
        pnodes.push_back(p.node());
    }
    auto n = detail::make_node<S>("concat", std::move(out_shape), std::move(out), pnodes);
    if (n->requires_grad) {
        NodeT<S>* self = n.get();
        n->backprop = [self, pnodes, offsets, outer, len, inner]() {
            const S* g = self->grad.data();
            for (size_t pi = 0; pi < pnodes.size(); ++pi) {
                auto& pn = pnodes[pi];
                if (!pn->requires_grad) continue;
                int64_t w = int64_t(pn->value.size()) / (outer * inner);
                S* pg = pn->grad_data();
                for (int64_t o = 0; o < outer; ++o) {
                    const S* src = g + (o * len + offsets[pi]) * inner;
                    S* dst = pg + o * w * inner;
                    for (int64_t i = 0; i < w * inner; ++i) dst[i] += src[i];
                }
            }
        };
    }
    return TensorT<S>(n);
}

template <class S>
TensorT<S> broadcast_leading(const TensorT<S>& x, const Shape& lead) {
    Shape out_shape = lead;
    out_shape.insert(out_shape.end(), x.shape().begin(), x.shape().end());
    int64_t reps = numel(lead), n = x.size();
    std::vector<S> out(size_t(reps * n));
    for (int64_t r = 0; r < reps; ++r)
        std::copy(x.data(), x.data() + n, out.begin() + r * n);
    auto node =
        detail::make_node<S>("broadcast_leading", std::move(out_shape), std::move(out), {x.node()});
    if (node->requires_grad) {
        auto xn = x.node();
        NodeT<S>* self = node.get();
        node->backprop = [self, xn, reps, n]() {
            if (!xn->requires_grad) return;
            S* xg = xn->grad_data();
            const S* g = self->grad.data();
            for (int64_t r = 0; r < reps; ++r)
                for (int64_t i = 0; i < n; ++i) xg[i] += g[r * n + i];
        };
    }
    return TensorT<S>(node);
}

template <class S>
TensorT<S> expand_trailing(const TensorT<S>& x, const Shape& tail) {
    Shape out_shape = x.shape();
    out_shape.insert(out_shape.end(), tail.begin(), tail.end());
    int64_t reps = numel(tail), n = x.size();
    std::vector<S> out(size_t(n * reps));
    const S* xv = x.data();
    for (int64_t i = 0; i < n; ++i) std::fill_n(out.begin() + i * reps, reps, xv[i]);
    auto node =
        detail::make_node<S>("expand_trailing", std::move(out_shape), std::move(out), {x.node()});
    if (node->requires_grad) {
        auto xn = x.node();
        NodeT<S>* self = node.get();
        node->backprop = [self, xn, reps, n]() {
            if (!xn->requires_grad) return;
            S* xg = xn->grad_data();
            const S* g = self->grad.data();
            for (int64_t i = 0; i < n; ++i) {
                S acc = S(0);
                for (int64_t r = 0; r < reps; ++r) acc += g[i * reps + r];
                xg[i] += acc;
            }
        };
    }
    return TensorT<S>(node);
}

template <class S>
TensorT<S> detach(const TensorT<S>& x) {
    auto n = detail::make_node<S>("detach", x.shape(), x.node()->value, {});
    return TensorT<S>(n);
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

template <class S>
TensorT<S> sum(const TensorT<S>& x) {
    S acc = S(0);
    for (auto v : x.node()->value) acc += v;
    auto n = detail::make_node<S>("sum", Shape{}, std::vector<S>{acc}, {x.node()});
    if (n->requires_grad) {
        auto xn = x.node();
        NodeT<S>* self = n.get();
        n->backprop = [self, xn]() {
            if (!xn->requires_grad) return;
            S g = self->grad[0];
            S* xg = xn->grad_data();
            for (size_t i = 0; i < xn->value.size(); ++i) xg[i] += g;
        };
    }
    return TensorT<S>(n);
}

template <class S>
TensorT<S> mean(const TensorT<S>& x) {
    if (x.size() == 0) op_fail("mean", "empty tensor");
    return scale(sum(x), 1.0 / double(x.size()));
}

template <class S>
TensorT<S> sum_axis(const TensorT<S>& x, int axis) {
    axis = detail::norm_axis("sum_axis", x.shape(), axis);
    int64_t outer, len, inner;
    detail::axis_split(x.shape(), axis, outer, len, inner);
    Shape out_shape;
    for (int i = 0; i < x.rank(); ++i)
        if (i != axis) out_shape.push_back(x.shape()[size_t(i)]);
    std::vector<S> out(size_t(outer * inner), S(0));
    const S* xv = x.data();
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t l = 0; l < len; ++l)
            for (int64_t i = 0; i < inner; ++i) out[size_t(o * inner + i)] += xv[(o * len + l) * inner + i];
    auto n = detail::make_node<S>("sum_axis", std::move(out_shape), std::move(out), {x.node()});
    if (n->requires_grad) {
        auto xn = x.node();
        NodeT<S>* self = n.get();
        n->backprop = [self, xn, outer, len, inner]() {
            if (!xn->requires_grad) return;
            S* xg = xn->grad_data();
            const S* g = self->grad.data();
            for (int64_t o = 0; o < outer; ++o)
                for (int64_t l = 0; l < len; ++l)
                    for (int64_t i = 0; i < inner; ++i)
                        xg[(o * len + l) * inner + i] += g[o * inner + i];
        };
    }
    return TensorT<S>(n);
}

// Full max reduction; gradient goes to the first maximal element only.
template <class S>
TensorT<S> max_all(const TensorT<S>& x) {
    if (x.size() == 0) op_fail("max", "empty tensor");
    const auto& xv = x.node()->value;
    size_t arg = 0;
    for (size_t i = 1; i < xv.size(); ++i)
        if (xv[i] > xv[arg]) arg = i;
    auto n = detail::make_node<S>("max", Shape{}, std::vector<S>{xv[arg]}, {x.node()});
    if (n->requires_grad) {
        auto xn = x.node();
        NodeT<S>* self = n.get();
        n->backprop = [self, xn, arg]() {
            if (!xn->requires_grad) return;
            xn->grad_data()[arg] += self->grad[0];
        };
    }
    return TensorT<S>(n);
}

// ---------------------------------------------------------------------------
// softmax family (last axis)
// ---------------------------------------------------------------------------

template <class S>
TensorT<S> softmax_last(const TensorT<S>& x) {
    if (x.rank() < 1) op_fail("softmax", "needs rank >= 1");
    int64_t c = x.dim(-1), rows = x.size() / c;
    std::vector<S> out(size_t(x.size()));
    const S* xv = x.data();
    for (int64_t r = 0; r < rows; ++r) {
        const S* row = xv + r * c;
        S* orow = out.data() + r * c;
        S mx = row[0];
        for (int64_t i = 1; i < c; ++i) mx = std::max(mx, row[i]);
        double z = 0;
        for (int64_t i = 0; i < c; ++i) {
            double e = std::exp(double(row[i] - mx));
            orow[i] = S(e);
            z += e;
        }
        for (int64_t i = 0; i < c; ++i) orow[i] = S(double(orow[i]) / z);
    }
    auto n = detail::make_node<S>("softmax", x.shape(), std::move(out), {x.node()});
    if (n->requires_grad) {
        auto xn = x.node();
        NodeT<S>* self = n.get();
        n->backprop = [self, xn, rows, c]() {
            if (!xn->requires_grad) return;
            S* xg = xn->grad_data();
            const S* g = self->grad.data();
            const S* y = self->value.data();
            for (int64_t r = 0; r < rows; ++r) {
                const S* gr = g + r * c;
                const S* yr = y + r * c;
                S dot = S(0);
                for (int64_t i = 0; i < c; ++i) dot += gr[i] * yr[i];
                S* xr = xg + r * c;
                for (int64_t i = 0; i < c; ++i) xr[i] += yr[i] * (gr[i] - dot);
            }
        };
    }
    return TensorT<S>(n);
}

template <class S>
TensorT<S> log_softmax_last(const TensorT<S>& x) {
    if (x.rank() < 1) op_fail("log_softmax", "needs rank >= 1");
    int64_t c = x.dim(-1), rows = x.size() / c;
    std::vector<S> out(size_t(x.size()));
    const S* xv = x.data();
    for (int64_t r = 0; r < rows; ++r) {
        const S* row = xv + r * c;
        S* orow = out.data() + r * c;
        S mx = row[0];
        for (int64_t i = 1; i < c; ++i) mx = std::max(mx, row[i]);
        double z = 0;
        for (int64_t i = 0; i < c; ++i) z += std::exp(double(row[i] - mx));
        double lz = std::log(z) + double(mx);
        for (int64_t i = 0; i < c; ++i) orow[i] = S(double(row[i]) - lz);
    }
    auto n = detail::make_node<S>("log_softmax", x.shape(), std::move(out), {x.node()});
    if (n->requires_grad) {
        auto xn = x.node();
        NodeT<S>* self = n.get();
        n->backprop = [self, xn, rows, c]() {
            if (!xn->requires_grad) return;
            S* xg = xn->grad_data();
            const S* g = self->grad.data();
            const S* y = self->value.data();
            for (int64_t r = 0; r < rows; ++r) {
                const S* gr = g + r * c;
                const S* yr = y + r * c;
                S gsum = S(0);
                for (int64_t i = 0; i < c; ++i) gsum += gr[i];
                S* xr = xg + r * c;
                for (int64_t i = 0; i < c; ++i)
                    xr[i] += gr[i] - S(std::exp(double(yr[i]))) * gsum;
            }
        };
    }
    return TensorT<S>(n);
}

// Cross entropy of soft targets against logits, per row of the last axis:
// out[..] = -sum_i t_i * log_softmax(x)_i
template <class S>
TensorT<S> cross_entropy_last(const TensorT<S>& logits, const TensorT<S>& targets) {
    detail::check_same_shape("cross_entropy", logits, targets);
    int64_t c = logits.dim(-1), rows = logits.size() / c;
    Shape out_shape(logits.shape().begin(), logits.shape().end() - 1);
    std::vector<S> out(size_t(rows));
    std::vector<S> lsm(size_t(logits.size()));
    const S* xv = logits.data();
    const S* tv = targets.data();
    for (int64_t r = 0; r < rows; ++r) {
        const S* row = xv + r * c;
        S mx = row[0];
        for (int64_t i = 1; i < c; ++i) mx = std::max(mx, row[i]);
        double z = 0;
        for (int64_t i = 0; i < c; ++i) z += std::exp(double(row[i] - mx));
        double lz = std::log(z) + double(mx);
        double acc = 0;
        for (int64_t i = 0; i < c; ++i) {
            double l = double(row[i]) - lz;
            lsm[size_t(r * c + i)] = S(l);
            acc -= double(tv[r * c + i]) * l;
        }
        out[size_t(r)] = S(acc);
    }
    auto n = detail::make_node<S>("cross_entropy", std::move(out_shape), std::move(out),
                                  {logits.node(), targets.node()});
    if (n->requires_grad) {
        auto ln = logits.node(), tn = targets.node();
        NodeT<S>* self = n.get();
        n->backprop = [self, ln, tn, rows, c, lsm]() {
            const S* g = self->grad.data();
            const S* tv2 = tn->value.data();
            if (ln->requires_grad) {
                S* lg = ln->grad_data();
                for (int64_t r = 0; r < rows; ++r) {
                    S tsum = S(0);
                    for (int64_t i = 0; i < c; ++i) tsum += tv2[r * c + i];
                    for (int64_t i = 0; i < c; ++i) {
                        S p = S(std::exp(double(lsm[size_t(r * c + i)])));
                        lg[r * c + i] += g[r] * (p * tsum - tv2[r * c + i]);
                    }
                }
            }
            if (tn->requires_grad) {
                S* tg = tn->grad_data();
                for (int64_t r = 0; r < rows; ++r)
                    for (int64_t i = 0; i < c; ++i)
                        tg[r * c + i] += -g[r] * lsm[size_t(r * c + i)];
            }
        };
    }
    return TensorT<S>(n);
}

// ---------------------------------------------------------------------------
// RMS normalization over the last axis with a learned gain
// ---------------------------------------------------------------------------

template <class S>
TensorT<S> rms_norm(const TensorT<S>& x, const TensorT<S>& gain, double eps = 1e-6) {
    int64_t d = x.dim(-1);
    if (gain.rank() != 1 || gain.dim(0) != d)
        op_fail("rms_norm", "gain shape " + shape_str(gain.shape()) + " does not match last axis " +
                                std::to_string(d));
    int64_t rows = x.size() / d;
    std::vector<S> out(size_t(x.size()));
    std::vector<S> inv_rms(size_t(rows));
    const S* xv = x.data();
    const S* gv = gain.data();
    for (int64_t r = 0; r < rows; ++r) {
        const S* row = xv + r * d;
        double ms = 0;
        for (int64_t i = 0; i < d; ++i) ms += double(row[i]) * double(row[i]);
        ms = ms / double(d) + eps;
        S ir = S(1.0 / std::sqrt(ms));
        inv_rms[size_t(r)] = ir;
        for (int64_t i = 0; i < d; ++i) out[size_t(r * d + i)] = row[i] * ir * gv[i];
    }
    auto n = detail::make_node<S>("rms_norm", x.shape(), std::move(out), {x.node(), gain.node()});
    if (n->requires_grad) {
        auto xn = x.node(), gn = gain.node();
        NodeT<S>* self = n.get();
        n->backprop = [self, xn, gn, rows, d, inv_rms]() {
            const S* g = self->grad.data();
            const S* xv2 = xn->value.data();
            const S* gv2 = gn->value.data();
            if (xn->requires_grad) {
                S* xg = xn->grad_data();
                for (int64_t r = 0; r < rows; ++r) {
                    const S* row = xv2 + r * d;
                    const S* gr = g + r * d;
                    S ir = inv_rms[size_t(r)];
                    double dot = 0;
                    for (int64_t i = 0; i < d; ++i) dot += double(gr[i]) * double(gv2[i]) * double(row[i]);
                    double coef = dot * double(ir) * double(ir) * double(ir) / double(d);
                    for (int64_t i = 0; i < d; ++i)
                        xg[r * d + i] += S(double(gr[i]) * double(gv2[i]) * double(ir) -
                                           coef * double(row[i]));
                }
            }
            if (gn->requires_grad) {
                S* gg = gn->grad_data();
                for (int64_t r = 0; r < rows; ++r) {
                    const S* row = xv2 + r * d;
                    const S* gr = g + r * d;
                    S ir = inv_rms[size_t(r)];
                    for (int64_t i = 0; i < d; ++i) gg[i] += gr[i] * row[i] * ir;
                }
            }
        };
    }
    return TensorT<S>(n);
}

// ---------------------------------------------------------------------------
// integer-indexed ops
// ---------------------------------------------------------------------------

template <class S>
TensorT<S> one_hot(const IntArray& ids, int64_t depth) {
    Shape out_shape = ids.shape;
    out_shape.push_back(depth);
    std::vector<S> out(size_t(ids.size() * depth), S(0));
    for (int64_t i = 0; i < ids.size(); ++i) {
        int64_t k = ids.v[size_t(i)];
        if (k < 0 || k >= depth)
            op_fail("one_hot", "index " + std::to_string(k) + " out of range [0," +
                                   std::to_string(depth) + ")");
        out[size_t(i * depth + k)] = S(1);
    }
    return TensorT<S>::from_data(std::move(out_shape), std::move(out));
}

template <class S>
TensorT<S> embedding(const TensorT<S>& table, const IntArray& ids) {
    if (table.rank() != 2) op_fail("embedding", "table must be rank 2");
    int64_t v = table.dim(0), e = table.dim(1);
    Shape out_shape = ids.shape;
    out_shape.push_back(e);
    std::vector<S> out(size_t(ids.size() * e));
    const S* tv = table.data();
    for (int64_t i = 0; i < ids.size(); ++i) {
        int64_t k = ids.v[size_t(i)];
        if (k < 0 || k >= v)
            op_fail("embedding", "index " + std::to_string(k) + " out of vocabulary " +
                                     std::to_string(v));
        std::copy(tv + k * e, tv + (k + 1) * e, out.begin() + i * e);
    }
    auto n = detail::make_node<S>("embedding", std::move(out_shape), std::move(out), {table.node()});
    if (n->requires_grad) {
        auto tn = table.node();
        NodeT<S>* self = n.get();
        auto idx = ids.v;
        n->backprop = [self, tn, idx, e]() {
            if (!tn->requires_grad) return;
            S* tg = tn->grad_data();
            const S* g = self->grad.data();
            for (size_t i = 0; i < idx.size(); ++i) {
                S* dst = tg + idx[i] * e;
                const S* src = g + int64_t(i) * e;
                for (int64_t j = 0; j < e; ++j) dst[j] += src[j];
            }
        };
    }
    return TensorT<S>(n);
}

// ---------------------------------------------------------------------------
// cumulative ops along an axis
// ---------------------------------------------------------------------------

template <class S>
TensorT<S> cumprod(const TensorT<S>& x, int axis) {
    axis = detail::norm_axis("cumprod", x.shape(), axis);
    int64_t outer, len, inner;
    detail::axis_split(x.shape(), axis, outer, len, inner);
    std::vector<S> out(size_t(x.size()));
    const S* xv = x.data();
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t i = 0; i < inner; ++i) {
            S acc = S(1);
            for (int64_t l = 0; l < len; ++l) {
                acc *= xv[(o * len + l) * inner + i];
                out[size_t((o * len + l) * inner + i)] = acc;
            }
        }
    auto n = detail::make_node<S>("cumprod", x.shape(), std::move(out), {x.node()});
    if (n->requires_grad) {
        auto xn = x.node();
        NodeT<S>* self = n.get();
        n->backprop = [self, xn, outer, len, inner]() {
            if (!xn->requires_grad) return;
            S* xg = xn->grad_data();
            const S* g = self->grad.data();
            const S* xv2 = xn->value.data();
            // exact O(len^2) per line, division-free so zero entries are safe
            for (int64_t o = 0; o < outer; ++o)
                for (int64_t i = 0; i < inner; ++i) {
                    auto at = [&](int64_t l) { return (o * len + l) * inner + i; };
                    S prefix = S(1);
                    for (int64_t l = 0; l < len; ++l) {
                        S p = prefix;
                        S acc = S(0);
                        for (int64_t j = l; j < len; ++j) {
                            if (j > l) p *= xv2[at(j)];
                            acc += g[at(j)] * p;
                        }
                        xg[at(l)] += acc;
                        prefix *= xv2[at(l)];
                    }
                }
        };
    }
    return TensorT<S>(n);
}

template <class S>
TensorT<S> cumsum(const TensorT<S>& x, int axis) {
    axis = detail::norm_axis("cumsum", x.shape(), axis);
    int64_t outer, len, inner;
    detail::axis_split(x.shape(), axis, outer, len, inner);
    std::vector<S> out(size_t(x.size()));
    const S* xv = x.data();
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t i = 0; i < inner; ++i) {
            S acc = S(0);
            for (int64_t l = 0; l < len; ++l) {
                acc += xv[(o * len + l) * inner + i];
                out[size_t((o * len + l) * inner + i)] = acc;
            }
        }
    auto n = detail::make_node<S>("cumsum", x.shape(), std::move(out), {x.node()});
    if (n->requires_grad) {
        auto xn = x.node();
        NodeT<S>* self = n.get();
        n->backprop = [self, xn, outer, len, inner]() {
            if (!xn->requires_grad) return;
            S* xg = xn->grad_data();
            const S* g = self->grad.data();
            for (int64_t o = 0; o < outer; ++o)
                for (int64_t i = 0; i < inner; ++i) {
                    S acc = S(0);
                    for (int64_t l = len - 1; l >= 0; --l) {
                        acc += g[(o * len + l) * inner + i];
                        xg[(o * len + l) * inner + i] += acc;
                    }
                }
        };
    }
    return TensorT<S>(n);
}

// Lower-triangular decay matrix from per-step log decays:
//   L[t,i] = exp(sum_{k=i+1..t} loga[k]) for t >= i, else 0.
// Exponent prefix sums run in double regardless of S so nearby entries do not
// lose precision to cancellation on long sequences.
template <class S>
TensorT<S> decay_matrix(const TensorT<S>& loga) {
    if (loga.rank() < 1) op_fail("decay_matrix", "needs rank >= 1");
    int64_t l = loga.dim(-1);
    int64_t rows = loga.size() / l;
    Shape out_shape = loga.shape();
    out_shape.push_back(l);
    std::vector<S> out(size_t(rows * l * l), S(0));
    const S* av = loga.data();
    std::vector<double> E(size_t(l));
    for (int64_t r = 0; r < rows; ++r) {
        const S* arow = av + r * l;
        E[0] = 0.0;
        for (int64_t t = 1; t < l; ++t) E[size_t(t)] = E[size_t(t - 1)] + double(arow[t]);
        S* o = out.data() + r * l * l;
        for (int64_t t = 0; t < l; ++t)
            for (int64_t i = 0; i <= t; ++i) o[t * l + i] = S(std::exp(E[size_t(t)] - E[size_t(i)]));
    }
    auto n =
        detail::make_node<S>("decay_matrix", std::move(out_shape), std::move(out), {loga.node()});
    if (n->requires_grad) {
        auto an = loga.node();
        NodeT<S>* self = n.get();
        n->backprop = [self, an, rows, l]() {
            if (!an->requires_grad) return;
            S* ag = an->grad_data();
            const S* g = self->grad.data();
            const S* L = self->value.data();
            // dL[t,i]/dloga[k] = L[t,i] for i < k <= t, so
            // dloga[k] = sum_{t>=k} sum_{i<k} g[t,i]*L[t,i]; use row prefix sums.
            std::vector<double> P(size_t(l));  // P[i] = prefix over i of g[t,:]*L[t,:]
            std::vector<double> colsum(size_t(l), 0.0);
            for (int64_t r = 0; r < rows; ++r) {
                const S* gr = g + r * l * l;
                const S* Lr = L + r * l * l;
                std::fill(colsum.begin(), colsum.end(), 0.0);
                for (int64_t t = l - 1; t >= 1; --t) {
                    double acc = 0.0;
                    for (int64_t i = 0; i <= t; ++i) {
                        acc += double(gr[t * l + i]) * double(Lr[t * l + i]);
                        P[size_t(i)] = acc;
                    }
                    // colsum[i] accumulates sum over t' >= t of prefix P at i
                    for (int64_t i = 0; i < t; ++i) colsum[size_t(i)] += P[size_t(i)];
                    ag[r * l + t] += S(colsum[size_t(t - 1)]);
                    // colsum beyond t-1 is unused for smaller t, safe to leave
                }
            }
        };
    }
    return TensorT<S>(n);
}

// ---------------------------------------------------------------------------
// dropout
// ---------------------------------------------------------------------------

template <class S>
TensorT<S> dropout(const TensorT<S>& x, double p, Rng& rng, bool training) {
    if (!training || p <= 0.0) return x;
    if (p >= 1.0) op_fail("dropout", "rate must be < 1");
    std::bernoulli_distribution keep(1.0 - p);
    std::vector<S> mask(size_t(x.size()));
    double inv = 1.0 / (1.0 - p);
    for (auto& m : mask) m = keep(rng) ? S(inv) : S(0);
    auto mt = TensorT<S>::from_data(x.shape(), std::move(mask));
    return mul(x, mt);
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

// Ordered record of the executed ops reachable from a root, reverse
// topological on traversal. Each node appears exactly once.
template <class S>
class GradTape {
public:
    static GradTape build(const TensorT<S>& root) {
        GradTape tape;
        if (!root.defined() || !root.node()->requires_grad) return tape;
        std::unordered_set<NodeT<S>*> seen;
        // iterative post-order DFS
        std::vector<std::pair<std::shared_ptr<NodeT<S>>, size_t>> stack;
        stack.push_back({root.node(), 0});
        seen.insert(root.node().get());
        while (!stack.empty()) {
            auto& [node, child] = stack.back();
            if (child < node->parents.size()) {
                auto next = node->parents[child++];
                if (next && next->requires_grad && !seen.count(next.get())) {
                    seen.insert(next.get());
                    stack.push_back({next, 0});
                }
            } else {
                tape.order_.push_back(node);
                stack.pop_back();
            }
        }
        return tape;
    }

    // Seeds d(root)/d(root) = 1 and pushes gradients to every reachable
    // parameter. Repeated calls accumulate.
    void backward() {
        if (order_.empty()) return;
        auto& root = order_.back();
        if (numel(root->shape) != 1) op_fail("backward", "loss must be scalar");
        root->grad_data()[0] += S(1);
        for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
            auto& n = *it;
            if (n->backprop && !n->grad.empty()) n->backprop();
        }
    }

    size_t size() const { return order_.size(); }
    const std::vector<std::shared_ptr<NodeT<S>>>& nodes() const { return order_; }

private:
    std::vector<std::shared_ptr<NodeT<S>>> order_;
};

template <class S>
void backward(const TensorT<S>& loss) {
    GradTape<S>::build(loss).backward();
}

// ---------------------------------------------------------------------------
// non-differentiable utilities
// ---------------------------------------------------------------------------

template <class S>
IntArray argmax_last(const TensorT<S>& x) {
    int64_t c = x.dim(-1), rows = x.size() / c;
    Shape out_shape(x.shape().begin(), x.shape().end() - 1);
    std::vector<int64_t> out(size_t(rows));
    const S* xv = x.data();
    for (int64_t r = 0; r < rows; ++r) {
        const S* row = xv + r * c;
        int64_t arg = 0;
        for (int64_t i = 1; i < c; ++i)
            if (row[i] > row[arg]) arg = i;
        out[size_t(r)] = arg;
    }
    return IntArray(std::move(out_shape), std::move(out));
}

// Draws one category per row of the last axis from explicit probabilities
// (CDF inversion, platform-stable given the engine).
template <class S>
IntArray sample_categorical_last(const TensorT<S>& probs, Rng& rng) {
    int64_t c = probs.dim(-1), rows = probs.size() / c;
    Shape out_shape(probs.shape().begin(), probs.shape().end() - 1);
    std::vector<int64_t> out(size_t(rows));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const S* pv = probs.data();
    for (int64_t r = 0; r < rows; ++r) {
        double u = unif(rng);
        const S* row = pv + r * c;
        double acc = 0;
        int64_t k = c - 1;
        for (int64_t i = 0; i < c; ++i) {
            acc += double(row[i]);
            if (u < acc) {
                k = i;
                break;
            }
        }
        out[size_t(r)] = k;
    }
    return IntArray(std::move(out_shape), std::move(out));
}

template <class S>
bool all_finite(const TensorT<S>& x) {
    for (auto v : x.node()->value)
        if (!std::isfinite(double(v))) return false;
    return true;
}

template <class S>
void require_finite(const TensorT<S>& x, const std::string& ctx) {
    if (!all_finite(x)) throw std::runtime_error(ctx + ": non-finite values");
}

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

}  // namespace ssmrl
