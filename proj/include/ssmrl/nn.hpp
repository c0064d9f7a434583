#pragma once

// Layers and optimizers on top of the tensor graph: linear/embedding/RMS-norm
// modules with named-parameter registration, plus AdamW with global-norm
// gradient clipping.

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "ssmrl/tensor.hpp"

namespace ssmrl {

template <class S>
struct ParamRegistry {
    std::vector<std::pair<std::string, TensorT<S>>> items;

    void add(const std::string& name, const TensorT<S>& t) { items.emplace_back(name, t); }
    std::vector<TensorT<S>> tensors() const {
        std::vector<TensorT<S>> out;
        out.reserve(items.size());
        for (auto& [n, t] : items) out.push_back(t);
        return out;
    }
    TensorT<S> find(const std::string& name) const {
        for (auto& [n, t] : items)
            if (n == name) return t;
        throw std::runtime_error("parameter not found: " + name);
    }
    int64_t count() const {
        int64_t n = 0;
        for (auto& [k, t] : items) n += t.size();
        return n;
    }
};

template <class S>
struct Linear {
    TensorT<S> w;  // [in, out]
    TensorT<S> b;  // [out] when biased
    bool has_bias = true;

    Linear() = default;
    Linear(int64_t in, int64_t out, Rng& rng, bool bias = true, double gain = 1.0) {
        w = TensorT<S>::randn({in, out}, rng, gain / std::sqrt(double(in)));
        w.set_requires_grad();
        has_bias = bias;
        if (bias) {
            b = TensorT<S>::zeros({out});
            b.set_requires_grad();
        }
    }
    static Linear zeroed(int64_t in, int64_t out, bool bias = true) {
        Linear l;
        l.w = TensorT<S>::zeros({in, out});
        l.w.set_requires_grad();
        l.has_bias = bias;
        if (bias) {
            l.b = TensorT<S>::zeros({out});
            l.b.set_requires_grad();
        }
        return l;
    }

    TensorT<S> operator()(const TensorT<S>& x) const {
        auto y = matmul(x, w);
        if (has_bias) {
            Shape lead(y.shape().begin(), y.shape().end() - 1);
            y = add(y, broadcast_leading(b, lead));
        }
        return y;
    }

    void params(ParamRegistry<S>& r, const std::string& prefix) const {
        r.add(prefix + ".w", w);
        if (has_bias) r.add(prefix + ".b", b);
    }
};

template <class S>
struct RmsNorm {
    TensorT<S> gain;
    double eps = 1e-6;

    RmsNorm() = default;
    explicit RmsNorm(int64_t d) {
        gain = TensorT<S>::ones({d});
        gain.set_requires_grad();
    }
    TensorT<S> operator()(const TensorT<S>& x) const { return rms_norm(x, gain, eps); }
    void params(ParamRegistry<S>& r, const std::string& prefix) const {
        r.add(prefix + ".gain", gain);
    }
};

template <class S>
struct Embedding {
    TensorT<S> table;  // [vocab, width]

    Embedding() = default;
    Embedding(int64_t vocab, int64_t width, Rng& rng, double stddev = 0.02) {
        table = TensorT<S>::randn({vocab, width}, rng, stddev);
        table.set_requires_grad();
    }
    TensorT<S> operator()(const IntArray& ids) const { return embedding(table, ids); }
    void params(ParamRegistry<S>& r, const std::string& prefix) const {
        r.add(prefix + ".table", table);
    }
};

// SiLU MLP with optional RMS norm after each hidden layer; the shape used by
// the reward/termination heads and the actor/critic.
template <class S>
struct Mlp {
    std::vector<Linear<S>> hidden;
    std::vector<RmsNorm<S>> norms;
    Linear<S> out;
    bool use_norm = true;

    Mlp() = default;
    Mlp(int64_t in, int64_t width, int layers, int64_t out_dim, Rng& rng, bool norm = true,
        bool zero_out = false) {
        use_norm = norm;
        int64_t cur = in;
        for (int i = 0; i < layers; ++i) {
            hidden.emplace_back(cur, width, rng);
            if (norm) norms.emplace_back(width);
            cur = width;
        }
        out = zero_out ? Linear<S>::zeroed(cur, out_dim) : Linear<S>(cur, out_dim, rng);
    }

    TensorT<S> operator()(TensorT<S> x) const {
        for (size_t i = 0; i < hidden.size(); ++i) {
            x = hidden[i](x);
            if (use_norm) x = norms[i](x);
            x = silu(x);
        }
        return out(x);
    }

    void params(ParamRegistry<S>& r, const std::string& prefix) const {
        for (size_t i = 0; i < hidden.size(); ++i) {
            hidden[i].params(r, prefix + ".h" + std::to_string(i));
            if (use_norm) norms[i].params(r, prefix + ".n" + std::to_string(i));
        }
        out.params(r, prefix + ".out");
    }
};

template <class S>
void zero_grads(const std::vector<TensorT<S>>& params) {
    for (auto& p : params) const_cast<TensorT<S>&>(p).zero_grad();
}

template <class S>
double global_grad_norm(const std::vector<TensorT<S>>& params) {
    double sq = 0;
    for (auto& p : params) {
        if (!p.has_grad()) continue;
        for (auto g : p.grad()) sq += double(g) * double(g);
    }
    return std::sqrt(sq);
}

// AdamW with decoupled weight decay. Moment state is kept in double so the
// 32-bit and 64-bit instantiations follow the same trajectory shape.
template <class S>
class AdamW {
public:
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    double max_grad_norm = 0.0;  // 0 disables clipping

    explicit AdamW(std::vector<TensorT<S>> params, double lr_ = 1e-3, double wd = 0.0,
                   double clip = 0.0)
        : lr(lr_), weight_decay(wd), max_grad_norm(clip), params_(std::move(params)) {
        m_.resize(params_.size());
        v_.resize(params_.size());
        for (size_t i = 0; i < params_.size(); ++i) {
            m_[i].assign(size_t(params_[i].size()), 0.0);
            v_[i].assign(size_t(params_[i].size()), 0.0);
        }
    }

    void zero_grad() { zero_grads(params_); }

    // One update from accumulated gradients. Returns the pre-clip global norm.
    double step() {
        ++t_;
        double norm = global_grad_norm(params_);
        double scale = 1.0;
        if (max_grad_norm > 0.0 && norm > max_grad_norm) scale = max_grad_norm / norm;
        double bc1 = 1.0 - std::pow(beta1, double(t_));
        double bc2 = 1.0 - std::pow(beta2, double(t_));
        for (size_t i = 0; i < params_.size(); ++i) {
            auto& p = params_[i];
            if (!p.has_grad()) continue;
            S* pv = p.data();
            const S* gv = p.grad().data();
            auto& m = m_[i];
            auto& v = v_[i];
            for (int64_t j = 0; j < p.size(); ++j) {
                double g = double(gv[j]) * scale;
                m[size_t(j)] = beta1 * m[size_t(j)] + (1.0 - beta1) * g;
                v[size_t(j)] = beta2 * v[size_t(j)] + (1.0 - beta2) * g * g;
                double mh = m[size_t(j)] / bc1;
                double vh = v[size_t(j)] / bc2;
                double upd = mh / (std::sqrt(vh) + eps) + weight_decay * double(pv[j]);
                pv[j] = S(double(pv[j]) - lr * upd);
            }
        }
        return norm;
    }

    const std::vector<TensorT<S>>& params() const { return params_; }

private:
    std::vector<TensorT<S>> params_;
    std::vector<std::vector<double>> m_, v_;
    int64_t t_ = 0;
};

}  // namespace ssmrl
