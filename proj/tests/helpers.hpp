#pragma once

// Shared test utilities. The finite-difference checker here is the
// independent gradient oracle: it only touches tensor values and never the
// backprop machinery it is used to verify.

#include <cmath>
#include <functional>
#include <vector>

#include "ssmrl/tensor.hpp"

namespace testutil {

using ssmrl::TensorD;

struct GradCheckResult {
    double max_rel_err = 0.0;
    int64_t checked = 0;
};

// Central finite differences on every element of every parameter (or a
// subsample), compared against the analytic gradient of `make_loss`.
inline GradCheckResult check_gradients(const std::function<TensorD()>& make_loss,
                                       std::vector<TensorD> params, double eps = 1e-4,
                                       int64_t max_probes_per_param = -1,
                                       ssmrl::Rng* probe_rng = nullptr) {
    auto loss = make_loss();
    for (auto& p : params) p.zero_grad();
    ssmrl::backward(loss);

    std::vector<std::vector<double>> analytic;
    for (auto& p : params) {
        std::vector<double> g(size_t(p.size()), 0.0);
        if (p.has_grad())
            for (size_t i = 0; i < g.size(); ++i) g[i] = double(p.grad()[i]);
        analytic.push_back(std::move(g));
    }

    GradCheckResult res;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        auto& p = params[pi];
        std::vector<int64_t> probes;
        if (max_probes_per_param > 0 && p.size() > max_probes_per_param && probe_rng) {
            std::uniform_int_distribution<int64_t> pick(0, p.size() - 1);
            for (int64_t k = 0; k < max_probes_per_param; ++k) probes.push_back(pick(*probe_rng));
        } else {
            for (int64_t i = 0; i < p.size(); ++i) probes.push_back(i);
        }
        for (int64_t i : probes) {
            double orig = double(p.data()[i]);
            double fd;
            {
                ssmrl::NoGrad ng;
                p.data()[i] = orig + eps;
                double up = double(make_loss().item());
                p.data()[i] = orig - eps;
                double dn = double(make_loss().item());
                p.data()[i] = orig;
                fd = (up - dn) / (2.0 * eps);
            }
            double a = analytic[pi][size_t(i)];
            double denom = std::max({std::fabs(a), std::fabs(fd), 1e-6});
            double rel = std::fabs(a - fd) / denom;
            res.max_rel_err = std::max(res.max_rel_err, rel);
            ++res.checked;
        }
    }
    return res;
}

inline double max_abs_diff(const ssmrl::TensorT<double>& a, const ssmrl::TensorT<double>& b) {
    double m = 0;
    for (int64_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::fabs(a.data()[i] - b.data()[i]));
    return m;
}

template <class S>
double max_abs_diff_t(const ssmrl::TensorT<S>& a, const ssmrl::TensorT<S>& b) {
    double m = 0;
    for (int64_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::fabs(double(a.data()[i]) - double(b.data()[i])));
    return m;
}

}  // namespace testutil
