#pragma once

// Central finite-difference oracle for the autodiff kernels. Builds a
// scalar loss  sum(w .* f(inputs))  with fixed random weights, compares
// every input gradient against (f(x+h) - f(x-h)) / 2h.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "toc/ops.hpp"

namespace toc::testing {

struct GradReport {
    double max_rel = 0.0;
    std::string worst;  // "input_k[i]"
};

inline double rel_err(double a, double b) {
    return std::fabs(a - b) / std::max({1.0, std::fabs(a), std::fabs(b)});
}

// fn maps the inputs to one output tensor. All inputs get requires_grad.
inline GradReport check_grad(const std::function<Tensor(std::vector<Tensor>&)>& fn,
                             std::vector<Tensor> inputs, uint64_t seed, double h = 1e-3) {
    for (auto& t : inputs) t.set_requires_grad(true);

    Tensor out = fn(inputs);
    Rng wrng(seed ^ 0x9e3779b97f4a7c15ull);
    std::vector<float> w((size_t)out.numel());
    for (auto& v : w) v = (float)(wrng.uniform() * 2.0 - 1.0);

    auto weighted = [&](const Tensor& o) {
        double s = 0.0;
        for (int64_t i = 0; i < o.numel(); ++i) s += (double)w[(size_t)i] * o.data()[(size_t)i];
        return s;
    };

    Tensor wt = Tensor::from_data(out.shape(), w);
    Tensor loss = sum_all(mul(out, wt));
    for (auto& t : inputs) t.zero_grad();
    backward(loss);

    GradReport rep;
    for (size_t k = 0; k < inputs.size(); ++k) {
        Tensor& x = inputs[k];
        for (int64_t i = 0; i < x.numel(); ++i) {
            float saved = x.data()[(size_t)i];
            double fd;
            {
                NoGrad ng;
                x.data()[(size_t)i] = saved + (float)h;
                double up = weighted(fn(inputs));
                x.data()[(size_t)i] = saved - (float)h;
                double dn = weighted(fn(inputs));
                x.data()[(size_t)i] = saved;
                fd = (up - dn) / (2.0 * h);
            }
            double an = x.grad()[(size_t)i];
            double e = rel_err(an, fd);
            if (e > rep.max_rel) {
                rep.max_rel = e;
                rep.worst = "input" + std::to_string(k) + "[" + std::to_string(i) + "]";
            }
        }
    }
    return rep;
}

// Runs the full kernel battery over `seeds` seeds; returns worst error seen.
double kernel_battery_max_err(int seeds);

}  // namespace toc::testing
