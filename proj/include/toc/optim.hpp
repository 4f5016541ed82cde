#pragma once

#include <string>
#include <vector>

#include "toc/tensor.hpp"

namespace toc {

// Named trainable tensors, kept in registration order for deterministic
// optimizer sweeps and checkpointing.
struct ParamStore {
    std::vector<std::pair<std::string, Tensor>> params;

    Tensor add(const std::string& name, Tensor t) {
        t.set_requires_grad(true);
        params.emplace_back(name, t);
        return t;
    }

    void absorb(const ParamStore& other, const std::string& prefix) {
        for (const auto& [name, t] : other.params) params.emplace_back(prefix + name, t);
    }

    int64_t count() const {
        int64_t n = 0;
        for (const auto& [name, t] : params) n += t.numel();
        return n;
    }

    void zero_grad() const {
        for (const auto& [name, t] : params) t.zero_grad();
    }

    Tensor find(const std::string& name) const {
        for (const auto& [n, t] : params)
            if (n == name) return t;
        fail(Error::Kind::InvalidArg, "ParamStore: no parameter named " + name);
    }
};

struct AdamState {
    int64_t step = 0;
    float lr = 1e-3f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps_stab = 1e-8f;
    // One (m, v) pair per parameter tensor, lazily sized.
    std::vector<std::vector<float>> m, v;
};

// Standard bias-corrected Adam over the store's gradients. Throws on
// NaN/Inf gradients, naming the offending parameter.
void adam_step(ParamStore& store, AdamState& state);

}  // namespace toc
