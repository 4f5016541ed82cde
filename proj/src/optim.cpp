#include "toc/optim.hpp"

#include <cmath>

namespace toc {

void adam_step(ParamStore& store, AdamState& state) {
    size_t np = store.params.size();
    if (state.m.size() != np) {
        state.m.assign(np, {});
        state.v.assign(np, {});
        for (size_t p = 0; p < np; ++p) {
            size_t n = store.params[p].second.data().size();
            state.m[p].assign(n, 0.0f);
            state.v[p].assign(n, 0.0f);
        }
    }
    state.step += 1;
    float bc1 = 1.0f - std::pow(state.beta1, static_cast<float>(state.step));
    float bc2 = 1.0f - std::pow(state.beta2, static_cast<float>(state.step));
    for (size_t p = 0; p < np; ++p) {
        auto& [name, t] = store.params[p];
        auto& data = t.data();
        auto& grad = t.grad();
        auto& m = state.m[p];
        auto& v = state.v[p];
        for (size_t i = 0; i < data.size(); ++i) {
            float g = grad[i];
            if (!std::isfinite(g))
                fail(Error::Kind::Numeric, "adam_step: non-finite gradient in " + name);
            m[i] = state.beta1 * m[i] + (1.0f - state.beta1) * g;
            v[i] = state.beta2 * v[i] + (1.0f - state.beta2) * g * g;
            float mhat = m[i] / bc1;
            float vhat = v[i] / bc2;
            data[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps_stab);
        }
    }
}

}  // namespace toc
