#include "toc/diffusion.hpp"

#include <cmath>

namespace toc {

NoiseSchedule::NoiseSchedule(int T, float beta_start, float beta_end) : T(T) {
    check(T >= 1, Error::Kind::InvalidArg, "NoiseSchedule: T must be >= 1");
    beta.resize(static_cast<size_t>(T));
    alpha.resize(static_cast<size_t>(T));
    alpha_bar.resize(static_cast<size_t>(T));
    double prod = 1.0;
    for (int i = 0; i < T; ++i) {
        double b = T == 1 ? beta_start
                          : beta_start + (beta_end - beta_start) * i / static_cast<double>(T - 1);
        beta[static_cast<size_t>(i)] = static_cast<float>(b);
        alpha[static_cast<size_t>(i)] = static_cast<float>(1.0 - b);
        prod *= 1.0 - b;
        alpha_bar[static_cast<size_t>(i)] = static_cast<float>(prod);
    }
}

float NoiseSchedule::ab(int t) const {
    check(t >= 0 && t <= T, Error::Kind::InvalidArg,
          "NoiseSchedule: t out of range [0," + std::to_string(T) + "]");
    return t == 0 ? 1.0f : alpha_bar[static_cast<size_t>(t - 1)];
}

Tensor q_sample(const NoiseSchedule& sched, const Tensor& z, int t, const Tensor& eps) {
    check(t >= 1 && t <= sched.T, Error::Kind::InvalidArg,
          "q_sample: t out of range [1," + std::to_string(sched.T) + "]");
    check(same_shape(z, eps), Error::Kind::Shape, "q_sample: eps must be shaped like z");
    float sab = std::sqrt(sched.ab(t));
    float somab = std::sqrt(1.0f - sched.ab(t));
    Tensor out = Tensor::zeros(z.shape());
    for (size_t i = 0; i < out.data().size(); ++i)
        out.data()[i] = sab * z.data()[i] + somab * eps.data()[i];
    return out;
}

Tensor denoise_loss(const UNet& model, const NoiseSchedule& sched, const Tensor& z,
                    const std::vector<int>& t, const Tensor& eps, const Tensor* cond) {
    check(t.size() == static_cast<size_t>(z.dim(0)), Error::Kind::InvalidArg,
          "denoise_loss: one timestep per sample");
    // Per-sample noising, batched back together.
    Tensor z_t = Tensor::zeros(z.shape());
    int64_t per = z.numel() / z.dim(0);
    for (int n = 0; n < z.dim(0); ++n) {
        float sab = std::sqrt(sched.ab(t[static_cast<size_t>(n)]));
        float somab = std::sqrt(1.0f - sched.ab(t[static_cast<size_t>(n)]));
        for (int64_t i = 0; i < per; ++i) {
            size_t idx = static_cast<size_t>(n * per + i);
            z_t.data()[idx] = sab * z.data()[idx] + somab * eps.data()[idx];
        }
    }
    Tensor pred = model.forward(z_t, t, cond);
    return mse(eps, pred);
}

Tensor ddim_sample(const UNet& model, const NoiseSchedule& sched, const Tensor& z_T,
                   const Tensor* cond, int steps) {
    check(steps >= 1 && steps <= sched.T, Error::Kind::InvalidArg,
          "ddim_sample: steps must be in [1,T]");
    check(sched.T % steps == 0, Error::Kind::InvalidArg,
          "ddim_sample: steps must divide T for a uniform sub-sequence");
    NoGrad ng;
    int stride = sched.T / steps;
    Tensor z = z_T.detach();
    int n = z.dim(0);
    for (int k = steps; k >= 1; --k) {
        int t = k * stride;
        int t_prev = (k - 1) * stride;
        std::vector<int> ts(static_cast<size_t>(n), t);
        Tensor eps_hat = model.forward(z, ts, cond);
        float ab_t = sched.ab(t), ab_p = sched.ab(t_prev);
        float c0 = 1.0f / std::sqrt(ab_t);
        float c1 = std::sqrt(1.0f - ab_t);
        float sp = std::sqrt(ab_p), sq = std::sqrt(1.0f - ab_p);
        Tensor next = Tensor::zeros(z.shape());
        for (size_t i = 0; i < next.data().size(); ++i) {
            float x0 = c0 * (z.data()[i] - c1 * eps_hat.data()[i]);
            x0 = std::min(kX0Clamp, std::max(-kX0Clamp, x0));
            next.data()[i] = sp * x0 + sq * eps_hat.data()[i];
        }
        z = next;
    }
    return z;
}

}  // namespace toc
