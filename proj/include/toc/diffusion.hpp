#pragma once

#include "toc/backbone.hpp"

namespace toc {

// Linear-beta DDPM schedule; alpha_bar is the cumulative product that
// defines the forward marginal z_t = sqrt(ab_t) z + sqrt(1-ab_t) eps.
struct NoiseSchedule {
    int T = 200;
    std::vector<float> beta, alpha, alpha_bar;

    explicit NoiseSchedule(int T = 200, float beta_start = 1e-4f, float beta_end = 0.02f);

    // alpha_bar indexed by t in [0, T], with ab(0) = 1.
    float ab(int t) const;
};

// Closed-form forward noising; no gradient taping.
Tensor q_sample(const NoiseSchedule& sched, const Tensor& z, int t, const Tensor& eps);

// mse(eps, model(z_t, t, cond)); per-sample timesteps.
Tensor denoise_loss(const UNet& model, const NoiseSchedule& sched, const Tensor& z,
                    const std::vector<int>& t, const Tensor& eps, const Tensor* cond);

// Latents are normalized to unit scale before diffusion, so every
// intermediate x0 estimate is clamped to this range (the usual
// clip-denoised stabilizer): at high t the x0 extraction divides the eps
// error by sqrt(ab) and would otherwise blow up the trajectory.
inline constexpr float kX0Clamp = 3.0f;

// Deterministic DDIM (eta = 0) over a uniform K-step sub-sequence, with
// clamped per-step x0 estimates.
Tensor ddim_sample(const UNet& model, const NoiseSchedule& sched, const Tensor& z_T,
                   const Tensor* cond, int steps);

}  // namespace toc
