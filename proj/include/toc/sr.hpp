#pragma once

#include "toc/diffusion.hpp"
#include "toc/vae.hpp"

namespace toc {

// Bicubic resampling (a = -0.5, edge replication) on [N,C,H,W] images.
Tensor bicubic_resize(const Tensor& x, int out_h, int out_w);
Tensor degrade(const Tensor& x_h, int s);   // HR -> LR
Tensor upsample(const Tensor& x_l, int s);  // LR -> HR size

// Reference metrics on [0,1] images. psnr caps at 100 dB for identical
// inputs; ssim uses an 11x11 Gaussian window (sigma 1.5), standard
// constants.
double psnr(const Tensor& x, const Tensor& y);
double ssim(const Tensor& x, const Tensor& y);

struct SrTrainConfig {
    int steps = 600;
    int batch = 8;
    float lr = 1e-3f;
    int scale = 2;
    uint64_t seed = 31;
    int log_every = 50;
};

struct TrainCurve {
    float first_loss = 0.0f, final_loss = 0.0f;
    std::vector<float> logged;
};

// Conditional denoiser training on (HR, LR) latents: z_l enters via channel
// concatenation at the input conv. The model must already be widened for
// conditioning.
TrainCurve train_sr(UNet& model, const Vae& vae, const NoiseSchedule& sched,
                    const std::vector<Tensor>& hr_images, const SrTrainConfig& tc);

// One-step regression onto the frozen teacher's K-step DDIM latents.
// The student shares topology with the teacher and starts from its weights.
struct DistillConfig {
    int steps = 400;
    int batch = 8;
    float lr = 1e-3f;
    int k_teacher = 8;
    int scale = 2;
    uint64_t seed = 37;
    int log_every = 50;
};

TrainCurve distill_one_step(UNet& student, const UNet& teacher, const Vae& vae,
                            const NoiseSchedule& sched, const std::vector<Tensor>& hr_images,
                            const DistillConfig& dc);

// x_l -> decoded HR estimate through the one-step generator; exactly one
// denoiser forward per call.
Tensor one_step_infer(const UNet& generator, const Vae& vae, const NoiseSchedule& sched,
                      const Tensor& x_l, int s, uint64_t seed);

// Teacher path for comparison: K-step DDIM conditioned on z_l.
Tensor k_step_infer(const UNet& model, const Vae& vae, const NoiseSchedule& sched,
                    const Tensor& x_l, int s, int steps, uint64_t seed);

}  // namespace toc
