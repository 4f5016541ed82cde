#pragma once

#include <memory>

#include "toc/optim.hpp"
#include "toc/ops.hpp"

namespace toc {

struct VaeConfig {
    int latent_channels = 16;  // 4 or 16
    int spatial_factor = 4;    // power of 2
    int width = 24;
    float lambda_lat = 1.0f;
    float lambda_rec = 1.0f;
    float kl_weight = 1e-6f;
    uint64_t seed = 1;
};

// Convolutional encoder/decoder pair. encode() yields mean and log-variance
// heads; latent shape is [N, C, H/f, W/f].
class Vae {
public:
    explicit Vae(const VaeConfig& cfg);

    struct Moments {
        Tensor mean, logvar;
    };
    Moments encode(const Tensor& x) const;
    Tensor sample(const Moments& m, Rng& rng) const;  // reparameterized
    Tensor decode(const Tensor& z) const;

    // Deterministic latent (posterior mean), no taping.
    Tensor encode_mean(const Tensor& x) const;

    // Diffusion operates on unit-scale latents: encode_scaled divides the
    // posterior mean by latent_scale, decode_scaled multiplies back before
    // decoding. latent_scale is the latent std measured after training.
    Tensor encode_scaled(const Tensor& x) const;
    Tensor decode_scaled(const Tensor& z) const;
    float latent_scale = 1.0f;

    const VaeConfig& config() const { return cfg_; }
    ParamStore& encoder_params() { return enc_; }
    ParamStore& decoder_params() { return dec_; }
    ParamStore all_params() const;

    std::shared_ptr<Vae> clone() const;

private:
    VaeConfig cfg_;
    int levels_;  // log2(spatial_factor)
    ParamStore enc_, dec_;
    // Encoder: stem conv, then per-level stride-2 conv + gn; head conv to 2C.
    std::vector<Tensor> ew_, eb_, eg_, ebt_;
    // Decoder: stem conv from C, per-level transposed conv + gn, output conv.
    std::vector<Tensor> dw_, db_, dg_, dbt_;
    std::vector<int> enc_ch_, dec_ch_;
};

struct VaeTrainConfig {
    int steps = 2000;
    int batch = 16;
    float lr = 2e-3f;
    uint64_t seed = 7;
    int log_every = 100;
};

struct VaeTrainResult {
    float first_loss = 0.0f, final_loss = 0.0f;
    float first_rec_l1 = 0.0f, final_rec_l1 = 0.0f;
    float first_lat = 0.0f, final_lat = 0.0f;  // distillation term, when present
};

// Plain VAE training: l1 reconstruction + tiny KL.
VaeTrainResult train_vae(Vae& vae, const std::vector<Tensor>& images, const VaeTrainConfig& tc);

// Latent distillation: lambda_lat ||z_s - z_t||^2 + lambda_rec ||x - D(z_s)||_1.
// The teacher is read-only; latent channel counts must agree.
VaeTrainResult distill_vae(Vae& student, const Vae& teacher, const std::vector<Tensor>& images,
                           const VaeTrainConfig& tc);

}  // namespace toc
