#include "toc/sr.hpp"

#include <cmath>
#include <cstring>

#include "toc/ops.hpp"

namespace toc {

namespace {

// Keys-style cubic kernel, a = -0.5.
float cubic(float x) {
    x = std::fabs(x);
    if (x < 1.0f) return 1.5f * x * x * x - 2.5f * x * x + 1.0f;
    if (x < 2.0f) return -0.5f * x * x * x + 2.5f * x * x - 4.0f * x + 2.0f;
    return 0.0f;
}

int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

// Separable bicubic along one axis; src/dst are [len]-strided views handled
// by the caller. Weights are renormalized so constants map to constants.
void resample_axis(const float* src, int n_src, float* dst, int n_dst) {
    float scale = (float)n_src / (float)n_dst;
    for (int i = 0; i < n_dst; ++i) {
        float center = (i + 0.5f) * scale - 0.5f;
        int base = (int)std::floor(center) - 1;
        float acc = 0.0f, wsum = 0.0f;
        for (int k = 0; k < 4; ++k) {
            int idx = base + k;
            float w = cubic((center - idx) / (scale > 1.0f ? scale : 1.0f));
            acc += w * src[clampi(idx, 0, n_src - 1)];
            wsum += w;
        }
        dst[i] = acc / wsum;
    }
}

Tensor unsq(const Tensor& x) {  // [C,H,W] -> [1,C,H,W]
    std::vector<int> sh{1};
    for (int d : x.shape()) sh.push_back(d);
    return Tensor::from_data(sh, x.data());
}

Tensor squeeze0(const Tensor& x) {  // [1,...] -> [...]
    std::vector<int> sh(x.shape().begin() + 1, x.shape().end());
    return Tensor::from_data(sh, x.data());
}

// LR image (4D) -> conditioning latent at HR resolution
Tensor encode_cond(const Vae& vae, const Tensor& x_l, int s) {
    return vae.encode_scaled(upsample(x_l, s));
}

}  // namespace

Tensor bicubic_resize(const Tensor& x, int out_h, int out_w) {
    const auto& sh = x.shape();
    check(sh.size() == 4, Error::Kind::Shape, "bicubic_resize: expected [N,C,H,W]");
    int n = sh[0], c = sh[1], h = sh[2], w = sh[3];
    NoGrad ng;
    Tensor mid = Tensor::zeros({n, c, h, out_w});
    std::vector<float> row_in(w), row_out(out_w);
    for (int i = 0; i < n * c * h; ++i) {
        std::memcpy(row_in.data(), x.data().data() + (size_t)i * w, w * sizeof(float));
        resample_axis(row_in.data(), w, row_out.data(), out_w);
        std::memcpy(mid.data().data() + (size_t)i * out_w, row_out.data(), out_w * sizeof(float));
    }
    Tensor out = Tensor::zeros({n, c, out_h, out_w});
    std::vector<float> col_in(h), col_out(out_h);
    for (int img = 0; img < n * c; ++img)
        for (int j = 0; j < out_w; ++j) {
            for (int i = 0; i < h; ++i) col_in[i] = mid.data()[((size_t)img * h + i) * out_w + j];
            resample_axis(col_in.data(), h, col_out.data(), out_h);
            for (int i = 0; i < out_h; ++i)
                out.data()[((size_t)img * out_h + i) * out_w + j] = col_out[i];
        }
    return out;
}

Tensor degrade(const Tensor& x_h, int s) {
    const auto& sh = x_h.shape();
    check(sh.size() == 4, Error::Kind::Shape, "degrade: expected [N,C,H,W]");
    check(sh[2] % s == 0 && sh[3] % s == 0, Error::Kind::InvalidArg,
          "degrade: image size not divisible by scale");
    if (s == 1) return x_h;
    return bicubic_resize(x_h, sh[2] / s, sh[3] / s);
}

Tensor upsample(const Tensor& x_l, int s) {
    const auto& sh = x_l.shape();
    check(sh.size() == 4, Error::Kind::Shape, "upsample: expected [N,C,H,W]");
    if (s == 1) return x_l;
    return bicubic_resize(x_l, sh[2] * s, sh[3] * s);
}

double psnr(const Tensor& x, const Tensor& y) {
    check(same_shape(x, y), Error::Kind::Shape, "psnr: shape mismatch");
    double acc = 0.0;
    for (int64_t i = 0; i < x.numel(); ++i) {
        double d = (double)x.data()[i] - (double)y.data()[i];
        acc += d * d;
    }
    double m = acc / (double)x.numel();
    if (m <= 0.0) return 100.0;
    return std::min(100.0, 10.0 * std::log10(1.0 / m));
}

double ssim(const Tensor& x, const Tensor& y) {
    check(same_shape(x, y), Error::Kind::Shape, "ssim: shape mismatch");
    const auto& sh = x.shape();
    check(sh.size() == 4, Error::Kind::Shape, "ssim: expected [N,C,H,W]");
    int n = sh[0], c = sh[1], h = sh[2], w = sh[3];

    constexpr int R = 5;  // 11x11 window
    float win[2 * R + 1];
    float wsum = 0.0f;
    for (int i = -R; i <= R; ++i) {
        win[i + R] = std::exp(-(float)(i * i) / (2.0f * 1.5f * 1.5f));
        wsum += win[i + R];
    }
    for (float& v : win) v /= wsum;

    constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    double total = 0.0;
    int64_t count = 0;
    auto at = [&](const Tensor& t, int img, int i, int j) {
        return (double)t.data()[((size_t)img * h + clampi(i, 0, h - 1)) * w + clampi(j, 0, w - 1)];
    };
    for (int img = 0; img < n * c; ++img)
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) {
                double mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
                for (int di = -R; di <= R; ++di)
                    for (int dj = -R; dj <= R; ++dj) {
                        double wgt = (double)win[di + R] * win[dj + R];
                        double a = at(x, img, i + di, j + dj);
                        double b = at(y, img, i + di, j + dj);
                        mx += wgt * a;
                        my += wgt * b;
                        mxx += wgt * a * a;
                        myy += wgt * b * b;
                        mxy += wgt * a * b;
                    }
                double vx = mxx - mx * mx, vy = myy - my * my, cov = mxy - mx * my;
                double s = ((2 * mx * my + c1) * (2 * cov + c2)) /
                           ((mx * mx + my * my + c1) * (vx + vy + c2));
                total += s;
                ++count;
            }
    return total / (double)count;
}

TrainCurve train_sr(UNet& model, const Vae& vae, const NoiseSchedule& sched,
                    const std::vector<Tensor>& hr_images, const SrTrainConfig& tc) {
    check(model.config().conditioned, Error::Kind::InvalidArg,
          "train_sr: model must be widened for conditioning");
    check(!hr_images.empty(), Error::Kind::InvalidArg, "train_sr: empty dataset");
    Rng rng(tc.seed);
    ParamStore params = model.all_params();
    AdamState adam;
    adam.lr = tc.lr;
    TrainCurve curve;

    // conditioning latents are fixed per image; precompute once
    std::vector<Tensor> z_h, z_l;
    {
        NoGrad ng;
        for (const auto& x : hr_images) {
            Tensor xb = x.shape().size() == 3 ? unsq(x) : x;
            z_h.push_back(squeeze0(vae.encode_scaled(xb)));
            z_l.push_back(squeeze0(encode_cond(vae, degrade(xb, tc.scale), tc.scale)));
        }
    }

    for (int step = 0; step < tc.steps; ++step) {
        std::vector<int> idx(tc.batch);
        for (int& i : idx) i = rng.uniform_int((int)hr_images.size());
        Tensor z = stack_batch(z_h, idx);
        Tensor cond = stack_batch(z_l, idx);
        std::vector<int> t(tc.batch);
        for (int& v : t) v = 1 + rng.uniform_int(sched.T);
        Tensor eps = Tensor::randn(z.shape(), rng);

        Tensor loss = denoise_loss(model, sched, z, t, eps, &cond);
        float lv = loss.scalar();
        if (!std::isfinite(lv)) fail(Error::Kind::Numeric, "train_sr: non-finite loss");
        if (step == 0) curve.first_loss = lv;
        curve.final_loss = lv;
        if (tc.log_every > 0 && step % tc.log_every == 0) curve.logged.push_back(lv);

        params.zero_grad();
        backward(loss);
        adam_step(params, adam);
    }
    return curve;
}

TrainCurve distill_one_step(UNet& student, const UNet& teacher, const Vae& vae,
                            const NoiseSchedule& sched, const std::vector<Tensor>& hr_images,
                            const DistillConfig& dc) {
    check(student.config().conditioned && teacher.config().conditioned, Error::Kind::InvalidArg,
          "distill_one_step: both models must be conditioned");
    check(sched.T % dc.k_teacher == 0, Error::Kind::InvalidArg,
          "distill_one_step: k_teacher must divide T");
    Rng rng(dc.seed);
    ParamStore params = student.all_params();
    AdamState adam;
    adam.lr = dc.lr;
    TrainCurve curve;

    std::vector<Tensor> z_l;
    {
        NoGrad ng;
        for (const auto& x : hr_images) {
            Tensor xb = x.shape().size() == 3 ? unsq(x) : x;
            z_l.push_back(squeeze0(encode_cond(vae, degrade(xb, dc.scale), dc.scale)));
        }
    }
    float sab = std::sqrt(sched.ab(sched.T));
    float snab = std::sqrt(1.0f - sched.ab(sched.T));

    for (int step = 0; step < dc.steps; ++step) {
        std::vector<int> idx(dc.batch);
        for (int& i : idx) i = rng.uniform_int((int)hr_images.size());
        Tensor cond = stack_batch(z_l, idx);
        auto zs = cond.shape();
        Tensor z_T = Tensor::randn(zs, rng);

        Tensor target;
        {
            NoGrad ng;
            target = ddim_sample(teacher, sched, z_T, &cond, dc.k_teacher).detach();
        }
        // student's one-step x0 prediction at t = T
        Tensor eps_hat = student.forward(z_T, std::vector<int>(zs[0], sched.T), &cond);
        Tensor x0 = clamp(scale(sub(z_T, scale(eps_hat, snab)), 1.0f / sab), -kX0Clamp, kX0Clamp);
        Tensor loss = mse(x0, target);
        float lv = loss.scalar();
        if (!std::isfinite(lv)) fail(Error::Kind::Numeric, "distill_one_step: non-finite loss");
        if (step == 0) curve.first_loss = lv;
        curve.final_loss = lv;
        if (dc.log_every > 0 && step % dc.log_every == 0) curve.logged.push_back(lv);

        params.zero_grad();
        backward(loss);
        adam_step(params, adam);
    }
    return curve;
}

Tensor one_step_infer(const UNet& generator, const Vae& vae, const NoiseSchedule& sched,
                      const Tensor& x_l, int s, uint64_t seed) {
    NoGrad ng;
    Rng rng(seed);
    Tensor cond = encode_cond(vae, x_l, s);
    Tensor z_T = Tensor::randn(cond.shape(), rng);
    float sab = std::sqrt(sched.ab(sched.T));
    float snab = std::sqrt(1.0f - sched.ab(sched.T));
    Tensor eps_hat = generator.forward(z_T, std::vector<int>(cond.shape()[0], sched.T), &cond);
    Tensor z0 = clamp(scale(sub(z_T, scale(eps_hat, snab)), 1.0f / sab), -kX0Clamp, kX0Clamp);
    return vae.decode_scaled(z0);
}

Tensor k_step_infer(const UNet& model, const Vae& vae, const NoiseSchedule& sched,
                    const Tensor& x_l, int s, int steps, uint64_t seed) {
    NoGrad ng;
    Rng rng(seed);
    Tensor cond = encode_cond(vae, x_l, s);
    Tensor z_T = Tensor::randn(cond.shape(), rng);
    Tensor z0 = ddim_sample(model, sched, z_T, &cond, steps);
    return vae.decode_scaled(z0);
}

}  // namespace toc
