#include "toc/vae.hpp"

#include <cmath>

#include "toc/blocks.hpp"

namespace toc {

namespace {
constexpr int kGnGroups = 4;

int int_log2(int v) {
    int l = 0;
    while ((1 << l) < v) ++l;
    return l;
}
}  // namespace

Vae::Vae(const VaeConfig& cfg) : cfg_(cfg) {
    check(cfg.latent_channels == 4 || cfg.latent_channels == 16, Error::Kind::InvalidArg,
          "Vae: latent_channels must be 4 or 16");
    check(cfg.spatial_factor >= 2 && (cfg.spatial_factor & (cfg.spatial_factor - 1)) == 0,
          Error::Kind::InvalidArg, "Vae: spatial_factor must be a power of 2");
    check(cfg.width >= 4 && cfg.width % 4 == 0, Error::Kind::InvalidArg,
          "Vae: width must be a positive multiple of 4");
    levels_ = int_log2(cfg.spatial_factor);
    int w = cfg.width, c = cfg.latent_channels;
    Rng rng(cfg.seed);
    Rng erng = rng.split("vae_enc"), drng = rng.split("vae_dec");

    enc_ch_ = {w};
    for (int l = 0; l < levels_; ++l) enc_ch_.push_back(2 * w);
    // stem
    ew_.push_back(enc_.add("e_stem_w", conv_weight(w, 3, 3, erng)));
    eb_.push_back(enc_.add("e_stem_b", Tensor::zeros({w})));
    for (int l = 0; l < levels_; ++l) {
        std::string p = "e" + std::to_string(l) + "_";
        eg_.push_back(enc_.add(p + "gn_g", Tensor::full({enc_ch_[static_cast<size_t>(l)]}, 1.0f)));
        ebt_.push_back(enc_.add(p + "gn_b", Tensor::zeros({enc_ch_[static_cast<size_t>(l)]})));
        ew_.push_back(enc_.add(
            p + "w", conv_weight(enc_ch_[static_cast<size_t>(l + 1)],
                                 enc_ch_[static_cast<size_t>(l)], 3, erng)));
        eb_.push_back(enc_.add(p + "b", Tensor::zeros({enc_ch_[static_cast<size_t>(l + 1)]})));
    }
    int top = enc_ch_.back();
    eg_.push_back(enc_.add("e_head_gn_g", Tensor::full({top}, 1.0f)));
    ebt_.push_back(enc_.add("e_head_gn_b", Tensor::zeros({top})));
    ew_.push_back(enc_.add("e_head_w", conv_weight(2 * c, top, 3, erng)));
    eb_.push_back(enc_.add("e_head_b", Tensor::zeros({2 * c})));

    dec_ch_ = {2 * w};
    for (int l = 0; l < levels_; ++l) dec_ch_.push_back(l + 1 == levels_ ? w : 2 * w);
    dw_.push_back(dec_.add("d_stem_w", conv_weight(2 * w, c, 3, drng)));
    db_.push_back(dec_.add("d_stem_b", Tensor::zeros({2 * w})));
    for (int l = 0; l < levels_; ++l) {
        std::string p = "d" + std::to_string(l) + "_";
        dg_.push_back(dec_.add(p + "gn_g", Tensor::full({dec_ch_[static_cast<size_t>(l)]}, 1.0f)));
        dbt_.push_back(dec_.add(p + "gn_b", Tensor::zeros({dec_ch_[static_cast<size_t>(l)]})));
        int ci = dec_ch_[static_cast<size_t>(l)], co = dec_ch_[static_cast<size_t>(l + 1)];
        float std = std::sqrt(2.0f / (static_cast<float>(ci) * 16));
        dw_.push_back(dec_.add(p + "w", Tensor::randn({ci, co, 4, 4}, drng, std)));
        db_.push_back(dec_.add(p + "b", Tensor::zeros({co})));
    }
    dg_.push_back(dec_.add("d_out_gn_g", Tensor::full({w}, 1.0f)));
    dbt_.push_back(dec_.add("d_out_gn_b", Tensor::zeros({w})));
    dw_.push_back(dec_.add("d_out_w", conv_weight(3, w, 3, drng)));
    db_.push_back(dec_.add("d_out_b", Tensor::zeros({3})));
}

Vae::Moments Vae::encode(const Tensor& x) const {
    check(x.shape().size() == 4 && x.dim(1) == 3, Error::Kind::Shape,
          "Vae::encode: expected [N,3,H,W], got " + shape_str(x.shape()));
    check(x.dim(2) % cfg_.spatial_factor == 0 && x.dim(3) % cfg_.spatial_factor == 0,
          Error::Kind::Shape, "Vae::encode: spatial extents must be divisible by the factor");
    Tensor h = conv2d(x, ew_[0], eb_[0], 1);
    for (int l = 0; l < levels_; ++l)
        h = conv2d(silu(group_norm(h, eg_[static_cast<size_t>(l)], ebt_[static_cast<size_t>(l)],
                                   kGnGroups)),
                   ew_[static_cast<size_t>(l + 1)], eb_[static_cast<size_t>(l + 1)], 2);
    h = conv2d(
        silu(group_norm(h, eg_[static_cast<size_t>(levels_)], ebt_[static_cast<size_t>(levels_)],
                        kGnGroups)),
        ew_[static_cast<size_t>(levels_ + 1)], eb_[static_cast<size_t>(levels_ + 1)], 1);
    int c = cfg_.latent_channels;
    return {slice_channels(h, 0, c), slice_channels(h, c, 2 * c)};
}

Tensor Vae::sample(const Moments& m, Rng& rng) const {
    Tensor eps = Tensor::randn(m.mean.shape(), rng);
    return add(m.mean, mul(expop(scale(m.logvar, 0.5f)), eps));
}

Tensor Vae::decode(const Tensor& z) const {
    check(z.shape().size() == 4 && z.dim(1) == cfg_.latent_channels, Error::Kind::Shape,
          "Vae::decode: expected [N," + std::to_string(cfg_.latent_channels) + ",h,w], got " +
              shape_str(z.shape()));
    Tensor h = conv2d(z, dw_[0], db_[0], 1);
    for (int l = 0; l < levels_; ++l)
        h = conv_transpose2d(silu(group_norm(h, dg_[static_cast<size_t>(l)],
                                             dbt_[static_cast<size_t>(l)], kGnGroups)),
                             dw_[static_cast<size_t>(l + 1)], db_[static_cast<size_t>(l + 1)]);
    h = conv2d(
        silu(group_norm(h, dg_[static_cast<size_t>(levels_)], dbt_[static_cast<size_t>(levels_)],
                        kGnGroups)),
        dw_[static_cast<size_t>(levels_ + 1)], db_[static_cast<size_t>(levels_ + 1)], 1);
    return h;
}

Tensor Vae::encode_mean(const Tensor& x) const {
    NoGrad ng;
    return encode(x).mean.detach();
}

Tensor Vae::encode_scaled(const Tensor& x) const {
    NoGrad ng;
    return scale(encode_mean(x), 1.0f / latent_scale).detach();
}

Tensor Vae::decode_scaled(const Tensor& z) const {
    return decode(scale(z, latent_scale));
}

ParamStore Vae::all_params() const {
    ParamStore all;
    all.absorb(enc_, "enc.");
    all.absorb(dec_, "dec.");
    return all;
}

std::shared_ptr<Vae> Vae::clone() const {
    auto copy = std::make_shared<Vae>(cfg_);
    ParamStore src = all_params(), dst = copy->all_params();
    for (size_t i = 0; i < src.params.size(); ++i)
        dst.params[i].second.data() = src.params[i].second.data();
    return copy;
}

namespace {

Tensor kl_term(const Vae::Moments& m) {
    // 0.5 * mean(mu^2 + exp(lv) - 1 - lv)
    Tensor t = sub(sub(add(mul(m.mean, m.mean), expop(m.logvar)), Tensor::full(m.mean.shape(), 1.0f)),
                   m.logvar);
    return scale(mean_all(t), 0.5f);
}

float eval_rec_l1(const Vae& vae, const Tensor& probe) {
    NoGrad ng;
    auto m = vae.encode(probe);
    return l1(probe, vae.decode(m.mean)).scalar();
}

float eval_lat_mse(const Vae& student, const Vae& teacher, const Tensor& probe) {
    NoGrad ng;
    return mse(student.encode(probe).mean, teacher.encode(probe).mean).scalar();
}

}  // namespace

VaeTrainResult train_vae(Vae& vae, const std::vector<Tensor>& images, const VaeTrainConfig& tc) {
    check(!images.empty(), Error::Kind::InvalidArg, "train_vae: empty dataset");
    Rng rng(tc.seed);
    Rng batch_rng = rng.split("batches"), eps_rng = rng.split("reparam");
    ParamStore params = vae.all_params();
    AdamState adam;
    adam.lr = tc.lr;
    std::vector<int> probe_idx;
    for (int i = 0; i < std::min<int>(16, static_cast<int>(images.size())); ++i)
        probe_idx.push_back(i);
    Tensor probe = stack_batch(images, probe_idx);

    VaeTrainResult res;
    res.first_rec_l1 = eval_rec_l1(vae, probe);
    for (int step = 0; step < tc.steps; ++step) {
        std::vector<int> idx(static_cast<size_t>(tc.batch));
        for (auto& i : idx) i = static_cast<int>(batch_rng.uniform_int(images.size()));
        Tensor x = stack_batch(images, idx);
        auto m = vae.encode(x);
        Tensor z = vae.sample(m, eps_rng);
        Tensor loss = add(l1(x, vae.decode(z)), scale(kl_term(m), vae.config().kl_weight));
        if (step == 0) res.first_loss = loss.scalar();
        res.final_loss = loss.scalar();
        if (!std::isfinite(res.final_loss))
            fail(Error::Kind::Numeric, "train_vae: loss diverged (NaN/Inf)");
        params.zero_grad();
        backward(loss);
        adam_step(params, adam);
    }
    res.final_rec_l1 = eval_rec_l1(vae, probe);
    return res;
}

VaeTrainResult distill_vae(Vae& student, const Vae& teacher, const std::vector<Tensor>& images,
                           const VaeTrainConfig& tc) {
    check(student.config().latent_channels == teacher.config().latent_channels,
          Error::Kind::InvalidArg,
          "distill_vae: student and teacher latent channel counts differ");
    check(!images.empty(), Error::Kind::InvalidArg, "distill_vae: empty dataset");
    Rng rng(tc.seed);
    Rng batch_rng = rng.split("batches"), eps_rng = rng.split("reparam");
    ParamStore params = student.all_params();
    AdamState adam;
    adam.lr = tc.lr;
    std::vector<int> probe_idx;
    for (int i = 0; i < std::min<int>(16, static_cast<int>(images.size())); ++i)
        probe_idx.push_back(i);
    Tensor probe = stack_batch(images, probe_idx);

    float lam_lat = student.config().lambda_lat;
    float lam_rec = student.config().lambda_rec;
    VaeTrainResult res;
    res.first_rec_l1 = eval_rec_l1(student, probe);
    res.first_lat = eval_lat_mse(student, teacher, probe);
    for (int step = 0; step < tc.steps; ++step) {
        std::vector<int> idx(static_cast<size_t>(tc.batch));
        for (auto& i : idx) i = static_cast<int>(batch_rng.uniform_int(images.size()));
        Tensor x = stack_batch(images, idx);
        Tensor z_teacher = teacher.encode_mean(x);
        auto m = student.encode(x);
        Tensor z = student.sample(m, eps_rng);
        // Latent term on posterior means; reconstruction on the sampled path
        // so lambda_lat = 0 degenerates to plain VAE training.
        Tensor loss = add(scale(l1(x, student.decode(z)), lam_rec),
                          scale(kl_term(m), student.config().kl_weight));
        if (lam_lat != 0.0f) loss = add(loss, scale(mse(m.mean, z_teacher), lam_lat));
        if (step == 0) res.first_loss = loss.scalar();
        res.final_loss = loss.scalar();
        if (!std::isfinite(res.final_loss))
            fail(Error::Kind::Numeric, "distill_vae: loss diverged (NaN/Inf)");
        params.zero_grad();
        backward(loss);
        adam_step(params, adam);
    }
    res.final_rec_l1 = eval_rec_l1(student, probe);
    res.final_lat = eval_lat_mse(student, teacher, probe);
    return res;
}

}  // namespace toc
