#include "toc/backbone.hpp"

#include <cmath>
#include <sstream>

namespace toc {

namespace {
constexpr int kGnGroups = 4;
}

std::string ArchVector::str() const {
    std::ostringstream os;
    for (size_t i = 0; i < a.size(); ++i) os << (i ? "-" : "") << a[i];
    return os.str();
}

std::vector<BlockKind> surrogate_library(StageRole role) {
    if (role == StageRole::Bottleneck)
        return {BlockKind::ResAttnRes, BlockKind::ResAttn, BlockKind::Res,
                BlockKind::AttnRes,    BlockKind::ResRes,  BlockKind::Pointwise};
    return {BlockKind::ResAttn, BlockKind::Res, BlockKind::ResHalf, BlockKind::PointwiseRes};
}

std::vector<StageSpec> UNet::stage_specs(int width) {
    check(width >= 8 && width % 8 == 0, Error::Kind::InvalidArg,
          "UNet: width must be a positive multiple of 8");
    int w = width;
    std::vector<StageSpec> specs = {
        {0, StageRole::Encoder, w, w, {}},          {1, StageRole::Encoder, w, 2 * w, {}},
        {2, StageRole::Encoder, 2 * w, 2 * w, {}},  {3, StageRole::Bottleneck, 2 * w, 2 * w, {}},
        {4, StageRole::Decoder, 4 * w, 2 * w, {}},  {5, StageRole::Decoder, 4 * w, w, {}},
        {6, StageRole::Decoder, 2 * w, w, {}},
    };
    for (auto& s : specs) s.library = surrogate_library(s.role);
    return specs;
}

std::pair<std::vector<int>, std::vector<int>> io_chains(IoVariant v) {
    switch (v) {
        case IoVariant::V1: return {{4}, {}};
        case IoVariant::V2: return {{}, {}};
        case IoVariant::V3: return {{8, 4}, {4, 8}};
    }
    fail(Error::Kind::InvalidArg, "unknown IoVariant");
}

std::shared_ptr<UNet::Fixed> UNet::make_fixed(const UNetConfig& cfg, Rng& rng) {
    auto f = std::make_shared<Fixed>();
    int w = cfg.width, e = cfg.emb_dim, c = cfg.latent_channels;
    int c_io_in = cfg.conditioned ? 2 * c : c;
    auto [in_chain, out_chain] = io_chains(cfg.io);

    std::vector<int> in_ch{c_io_in};
    for (int m : in_chain) in_ch.push_back(m);
    in_ch.push_back(w);
    for (size_t i = 0; i + 1 < in_ch.size(); ++i) {
        f->in_w.push_back(f->params.add("in_w" + std::to_string(i),
                                        conv_weight(in_ch[i + 1], in_ch[i], 3, rng)));
        f->in_b.push_back(f->params.add("in_b" + std::to_string(i), Tensor::zeros({in_ch[i + 1]})));
    }
    f->mlp_w1 = f->params.add("mlp_w1", linear_weight(e, e, rng));
    f->mlp_b1 = f->params.add("mlp_b1", Tensor::zeros({e}));
    f->mlp_w2 = f->params.add("mlp_w2", linear_weight(e, e, rng));
    f->mlp_b2 = f->params.add("mlp_b2", Tensor::zeros({e}));
    f->down0_w = f->params.add("down0_w", conv_weight(w, w, 3, rng));
    f->down0_b = f->params.add("down0_b", Tensor::zeros({w}));
    f->down1_w = f->params.add("down1_w", conv_weight(2 * w, 2 * w, 3, rng));
    f->down1_b = f->params.add("down1_b", Tensor::zeros({2 * w}));
    {
        float std0 = std::sqrt(2.0f / (2.0f * w * 16));
        f->up0_w = f->params.add("up0_w", Tensor::randn({2 * w, 2 * w, 4, 4}, rng, std0));
        f->up0_b = f->params.add("up0_b", Tensor::zeros({2 * w}));
        float std1 = std::sqrt(2.0f / (static_cast<float>(w) * 16));
        f->up1_w = f->params.add("up1_w", Tensor::randn({w, w, 4, 4}, rng, std1));
        f->up1_b = f->params.add("up1_b", Tensor::zeros({w}));
    }
    f->out_gn_g = f->params.add("out_gn_g", Tensor::full({w}, 1.0f));
    f->out_gn_b = f->params.add("out_gn_b", Tensor::zeros({w}));

    std::vector<int> out_ch{w};
    for (int m : out_chain) out_ch.push_back(m);
    out_ch.push_back(c);
    for (size_t i = 0; i + 1 < out_ch.size(); ++i) {
        f->out_w.push_back(f->params.add("out_w" + std::to_string(i),
                                         conv_weight(out_ch[i + 1], out_ch[i], 3, rng)));
        f->out_b.push_back(
            f->params.add("out_b" + std::to_string(i), Tensor::zeros({out_ch[i + 1]})));
    }
    return f;
}

int64_t UNet::fixed_param_count_for(const UNetConfig& cfg) {
    int w = cfg.width, e = cfg.emb_dim, c = cfg.latent_channels;
    int c_io_in = cfg.conditioned ? 2 * c : c;
    auto [in_chain, out_chain] = io_chains(cfg.io);
    int64_t n = 0;
    std::vector<int> in_ch{c_io_in};
    for (int m : in_chain) in_ch.push_back(m);
    in_ch.push_back(w);
    for (size_t i = 0; i + 1 < in_ch.size(); ++i)
        n += 9LL * in_ch[i] * in_ch[i + 1] + in_ch[i + 1];
    n += 2LL * (static_cast<int64_t>(e) * e + e);                // time MLP
    n += 9LL * w * w + w + 9LL * 4 * w * w + 2 * w;              // down convs
    n += 16LL * 4 * w * w + 2 * w + 16LL * w * w + w;            // up transposed convs
    n += 2LL * w;                                                // out group norm
    std::vector<int> out_ch{w};
    for (int m : out_chain) out_ch.push_back(m);
    out_ch.push_back(c);
    for (size_t i = 0; i + 1 < out_ch.size(); ++i)
        n += 9LL * out_ch[i] * out_ch[i + 1] + out_ch[i + 1];
    return n;
}

std::shared_ptr<UNet> UNet::build(const UNetConfig& cfg) {
    ArchVector arch;
    arch.a.assign(kStages, 0);
    return build_arch(cfg, arch);
}

std::shared_ptr<UNet> UNet::build_arch(const UNetConfig& cfg, const ArchVector& arch) {
    check(cfg.latent_channels == 4 || cfg.latent_channels == 16, Error::Kind::InvalidArg,
          "UNet: latent_channels must be 4 or 16");
    auto net = std::shared_ptr<UNet>(new UNet());
    net->cfg_ = cfg;
    net->specs_ = stage_specs(cfg.width);
    check(arch.a.size() == kStages, Error::Kind::InvalidArg, "ArchVector must have 7 entries");
    net->arch_ = arch;
    Rng rng(cfg.seed);
    Rng frng = rng.split("fixed");
    net->fixed_ = make_fixed(cfg, frng);
    for (int i = 0; i < kStages; ++i) {
        const auto& s = net->specs_[static_cast<size_t>(i)];
        int v = arch.a[static_cast<size_t>(i)];
        check(v >= 0 && v < static_cast<int>(s.library.size()), Error::Kind::InvalidArg,
              "ArchVector entry out of range at stage " + std::to_string(i));
        net->blocks_[static_cast<size_t>(i)] = std::make_shared<Block>(
            s.library[static_cast<size_t>(v)], s.c_in, s.c_out, cfg.emb_dim,
            rng.split("stage" + std::to_string(i)));
    }
    return net;
}

Tensor UNet::time_embedding(const std::vector<int>& t) const {
    int n = static_cast<int>(t.size());
    int e = cfg_.emb_dim;
    int half = e / 2;
    Tensor emb = Tensor::zeros({n, e});
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < half; ++k) {
            double freq = std::exp(-std::log(10000.0) * k / half);
            emb.data()[static_cast<size_t>(i) * e + k] =
                static_cast<float>(std::sin(t[static_cast<size_t>(i)] * freq));
            emb.data()[static_cast<size_t>(i) * e + half + k] =
                static_cast<float>(std::cos(t[static_cast<size_t>(i)] * freq));
        }
    return linear(silu(linear(emb, fixed_->mlp_w1, fixed_->mlp_b1)), fixed_->mlp_w2,
                  fixed_->mlp_b2);
}

Tensor UNet::forward(const Tensor& z, const std::vector<int>& t, const Tensor* cond,
                     const CaptureFn* capture) const {
    check(z.shape().size() == 4 && z.dim(1) == cfg_.latent_channels, Error::Kind::Shape,
          "UNet::forward: latent " + shape_str(z.shape()) + " must carry " +
              std::to_string(cfg_.latent_channels) + " channels");
    check(t.size() == static_cast<size_t>(z.dim(0)), Error::Kind::InvalidArg,
          "UNet::forward: one timestep per batch element");
    check(cfg_.conditioned == (cond != nullptr), Error::Kind::InvalidArg,
          cfg_.conditioned ? "UNet::forward: conditioning latent required"
                           : "UNet::forward: model is unconditional");
    ++forward_count;

    Tensor x = cond ? concat_channels(z, *cond) : z;
    for (size_t i = 0; i < fixed_->in_w.size(); ++i)
        x = conv2d(x, fixed_->in_w[i], fixed_->in_b[i], 1);
    Tensor emb = time_embedding(t);

    auto run_stage = [&](int i, const Tensor& in) {
        Tensor out = blocks_[static_cast<size_t>(i)]->forward(in, emb);
        if (capture) (*capture)(i, in, out, emb);
        return out;
    };

    Tensor s0 = run_stage(0, x);
    Tensor d0 = conv2d(s0, fixed_->down0_w, fixed_->down0_b, 2);
    Tensor s1 = run_stage(1, d0);
    Tensor d1 = conv2d(s1, fixed_->down1_w, fixed_->down1_b, 2);
    Tensor s2 = run_stage(2, d1);
    Tensor m = run_stage(3, s2);
    Tensor u = run_stage(4, concat_channels(m, s2));
    u = conv_transpose2d(u, fixed_->up0_w, fixed_->up0_b);
    u = run_stage(5, concat_channels(u, s1));
    u = conv_transpose2d(u, fixed_->up1_w, fixed_->up1_b);
    u = run_stage(6, concat_channels(u, s0));
    u = silu(group_norm(u, fixed_->out_gn_g, fixed_->out_gn_b, kGnGroups));
    for (size_t i = 0; i < fixed_->out_w.size(); ++i)
        u = conv2d(u, fixed_->out_w[i], fixed_->out_b[i], 1);
    return u;
}

ParamStore UNet::all_params() const {
    ParamStore all;
    all.absorb(fixed_->params, "fixed.");
    for (int i = 0; i < kStages; ++i)
        all.absorb(blocks_[static_cast<size_t>(i)]->params(),
                   "stage" + std::to_string(i) + ".v" +
                       std::to_string(arch_.a[static_cast<size_t>(i)]) + ".");
    return all;
}

std::shared_ptr<UNet> UNet::clone() const {
    auto copy = build_arch(cfg_, arch_);
    ParamStore src = all_params();
    ParamStore dst = copy->all_params();
    check(src.params.size() == dst.params.size(), Error::Kind::State, "clone: store mismatch");
    for (size_t i = 0; i < src.params.size(); ++i)
        dst.params[i].second.data() = src.params[i].second.data();
    return copy;
}

std::shared_ptr<UNet> UNet::adapt_io(const std::shared_ptr<UNet>& src, IoVariant variant,
                                     uint64_t seed) {
    check(src->cfg_.latent_channels == 4, Error::Kind::InvalidArg,
          "adapt_io: source must be a 4-channel model");
    auto net = std::shared_ptr<UNet>(new UNet());
    net->cfg_ = src->cfg_;
    net->cfg_.latent_channels = 16;
    net->cfg_.io = variant;
    net->cfg_.seed = seed;
    net->specs_ = src->specs_;
    net->arch_ = src->arch_;
    net->blocks_ = src->blocks_;

    Rng rng = Rng(seed).split("io_adapter");
    auto f = std::make_shared<Fixed>();
    int w = net->cfg_.width, c = 16;
    int c_io_in = net->cfg_.conditioned ? 2 * c : c;
    auto [in_chain, out_chain] = io_chains(variant);
    std::vector<int> in_ch{c_io_in};
    for (int m : in_chain) in_ch.push_back(m);
    in_ch.push_back(w);
    for (size_t i = 0; i + 1 < in_ch.size(); ++i) {
        f->in_w.push_back(f->params.add("in_w" + std::to_string(i),
                                        conv_weight(in_ch[i + 1], in_ch[i], 3, rng)));
        f->in_b.push_back(f->params.add("in_b" + std::to_string(i), Tensor::zeros({in_ch[i + 1]})));
    }
    // Interior weights shared with the source model, not copied.
    auto share = [&](const char* name, const Tensor& t) { return f->params.add(name, t); };
    f->mlp_w1 = share("mlp_w1", src->fixed_->mlp_w1);
    f->mlp_b1 = share("mlp_b1", src->fixed_->mlp_b1);
    f->mlp_w2 = share("mlp_w2", src->fixed_->mlp_w2);
    f->mlp_b2 = share("mlp_b2", src->fixed_->mlp_b2);
    f->down0_w = share("down0_w", src->fixed_->down0_w);
    f->down0_b = share("down0_b", src->fixed_->down0_b);
    f->down1_w = share("down1_w", src->fixed_->down1_w);
    f->down1_b = share("down1_b", src->fixed_->down1_b);
    f->up0_w = share("up0_w", src->fixed_->up0_w);
    f->up0_b = share("up0_b", src->fixed_->up0_b);
    f->up1_w = share("up1_w", src->fixed_->up1_w);
    f->up1_b = share("up1_b", src->fixed_->up1_b);
    f->out_gn_g = share("out_gn_g", src->fixed_->out_gn_g);
    f->out_gn_b = share("out_gn_b", src->fixed_->out_gn_b);
    std::vector<int> out_ch{w};
    for (int m : out_chain) out_ch.push_back(m);
    out_ch.push_back(c);
    for (size_t i = 0; i + 1 < out_ch.size(); ++i) {
        f->out_w.push_back(f->params.add("out_w" + std::to_string(i),
                                         conv_weight(out_ch[i + 1], out_ch[i], 3, rng)));
        f->out_b.push_back(
            f->params.add("out_b" + std::to_string(i), Tensor::zeros({out_ch[i + 1]})));
    }
    net->fixed_ = f;
    return net;
}

std::shared_ptr<UNet> UNet::widen_conditioning(const std::shared_ptr<UNet>& src, uint64_t seed) {
    check(!src->cfg_.conditioned, Error::Kind::InvalidArg,
          "widen_conditioning: source is already conditioned");
    auto net = src->clone();
    net->cfg_.conditioned = true;
    int c = net->cfg_.latent_channels;
    Rng rng = Rng(seed).split("cond_widen");
    const Tensor& old_w = net->fixed_->in_w[0];
    int co = old_w.dim(0), k = old_w.dim(2), ci = old_w.dim(1);
    Tensor neww = conv_weight(co, 2 * c, k, rng);
    check(ci == c, Error::Kind::State, "widen_conditioning: unexpected input conv shape");
    // Preserve the original first-C-channel weights.
    for (int o = 0; o < co; ++o)
        for (int i = 0; i < ci; ++i)
            for (int kk = 0; kk < k * k; ++kk)
                neww.data()[(static_cast<size_t>(o) * 2 * c + i) * k * k + kk] =
                    old_w.data()[(static_cast<size_t>(o) * ci + i) * k * k + kk];
    net->fixed_->in_w[0] = neww;
    // Swap the tensor registered in the param store as well.
    for (auto& [name, t] : net->fixed_->params.params)
        if (name == "in_w0") {
            neww.set_requires_grad(true);
            t = neww;
        }
    return net;
}

std::shared_ptr<UNet> UNet::assemble(
    const std::shared_ptr<UNet>& teacher,
    const std::map<std::pair<int, int>, std::shared_ptr<Block>>& calibrated,
    const ArchVector& arch) {
    check(arch.a.size() == kStages, Error::Kind::InvalidArg, "assemble: ArchVector must have 7 entries");
    auto net = std::shared_ptr<UNet>(new UNet());
    net->cfg_ = teacher->cfg_;
    net->specs_ = teacher->specs_;
    net->arch_ = arch;
    net->fixed_ = teacher->fixed_;
    for (int i = 0; i < kStages; ++i) {
        int v = arch.a[static_cast<size_t>(i)];
        const auto& s = net->specs_[static_cast<size_t>(i)];
        check(v >= 0 && v < static_cast<int>(s.library.size()), Error::Kind::InvalidArg,
              "assemble: variant " + std::to_string(v) + " out of range at stage " +
                  std::to_string(i));
        if (v == 0) {
            net->blocks_[static_cast<size_t>(i)] = teacher->blocks_[static_cast<size_t>(i)];
        } else {
            auto it = calibrated.find({i, v});
            check(it != calibrated.end(), Error::Kind::MissingDependency,
                  "assemble: no calibrated weights for stage " + std::to_string(i) +
                      " variant " + std::to_string(v));
            net->blocks_[static_cast<size_t>(i)] = it->second;
        }
    }
    return net;
}

int64_t UNet::param_count_for(const UNetConfig& cfg, const ArchVector& arch) {
    auto specs = stage_specs(cfg.width);
    int64_t n = fixed_param_count_for(cfg);
    for (int i = 0; i < kStages; ++i) {
        const auto& s = specs[static_cast<size_t>(i)];
        int v = arch.a[static_cast<size_t>(i)];
        n += Block::param_count(s.library[static_cast<size_t>(v)], s.c_in, s.c_out, cfg.emb_dim);
    }
    return n;
}

}  // namespace toc
