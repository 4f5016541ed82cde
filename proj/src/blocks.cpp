#include "toc/blocks.hpp"

#include <cmath>

namespace toc {

namespace {
constexpr int kGnGroups = 4;

int64_t conv_params(int c_in, int c_out, int k) {
    return static_cast<int64_t>(k) * k * c_in * c_out + c_out;
}
int64_t gn_params(int c) { return 2 * static_cast<int64_t>(c); }
int64_t linear_params(int in, int out) { return static_cast<int64_t>(in) * out + out; }
}  // namespace

const char* block_kind_name(BlockKind k) {
    switch (k) {
        case BlockKind::ResAttn: return "ResAttn";
        case BlockKind::Res: return "Res";
        case BlockKind::ResHalf: return "ResHalf";
        case BlockKind::PointwiseRes: return "PointwiseRes";
        case BlockKind::ResAttnRes: return "ResAttnRes";
        case BlockKind::AttnRes: return "AttnRes";
        case BlockKind::ResRes: return "ResRes";
        case BlockKind::Pointwise: return "Pointwise";
    }
    return "?";
}

Tensor conv_weight(int c_out, int c_in, int k, Rng& rng) {
    float std = std::sqrt(2.0f / (static_cast<float>(c_in) * k * k));
    return Tensor::randn({c_out, c_in, k, k}, rng, std);
}

Tensor linear_weight(int in, int out, Rng& rng) {
    float std = std::sqrt(1.0f / static_cast<float>(in));
    return Tensor::randn({in, out}, rng, std);
}

ResUnit::ResUnit(int c_in, int c_mid, int c_out, int emb_dim, Rng& rng, ParamStore& store,
                 const std::string& prefix)
    : c_in(c_in), c_mid(c_mid), c_out(c_out) {
    check(c_in % kGnGroups == 0 && c_mid % kGnGroups == 0, Error::Kind::InvalidArg,
          "ResUnit: channels must be divisible by " + std::to_string(kGnGroups));
    gn1_g = store.add(prefix + "gn1_g", Tensor::full({c_in}, 1.0f));
    gn1_b = store.add(prefix + "gn1_b", Tensor::zeros({c_in}));
    w1 = store.add(prefix + "w1", conv_weight(c_mid, c_in, 3, rng));
    b1 = store.add(prefix + "b1", Tensor::zeros({c_mid}));
    tw = store.add(prefix + "tw", linear_weight(emb_dim, c_mid, rng));
    tb = store.add(prefix + "tb", Tensor::zeros({c_mid}));
    gn2_g = store.add(prefix + "gn2_g", Tensor::full({c_mid}, 1.0f));
    gn2_b = store.add(prefix + "gn2_b", Tensor::zeros({c_mid}));
    w2 = store.add(prefix + "w2", conv_weight(c_out, c_mid, 3, rng));
    b2 = store.add(prefix + "b2", Tensor::zeros({c_out}));
    if (c_in != c_out) {
        skip_w = store.add(prefix + "skip_w", conv_weight(c_out, c_in, 1, rng));
        skip_b = store.add(prefix + "skip_b", Tensor::zeros({c_out}));
    }
}

Tensor ResUnit::forward(const Tensor& x, const Tensor& emb) const {
    Tensor h = conv2d(silu(group_norm(x, gn1_g, gn1_b, kGnGroups)), w1, b1, 1);
    h = add_batch_channel_bias(h, add_row_bias(matmul(emb, tw), tb));
    h = conv2d(silu(group_norm(h, gn2_g, gn2_b, kGnGroups)), w2, b2, 1);
    Tensor sk = skip_w.defined() ? conv2d(x, skip_w, skip_b, 1) : x;
    return add(h, sk);
}

int64_t ResUnit::param_count(int c_in, int c_mid, int c_out, int emb_dim) {
    int64_t n = gn_params(c_in) + conv_params(c_in, c_mid, 3) + linear_params(emb_dim, c_mid) +
                gn_params(c_mid) + conv_params(c_mid, c_out, 3);
    if (c_in != c_out) n += conv_params(c_in, c_out, 1);
    return n;
}

AttnUnit::AttnUnit(int c, Rng& rng, ParamStore& store, const std::string& prefix) : c(c) {
    gn_g = store.add(prefix + "gn_g", Tensor::full({c}, 1.0f));
    gn_b = store.add(prefix + "gn_b", Tensor::zeros({c}));
    wq = store.add(prefix + "wq", conv_weight(c, c, 1, rng));
    bq = store.add(prefix + "bq", Tensor::zeros({c}));
    wk = store.add(prefix + "wk", conv_weight(c, c, 1, rng));
    bk = store.add(prefix + "bk", Tensor::zeros({c}));
    wv = store.add(prefix + "wv", conv_weight(c, c, 1, rng));
    bv = store.add(prefix + "bv", Tensor::zeros({c}));
    // Zero-init output projection: attention starts as an identity residual.
    wo = store.add(prefix + "wo", Tensor::zeros({c, c, 1, 1}));
    bo = store.add(prefix + "bo", Tensor::zeros({c}));
}

Tensor AttnUnit::forward(const Tensor& x) const {
    int h = x.dim(2), w = x.dim(3);
    Tensor xn = group_norm(x, gn_g, gn_b, kGnGroups);
    Tensor q = nchw_to_nlc(conv2d(xn, wq, bq, 1));
    Tensor k = nchw_to_nlc(conv2d(xn, wk, bk, 1));
    Tensor v = nchw_to_nlc(conv2d(xn, wv, bv, 1));
    Tensor scores = scale(bmm(q, transpose_last2(k)), 1.0f / std::sqrt(static_cast<float>(c)));
    Tensor out = nlc_to_nchw(bmm(softmax_last(scores), v), h, w);
    return add(x, conv2d(out, wo, bo, 1));
}

int64_t AttnUnit::param_count(int c) { return gn_params(c) + 4 * conv_params(c, c, 1); }

PointwiseUnit::PointwiseUnit(int c_in, int c_out, bool residual, int emb_dim, Rng& rng,
                             ParamStore& store, const std::string& prefix)
    : c_in(c_in), c_out(c_out), residual(residual && c_in == c_out) {
    w = store.add(prefix + "w", conv_weight(c_out, c_in, 1, rng));
    b = store.add(prefix + "b", Tensor::zeros({c_out}));
    tw = store.add(prefix + "tw", linear_weight(emb_dim, c_out, rng));
    tb = store.add(prefix + "tb", Tensor::zeros({c_out}));
}

Tensor PointwiseUnit::forward(const Tensor& x, const Tensor& emb) const {
    Tensor h = conv2d(x, w, b, 1);
    h = add_batch_channel_bias(h, add_row_bias(matmul(emb, tw), tb));
    return residual ? add(h, x) : h;
}

int64_t PointwiseUnit::param_count(int c_in, int c_out, int emb_dim) {
    return conv_params(c_in, c_out, 1) + linear_params(emb_dim, c_out);
}

Block::Block(BlockKind kind, int c_in, int c_out, int emb_dim, Rng rng)
    : kind_(kind), c_in_(c_in), c_out_(c_out), emb_dim_(emb_dim) {
    switch (kind) {
        case BlockKind::ResAttn:
            res_.emplace_back(c_in, c_out, c_out, emb_dim, rng, params_, "res0.");
            attn_.emplace(c_out, rng, params_, "attn.");
            break;
        case BlockKind::Res:
            res_.emplace_back(c_in, c_out, c_out, emb_dim, rng, params_, "res0.");
            break;
        case BlockKind::ResHalf:
            res_.emplace_back(c_in, c_out / 2, c_out, emb_dim, rng, params_, "res0.");
            break;
        case BlockKind::PointwiseRes:
            pw_.emplace(c_in, c_out, true, emb_dim, rng, params_, "pw.");
            break;
        case BlockKind::ResAttnRes:
            check(c_in == c_out, Error::Kind::InvalidArg, "ResAttnRes requires c_in == c_out");
            res_.emplace_back(c_in, c_out, c_out, emb_dim, rng, params_, "res0.");
            attn_.emplace(c_out, rng, params_, "attn.");
            res_.emplace_back(c_out, c_out, c_out, emb_dim, rng, params_, "res1.");
            break;
        case BlockKind::AttnRes:
            check(c_in == c_out, Error::Kind::InvalidArg, "AttnRes requires c_in == c_out");
            attn_.emplace(c_in, rng, params_, "attn.");
            res_.emplace_back(c_in, c_out / 2, c_out, emb_dim, rng, params_, "res0.");
            attn_first_ = true;
            break;
        case BlockKind::ResRes:
            check(c_in == c_out, Error::Kind::InvalidArg, "ResRes requires c_in == c_out");
            res_.emplace_back(c_in, c_out / 4, c_out, emb_dim, rng, params_, "res0.");
            res_.emplace_back(c_out, c_out / 4, c_out, emb_dim, rng, params_, "res1.");
            break;
        case BlockKind::Pointwise:
            pw_.emplace(c_in, c_out, false, emb_dim, rng, params_, "pw.");
            break;
    }
}

Tensor Block::forward(const Tensor& x, const Tensor& emb) const {
    check(x.shape().size() == 4 && x.dim(1) == c_in_, Error::Kind::Shape,
          std::string("Block(") + block_kind_name(kind_) + "): input " + shape_str(x.shape()) +
              " does not carry " + std::to_string(c_in_) + " channels");
    switch (kind_) {
        case BlockKind::ResAttn:
            return attn_->forward(res_[0].forward(x, emb));
        case BlockKind::Res:
        case BlockKind::ResHalf:
            return res_[0].forward(x, emb);
        case BlockKind::PointwiseRes:
        case BlockKind::Pointwise:
            return pw_->forward(x, emb);
        case BlockKind::ResAttnRes:
            return res_[1].forward(attn_->forward(res_[0].forward(x, emb)), emb);
        case BlockKind::AttnRes:
            return res_[0].forward(attn_->forward(x), emb);
        case BlockKind::ResRes:
            return res_[1].forward(res_[0].forward(x, emb), emb);
    }
    fail(Error::Kind::InvalidArg, "Block::forward: unknown kind");
}

int64_t Block::param_count(BlockKind kind, int c_in, int c_out, int emb_dim) {
    switch (kind) {
        case BlockKind::ResAttn:
            return ResUnit::param_count(c_in, c_out, c_out, emb_dim) + AttnUnit::param_count(c_out);
        case BlockKind::Res:
            return ResUnit::param_count(c_in, c_out, c_out, emb_dim);
        case BlockKind::ResHalf:
            return ResUnit::param_count(c_in, c_out / 2, c_out, emb_dim);
        case BlockKind::PointwiseRes:
        case BlockKind::Pointwise:
            return PointwiseUnit::param_count(c_in, c_out, emb_dim);
        case BlockKind::ResAttnRes:
            return 2 * ResUnit::param_count(c_in, c_out, c_out, emb_dim) +
                   AttnUnit::param_count(c_out);
        case BlockKind::AttnRes:
            return AttnUnit::param_count(c_in) +
                   ResUnit::param_count(c_in, c_out / 2, c_out, emb_dim);
        case BlockKind::ResRes:
            return 2 * ResUnit::param_count(c_in, c_out / 4, c_out, emb_dim);
    }
    fail(Error::Kind::InvalidArg, "param_count: unknown kind");
}

}  // namespace toc
