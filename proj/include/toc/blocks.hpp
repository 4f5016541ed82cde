#pragma once

#include <memory>
#include <optional>

#include "toc/optim.hpp"
#include "toc/ops.hpp"

namespace toc {

// Surrogate block taxonomy. Encoder/decoder stages draw from the first four
// kinds, the bottleneck from the last . Within each library the variants are
// ordered by strictly descending parameter count; internal widths are the
// reduction knob that enforces the ordering.
enum class BlockKind {
    ResAttn,       // residual unit + self-attention (stage base)
    Res,           // residual unit, full internal width
    ResHalf,       // residual unit, internal channels halved
    PointwiseRes,  // single 1x1 conv, residual add when shapes allow
    ResAttnRes,    // res + attn + res (bottleneck base)
    AttnRes,       // attn + half-width res
    ResRes,        // two quarter-width res units
    Pointwise,     // single 1x1 conv, no residual
};

const char* block_kind_name(BlockKind k);

struct ResUnit {
    int c_in = 0, c_mid = 0, c_out = 0;
    Tensor gn1_g, gn1_b, w1, b1, tw, tb, gn2_g, gn2_b, w2, b2;
    Tensor skip_w, skip_b;  // only when c_in != c_out

    ResUnit() = default;
    ResUnit(int c_in, int c_mid, int c_out, int emb_dim, Rng& rng, ParamStore& store,
            const std::string& prefix);
    Tensor forward(const Tensor& x, const Tensor& emb) const;
    static int64_t param_count(int c_in, int c_mid, int c_out, int emb_dim);
};

struct AttnUnit {
    int c = 0;
    Tensor gn_g, gn_b, wq, bq, wk, bk, wv, bv, wo, bo;

    AttnUnit() = default;
    AttnUnit(int c, Rng& rng, ParamStore& store, const std::string& prefix);
    Tensor forward(const Tensor& x) const;
    static int64_t param_count(int c);
};

struct PointwiseUnit {
    int c_in = 0, c_out = 0;
    bool residual = false;
    Tensor w, b, tw, tb;

    PointwiseUnit() = default;
    PointwiseUnit(int c_in, int c_out, bool residual, int emb_dim, Rng& rng, ParamStore& store,
                  const std::string& prefix);
    Tensor forward(const Tensor& x, const Tensor& emb) const;
    static int64_t param_count(int c_in, int c_out, int emb_dim);
};

// One swappable stage block. All variants of a stage share the (c_in, c_out)
// contract, so any of them slots into the backbone unchanged.
class Block {
public:
    Block(BlockKind kind, int c_in, int c_out, int emb_dim, Rng rng);

    Tensor forward(const Tensor& x, const Tensor& emb) const;

    BlockKind kind() const { return kind_; }
    int c_in() const { return c_in_; }
    int c_out() const { return c_out_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    static int64_t param_count(BlockKind kind, int c_in, int c_out, int emb_dim);

private:
    BlockKind kind_;
    int c_in_, c_out_, emb_dim_;
    ParamStore params_;
    std::vector<ResUnit> res_;
    std::optional<AttnUnit> attn_;
    std::optional<PointwiseUnit> pw_;
    bool attn_first_ = false;  // AttnRes ordering
};

// Initializers shared by all modules.
Tensor conv_weight(int c_out, int c_in, int k, Rng& rng);
Tensor linear_weight(int in, int out, Rng& rng);

}  // namespace toc
