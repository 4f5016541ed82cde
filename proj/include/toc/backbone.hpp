#pragma once

#include <array>
#include <functional>
#include <map>
#include <memory>

#include "toc/blocks.hpp"

namespace toc {

enum class StageRole { Encoder, Bottleneck, Decoder };

// I/O conv adapter variants for widening a 4-channel backbone to 16
// channels (input side / output side conv chains).
enum class IoVariant { V1, V2, V3 };

struct StageSpec {
    int index = 0;  // 0..6
    StageRole role = StageRole::Encoder;
    int c_in = 0, c_out = 0;
    std::vector<BlockKind> library;  // variant 0 is the base kind
};

// One variant index per stage; the whole candidate backbone in 7 ints.
struct ArchVector {
    std::vector<int> a;

    bool operator==(const ArchVector&) const = default;
    bool operator<(const ArchVector& o) const { return a < o.a; }
    std::string str() const;
};

// Per-stage surrogate menu: 4 kinds for encoder/decoder stages, 6 for the
// bottleneck, descending parameter count after the base.
std::vector<BlockKind> surrogate_library(StageRole role);

struct UNetConfig {
    int latent_channels = 16;  // 4 or 16
    int width = 32;            // base channel width, multiple of 8
    int emb_dim = 32;
    bool conditioned = false;  // SR mode: input carries 2*latent_channels
    IoVariant io = IoVariant::V2;
    uint64_t seed = 1;
};

// The stage-wise denoiser. Blocks and fixed parts are shared_ptrs so that
// plug-and-play assembly is pure wiring: candidates share the teacher's
// fixed parts and calibrated surrogate blocks without copying weights.
class UNet {
public:
    static constexpr int kStages = 7;

    static std::vector<StageSpec> stage_specs(int width);

    // Teacher constructor: every stage at variant 0.
    static std::shared_ptr<UNet> build(const UNetConfig& cfg);
    // Fresh model with the given architecture vector (all-new weights).
    static std::shared_ptr<UNet> build_arch(const UNetConfig& cfg, const ArchVector& arch);

    // forward(z:[N,C,H,W], t, cond) -> [N,C,H,W]. cond required iff the
    // config says conditioned.
    using CaptureFn =
        std::function<void(int stage, const Tensor& in, const Tensor& out, const Tensor& emb)>;
    Tensor forward(const Tensor& z, const std::vector<int>& t, const Tensor* cond = nullptr,
                   const CaptureFn* capture = nullptr) const;

    const UNetConfig& config() const { return cfg_; }
    const ArchVector& arch() const { return arch_; }
    const std::array<std::shared_ptr<Block>, kStages>& blocks() const { return blocks_; }

    ParamStore all_params() const;
    int64_t param_count() const { return all_params().count(); }

    // Deep copy (fresh tensors, same values). Used before any training that
    // must not touch the source model.
    std::shared_ptr<UNet> clone() const;

    // Replace the I/O convs of a 4-channel model with a 16-channel adapter
    // chain; interior weights are shared with the source model.
    static std::shared_ptr<UNet> adapt_io(const std::shared_ptr<UNet>& src, IoVariant variant,
                                          uint64_t seed);

    // Widen the input conv to accept a concatenated conditioning latent;
    // original input weights are preserved, new channels freshly seeded.
    static std::shared_ptr<UNet> widen_conditioning(const std::shared_ptr<UNet>& src,
                                                    uint64_t seed);

    // Plug-and-play assembly: teacher fixed parts + per-stage block chosen
    // from the calibrated store (variant 0 -> the teacher's own block).
    static std::shared_ptr<UNet> assemble(
        const std::shared_ptr<UNet>& teacher,
        const std::map<std::pair<int, int>, std::shared_ptr<Block>>& calibrated,
        const ArchVector& arch);

    // Exact trainable-scalar count of an assembled model for this config,
    // via the per-(stage, variant) analytic lookup. No instantiation.
    static int64_t param_count_for(const UNetConfig& cfg, const ArchVector& arch);

    mutable int64_t forward_count = 0;

private:
    UNet() = default;

    UNetConfig cfg_;
    ArchVector arch_;
    std::vector<StageSpec> specs_;

    struct Fixed {
        ParamStore params;
        std::vector<Tensor> in_w, in_b;    // input conv chain
        std::vector<Tensor> out_w, out_b;  // output conv chain
        Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;      // time embedding MLP
        Tensor down0_w, down0_b, down1_w, down1_b;  // stride-2 convs
        Tensor up0_w, up0_b, up1_w, up1_b;          // stride-2 transposed convs
        Tensor out_gn_g, out_gn_b;
    };
    std::shared_ptr<Fixed> fixed_;
    std::array<std::shared_ptr<Block>, kStages> blocks_;

    Tensor time_embedding(const std::vector<int>& t) const;

    static std::shared_ptr<Fixed> make_fixed(const UNetConfig& cfg, Rng& rng);
    static int64_t fixed_param_count_for(const UNetConfig& cfg);
};

// Intermediate channel counts between latent and backbone width
// (input side, output side).
std::pair<std::vector<int>, std::vector<int>> io_chains(IoVariant v);

}  // namespace toc
