#include "toc/calibrate.hpp"

#include <cmath>

namespace toc {

std::vector<int> calibration_indices(int n, uint64_t seed, double fraction) {
    int take = static_cast<int>(std::lround(fraction * n));
    // Deterministic Fisher-Yates, take the tail of the permutation.
    std::vector<int> perm(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) perm[static_cast<size_t>(i)] = i;
    Rng rng = Rng(seed).split("calib_split");
    for (int i = n - 1; i > 0; --i)
        std::swap(perm[static_cast<size_t>(i)],
                  perm[rng.uniform_int(static_cast<uint64_t>(i + 1))]);
    return {perm.begin(), perm.begin() + take};
}

FeatureDump capture_features(const UNet& teacher, const NoiseSchedule& sched,
                             const std::vector<Tensor>& calib_latents, uint64_t seed) {
    check(!calib_latents.empty(), Error::Kind::InvalidArg, "capture_features: empty subset");
    NoGrad ng;
    FeatureDump dump;
    dump.seed = seed;
    dump.count = static_cast<int>(calib_latents.size());
    Rng rng = Rng(seed).split("capture");
    for (size_t s = 0; s < calib_latents.size(); ++s) {
        int t = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(sched.T))) + 1;
        Tensor z = calib_latents[s];
        if (z.shape().size() == 3) {
            std::vector<int> sh{1};
            for (int e : z.shape()) sh.push_back(e);
            z = Tensor::from_data(sh, z.data());
        }
        Tensor eps = Tensor::randn(z.shape(), rng);
        Tensor z_t = q_sample(sched, z, t, eps);
        UNet::CaptureFn cap = [&](int stage, const Tensor& in, const Tensor& out,
                                  const Tensor& emb) {
            dump.stages[static_cast<size_t>(stage)].push_back(
                {in.detach(), out.detach(), emb.detach(), t});
        };
        std::vector<int> ts{t};
        teacher.forward(z_t, ts, nullptr, &cap);
    }
    return dump;
}

namespace {

Tensor stack_records(const std::vector<FeatRecord>& recs, const std::vector<int>& idx,
                     Tensor FeatRecord::* field) {
    std::vector<Tensor> items;
    items.reserve(recs.size());
    for (const auto& r : recs) items.push_back(r.*field);
    // Records are [1,...] tensors; drop the leading 1 before stacking.
    std::vector<Tensor> squeezed;
    squeezed.reserve(items.size());
    for (const auto& t : items) {
        std::vector<int> sh(t.shape().begin() + 1, t.shape().end());
        squeezed.push_back(Tensor::from_data(sh, t.data()));
    }
    return stack_batch(squeezed, idx);
}

float holdout_loss(const Block& block, const std::vector<FeatRecord>& recs,
                   const std::vector<int>& idx) {
    NoGrad ng;
    Tensor in = stack_records(recs, idx, &FeatRecord::input);
    Tensor target = stack_records(recs, idx, &FeatRecord::output);
    Tensor emb = stack_records(recs, idx, &FeatRecord::emb);
    return mse(block.forward(in, emb), target).scalar();
}

}  // namespace

CalibResult calibrate_block(int stage, int variant, const UNet& teacher, const FeatureDump& dump,
                            const CalibConfig& cc) {
    check(variant >= 1, Error::Kind::InvalidArg,
          "calibrate_block: variant 0 is the teacher block and needs no calibration");
    const auto& recs = dump.stages[static_cast<size_t>(stage)];
    check(!recs.empty(), Error::Kind::InvalidArg,
          "calibrate_block: dump has no records for stage " + std::to_string(stage));
    auto specs = UNet::stage_specs(teacher.config().width);
    const StageSpec& spec = specs[static_cast<size_t>(stage)];
    check(variant < static_cast<int>(spec.library.size()), Error::Kind::InvalidArg,
          "calibrate_block: variant out of range for stage " + std::to_string(stage));

    Rng rng = Rng(cc.seed).split("calib_s" + std::to_string(stage) + "_v" + std::to_string(variant));
    CalibResult res;
    res.block = std::make_shared<Block>(spec.library[static_cast<size_t>(variant)], spec.c_in,
                                        spec.c_out, teacher.config().emb_dim, rng.split("init"));

    int n = static_cast<int>(recs.size());
    int n_train = std::max(1, n - std::max(1, n / 5));
    std::vector<int> hold_idx;
    for (int i = n_train; i < n; ++i) hold_idx.push_back(i);
    if (hold_idx.empty()) hold_idx.push_back(n - 1);

    res.init_holdout = holdout_loss(*res.block, recs, hold_idx);

    ParamStore& params = res.block->params();
    AdamState adam;
    adam.lr = cc.lr;
    Rng brng = rng.split("batches");
    for (int step = 0; step < cc.steps; ++step) {
        std::vector<int> idx(static_cast<size_t>(std::min(cc.batch, n_train)));
        for (auto& i : idx) i = static_cast<int>(brng.uniform_int(static_cast<uint64_t>(n_train)));
        Tensor in = stack_records(recs, idx, &FeatRecord::input);
        Tensor target = stack_records(recs, idx, &FeatRecord::output);
        Tensor emb = stack_records(recs, idx, &FeatRecord::emb);
        Tensor loss = mse(res.block->forward(in, emb), target);
        float lv = loss.scalar();
        if (!std::isfinite(lv))
            fail(Error::Kind::Numeric, "calibrate_block: loss diverged at stage " +
                                           std::to_string(stage) + " variant " +
                                           std::to_string(variant));
        params.zero_grad();
        backward(loss);
        adam_step(params, adam);
    }
    res.final_holdout = holdout_loss(*res.block, recs, hold_idx);
    return res;
}

CalibratedStore calibrate_all(const UNet& teacher, const FeatureDump& dump,
                              const CalibConfig& cc) {
    CalibratedStore store;
    std::vector<std::string> failures;
    auto specs = UNet::stage_specs(teacher.config().width);
    for (int i = 0; i < UNet::kStages; ++i) {
        int kinds = static_cast<int>(specs[static_cast<size_t>(i)].library.size());
        for (int j = 1; j < kinds; ++j) {
            try {
                CalibResult r = calibrate_block(i, j, teacher, dump, cc);
                store.blocks[{i, j}] = r.block;
                store.results[{i, j}] = r;
            } catch (const Error& e) {
                failures.push_back("(" + std::to_string(i) + "," + std::to_string(j) + "): " +
                                   e.what());
            }
        }
    }
    if (!failures.empty()) {
        std::string msg = "calibrate_all: failures at ";
        for (const auto& f : failures) msg += f + "; ";
        fail(Error::Kind::Numeric, msg);
    }
    return store;
}

}  // namespace toc
