#pragma once

#include <map>

#include "toc/diffusion.hpp"

namespace toc {

// Per-stage teacher features recorded on the calibration subset: stage
// input, teacher block output, and the time-embedding vector the block saw.
struct FeatRecord {
    Tensor input, output, emb;
    int t = 0;
};

struct FeatureDump {
    std::array<std::vector<FeatRecord>, UNet::kStages> stages;
    uint64_t seed = 0;
    int count = 0;
};

// Deterministic 25% calibration subset of [0, n).
std::vector<int> calibration_indices(int n, uint64_t seed, double fraction = 0.25);

// Noise each calibration latent at a uniformly sampled t and record every
// stage boundary of the teacher forward pass.
FeatureDump capture_features(const UNet& teacher, const NoiseSchedule& sched,
                             const std::vector<Tensor>& calib_latents, uint64_t seed);

struct CalibConfig {
    int steps = 400;
    int batch = 16;
    float lr = 2e-3f;
    uint64_t seed = 11;
};

struct CalibResult {
    std::shared_ptr<Block> block;
    float init_holdout = 0.0f;   // loss at random init on the held-out 20%
    float final_holdout = 0.0f;  // after training
};

// Train one surrogate variant against the teacher's recorded features.
// PRNG stream keyed by (stage, variant) so execution order is irrelevant.
CalibResult calibrate_block(int stage, int variant, const UNet& teacher, const FeatureDump& dump,
                            const CalibConfig& cc);

struct CalibratedStore {
    std::map<std::pair<int, int>, std::shared_ptr<Block>> blocks;
    std::map<std::pair<int, int>, CalibResult> results;
};

// All (stage, variant >= 1) pairs; results identical for any execution order.
CalibratedStore calibrate_all(const UNet& teacher, const FeatureDump& dump, const CalibConfig& cc);

}  // namespace toc
