#pragma once

#include <vector>

#include "toc/tensor.hpp"

namespace toc {

// Procedural 32x32 RGB images: oriented sinusoidal gratings, filled convex
// polygons, and smooth color gradients, composited and clamped to [0,1].
// Identical seed gives bit-identical data.
std::vector<Tensor> gen_data(int n, uint64_t seed, int size = 32);

// Deterministic 75/25 train/calibration split by index.
struct Split {
    std::vector<int> train, calib;
};
Split split_dataset(int n);

}  // namespace toc
