#pragma once

#include <string>

#include "toc/tensor.hpp"

namespace toc {

// 8-bit binary PPM (P6). Tensors are [3,H,W] in [0,1]; values are clamped
// and rounded on write.
Tensor read_ppm(const std::string& path);
void write_ppm(const std::string& path, const Tensor& img);

}  // namespace toc
