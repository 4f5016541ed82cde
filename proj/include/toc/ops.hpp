#pragma once

#include "toc/tensor.hpp"

namespace toc {

// Elementwise
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float c);
Tensor add_scalar(const Tensor& a, float c);
Tensor silu(const Tensor& a);
Tensor clamp(const Tensor& a, float lo, float hi);  // zero subgradient outside
Tensor expop(const Tensor& a);

// Bias adds
Tensor add_channel_bias(const Tensor& x, const Tensor& b);        // x:[N,C,H,W], b:[C]
Tensor add_batch_channel_bias(const Tensor& x, const Tensor& b);  // x:[N,C,H,W], b:[N,C]
Tensor add_row_bias(const Tensor& x, const Tensor& b);            // x:[N,M], b:[M]

// Linear algebra
Tensor matmul(const Tensor& a, const Tensor& b);          // [m,k]x[k,n]
Tensor bmm(const Tensor& a, const Tensor& b);             // [B,m,k]x[B,k,n]
Tensor transpose_last2(const Tensor& a);                  // [B,m,n] -> [B,n,m]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);  // x:[N,in], w:[in,out]

// Shape
Tensor reshape(const Tensor& a, std::vector<int> shape);
Tensor nchw_to_nlc(const Tensor& a);  // [N,C,H,W] -> [N,H*W,C]
Tensor nlc_to_nchw(const Tensor& a, int h, int w);
Tensor concat_channels(const Tensor& a, const Tensor& b);
Tensor slice_channels(const Tensor& a, int c0, int c1);

// Convolutions (zero "same" padding, kernel 3 for conv, 4 for transposed)
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride);
Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& b);  // stride 2

// Normalization / activations over structured axes
Tensor group_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, int groups,
                  float eps = 1e-5f);
Tensor softmax_last(const Tensor& a);

// Resampling
Tensor upsample_nearest2(const Tensor& x);

// Batch assembly helpers (leaf outputs, no taping)
Tensor stack_batch(const std::vector<Tensor>& items, const std::vector<int>& idx);
Tensor batch_slice(const Tensor& x, int i);  // [N,...] -> [1,...]

// Reductions and losses
Tensor mean_all(const Tensor& a);
Tensor sum_all(const Tensor& a);
Tensor mse(const Tensor& a, const Tensor& b);
Tensor l1(const Tensor& a, const Tensor& b);

}  // namespace toc
