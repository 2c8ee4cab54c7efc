#pragma once

#include "pf/params.hpp"
#include "pf/rng.hpp"
#include "pf/tensor.hpp"

namespace pf {

// Elementwise / scalar
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor sin_op(const Tensor& a);
Tensor cos_op(const Tensor& a);
Tensor silu(const Tensor& a);

// Shape
Tensor reshape(const Tensor& a, std::vector<std::size_t> shape);
Tensor transpose2d(const Tensor& a);
Tensor concat_rows(const Tensor& a, const Tensor& b);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor slice_rows(const Tensor& a, std::size_t r0, std::size_t r1);
Tensor slice_cols(const Tensor& a, std::size_t c0, std::size_t c1);
Tensor pad_cols(const Tensor& a, std::size_t new_cols);  // zero pad on the right

// Linear algebra
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add_row_bias(const Tensor& x, const Tensor& b);      // [N×K] + [K]
Tensor add_channel_bias(const Tensor& x, const Tensor& b);  // [C×L] + [C]

// Reductions
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// Neural-net blocks
Tensor softmax_rows(const Tensor& a);
Tensor conv1d(const Tensor& x, const Tensor& w, int stride, int pad);
Tensor group_norm(const Tensor& x, std::size_t groups, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);
Tensor dropout(const Tensor& x, double rate, Rng& rng);
Tensor upsample_nearest2(const Tensor& x);
Tensor downsample_nearest2(const Tensor& x);

// Sinusoidal features of every entry of x: output [B × m*d]; per entry the
// d-block is [sin(v*w_0..w_{d/2-1}) || cos(...)], w_i = max_period^(-2i/d).
Tensor sinusoid_features(const Tensor& x, std::size_t d, double max_period);

// Multi-head scaled dot-product self-attention over the row axis of x [L×d].
Tensor self_attention(const Tensor& x, std::size_t num_heads, const Tensor& wq,
                      const Tensor& wk, const Tensor& wv, const Tensor& wo);
Tensor self_attention(const Tensor& x, std::size_t num_heads, const ParameterSet& w_qkv);

}  // namespace pf
