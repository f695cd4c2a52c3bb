#pragma once

#include <vector>

#include "oddvox/tensor.hpp"

namespace oddvox::diffcore {

inline constexpr double kLayerNormEps = 1e-5;

// ---- elementwise -----------------------------------------------------------
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& a, double factor);
template <typename T>
Tensor<T> relu(const Tensor<T>& a);
template <typename T>
Tensor<T> tanh_act(const Tensor<T>& a);
template <typename T>
Tensor<T> sigmoid_act(const Tensor<T>& a);

// ---- linear algebra ---------------------------------------------------------
// C = op(A) * op(B) with optional transposes; 2-d operands only.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool transpose_a = false,
                 bool transpose_b = false);

// y = x W^T + b over the last dimension of x; b may be undefined.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

template <typename T>
Tensor<T> transpose2d(const Tensor<T>& x);

// ---- normalization / attention ---------------------------------------------
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     double eps = kLayerNormEps);

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x);

template <typename T>
struct MhaParams {
  Tensor<T> wqkv;  // [3q, q]
  Tensor<T> bqkv;  // [3q]
  Tensor<T> wo;    // [q, q]
  Tensor<T> bo;    // [q]
};

template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& tokens, int heads, int head_dim,
                               const MhaParams<T>& p);

template <typename T>
struct TransformerLayerParams {
  MhaParams<T> attn;
  Tensor<T> ln1_gamma, ln1_beta;
  Tensor<T> ln2_gamma, ln2_beta;
  Tensor<T> mlp_w1, mlp_b1;  // [4q, q], [4q]
  Tensor<T> mlp_w2, mlp_b2;  // [q, 4q], [q]
};

// Pre-norm by default: x + MHA(LN(x)) then x + MLP(LN(x)).
template <typename T>
Tensor<T> transformer_encoder_layer(const Tensor<T>& tokens, int heads, int head_dim,
                                    const TransformerLayerParams<T>& p, bool prenorm = true);

// ---- shape ops ---------------------------------------------------------------
template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape new_shape);
template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, int col0, int width);
template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& xs);
template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& xs);
template <typename T>
Tensor<T> stack_rows(const std::vector<Tensor<T>>& xs);  // k vectors [m] -> [k, m]
template <typename T>
Tensor<T> select_row(const Tensor<T>& x, int row);
template <typename T>
Tensor<T> select_rows(const Tensor<T>& x, const std::vector<int>& rows);

// ---- reductions / broadcasts -------------------------------------------------
template <typename T>
Tensor<T> sum_all(const Tensor<T>& x);
template <typename T>
Tensor<T> mean_all(const Tensor<T>& x);
template <typename T>
Tensor<T> mean_axis0(const Tensor<T>& x);  // [n, m] -> [m]
template <typename T>
Tensor<T> mean_axis1(const Tensor<T>& x);  // [n, m] -> [n]
template <typename T>
Tensor<T> add_rowvec(const Tensor<T>& x, const Tensor<T>& v);  // [n,m] + [m]
template <typename T>
Tensor<T> sub_rowvec(const Tensor<T>& x, const Tensor<T>& v);  // [n,m] - [m]

// ---- 3-d convolution stack ----------------------------------------------------
// x: [c_in, X, Y, Z], weight: [c_out, c_in, k, k, k]; cross-correlation.
template <typename T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 int stride, int padding);

template <typename T>
Tensor<T> upsample_nearest2(const Tensor<T>& x);  // doubles all spatial dims

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

// ---- losses -------------------------------------------------------------------
// Sum-reduced binary cross entropy from logits, computed in the fused
// stable form. Labels must be exactly 0 or 1.
template <typename T>
Tensor<T> bce_loss(const Tensor<T>& logits, const std::vector<T>& labels);

// Squared L2 distance, summed over all elements.
template <typename T>
Tensor<T> squared_error_sum(const Tensor<T>& a, const Tensor<T>& b);

}  // namespace oddvox::diffcore
