#pragma once

#include <span>
#include <vector>

#include "coattendwg/rng.hpp"
#include "coattendwg/tensor.hpp"

namespace coattendwg {

inline constexpr double kLayerNormEps = 1e-5;

enum class Activation { Relu, Gelu };

Tensor apply_activation(Tape& tape, Activation act, const Tensor& x);

// y = x W^T + b with W [out,in], broadcast over leading dims of x.
struct LinearParams {
  Tensor weight;  // [out, in]
  Tensor bias;    // [out]
  // Uniform(-s, s) with s = sqrt(1/in); bias zero.
  static LinearParams init(int out, int in, Rng& rng);
  int out_dim() const { return weight.dim(0); }
  int in_dim() const { return weight.dim(1); }
};

Tensor linear(Tape& tape, const LinearParams& params, const Tensor& x);

struct MhaParams {
  int heads = 1;
  Tensor w_q, w_k, w_v, w_o;  // [D, D]
  Tensor b_q, b_k, b_v, b_o;  // [D], present only when use_bias
  bool use_bias = false;
  static MhaParams init(int dim, int heads, Rng& rng, bool use_bias = false);
  int dim() const { return w_q.dim(0); }
};

struct MhaResult {
  Tensor out;   // [B, Lq, D]
  Tensor attn;  // [B, heads, Lq, Lk], rows sum to 1
};

// Scaled dot-product multi-head attention. Scores are Q K^T / sqrt(D/heads),
// softmaxed per row; the per-head weights are returned for tracing.
MhaResult mha(Tape& tape, const MhaParams& params, const Tensor& q,
              const Tensor& k, const Tensor& v);

struct DropoutConfig {
  double p = 0.0;
  bool training = false;
};

// Inverted dropout: zero with probability p and scale survivors by 1/(1-p) in
// training mode; identity (same tensor) otherwise.
Tensor dropout(Tape& tape, const DropoutConfig& cfg, const Tensor& x, Rng& rng);

// One refinement layer: pre-norm convolution with activation, then pre-norm
// self-attention, each behind a residual add.
//   u = x + dropout(act(conv1d_same(ln1(x))))
//   y = u + dropout(mha(ln2(u), ln2(u), ln2(u)).out)
struct MambaFormerLayerParams {
  Tensor conv_kernel;  // [k, D, D]
  Tensor conv_bias;    // [D]
  MhaParams self_attn;
  Tensor ln1_gamma, ln1_beta;
  Tensor ln2_gamma, ln2_beta;
  Activation activation = Activation::Relu;
  static MambaFormerLayerParams init(int dim, int kernel, int heads, Rng& rng);
};

Tensor mambaformer_encode(Tape& tape,
                          std::span<const MambaFormerLayerParams> layers,
                          const Tensor& x, const DropoutConfig& drop, Rng& rng);

}  // namespace coattendwg
