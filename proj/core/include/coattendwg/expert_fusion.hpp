#pragma once

#include <vector>

#include "coattendwg/layers.hpp"

namespace coattendwg {

// Mixture-of-experts fusion head. The two modality representations are
// concatenated, pushed through a fusion network, combined by softmax gating
// into a weighted expert sum, refined by single-token self-attention, and the
// three branches are summed under a final layer norm.
//
// With two experts the experts ARE the two modality inputs; with more, each
// expert is a learned projection of the concatenation.
struct ExpertFusionParams {
  int experts = 2;
  LinearParams fusion;  // [D, 2D]
  LinearParams gate;    // [experts, 2D]
  std::vector<LinearParams> expert_proj;  // [D, 2D] each; only when experts > 2
  MhaParams refine;
  Tensor ln_gamma, ln_beta;  // [D]
  Activation activation = Activation::Relu;
  static ExpertFusionParams init(int embed_dim, int experts, int refine_heads,
                                 Rng& rng);
};

struct FusionTrace {
  Tensor gate_weights;  // [B, experts], rows sum to 1
  Tensor fused;         // fusion-network branch [B, D]
  Tensor weighted_sum;  // gated expert sum [B, D]
  Tensor refined;       // self-attention branch [B, D]
  Tensor output;        // layer-normed sum [B, D]
  Tensor refine_attn_weights;  // [B, h, 1, 1]
};

struct FusionResult {
  Tensor output;  // [B, D]
  FusionTrace trace;
};

// text_final / img_final are [B, D] (squeezed from [B,1,D]).
FusionResult expert_fuse(Tape& tape, const ExpertFusionParams& params,
                         const Tensor& text_final, const Tensor& img_final,
                         const DropoutConfig& drop, Rng& rng);

// logits = E W^T + b with W [num_classes, D].
Tensor classify(Tape& tape, const LinearParams& classifier, const Tensor& x);

}  // namespace coattendwg
