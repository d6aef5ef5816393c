#pragma once

#include <cstdint>
#include <vector>

#include "coattendwg/ablation.hpp"
#include "coattendwg/coattention.hpp"
#include "coattendwg/dualpath.hpp"
#include "coattendwg/expert_fusion.hpp"

namespace coattendwg {

struct ModelConfig {
  int embed_dim = 64;    // shared embedding dim D
  int text_dim = 768;    // raw text feature dim
  int img_dim = 2048;    // raw image feature dim
  int seq_len = 1;       // token sequence length (the pipeline requires 1)
  int fusion_heads = 8;  // co-attention and cross-attention heads
  int refine_heads = 4;  // refinement self-attention heads (also encoder MHA)
  int experts = 2;
  int mf_kernel = 3;
  int mf_depth = 2;
  double dropout = 0.1;
  int num_classes = 2;
  AblationFlags ablation;
  std::uint64_t seed = 0;

  // Effective refinement head count after the two_heads ablation.
  int effective_refine_heads() const { return ablation.two_heads ? 2 : refine_heads; }

  void validate() const;  // throws std::invalid_argument

  // Small configuration used by gradcheck and the fast test paths.
  static ModelConfig tiny();
};

struct ModelParams {
  ProjectionParams projection;
  CoAttenParams coattention;
  DualPathParams dual_path;
  ExpertFusionParams fusion;
  LinearParams classifier;

  static ModelParams init(const ModelConfig& cfg, Rng& rng);
  static ModelParams init(const ModelConfig& cfg);  // seeds from cfg.seed

  // Every learnable tensor in a stable order, named for reports and files.
  std::vector<NamedTensor> named_parameters() const;
  ModelParams clone() const;
};

struct ForwardTrace {
  GatedFeatures gated;
  DualPathOutput dual;
  FusionTrace fusion;
};

struct ForwardResult {
  Tensor logits;  // [B, num_classes]
  ForwardTrace trace;
};

// The full pipeline: project -> coattend -> dual_path -> expert_fuse ->
// classify, honoring cfg.ablation. `rng` may be null when not training or
// when dropout is 0.
ForwardResult forward_full(Tape& tape, const ModelParams& params,
                           const ModelConfig& cfg, const Tensor& text_feat,
                           const Tensor& img_feat, bool training = false,
                           Rng* rng = nullptr);

}  // namespace coattendwg
