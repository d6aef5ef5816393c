#pragma once

#include <utility>

#include "coattendwg/ablation.hpp"
#include "coattendwg/layers.hpp"

namespace coattendwg {

// Maps raw per-modality feature vectors into the shared embedding space and
// shapes them as length-1 token sequences.
struct ProjectionParams {
  LinearParams text_proj;  // [D, D_text]
  LinearParams img_proj;   // [D, D_img]
  static ProjectionParams init(int embed_dim, int text_dim, int img_dim,
                               Rng& rng);
};

// text_feat [B, D_text], img_feat [B, D_img] -> ([B,1,D], [B,1,D])
std::pair<Tensor, Tensor> project(Tape& tape, const ProjectionParams& params,
                                  const Tensor& text_feat,
                                  const Tensor& img_feat);

// Bidirectional co-attention with per-channel sigmoid gating. Each modality
// queries the other; the attended output is then modulated elementwise by a
// gate in (0,1) computed from it.
struct CoAttenParams {
  MhaParams text_to_img;  // text queries image
  MhaParams img_to_text;  // image queries text
  LinearParams text_gate;  // [D, D]
  LinearParams img_gate;   // [D, D]
  static CoAttenParams init(int embed_dim, int heads, Rng& rng);
};

struct GatedFeatures {
  Tensor text_attended, img_attended;        // attention outputs [B,L,D]
  Tensor text_gate, img_gate;                // gates in (0,1) [B,L,D]
  Tensor text_gated, img_gated;              // gate * attended [B,L,D]
  Tensor text_attn_weights, img_attn_weights;  // [B,h,L,L]; empty if skipped
};

GatedFeatures coattend(Tape& tape, const CoAttenParams& params,
                       const Tensor& text_seq, const Tensor& img_seq,
                       const AblationFlags& ablation = {});

}  // namespace coattendwg
