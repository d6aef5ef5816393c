#pragma once

#include <vector>

#include "coattendwg/coattention.hpp"
#include "coattendwg/layers.hpp"

namespace coattendwg {

// Two refinement stacks with a deliberate cross wiring: the text path encodes
// the gated IMAGE feature (its output is added back onto the text projection)
// and the image path encodes the gated TEXT feature. A second cross-attention
// stage, queried by the original projections, is added on top.
struct DualPathParams {
  std::vector<MambaFormerLayerParams> text_path;
  std::vector<MambaFormerLayerParams> img_path;
  MhaParams text_xattn;  // text queries image
  MhaParams img_xattn;   // image queries text
  static DualPathParams init(int embed_dim, int depth, int kernel,
                             int encoder_heads, int xattn_heads, Rng& rng);
};

struct DualPathOutput {
  Tensor text_refined, img_refined;  // encoder output + original projection
  Tensor text_cross, img_cross;      // cross-attention terms
  Tensor text_final, img_final;      // refined + cross
  Tensor text_xattn_weights, img_xattn_weights;  // empty if skipped
};

DualPathOutput dual_path(Tape& tape, const DualPathParams& params,
                         const Tensor& text_seq, const Tensor& img_seq,
                         const GatedFeatures& gated, const DropoutConfig& drop,
                         Rng& rng, const AblationFlags& ablation = {});

}  // namespace coattendwg
