#include "coattendwg/dualpath.hpp"

namespace coattendwg {

DualPathParams DualPathParams::init(int embed_dim, int depth, int kernel,
                                    int encoder_heads, int xattn_heads,
                                    Rng& rng) {
  DualPathParams p;
  p.text_path.reserve(static_cast<std::size_t>(depth));
  p.img_path.reserve(static_cast<std::size_t>(depth));
  for (int i = 0; i < depth; ++i) {
    p.text_path.push_back(
        MambaFormerLayerParams::init(embed_dim, kernel, encoder_heads, rng));
  }
  for (int i = 0; i < depth; ++i) {
    p.img_path.push_back(
        MambaFormerLayerParams::init(embed_dim, kernel, encoder_heads, rng));
  }
  p.text_xattn = MhaParams::init(embed_dim, xattn_heads, rng);
  p.img_xattn = MhaParams::init(embed_dim, xattn_heads, rng);
  return p;
}

DualPathOutput dual_path(Tape& tape, const DualPathParams& params,
                         const Tensor& text_seq, const Tensor& img_seq,
                         const GatedFeatures& gated, const DropoutConfig& drop,
                         Rng& rng, const AblationFlags& ablation) {
  DualPathOutput out;

  Tensor text_enc = gated.img_gated;
  Tensor img_enc = gated.text_gated;
  if (!ablation.no_mambaformer) {
    text_enc = mambaformer_encode(tape, params.text_path, text_enc, drop, rng);
    img_enc = mambaformer_encode(tape, params.img_path, img_enc, drop, rng);
  }
  out.text_refined = tape.add(text_enc, text_seq);
  out.img_refined = tape.add(img_enc, img_seq);

  if (ablation.no_cross_attention) {
    out.text_cross = Tensor::zeros(text_seq.shape());
    out.img_cross = Tensor::zeros(img_seq.shape());
  } else {
    MhaResult tc = mha(tape, params.text_xattn, text_seq, img_seq, img_seq);
    MhaResult ic = mha(tape, params.img_xattn, img_seq, text_seq, text_seq);
    out.text_cross = tc.out;
    out.img_cross = ic.out;
    out.text_xattn_weights = tc.attn;
    out.img_xattn_weights = ic.attn;
  }
  out.text_final = tape.add(out.text_refined, out.text_cross);
  out.img_final = tape.add(out.img_refined, out.img_cross);
  return out;
}

}  // namespace coattendwg
