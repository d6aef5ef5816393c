#include "coattendwg/coattention.hpp"

#include <stdexcept>

namespace coattendwg {

ProjectionParams ProjectionParams::init(int embed_dim, int text_dim,
                                        int img_dim, Rng& rng) {
  ProjectionParams p;
  p.text_proj = LinearParams::init(embed_dim, text_dim, rng);
  p.img_proj = LinearParams::init(embed_dim, img_dim, rng);
  return p;
}

std::pair<Tensor, Tensor> project(Tape& tape, const ProjectionParams& params,
                                  const Tensor& text_feat,
                                  const Tensor& img_feat) {
  if (text_feat.ndim() != 2 || img_feat.ndim() != 2 ||
      text_feat.dim(0) != img_feat.dim(0)) {
    throw std::invalid_argument("project: expected [B,D_text] and [B,D_img], got " +
                                shape_str(text_feat.shape()) + " and " +
                                shape_str(img_feat.shape()));
  }
  const int batch = text_feat.dim(0);
  const int d = params.text_proj.out_dim();
  Tensor t = linear(tape, params.text_proj, text_feat);
  Tensor i = linear(tape, params.img_proj, img_feat);
  return {tape.reshape(t, {batch, 1, d}), tape.reshape(i, {batch, 1, d})};
}

CoAttenParams CoAttenParams::init(int embed_dim, int heads, Rng& rng) {
  CoAttenParams p;
  p.text_to_img = MhaParams::init(embed_dim, heads, rng);
  p.img_to_text = MhaParams::init(embed_dim, heads, rng);
  p.text_gate = LinearParams::init(embed_dim, embed_dim, rng);
  p.img_gate = LinearParams::init(embed_dim, embed_dim, rng);
  return p;
}

GatedFeatures coattend(Tape& tape, const CoAttenParams& params,
                       const Tensor& text_seq, const Tensor& img_seq,
                       const AblationFlags& ablation) {
  if (text_seq.shape() != img_seq.shape()) {
    throw std::invalid_argument("coattend: shape mismatch " +
                                shape_str(text_seq.shape()) + " vs " +
                                shape_str(img_seq.shape()));
  }
  GatedFeatures out;
  if (ablation.no_coattention) {
    out.text_attended = text_seq;
    out.img_attended = img_seq;
  } else {
    MhaResult t2i = mha(tape, params.text_to_img, text_seq, img_seq, img_seq);
    MhaResult i2t = mha(tape, params.img_to_text, img_seq, text_seq, text_seq);
    out.text_attended = t2i.out;
    out.img_attended = i2t.out;
    out.text_attn_weights = t2i.attn;
    out.img_attn_weights = i2t.attn;
  }

  if (ablation.no_gating) {
    out.text_gate = Tensor::full(out.text_attended.shape(), 1.0);
    out.img_gate = Tensor::full(out.img_attended.shape(), 1.0);
    out.text_gated = out.text_attended;
    out.img_gated = out.img_attended;
  } else {
    out.text_gate = tape.sigmoid(linear(tape, params.text_gate, out.text_attended));
    out.img_gate = tape.sigmoid(linear(tape, params.img_gate, out.img_attended));
    out.text_gated = tape.mul(out.text_gate, out.text_attended);
    out.img_gated = tape.mul(out.img_gate, out.img_attended);
  }
  return out;
}

}  // namespace coattendwg
