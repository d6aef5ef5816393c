#include "coattendwg/expert_fusion.hpp"

#include <stdexcept>

namespace coattendwg {

ExpertFusionParams ExpertFusionParams::init(int embed_dim, int experts,
                                            int refine_heads, Rng& rng) {
  if (experts < 2) {
    throw std::invalid_argument("expert_fusion: need at least 2 experts, got " +
                                std::to_string(experts));
  }
  ExpertFusionParams p;
  p.experts = experts;
  p.fusion = LinearParams::init(embed_dim, 2 * embed_dim, rng);
  p.gate = LinearParams::init(experts, 2 * embed_dim, rng);
  if (experts > 2) {
    p.expert_proj.reserve(static_cast<std::size_t>(experts));
    for (int e = 0; e < experts; ++e) {
      p.expert_proj.push_back(LinearParams::init(embed_dim, 2 * embed_dim, rng));
    }
  }
  p.refine = MhaParams::init(embed_dim, refine_heads, rng);
  p.ln_gamma = Tensor::full({embed_dim}, 1.0);
  p.ln_beta = Tensor::zeros({embed_dim});
  return p;
}

FusionResult expert_fuse(Tape& tape, const ExpertFusionParams& params,
                         const Tensor& text_final, const Tensor& img_final,
                         const DropoutConfig& drop, Rng& rng) {
  if (text_final.ndim() != 2 || text_final.shape() != img_final.shape()) {
    throw std::invalid_argument("expert_fuse: expected matching [B,D] inputs, got " +
                                shape_str(text_final.shape()) + " and " +
                                shape_str(img_final.shape()));
  }
  if (params.experts > 2 &&
      params.expert_proj.size() != static_cast<std::size_t>(params.experts)) {
    throw std::invalid_argument(
        "expert_fuse: " + std::to_string(params.experts) + " experts but " +
        std::to_string(params.expert_proj.size()) + " expert projections");
  }
  const int batch = text_final.dim(0);
  const int d = text_final.dim(1);

  Tensor concat = tape.concat_cols(text_final, img_final);  // [B, 2D]
  Tensor fused = dropout(
      tape, drop,
      apply_activation(tape, params.activation, linear(tape, params.fusion, concat)),
      rng);
  Tensor gate_weights = tape.softmax(linear(tape, params.gate, concat), 1);

  std::vector<Tensor> experts;
  if (params.experts == 2) {
    experts = {text_final, img_final};
  } else {
    experts.reserve(params.expert_proj.size());
    for (const LinearParams& proj : params.expert_proj) {
      experts.push_back(linear(tape, proj, concat));
    }
  }
  Tensor weighted_sum;
  for (int e = 0; e < params.experts; ++e) {
    Tensor term = tape.scale_rows(experts[static_cast<std::size_t>(e)],
                                  tape.slice_col(gate_weights, e));
    weighted_sum = e == 0 ? term : tape.add(weighted_sum, term);
  }

  // Length-1 sequence so the refinement attends per sample, not across the
  // batch.
  Tensor s_seq = tape.reshape(weighted_sum, {batch, 1, d});
  MhaResult refined = mha(tape, params.refine, s_seq, s_seq, s_seq);
  Tensor refined2d = tape.reshape(refined.out, {batch, d});

  Tensor summed = tape.add(tape.add(fused, weighted_sum), refined2d);
  Tensor output = tape.layer_norm(summed, params.ln_gamma, params.ln_beta,
                                  kLayerNormEps);

  FusionTrace trace;
  trace.gate_weights = gate_weights;
  trace.fused = fused;
  trace.weighted_sum = weighted_sum;
  trace.refined = refined2d;
  trace.output = output;
  trace.refine_attn_weights = refined.attn;
  return {output, trace};
}

Tensor classify(Tape& tape, const LinearParams& classifier, const Tensor& x) {
  return linear(tape, classifier, x);
}

}  // namespace coattendwg
