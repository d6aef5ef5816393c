#include "coattendwg/model.hpp"

#include <sstream>
#include <stdexcept>

namespace coattendwg {

AblationFlags parse_ablation(const std::string& spec) {
  AblationFlags flags;
  std::stringstream ss(spec);
  std::string token;
  while (std::getline(ss, token, ',')) {
    if (token.empty()) continue;
    if (token == "no_ef") flags.no_expert_fusion = true;
    else if (token == "no_ca") flags.no_coattention = true;
    else if (token == "no_xa") flags.no_cross_attention = true;
    else if (token == "no_mf") flags.no_mambaformer = true;
    else if (token == "no_ff") flags.no_gating = true;
    else if (token == "two_heads") flags.two_heads = true;
    else throw std::invalid_argument("unknown ablation flag: " + token);
  }
  return flags;
}

std::string format_ablation(const AblationFlags& flags) {
  std::string out;
  auto append = [&out](const char* tok) {
    if (!out.empty()) out += ',';
    out += tok;
  };
  if (flags.no_expert_fusion) append("no_ef");
  if (flags.no_coattention) append("no_ca");
  if (flags.no_cross_attention) append("no_xa");
  if (flags.no_mambaformer) append("no_mf");
  if (flags.no_gating) append("no_ff");
  if (flags.two_heads) append("two_heads");
  return out;
}

std::vector<std::pair<std::string, AblationFlags>> ablation_grid() {
  std::vector<std::pair<std::string, AblationFlags>> grid;
  grid.emplace_back("Full", AblationFlags{});
  grid.emplace_back("w/o EF", parse_ablation("no_ef"));
  grid.emplace_back("w/o CA", parse_ablation("no_ca"));
  grid.emplace_back("w/o XA", parse_ablation("no_xa"));
  grid.emplace_back("w/o MF", parse_ablation("no_mf"));
  grid.emplace_back("w/o FF", parse_ablation("no_ff"));
  grid.emplace_back("w/o EF+MF", parse_ablation("no_ef,no_mf"));
  grid.emplace_back("w/o CA+XA", parse_ablation("no_ca,no_xa"));
  grid.emplace_back("w/o EF+CA+MF", parse_ablation("no_ef,no_ca,no_mf"));
  grid.emplace_back("2Heads", parse_ablation("two_heads"));
  grid.emplace_back("w/o MF+FF", parse_ablation("no_mf,no_ff"));
  return grid;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) {
    throw std::invalid_argument("config: " + msg);
  };
  if (embed_dim <= 0) fail("embed_dim must be positive");
  if (text_dim <= 0 || img_dim <= 0) fail("feature dims must be positive");
  if (seq_len != 1) fail("seq_len must be 1 (the fusion stage squeezes a length-1 sequence)");
  if (fusion_heads <= 0 || embed_dim % fusion_heads != 0) {
    fail("embed_dim must be divisible by fusion_heads");
  }
  if (refine_heads <= 0 || embed_dim % refine_heads != 0) {
    fail("embed_dim must be divisible by refine_heads");
  }
  if (ablation.two_heads && embed_dim % 2 != 0) {
    fail("two_heads ablation needs an even embed_dim");
  }
  if (experts < 2) fail("experts must be >= 2");
  if (mf_kernel <= 0 || mf_kernel % 2 == 0) fail("mf_kernel must be odd and positive");
  if (mf_depth < 0) fail("mf_depth must be >= 0");
  if (dropout < 0.0 || dropout >= 1.0) fail("dropout must be in [0,1)");
  if (num_classes < 2) fail("num_classes must be >= 2");
}

ModelConfig ModelConfig::tiny() {
  ModelConfig cfg;
  cfg.embed_dim = 8;
  cfg.text_dim = 6;
  cfg.img_dim = 10;
  cfg.seq_len = 1;
  cfg.fusion_heads = 2;
  cfg.refine_heads = 2;
  cfg.experts = 2;
  cfg.mf_kernel = 3;
  cfg.mf_depth = 2;
  cfg.dropout = 0.0;
  cfg.num_classes = 3;
  return cfg;
}

ModelParams ModelParams::init(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  ModelParams p;
  p.projection = ProjectionParams::init(cfg.embed_dim, cfg.text_dim, cfg.img_dim, rng);
  p.coattention = CoAttenParams::init(cfg.embed_dim, cfg.fusion_heads, rng);
  p.dual_path = DualPathParams::init(cfg.embed_dim, cfg.mf_depth, cfg.mf_kernel,
                                     cfg.effective_refine_heads(),
                                     cfg.fusion_heads, rng);
  p.fusion = ExpertFusionParams::init(cfg.embed_dim, cfg.experts,
                                      cfg.effective_refine_heads(), rng);
  p.classifier = LinearParams::init(cfg.num_classes, cfg.embed_dim, rng);
  return p;
}

ModelParams ModelParams::init(const ModelConfig& cfg) {
  Rng rng(cfg.seed);
  return init(cfg, rng);
}

namespace {

void add_linear(std::vector<NamedTensor>& out, const std::string& prefix,
                const LinearParams& p) {
  out.push_back({prefix + ".weight", p.weight});
  out.push_back({prefix + ".bias", p.bias});
}

void add_mha(std::vector<NamedTensor>& out, const std::string& prefix,
             const MhaParams& p) {
  out.push_back({prefix + ".w_q", p.w_q});
  out.push_back({prefix + ".w_k", p.w_k});
  out.push_back({prefix + ".w_v", p.w_v});
  out.push_back({prefix + ".w_o", p.w_o});
  if (p.use_bias) {
    out.push_back({prefix + ".b_q", p.b_q});
    out.push_back({prefix + ".b_k", p.b_k});
    out.push_back({prefix + ".b_v", p.b_v});
    out.push_back({prefix + ".b_o", p.b_o});
  }
}

void add_mambaformer(std::vector<NamedTensor>& out, const std::string& prefix,
                     const MambaFormerLayerParams& p) {
  out.push_back({prefix + ".conv_kernel", p.conv_kernel});
  out.push_back({prefix + ".conv_bias", p.conv_bias});
  add_mha(out, prefix + ".self_attn", p.self_attn);
  out.push_back({prefix + ".ln1_gamma", p.ln1_gamma});
  out.push_back({prefix + ".ln1_beta", p.ln1_beta});
  out.push_back({prefix + ".ln2_gamma", p.ln2_gamma});
  out.push_back({prefix + ".ln2_beta", p.ln2_beta});
}

}  // namespace

std::vector<NamedTensor> ModelParams::named_parameters() const {
  std::vector<NamedTensor> out;
  add_linear(out, "projection.text", projection.text_proj);
  add_linear(out, "projection.img", projection.img_proj);
  add_mha(out, "coattention.text_to_img", coattention.text_to_img);
  add_mha(out, "coattention.img_to_text", coattention.img_to_text);
  add_linear(out, "coattention.text_gate", coattention.text_gate);
  add_linear(out, "coattention.img_gate", coattention.img_gate);
  for (std::size_t i = 0; i < dual_path.text_path.size(); ++i) {
    add_mambaformer(out, "dual_path.text_path." + std::to_string(i),
                    dual_path.text_path[i]);
  }
  for (std::size_t i = 0; i < dual_path.img_path.size(); ++i) {
    add_mambaformer(out, "dual_path.img_path." + std::to_string(i),
                    dual_path.img_path[i]);
  }
  add_mha(out, "dual_path.text_xattn", dual_path.text_xattn);
  add_mha(out, "dual_path.img_xattn", dual_path.img_xattn);
  add_linear(out, "fusion.fusion", fusion.fusion);
  add_linear(out, "fusion.gate", fusion.gate);
  for (std::size_t i = 0; i < fusion.expert_proj.size(); ++i) {
    add_linear(out, "fusion.expert_proj." + std::to_string(i),
               fusion.expert_proj[i]);
  }
  add_mha(out, "fusion.refine", fusion.refine);
  out.push_back({"fusion.ln_gamma", fusion.ln_gamma});
  out.push_back({"fusion.ln_beta", fusion.ln_beta});
  add_linear(out, "classifier", classifier);
  return out;
}

ModelParams ModelParams::clone() const {
  ModelParams copy = *this;  // copies handles; replaced field by field below
  auto copy_linear = [](const LinearParams& p) {
    LinearParams q;
    q.weight = p.weight.clone();
    q.bias = p.bias.clone();
    return q;
  };
  auto copy_mha = [](const MhaParams& p) {
    MhaParams q;
    q.heads = p.heads;
    q.use_bias = p.use_bias;
    q.w_q = p.w_q.clone();
    q.w_k = p.w_k.clone();
    q.w_v = p.w_v.clone();
    q.w_o = p.w_o.clone();
    if (p.use_bias) {
      q.b_q = p.b_q.clone();
      q.b_k = p.b_k.clone();
      q.b_v = p.b_v.clone();
      q.b_o = p.b_o.clone();
    }
    return q;
  };
  auto copy_mf = [&](const MambaFormerLayerParams& p) {
    MambaFormerLayerParams q;
    q.conv_kernel = p.conv_kernel.clone();
    q.conv_bias = p.conv_bias.clone();
    q.self_attn = copy_mha(p.self_attn);
    q.ln1_gamma = p.ln1_gamma.clone();
    q.ln1_beta = p.ln1_beta.clone();
    q.ln2_gamma = p.ln2_gamma.clone();
    q.ln2_beta = p.ln2_beta.clone();
    q.activation = p.activation;
    return q;
  };

  copy.projection.text_proj = copy_linear(projection.text_proj);
  copy.projection.img_proj = copy_linear(projection.img_proj);
  copy.coattention.text_to_img = copy_mha(coattention.text_to_img);
  copy.coattention.img_to_text = copy_mha(coattention.img_to_text);
  copy.coattention.text_gate = copy_linear(coattention.text_gate);
  copy.coattention.img_gate = copy_linear(coattention.img_gate);
  copy.dual_path.text_path.clear();
  for (const auto& l : dual_path.text_path) copy.dual_path.text_path.push_back(copy_mf(l));
  copy.dual_path.img_path.clear();
  for (const auto& l : dual_path.img_path) copy.dual_path.img_path.push_back(copy_mf(l));
  copy.dual_path.text_xattn = copy_mha(dual_path.text_xattn);
  copy.dual_path.img_xattn = copy_mha(dual_path.img_xattn);
  copy.fusion.fusion = copy_linear(fusion.fusion);
  copy.fusion.gate = copy_linear(fusion.gate);
  copy.fusion.expert_proj.clear();
  for (const auto& l : fusion.expert_proj) copy.fusion.expert_proj.push_back(copy_linear(l));
  copy.fusion.refine = copy_mha(fusion.refine);
  copy.fusion.ln_gamma = fusion.ln_gamma.clone();
  copy.fusion.ln_beta = fusion.ln_beta.clone();
  copy.classifier = copy_linear(classifier);
  return copy;
}

ForwardResult forward_full(Tape& tape, const ModelParams& params,
                           const ModelConfig& cfg, const Tensor& text_feat,
                           const Tensor& img_feat, bool training, Rng* rng) {
  if (text_feat.ndim() != 2 || text_feat.dim(1) != cfg.text_dim) {
    throw std::invalid_argument("forward: text features " +
                                shape_str(text_feat.shape()) +
                                " do not match text_dim " +
                                std::to_string(cfg.text_dim));
  }
  if (img_feat.ndim() != 2 || img_feat.dim(1) != cfg.img_dim) {
    throw std::invalid_argument("forward: image features " +
                                shape_str(img_feat.shape()) +
                                " do not match img_dim " +
                                std::to_string(cfg.img_dim));
  }
  DropoutConfig drop{cfg.dropout, training};
  Rng fallback(0);
  if (training && cfg.dropout > 0.0 && rng == nullptr) {
    throw std::invalid_argument("forward: training with dropout needs an rng");
  }
  Rng& r = rng ? *rng : fallback;

  const int batch = text_feat.dim(0);
  const int d = cfg.embed_dim;

  auto [text_seq, img_seq] = project(tape, params.projection, text_feat, img_feat);
  ForwardResult result;
  result.trace.gated =
      coattend(tape, params.coattention, text_seq, img_seq, cfg.ablation);
  result.trace.dual = dual_path(tape, params.dual_path, text_seq, img_seq,
                                result.trace.gated, drop, r, cfg.ablation);

  Tensor text_final = tape.reshape(result.trace.dual.text_final, {batch, d});
  Tensor img_final = tape.reshape(result.trace.dual.img_final, {batch, d});

  Tensor embedding;
  if (cfg.ablation.no_expert_fusion) {
    // Plain concatenation + linear map back to D.
    Tensor concat = tape.concat_cols(text_final, img_final);
    embedding = linear(tape, params.fusion.fusion, concat);
    FusionTrace& t = result.trace.fusion;
    t.gate_weights = Tensor::full({batch, cfg.experts}, 1.0 / cfg.experts);
    t.fused = embedding;
    t.output = embedding;
  } else {
    FusionResult fused = expert_fuse(tape, params.fusion, text_final, img_final,
                                     drop, r);
    embedding = fused.output;
    result.trace.fusion = fused.trace;
  }
  result.logits = classify(tape, params.classifier, embedding);
  return result;
}

}  // namespace coattendwg
