#pragma once

#include <string>
#include <utility>
#include <vector>

namespace coattendwg {

// Components that can be switched off while keeping the model end-to-end
// differentiable. Replacements are shape-preserving: identity encoders, zero
// cross terms, pass-through gating, plain concat+linear fusion.
struct AblationFlags {
  bool no_expert_fusion = false;   // EF: concat+linear instead of expert fusion
  bool no_coattention = false;     // CA: skip bidirectional attention
  bool no_cross_attention = false; // XA: zero the cross-attention terms
  bool no_mambaformer = false;     // MF: encoders become identity
  bool no_gating = false;          // FF: pass attention outputs ungated
  bool two_heads = false;          // halve the refinement head count (4 -> 2)

  bool any() const {
    return no_expert_fusion || no_coattention || no_cross_attention ||
           no_mambaformer || no_gating || two_heads;
  }
  bool operator==(const AblationFlags&) const = default;
};

// Parses a comma-separated list of tokens: no_ef, no_ca, no_xa, no_mf, no_ff,
// two_heads. Empty string means no ablation. Unknown tokens throw.
AblationFlags parse_ablation(const std::string& spec);
std::string format_ablation(const AblationFlags& flags);

// The standard variant grid run by the `ablate` command: the full model plus
// every published single- and multi-component ablation.
std::vector<std::pair<std::string, AblationFlags>> ablation_grid();

}  // namespace coattendwg
