#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "coattendwg/tensor.hpp"

namespace coattendwg {

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;  // one per parameter tensor
  double max_rel_err = 0.0;
  bool passed(double tol) const { return max_rel_err < tol; }
};

// Central-difference check of reverse-mode gradients. `loss_fn` must build the
// scalar loss on the tape it is given and be deterministic (disable dropout).
// Relative error per scalar is |a - n| / max(|a|, |n|, 1e-8).
GradCheckReport gradcheck(std::span<const NamedTensor> params,
                          const std::function<Tensor(Tape&)>& loss_fn,
                          double h = 1e-5);

}  // namespace coattendwg
