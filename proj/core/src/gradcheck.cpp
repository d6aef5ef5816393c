#include "coattendwg/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace coattendwg {

namespace {

double eval_loss(const std::function<Tensor(Tape&)>& loss_fn) {
  Tape tape;
  const double v = loss_fn(tape).value();
  if (!std::isfinite(v)) {
    throw std::runtime_error("gradcheck: loss evaluated to a non-finite value");
  }
  return v;
}

}  // namespace

GradCheckReport gradcheck(std::span<const NamedTensor> params,
                          const std::function<Tensor(Tape&)>& loss_fn,
                          double h) {
  if (h <= 0.0) throw std::invalid_argument("gradcheck: h must be > 0");

  // Analytic pass.
  Tape tape;
  Tensor loss = loss_fn(tape);
  if (!std::isfinite(loss.value())) {
    throw std::runtime_error("gradcheck: loss evaluated to a non-finite value");
  }
  tape.backward(loss);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const NamedTensor& p : params) {
    if (p.tensor.has_grad()) {
      analytic.emplace_back(p.tensor.grad().begin(), p.tensor.grad().end());
    } else {
      analytic.emplace_back(p.tensor.numel(), 0.0);  // disconnected leaf
    }
  }

  GradCheckReport report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor t = params[pi].tensor;
    GradCheckEntry entry;
    entry.name = params[pi].name;
    for (std::size_t i = 0; i < t.numel(); ++i) {
      const double saved = t.data()[i];
      t.data()[i] = saved + h;
      const double up = eval_loss(loss_fn);
      t.data()[i] = saved - h;
      const double down = eval_loss(loss_fn);
      t.data()[i] = saved;

      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[pi][i];
      const double rel =
          std::abs(a - numeric) /
          std::max({std::abs(a), std::abs(numeric), 1e-8});
      if (rel > entry.max_rel_err) {
        entry.max_rel_err = rel;
        entry.worst_index = i;
        entry.analytic = a;
        entry.numeric = numeric;
      }
    }
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace coattendwg
