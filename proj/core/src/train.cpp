#include "coattendwg/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

namespace coattendwg {

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) {
    throw std::invalid_argument("train config: " + msg);
  };
  if (lr < 0.0) fail("lr must be >= 0");
  if (max_epochs < 1) fail("max_epochs must be >= 1");
  if (early_stop_patience < 1) fail("early_stop_patience must be >= 1");
  if (plateau_factor <= 0.0 || plateau_factor > 1.0) fail("plateau_factor must be in (0,1]");
  if (plateau_patience < 1) fail("plateau_patience must be >= 1");
  if (weight_decay < 0.0) fail("weight_decay must be >= 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (val_fraction < 0.0 || val_fraction >= 1.0) fail("val_fraction must be in [0,1)");
}

Tensor cross_entropy(Tape& tape, const Tensor& logits,
                     std::span<const int> labels) {
  if (logits.ndim() != 2 ||
      static_cast<std::size_t>(logits.dim(0)) != labels.size()) {
    throw std::invalid_argument("cross_entropy: logits " +
                                shape_str(logits.shape()) + " vs " +
                                std::to_string(labels.size()) + " labels");
  }
  const std::size_t b = labels.size();
  const std::size_t c = static_cast<std::size_t>(logits.dim(1));
  for (int label : labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= c) {
      throw std::invalid_argument("cross_entropy: label " +
                                  std::to_string(label) + " out of range [0," +
                                  std::to_string(c) + ")");
    }
  }
  Tensor out = Tensor::zeros({1});
  std::vector<double> lse(b);
  double total = 0.0;
  for (std::size_t r = 0; r < b; ++r) {
    double mx = logits.data()[r * c];
    for (std::size_t j = 1; j < c; ++j) {
      mx = std::max(mx, logits.data()[r * c + j]);
    }
    double denom = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      denom += std::exp(logits.data()[r * c + j] - mx);
    }
    lse[r] = mx + std::log(denom);
    total += lse[r] - logits.data()[r * c + static_cast<std::size_t>(labels[r])];
  }
  out.data()[0] = total / static_cast<double>(b);

  std::vector<int> labels_copy(labels.begin(), labels.end());
  tape.record({logits}, out,
              [logits, out, lse = std::move(lse),
               labels = std::move(labels_copy), b, c]() {
                const double g = out.grad()[0] / static_cast<double>(b);
                for (std::size_t r = 0; r < b; ++r) {
                  for (std::size_t j = 0; j < c; ++j) {
                    const double p = std::exp(logits.data()[r * c + j] - lse[r]);
                    const double onehot =
                        j == static_cast<std::size_t>(labels[r]) ? 1.0 : 0.0;
                    logits.grad()[r * c + j] += g * (p - onehot);
                  }
                }
              });
  return out;
}

AdamW::AdamW(std::span<const NamedTensor> params) {
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const NamedTensor& p : params) {
    m_.emplace_back(p.tensor.numel(), 0.0);
    v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

void AdamW::step(std::span<const NamedTensor> params, double lr,
                 double weight_decay) {
  if (params.size() != m_.size()) {
    throw std::invalid_argument("adamw: parameter list changed size");
  }
  ++step_count_;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count_));
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor t = params[pi].tensor;
    auto data = t.data();
    auto grad = t.grad();  // may be empty: treated as zero
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double g = i < grad.size() ? grad[i] : 0.0;
      data[i] -= lr * weight_decay * data[i];
      m_[pi][i] = beta1 * m_[pi][i] + (1.0 - beta1) * g;
      v_[pi][i] = beta2 * v_[pi][i] + (1.0 - beta2) * g * g;
      const double m_hat = m_[pi][i] / bc1;
      const double v_hat = v_[pi][i] / bc2;
      data[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

double PlateauScheduler::observe(double val_loss) {
  if (val_loss < best_ - min_improvement_) {
    best_ = val_loss;
    bad_epochs_ = 0;
  } else {
    ++bad_epochs_;
    if (bad_epochs_ >= patience_) {
      lr_ *= factor_;
      bad_epochs_ = 0;
    }
  }
  return lr_;
}

bool EarlyStopping::observe(double val_loss) {
  if (val_loss < best_ - min_improvement_) {
    best_ = val_loss;
    bad_epochs_ = 0;
    return false;
  }
  ++bad_epochs_;
  return bad_epochs_ >= patience_;
}

Metrics compute_metrics(std::span<const int> predictions,
                        std::span<const int> labels, int num_classes) {
  if (predictions.size() != labels.size()) {
    throw std::invalid_argument("compute_metrics: size mismatch");
  }
  Metrics m;
  m.per_class.assign(static_cast<std::size_t>(num_classes), {});
  long correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (predictions[i] == labels[i]) ++correct;
    for (int c = 0; c < num_classes; ++c) {
      const bool is_true = labels[i] == c;
      const bool is_pred = predictions[i] == c;
      ClassCounts& cc = m.per_class[static_cast<std::size_t>(c)];
      if (is_true && is_pred) ++cc.tp;
      else if (!is_true && is_pred) ++cc.fp;
      else if (is_true && !is_pred) ++cc.fn;
      else ++cc.tn;
    }
  }
  m.accuracy = labels.empty()
                   ? 0.0
                   : static_cast<double>(correct) / static_cast<double>(labels.size());
  double f1_sum = 0.0;
  for (int c = 0; c < num_classes; ++c) {
    const ClassCounts& cc = m.per_class[static_cast<std::size_t>(c)];
    const double p = cc.tp + cc.fp > 0
                         ? static_cast<double>(cc.tp) / static_cast<double>(cc.tp + cc.fp)
                         : 0.0;
    const double r = cc.tp + cc.fn > 0
                         ? static_cast<double>(cc.tp) / static_cast<double>(cc.tp + cc.fn)
                         : 0.0;
    const double f1 = p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
    m.precision.push_back(p);
    m.recall.push_back(r);
    m.f1.push_back(f1);
    f1_sum += f1;
  }
  m.macro_f1 = num_classes > 0 ? f1_sum / num_classes : 0.0;
  return m;
}

namespace {

std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

}  // namespace

std::vector<int> predict(const ModelParams& params, const ModelConfig& cfg,
                         const Dataset& data, int batch_size) {
  std::vector<int> preds;
  preds.reserve(data.size());
  auto indices = iota_indices(data.size());
  for (std::size_t start = 0; start < indices.size();
       start += static_cast<std::size_t>(batch_size)) {
    const std::size_t n =
        std::min(static_cast<std::size_t>(batch_size), indices.size() - start);
    Batch batch = make_batch(data, {indices.data() + start, n});
    Tape tape;
    ForwardResult fwd = forward_full(tape, params, cfg, batch.text, batch.img);
    const std::size_t c = static_cast<std::size_t>(cfg.num_classes);
    for (std::size_t r = 0; r < n; ++r) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < c; ++j) {
        if (fwd.logits.data()[r * c + j] > fwd.logits.data()[r * c + best]) {
          best = j;
        }
      }
      preds.push_back(static_cast<int>(best));
    }
  }
  return preds;
}

Metrics evaluate(const ModelParams& params, const ModelConfig& cfg,
                 const Dataset& data, int batch_size) {
  std::vector<int> labels;
  labels.reserve(data.size());
  for (const FeatureRecord& rec : data.records) labels.push_back(rec.label);
  return compute_metrics(predict(params, cfg, data, batch_size), labels,
                         cfg.num_classes);
}

double dataset_loss(const ModelParams& params, const ModelConfig& cfg,
                    const Dataset& data, int batch_size) {
  double total = 0.0;
  auto indices = iota_indices(data.size());
  for (std::size_t start = 0; start < indices.size();
       start += static_cast<std::size_t>(batch_size)) {
    const std::size_t n =
        std::min(static_cast<std::size_t>(batch_size), indices.size() - start);
    Batch batch = make_batch(data, {indices.data() + start, n});
    Tape tape;
    ForwardResult fwd = forward_full(tape, params, cfg, batch.text, batch.img);
    total += cross_entropy(tape, fwd.logits, batch.labels).value() *
             static_cast<double>(n);
  }
  return data.size() ? total / static_cast<double>(data.size()) : 0.0;
}

Dataset upsample_balance(const Dataset& data, Rng& rng) {
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    by_class[data.records[i].label].push_back(i);
  }
  if (by_class.empty()) return data;
  for (int c = 0; c < data.num_classes; ++c) {
    if (!by_class.count(c)) {
      throw std::invalid_argument("upsample_balance: class " +
                                  std::to_string(c) + " has no samples");
    }
  }
  std::size_t majority = 0;
  for (const auto& [label, members] : by_class) {
    majority = std::max(majority, members.size());
  }
  Dataset out = data;
  for (const auto& [label, members] : by_class) {
    for (std::size_t need = majority - members.size(); need > 0; --need) {
      const std::size_t pick = members[rng.bounded(members.size())];
      out.records.push_back(data.records[pick]);
    }
  }
  return out;
}

std::string format_epoch_record(const EpochRecord& rec) {
  char buf[320];
  std::snprintf(buf, sizeof(buf),
                "{\"epoch\":%d,\"lr\":%.17g,\"train_loss\":%.17g,"
                "\"val_loss\":%.17g,\"val_accuracy\":%.17g,"
                "\"val_macro_f1\":%.17g}",
                rec.epoch, rec.lr, rec.train_loss, rec.val_loss,
                rec.val_accuracy, rec.val_macro_f1);
  return buf;
}

TrainResult train(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                  const Dataset& data) {
  model_cfg.validate();
  train_cfg.validate();
  if (data.size() == 0) throw std::invalid_argument("train: empty dataset");
  if (data.text_dim != model_cfg.text_dim || data.img_dim != model_cfg.img_dim) {
    throw std::invalid_argument("train: dataset dims " +
                                std::to_string(data.text_dim) + "/" +
                                std::to_string(data.img_dim) +
                                " do not match config " +
                                std::to_string(model_cfg.text_dim) + "/" +
                                std::to_string(model_cfg.img_dim));
  }

  // Validation carve-out from the tail of a seeded shuffle.
  auto order = iota_indices(data.size());
  Rng split_rng(train_cfg.seed);
  split_rng.shuffle(order);
  const std::size_t n_val = static_cast<std::size_t>(
      std::floor(train_cfg.val_fraction * static_cast<double>(data.size())));
  const std::size_t n_train = data.size() - n_val;

  Dataset train_set{data.text_dim, data.img_dim, data.num_classes, {}};
  Dataset val_set{data.text_dim, data.img_dim, data.num_classes, {}};
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_train ? train_set : val_set).records.push_back(data.records[order[i]]);
  }

  ModelParams params = ModelParams::init(model_cfg);
  auto named = params.named_parameters();
  AdamW optimizer(named);
  PlateauScheduler scheduler(train_cfg.lr, train_cfg.plateau_factor,
                             train_cfg.plateau_patience,
                             train_cfg.min_improvement);
  EarlyStopping stopper(train_cfg.early_stop_patience,
                        train_cfg.min_improvement);
  Rng epoch_rng(train_cfg.seed + 0x9E3779B97F4A7C15ull);
  Rng dropout_rng(train_cfg.seed + 0xBF58476D1CE4E5B9ull);

  TrainResult result;
  double best_val = std::numeric_limits<double>::infinity();
  result.params = params.clone();
  double lr = train_cfg.lr;

  auto train_indices = iota_indices(train_set.size());
  for (int epoch = 1; epoch <= train_cfg.max_epochs; ++epoch) {
    epoch_rng.shuffle(train_indices);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < train_indices.size();
         start += static_cast<std::size_t>(train_cfg.batch_size)) {
      const std::size_t n = std::min(
          static_cast<std::size_t>(train_cfg.batch_size),
          train_indices.size() - start);
      Batch batch = make_batch(train_set, {train_indices.data() + start, n});
      Tape tape;
      ForwardResult fwd = forward_full(tape, params, model_cfg, batch.text,
                                       batch.img, /*training=*/true,
                                       &dropout_rng);
      Tensor loss = cross_entropy(tape, fwd.logits, batch.labels);
      const double loss_value = loss.value();
      if (!std::isfinite(loss_value)) {
        throw DivergenceError("training diverged at epoch " +
                              std::to_string(epoch) + ": loss is not finite");
      }
      tape.backward(loss);
      optimizer.step(named, lr, train_cfg.weight_decay);
      loss_sum += loss_value * static_cast<double>(n);
      ++result.steps;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = loss_sum / static_cast<double>(train_set.size());
    const Dataset& val_source = n_val > 0 ? val_set : train_set;
    rec.val_loss = dataset_loss(params, model_cfg, val_source);
    Metrics val_metrics = evaluate(params, model_cfg, val_source);
    rec.val_accuracy = val_metrics.accuracy;
    rec.val_macro_f1 = val_metrics.macro_f1;
    result.log.push_back(rec);

    if (rec.val_loss < best_val) {
      best_val = rec.val_loss;
      result.params = params.clone();
    }
    lr = scheduler.observe(rec.val_loss);
    if (stopper.observe(rec.val_loss)) break;
  }
  return result;
}

}  // namespace coattendwg
