#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "coattendwg/data.hpp"
#include "coattendwg/model.hpp"

namespace coattendwg {

struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  double lr = 2e-5;
  int max_epochs = 20;
  int early_stop_patience = 3;
  double plateau_factor = 0.5;
  int plateau_patience = 2;
  double min_improvement = 1e-4;
  double weight_decay = 0.01;
  int batch_size = 32;
  double val_fraction = 0.1;  // 0 drives plateau/early-stop from train loss
  std::uint64_t seed = 0;
  void validate() const;
};

// Mean over the batch of -log softmax(logits)[label], via log-sum-exp.
Tensor cross_entropy(Tape& tape, const Tensor& logits,
                     std::span<const int> labels);

// Decoupled weight decay (theta -= lr * wd * theta) followed by the
// bias-corrected Adam update. Parameters without a grad are treated as
// having zero gradient.
class AdamW {
 public:
  explicit AdamW(std::span<const NamedTensor> params);
  void step(std::span<const NamedTensor> params, double lr,
            double weight_decay);
  long steps() const { return step_count_; }

  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

 private:
  long step_count_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// Reduce-on-plateau: multiply lr by `factor` after `patience` epochs without
// the validation loss improving by more than `min_improvement`.
class PlateauScheduler {
 public:
  PlateauScheduler(double lr, double factor, int patience,
                   double min_improvement)
      : lr_(lr), factor_(factor), patience_(patience),
        min_improvement_(min_improvement) {}
  double observe(double val_loss);
  double lr() const { return lr_; }

 private:
  double lr_, factor_;
  int patience_;
  double min_improvement_;
  int bad_epochs_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
};

class EarlyStopping {
 public:
  EarlyStopping(int patience, double min_improvement)
      : patience_(patience), min_improvement_(min_improvement) {}
  // Returns true when training should stop.
  bool observe(double val_loss);

 private:
  int patience_;
  double min_improvement_;
  int bad_epochs_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
};

struct ClassCounts {
  long tn = 0, fp = 0, fn = 0, tp = 0;
};

struct Metrics {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::vector<ClassCounts> per_class;  // one-vs-rest per class
  std::vector<double> precision, recall, f1;
};

// One-vs-rest confusion counts; precision/recall/F1 with 0/0 -> 0; macro-F1 is
// the unweighted mean over classes.
Metrics compute_metrics(std::span<const int> predictions,
                        std::span<const int> labels, int num_classes);

std::vector<int> predict(const ModelParams& params, const ModelConfig& cfg,
                         const Dataset& data, int batch_size = 256);

Metrics evaluate(const ModelParams& params, const ModelConfig& cfg,
                 const Dataset& data, int batch_size = 256);

// Mean cross-entropy over a dataset in eval mode.
double dataset_loss(const ModelParams& params, const ModelConfig& cfg,
                    const Dataset& data, int batch_size = 256);

// Duplicates minority-class samples (drawn uniformly from the originals,
// seeded) until every class matches the majority count. Originals are all
// retained, in their original order.
Dataset upsample_balance(const Dataset& data, Rng& rng);

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  double val_macro_f1 = 0.0;
};

std::string format_epoch_record(const EpochRecord& rec);  // one JSON line

struct TrainResult {
  ModelParams params;  // best validation loss
  std::vector<EpochRecord> log;
  long steps = 0;
};

// Seeded mini-batch training with AdamW, plateau scheduling, early stopping
// and best-parameter retention. Throws DivergenceError if the loss goes
// non-finite.
TrainResult train(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                  const Dataset& data);

}  // namespace coattendwg
