#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dsam/ct/dataset.hpp"
#include "dsam/ct/slice.hpp"
#include "dsam/nn/network.hpp"
#include "dsam/nn/optimizer.hpp"
#include "dsam/train/metrics.hpp"

namespace dsam::train {

struct TrainingConfig {
  std::size_t batch_size = 32;
  double learning_rate = 0.001;
  std::size_t epochs = 50;
  nn::OptimizerKind optimizer = nn::OptimizerKind::kAdam;
  std::string loss = "bce";
  double dropout = 0.5;
  std::size_t patience = 10;
  double min_delta = 1e-4;
  std::uint64_t seed = 0;
  bool augment = false;
  ct::AugmentationSpec augmentation;

  /// Throws ConfigError naming the offending train.* key.
  void validate() const;
};

struct TrainingHistory {
  std::vector<double> train_loss, val_loss, val_accuracy;
  bool stopped_early = false;
  std::size_t best_epoch = 0;

  std::size_t epochs() const { return train_loss.size(); }
  /// "epoch,train_loss,val_loss,val_accuracy" rows with 17 significant digits.
  std::string to_csv() const;
};

/// Patience counter over validation losses. An epoch resets the counter when it
/// beats the last counted improvement by more than min_delta; the best epoch is
/// the overall minimum.
class EarlyStopping {
 public:
  EarlyStopping(std::size_t patience, double min_delta) : patience_(patience), min_delta_(min_delta) {}

  struct Verdict {
    bool new_best = false;
    bool stop = false;
  };
  Verdict update(double val_loss);

  std::size_t best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }
  std::size_t epochs_seen() const { return seen_; }

 private:
  std::size_t patience_;
  double min_delta_;
  double reference_ = 0.0, best_loss_ = 0.0;
  std::size_t best_epoch_ = 0, wait_ = 0, seen_ = 0;
};

/// Called after every epoch with (epoch index, history so far).
using EpochCallback = std::function<void(std::size_t, const TrainingHistory&)>;

/// Mini-batch training with seeded per-epoch shuffling, early stopping on
/// validation loss, and best-epoch weight restoration. Throws DivergenceError
/// naming the epoch and batch on a non-finite loss.
TrainingHistory train(nn::Network& net, const ct::Dataset& train_set, const ct::Dataset& val_set,
                      const TrainingConfig& cfg, const EpochCallback& on_epoch = {});

/// Inference-mode probabilities, in dataset order.
std::vector<double> predict(nn::Network& net, const ct::Dataset& data, std::size_t batch_size = 64);

/// Mean BCE and accuracy at 0.5 of `scores` against the dataset labels.
std::pair<double, double> loss_and_accuracy(const ct::Dataset& data, const std::vector<double>& scores);

struct EvaluationOptions {
  double threshold = kDefaultThreshold;
  std::size_t batch_size = 64;
};

struct Evaluation {
  MetricsReport metrics;
  std::vector<double> scores;
  std::vector<int> labels;
};

/// Metrics on a labelled set. AUC is left unset for single-class sets. DSC is
/// computed when every sample carries a ground-truth mask and the network has
/// an attention block; the predicted mask of a positive prediction is the
/// attention gate upsampled to the input and cut at its min/max midpoint, and
/// a negative prediction predicts an empty mask.
Evaluation evaluate(nn::Network& net, const ct::Dataset& data, const EvaluationOptions& opts = {});

}  // namespace dsam::train
