#include "dsam/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "dsam/attention/attention.hpp"
#include "dsam/common/error.hpp"
#include "dsam/common/rng.hpp"
#include "dsam/nn/loss.hpp"

namespace dsam::train {

namespace {

std::vector<std::vector<std::size_t>> make_batches(std::vector<std::size_t> order, std::size_t batch_size) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + batch_size)));
  }
  // Batchnorm needs two samples; fold a lone trailing sample into the previous batch.
  if (out.size() > 1 && out.back().size() == 1) {
    out[out.size() - 2].push_back(out.back().front());
    out.pop_back();
  }
  return out;
}

nn::Tensor augmented_images(const ct::Dataset& data, const std::vector<std::size_t>& idx,
                            const ct::AugmentationSpec& spec, std::uint64_t seed, std::size_t epoch) {
  nn::Tensor images = data.images(idx);
  const std::size_t c = data.channels(), h = data.height(), w = data.width(), plane = h * w;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const std::uint64_t s = derive_seed(seed, Stream::kAugment, epoch * data.size() + idx[k]);
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (k * c + ch) * plane;
      nn::Tensor p({h, w});
      std::copy_n(images.data().begin() + static_cast<std::ptrdiff_t>(base), plane, p.data().begin());
      const ct::SliceImage out = ct::augment({p, ct::ValueSpace::kZscored, ""}, spec, s);
      std::copy(out.pixels.values().begin(), out.pixels.values().end(),
                images.data().begin() + static_cast<std::ptrdiff_t>(base));
    }
  }
  return images;
}

attention::AttentionBlock* find_attention(nn::Network& net) {
  attention::AttentionBlock* found = nullptr;
  net.layers().visit([&](nn::Layer& l) {
    if (!found) found = dynamic_cast<attention::AttentionBlock*>(&l);
  });
  return found;
}

std::vector<std::uint8_t> gate_mask(const nn::Tensor& gate, std::size_t n, std::size_t out_h, std::size_t out_w) {
  const std::size_t gh = gate.dim(2), gw = gate.dim(3), plane = gh * gw;
  double lo = gate[n * plane], hi = lo;
  for (std::size_t p = 0; p < plane; ++p) {
    lo = std::min(lo, gate[n * plane + p]);
    hi = std::max(hi, gate[n * plane + p]);
  }
  const double cut = (lo + hi) / 2.0;
  std::vector<std::uint8_t> mask(out_h * out_w, 0);
  if (hi <= lo) return mask;
  for (std::size_t y = 0; y < out_h; ++y)
    for (std::size_t x = 0; x < out_w; ++x) {
      const std::size_t gy = y * gh / out_h, gx = x * gw / out_w;
      mask[y * out_w + x] = gate[n * plane + gy * gw + gx] >= cut ? 1 : 0;
    }
  return mask;
}

}  // namespace

void TrainingConfig::validate() const {
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("train.learning_rate must be > 0");
  if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (loss != "bce") throw ConfigError("train.loss: only 'bce' is supported, got '" + loss + "'");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("train.dropout must lie in [0,1)");
  if (!(min_delta >= 0.0)) throw ConfigError("train.min_delta must be >= 0");
  if (augment) augmentation.validate();
}

std::string TrainingHistory::to_csv() const {
  std::string out = "epoch,train_loss,val_loss,val_accuracy\n";
  char buf[160];
  for (std::size_t e = 0; e < train_loss.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", e, train_loss[e], val_loss[e], val_accuracy[e]);
    out += buf;
  }
  return out;
}

EarlyStopping::Verdict EarlyStopping::update(double val_loss) {
  Verdict v;
  const std::size_t epoch = seen_++;
  if (epoch == 0) {
    reference_ = best_loss_ = val_loss;
    best_epoch_ = 0;
    v.new_best = true;
    return v;
  }
  if (val_loss < best_loss_) {
    best_loss_ = val_loss;
    best_epoch_ = epoch;
    v.new_best = true;
  }
  if (val_loss < reference_ - min_delta_) {
    reference_ = val_loss;
    wait_ = 0;
  } else {
    ++wait_;
  }
  v.stop = wait_ >= patience_;
  return v;
}

std::pair<double, double> loss_and_accuracy(const ct::Dataset& data, const std::vector<double>& scores) {
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const nn::Tensor labels = data.labels(all);
  const nn::Tensor pred({scores.size(), 1}, scores);
  const double loss = nn::bce_loss(pred, labels).loss;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) correct += (scores[i] >= 0.5) == (labels[i] == 1.0);
  return {loss, static_cast<double>(correct) / static_cast<double>(scores.size())};
}

TrainingHistory train(nn::Network& net, const ct::Dataset& train_set, const ct::Dataset& val_set,
                      const TrainingConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_set.empty() || val_set.empty()) throw ContractError("train: training and validation sets must be non-empty");
  if (train_set.size() < 2) throw ContractError("train: batchnorm needs at least two training samples");
  if (train_set.sample_shape() != net.input_shape() || val_set.sample_shape() != net.input_shape()) {
    throw ConfigError("train: dataset samples " + nn::shape_string(train_set.sample_shape()) +
                      " do not match the network input " + nn::shape_string(net.input_shape()));
  }
  nn::Optimizer opt(cfg.optimizer, cfg.learning_rate, net.trainable_parameters());
  EarlyStopping stopper(cfg.patience, cfg.min_delta);
  TrainingHistory hist;
  std::vector<nn::Tensor> best = net.snapshot();
  net.zero_grad();

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle(derive_seed(cfg.seed, Stream::kShuffle, epoch));
    shuffle.shuffle(order);

    double loss_sum = 0.0;
    const auto batches = make_batches(order, cfg.batch_size);
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto& idx = batches[b];
      const nn::Tensor x =
          cfg.augment ? augmented_images(train_set, idx, cfg.augmentation, cfg.seed, epoch) : train_set.images(idx);
      const nn::Tensor y = train_set.labels(idx);
      net.set_mode(nn::Mode::kTrain);
      nn::Tensor pred;
      try {
        pred = net.forward(x);
      } catch (const DivergenceError&) {
        throw DivergenceError("non-finite activations at epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(b));
      }
      const nn::LossValue lv = nn::bce_loss(pred, y);
      if (!std::isfinite(lv.loss)) {
        throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b));
      }
      net.backward(lv.gradient);
      opt.step();
      loss_sum += lv.loss * static_cast<double>(idx.size());
    }
    hist.train_loss.push_back(loss_sum / static_cast<double>(train_set.size()));

    const auto [val_loss, val_acc] = loss_and_accuracy(val_set, predict(net, val_set));
    if (!std::isfinite(val_loss)) throw DivergenceError("non-finite validation loss at epoch " + std::to_string(epoch));
    hist.val_loss.push_back(val_loss);
    hist.val_accuracy.push_back(val_acc);

    const EarlyStopping::Verdict v = stopper.update(val_loss);
    if (v.new_best) best = net.snapshot();
    hist.best_epoch = stopper.best_epoch();
    if (on_epoch) on_epoch(epoch, hist);
    if (v.stop) {
      hist.stopped_early = epoch + 1 < cfg.epochs;
      break;
    }
  }
  net.restore(best);
  net.set_mode(nn::Mode::kInference);
  return hist;
}

std::vector<double> predict(nn::Network& net, const ct::Dataset& data, std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("batch size must be >= 1");
  net.set_mode(nn::Mode::kInference);
  std::vector<double> out;
  out.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); i += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t k = i; k < std::min(data.size(), i + batch_size); ++k) idx.push_back(k);
    const nn::Tensor p = net.forward(data.images(idx));
    for (double v : p.values()) out.push_back(v);
  }
  return out;
}

Evaluation evaluate(nn::Network& net, const ct::Dataset& data, const EvaluationOptions& opts) {
  if (data.empty()) throw ContractError("evaluate: test set is empty");
  if (opts.batch_size == 0) throw ConfigError("eval.batch_size must be >= 1");
  Evaluation ev;
  for (const ct::Sample& s : data.samples()) {
    if (s.label == ct::kUnlabeled) throw ContractError("evaluate: sample '" + s.id + "' is unlabeled");
    ev.labels.push_back(s.label);
  }
  attention::AttentionBlock* attn = data.has_masks() ? find_attention(net) : nullptr;
  net.set_mode(nn::Mode::kInference);
  double dsc_sum = 0.0;
  for (std::size_t i = 0; i < data.size(); i += opts.batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t k = i; k < std::min(data.size(), i + opts.batch_size); ++k) idx.push_back(k);
    const nn::Tensor p = net.forward(data.images(idx));
    for (double v : p.values()) ev.scores.push_back(v);
    if (attn) {
      const nn::Tensor gate = attn->mean_gate();
      for (std::size_t k = 0; k < idx.size(); ++k) {
        const bool positive = p[k] >= opts.threshold;
        const auto predicted = positive ? gate_mask(gate, k, data.height(), data.width())
                                        : std::vector<std::uint8_t>(data.height() * data.width(), 0);
        dsc_sum += dice(predicted, data[idx[k]].mask);
      }
    }
  }
  ev.metrics = metrics_from_confusion(confusion_counts(ev.labels, ev.scores, opts.threshold));
  const bool both = std::count(ev.labels.begin(), ev.labels.end(), 1) > 0 &&
                    std::count(ev.labels.begin(), ev.labels.end(), 0) > 0;
  if (both) ev.metrics.auc_roc = roc_auc(ev.labels, ev.scores);
  if (attn) ev.metrics.dsc = dsc_sum / static_cast<double>(data.size());
  return ev;
}

}  // namespace dsam::train
