#include "dsam/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dsam/common/error.hpp"
#include "dsam/nn/loss.hpp"

namespace dsam::nn {

namespace {

std::vector<std::size_t> pick_entries(std::size_t size, std::size_t max_entries, Rng& rng) {
  std::vector<std::size_t> idx(size);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (max_entries == 0 || max_entries >= size) return idx;
  rng.shuffle(idx);
  idx.resize(max_entries);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

GradCheckReport check_gradients(const std::function<double()>& loss, const std::vector<GradTarget>& targets,
                                const GradCheckOptions& opts) {
  GradCheckReport report;
  const double base = loss();
  const double again = loss();
  if (!std::isfinite(base)) {
    report.valid = false;
    report.fault = "non-finite loss at the unperturbed point";
    return report;
  }
  if (base != again) {
    report.valid = false;
    report.fault = "loss is not reproducible between evaluations (unfrozen randomness such as a dropout mask)";
    return report;
  }
  Rng rng(opts.sample_seed);
  for (const GradTarget& t : targets) {
    require_same_shape(*t.value, *t.analytic, "gradcheck " + t.name);
    TensorCheck tc{t.name, 0, 0.0};
    for (std::size_t i : pick_entries(t.value->size(), opts.max_entries, rng)) {
      const double saved = (*t.value)[i];
      (*t.value)[i] = saved + opts.h;
      const double plus = loss();
      (*t.value)[i] = saved - opts.h;
      const double minus = loss();
      (*t.value)[i] = saved;
      if (!std::isfinite(plus) || !std::isfinite(minus)) {
        report.valid = false;
        report.fault = "non-finite loss while perturbing " + t.name + "[" + std::to_string(i) + "]";
        return report;
      }
      const double numeric = (plus - minus) / (2.0 * opts.h);
      const double analytic = (*t.analytic)[i];
      const double denom = std::max({std::abs(numeric), std::abs(analytic), opts.abs_floor});
      tc.max_rel_error = std::max(tc.max_rel_error, std::abs(numeric - analytic) / denom);
      ++tc.checked;
    }
    report.max_rel_error = std::max(report.max_rel_error, tc.max_rel_error);
    report.tensors.push_back(std::move(tc));
  }
  return report;
}

GradCheckReport grad_check(Network& net, const Tensor& input, const Tensor& label, const GradCheckOptions& opts) {
  net.set_mode(Mode::kTrain);
  net.freeze_dropout(false);
  net.zero_grad();
  Tensor pred;
  try {
    pred = net.forward(input);
  } catch (const DivergenceError& e) {
    GradCheckReport r;
    r.valid = false;
    r.fault = e.what();
    return r;
  }
  if (opts.freeze_dropout) net.freeze_dropout(true);
  const LossValue lv = bce_loss(pred, label);
  net.backward(lv.gradient);

  auto loss = [&]() -> double {
    try {
      return bce_loss(net.forward(input), label).loss;
    } catch (const DivergenceError&) {
      return std::nan("");
    }
  };
  std::vector<Tensor> analytic;
  std::vector<Parameter*> params = net.trainable_parameters();
  analytic.reserve(params.size());
  for (Parameter* p : params) analytic.push_back(p->gradient);
  std::vector<GradTarget> targets;
  for (std::size_t i = 0; i < params.size(); ++i) targets.push_back({params[i]->name, &params[i]->value, &analytic[i]});
  GradCheckReport report = check_gradients(loss, targets, opts);
  net.freeze_dropout(false);
  net.zero_grad();
  return report;
}

}  // namespace dsam::nn
