#include "dsam/search/ablation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "dsam/common/error.hpp"

namespace dsam::search {

namespace {

MeanSd mean_sd(const std::vector<double>& xs) {
  MeanSd m;
  if (xs.empty()) return m;
  double sum = 0.0;
  for (double x : xs) sum += x;
  m.mean = sum / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - m.mean) * (x - m.mean);
    m.sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return m;
}

std::string num(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

std::string opt_num(const std::optional<double>& v) { return v ? num(*v, 6) : ""; }

nlohmann::json ms_json(const MeanSd& m) { return {{"mean", m.mean}, {"sd", m.sd}}; }

}  // namespace

AblationReport ablate(const std::vector<ArchitectureVariant>& variants, const ct::Dataset& train_set,
                      const ct::Dataset& val_set, const ct::Dataset& test_set, const AblationOptions& opts) {
  if (variants.size() < 2) throw ConfigError("ablation.variants: at least two variants are required");
  if (opts.seeds.empty()) throw ConfigError("ablation.seeds: at least one seed is required");
  std::set<std::string> names;
  for (const auto& v : variants) {
    v.validate();
    if (!names.insert(v.name()).second) throw ConfigError("ablation.variants: duplicate variant name '" + v.name() + "'");
  }
  opts.training.validate();

  AblationReport report;
  for (const ArchitectureVariant& v : variants) {
    AblationRow row;
    row.variant = v.name();
    row.parameters = parameter_count(v);
    std::vector<double> acc, prec, rec, f1, ett;
    for (std::uint64_t seed : opts.seeds) {
      AblationRun run;
      run.variant = v.name();
      run.seed = seed;
      train::TrainingConfig cfg = opts.training;
      cfg.seed = seed;
      try {
        nn::Network net = build_variant(v, seed);
        const train::TrainingHistory h = train::train(net, train_set, val_set, cfg);
        run.epochs = h.epochs();
        for (std::size_t e = 0; e < h.val_accuracy.size(); ++e) {
          if (h.val_accuracy[e] >= opts.report_threshold) {
            run.epochs_to_threshold = e + 1;
            break;
          }
        }
        run.metrics = train::evaluate(net, test_set).metrics;
      } catch (const DivergenceError& e) {
        run.error = e.what();
      }
      ++row.runs;
      if (run.metrics) {
        acc.push_back(run.metrics->accuracy.value_or(0.0));
        prec.push_back(run.metrics->precision.value_or(0.0));
        rec.push_back(run.metrics->recall.value_or(0.0));
        f1.push_back(run.metrics->f1.value_or(0.0));
        if (run.epochs_to_threshold) ett.push_back(static_cast<double>(*run.epochs_to_threshold));
      } else {
        ++row.failed;
      }
      report.runs.push_back(std::move(run));
    }
    row.accuracy = mean_sd(acc);
    row.precision = mean_sd(prec);
    row.recall = mean_sd(rec);
    row.f1 = mean_sd(f1);
    if (!ett.empty()) row.mean_epochs_to_threshold = mean_sd(ett).mean;
    report.rows.push_back(row);
  }
  std::stable_sort(report.rows.begin(), report.rows.end(),
                   [](const AblationRow& a, const AblationRow& b) { return a.accuracy.mean > b.accuracy.mean; });
  return report;
}

std::string AblationReport::runs_csv() const {
  std::string out = "variant,seed,accuracy,precision,recall,f1_score,epochs,epochs_to_threshold,error\n";
  for (const AblationRun& r : runs) {
    out += r.variant + "," + std::to_string(r.seed) + ",";
    if (r.metrics) {
      out += opt_num(r.metrics->accuracy) + "," + opt_num(r.metrics->precision) + "," + opt_num(r.metrics->recall) +
             "," + opt_num(r.metrics->f1);
    } else {
      out += ",,,";
    }
    std::string err = r.error;
    std::replace(err.begin(), err.end(), ',', ';');
    out += "," + std::to_string(r.epochs) + "," +
           (r.epochs_to_threshold ? std::to_string(*r.epochs_to_threshold) : std::string{}) + "," + err + "\n";
  }
  return out;
}

nlohmann::json AblationReport::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const AblationRow& r : rows) {
    rows_json.push_back({{"variant", r.variant},
                         {"parameters", r.parameters},
                         {"runs", r.runs},
                         {"failed", r.failed},
                         {"accuracy", ms_json(r.accuracy)},
                         {"precision", ms_json(r.precision)},
                         {"recall", ms_json(r.recall)},
                         {"f1_score", ms_json(r.f1)},
                         {"mean_epochs_to_threshold", r.mean_epochs_to_threshold
                                                          ? nlohmann::json(*r.mean_epochs_to_threshold)
                                                          : nlohmann::json(nullptr)}});
  }
  return {{"rows", rows_json}};
}

std::string AblationReport::table() const {
  std::string out = "Variant\tParams\tAccuracy\tPrecision\tRecall\tF-measure\tFailed\n";
  auto cell = [](const MeanSd& m) { return num(m.mean, 4) + " +- " + num(m.sd, 4); };
  for (const AblationRow& r : rows) {
    out += r.variant + "\t" + std::to_string(r.parameters) + "\t" + cell(r.accuracy) + "\t" + cell(r.precision) + "\t" +
           cell(r.recall) + "\t" + cell(r.f1) + "\t" + std::to_string(r.failed) + "/" + std::to_string(r.runs) + "\n";
  }
  return out;
}

const AblationRow& AblationReport::row(const std::string& variant) const {
  for (const AblationRow& r : rows)
    if (r.variant == variant) return r;
  throw ContractError("ablation: no row for variant '" + variant + "'");
}

}  // namespace dsam::search
