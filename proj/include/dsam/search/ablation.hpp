#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dsam/ct/dataset.hpp"
#include "dsam/search/variant.hpp"
#include "dsam/train/trainer.hpp"

namespace dsam::search {

struct AblationRun {
  std::string variant;
  std::uint64_t seed = 0;
  std::optional<train::MetricsReport> metrics;  ///< unset when training diverged
  std::size_t epochs = 0;
  /// First epoch (1-based) whose validation accuracy reached the report threshold.
  std::optional<std::size_t> epochs_to_threshold;
  std::string error;
};

struct MeanSd {
  double mean = 0.0, sd = 0.0;
};

struct AblationRow {
  std::string variant;
  std::size_t parameters = 0;
  std::size_t runs = 0, failed = 0;
  MeanSd accuracy, precision, recall, f1;
  std::optional<double> mean_epochs_to_threshold;
};

struct AblationReport {
  std::vector<AblationRun> runs;  ///< variant order, then seed order
  std::vector<AblationRow> rows;  ///< mean accuracy descending, ties in input order

  /// "variant,seed,accuracy,precision,recall,f1_score,epochs,epochs_to_threshold,error"
  std::string runs_csv() const;
  nlohmann::json to_json() const;
  /// Tab-separated mean +- sd table.
  std::string table() const;
  const AblationRow& row(const std::string& variant) const;
};

struct AblationOptions {
  train::TrainingConfig training;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  double report_threshold = 0.95;  ///< for epochs_to_threshold
};

/// Trains every variant once per seed on the same split (network and training
/// seed both equal the run seed) and scores it on `test`. Undefined precision
/// or F1 count as 0 in the means. A diverged run is recorded with its error
/// and excluded from the means; a variant whose runs all fail keeps zeros and
/// failed == runs. Sample standard deviations (n-1; 0 for one run).
AblationReport ablate(const std::vector<ArchitectureVariant>& variants, const ct::Dataset& train_set,
                      const ct::Dataset& val_set, const ct::Dataset& test_set, const AblationOptions& opts);

}  // namespace dsam::search
