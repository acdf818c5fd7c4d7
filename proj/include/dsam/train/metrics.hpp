#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace dsam::train {

inline constexpr double kDefaultThreshold = 0.5;

struct ConfusionCounts {
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
  std::size_t total() const { return tp + tn + fp + fn; }
  bool operator==(const ConfusionCounts&) const = default;
};

/// prediction = score >= threshold. Labels must be 0 or 1.
ConfusionCounts confusion_counts(const std::vector<int>& labels, const std::vector<double>& scores,
                                 double threshold = kDefaultThreshold);

/// Unset optionals mark metrics whose denominator is zero.
struct MetricsReport {
  std::optional<double> accuracy, sensitivity, specificity, precision, recall, f1;
  std::optional<double> auc_roc;
  std::optional<double> dsc;
  ConfusionCounts counts;
};

/// Classification fields only; auc_roc and dsc stay unset.
MetricsReport metrics_from_confusion(const ConfusionCounts& c);

/// Trapezoidal area under the ROC curve over every distinct score threshold.
/// Throws ContractError "AUC undefined ..." when only one class is present.
double roc_auc(const std::vector<int>& labels, const std::vector<double>& scores);

struct RocPoint {
  double fpr, tpr;
};
/// ROC vertices from (0,0) to (1,1), one per distinct score.
std::vector<RocPoint> roc_curve(const std::vector<int>& labels, const std::vector<double>& scores);

/// 2|A&B| / (|A|+|B|); two empty masks give 1.
double dice(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b);

nlohmann::json metrics_to_json(const MetricsReport& m);
MetricsReport metrics_from_json(const nlohmann::json& j);

/// Column order: Accuracy, Sensitivity, Specificity, Precision, Recall, F1-score, AUC-ROC.
std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsReport& m);

/// Tab-separated comparison-table row with two decimals, e.g.
/// "Proposed model\t0.91\t0.93\t0.89\t0.92\t0.93\t0.92\t0.95".
std::string table_header();
std::string table_row(const std::string& model, const MetricsReport& m);

}  // namespace dsam::train
