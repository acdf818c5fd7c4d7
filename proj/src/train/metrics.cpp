#include "dsam/train/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

#include "dsam/common/error.hpp"

namespace dsam::train {

namespace {

std::optional<double> ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

void check_inputs(const std::vector<int>& labels, const std::vector<double>& scores) {
  if (labels.size() != scores.size()) {
    throw ContractError("labels and scores differ in length (" + std::to_string(labels.size()) + " vs " +
                        std::to_string(scores.size()) + ")");
  }
  for (int l : labels)
    if (l != 0 && l != 1) throw ContractError("labels must be 0 or 1, got " + std::to_string(l));
}

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

std::optional<double> opt_from(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

std::string fixed(const std::optional<double>& v, int decimals) {
  if (!v) return "n/a";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, *v);
  return buf;
}

std::vector<std::optional<double>> table_values(const MetricsReport& m) {
  return {m.accuracy, m.sensitivity, m.specificity, m.precision, m.recall, m.f1, m.auc_roc};
}

}  // namespace

ConfusionCounts confusion_counts(const std::vector<int>& labels, const std::vector<double>& scores, double threshold) {
  check_inputs(labels, scores);
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw ContractError("threshold must lie in (0,1), got " + std::to_string(threshold));
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    if (labels[i] == 1) {
      pred ? ++c.tp : ++c.fn;
    } else {
      pred ? ++c.fp : ++c.tn;
    }
  }
  return c;
}

MetricsReport metrics_from_confusion(const ConfusionCounts& c) {
  if (c.total() == 0) throw ContractError("metrics need at least one evaluated sample");
  MetricsReport m;
  m.counts = c;
  m.accuracy = ratio(c.tp + c.tn, c.total());
  m.precision = ratio(c.tp, c.tp + c.fp);
  m.recall = ratio(c.tp, c.tp + c.fn);
  m.sensitivity = m.recall;
  m.specificity = ratio(c.tn, c.tn + c.fp);
  if (m.precision && m.recall && *m.precision + *m.recall > 0.0) {
    m.f1 = 2.0 * *m.precision * *m.recall / (*m.precision + *m.recall);
  }
  return m;
}

std::vector<RocPoint> roc_curve(const std::vector<int>& labels, const std::vector<double>& scores) {
  check_inputs(labels, scores);
  const std::size_t pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw ContractError("AUC undefined: labels contain a single class");
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<RocPoint> pts{{0.0, 0.0}};
  std::size_t tp = 0, fp = 0;
  for (std::size_t k = 0; k < order.size();) {
    const double s = scores[order[k]];
    // Consume every sample tied at this score before emitting a vertex.
    for (; k < order.size() && scores[order[k]] == s; ++k) labels[order[k]] == 1 ? ++tp : ++fp;
    pts.push_back({static_cast<double>(fp) / static_cast<double>(neg), static_cast<double>(tp) / static_cast<double>(pos)});
  }
  return pts;
}

double roc_auc(const std::vector<int>& labels, const std::vector<double>& scores) {
  const auto pts = roc_curve(labels, scores);
  double area = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    area += (pts[i].fpr - pts[i - 1].fpr) * (pts[i].tpr + pts[i - 1].tpr) / 2.0;
  }
  return area;
}

double dice(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
  if (a.size() != b.size()) {
    throw ContractError("dice: mask sizes differ (" + std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
  }
  std::size_t inter = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a[i] != 0, y = b[i] != 0;
    na += x;
    nb += y;
    inter += x && y;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

nlohmann::json metrics_to_json(const MetricsReport& m) {
  nlohmann::json j;
  j["accuracy"] = opt(m.accuracy);
  j["sensitivity"] = opt(m.sensitivity);
  j["specificity"] = opt(m.specificity);
  j["precision"] = opt(m.precision);
  j["recall"] = opt(m.recall);
  j["f1_score"] = opt(m.f1);
  j["auc_roc"] = opt(m.auc_roc);
  j["dsc"] = opt(m.dsc);
  j["counts"] = {{"tp", m.counts.tp}, {"tn", m.counts.tn}, {"fp", m.counts.fp}, {"fn", m.counts.fn}};
  return j;
}

MetricsReport metrics_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("metrics JSON must be an object");
  MetricsReport m;
  try {
    m.accuracy = opt_from(j, "accuracy");
    m.sensitivity = opt_from(j, "sensitivity");
    m.specificity = opt_from(j, "specificity");
    m.precision = opt_from(j, "precision");
    m.recall = opt_from(j, "recall");
    m.f1 = opt_from(j, "f1_score");
    m.auc_roc = opt_from(j, "auc_roc");
    m.dsc = opt_from(j, "dsc");
    if (j.contains("counts")) {
      const auto& c = j.at("counts");
      m.counts = {c.value("tp", std::size_t{0}), c.value("tn", std::size_t{0}), c.value("fp", std::size_t{0}),
                  c.value("fn", std::size_t{0})};
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("metrics JSON: ") + e.what());
  }
  return m;
}

std::string metrics_csv_header() { return "accuracy,sensitivity,specificity,precision,recall,f1_score,auc_roc"; }

std::string metrics_csv_row(const MetricsReport& m) {
  std::string out;
  for (const auto& v : table_values(m)) {
    if (!out.empty()) out += ",";
    out += v ? fixed(v, 6) : "";
  }
  return out;
}

std::string table_header() { return "Model\tAccuracy\tSensitivity\tSpecificity\tPrecision\tRecall\tF1-score\tAUC-ROC"; }

std::string table_row(const std::string& model, const MetricsReport& m) {
  std::string out = model;
  for (const auto& v : table_values(m)) out += "\t" + fixed(v, 2);
  return out;
}

}  // namespace dsam::train
