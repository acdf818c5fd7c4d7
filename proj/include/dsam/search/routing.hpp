#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dsam/search/variant.hpp"

namespace dsam::search {

enum class TieBreak { kDepthThenParams };
TieBreak parse_tiebreak(const std::string& name);
const char* tiebreak_name(TieBreak t);

struct SearchConfig {
  std::vector<std::size_t> depths{5, 7, 9, 11};
  double threshold = 0.95;
  std::size_t budget = 4;  ///< maximum number of candidates evaluated
  TieBreak tiebreak = TieBreak::kDepthThenParams;
  std::size_t workers = 1;  ///< concurrent evaluations

  /// Throws ConfigError naming the offending search.* key.
  void validate() const;
};

enum class Termination { kThresholdMet, kBudgetExhausted };
const char* termination_name(Termination t);

struct SearchRow {
  std::size_t depth = 0;
  std::size_t parameters = 0;
  std::optional<double> accuracy;  ///< unset when the evaluation failed
  std::string error;
};

struct SearchResult {
  ArchitectureVariant chosen;
  std::vector<SearchRow> rows;  ///< evaluation order
  Termination termination = Termination::kBudgetExhausted;
  std::size_t evaluated = 0;

  nlohmann::json to_json() const;
};

/// Returns a score in [0,1]. Any exception marks the candidate as failed.
using Evaluator = std::function<double(const ArchitectureVariant&)>;

/// Evaluates candidates in ascending depth order and stops at the first whose
/// accuracy reaches the threshold. Otherwise, once the budget or the list is
/// exhausted, returns the most accurate candidate (ties: smaller depth, then
/// fewer parameters). With workers > 1 candidates are evaluated concurrently
/// in candidate-order chunks and then consumed sequentially, so the result is
/// identical to a serial run; the evaluator must then be thread-safe.
/// Throws StateError when every evaluated candidate failed.
SearchResult routing_search(const SearchConfig& cfg, std::vector<ArchitectureVariant> candidates,
                            const Evaluator& evaluate);

/// One variant_for_depth candidate per configured depth.
std::vector<ArchitectureVariant> depth_candidates(const SearchConfig& cfg, const ArchitectureVariant& base,
                                                  const std::vector<std::size_t>& schedule = kTableSchedule);

}  // namespace dsam::search
