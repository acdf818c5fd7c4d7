#include "dsam/search/routing.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <set>
#include <thread>

#include "dsam/common/error.hpp"

namespace dsam::search {

TieBreak parse_tiebreak(const std::string& name) {
  if (name == "depth,params" || name == "depth_then_params") return TieBreak::kDepthThenParams;
  throw ConfigError("search.tiebreak: expected 'depth,params', got '" + name + "'");
}

const char* tiebreak_name(TieBreak) { return "depth,params"; }

const char* termination_name(Termination t) {
  return t == Termination::kThresholdMet ? "threshold_met" : "budget_exhausted";
}

void SearchConfig::validate() const {
  if (depths.empty()) throw ConfigError("search.depths: candidate list must not be empty");
  if (std::set<std::size_t>(depths.begin(), depths.end()).size() != depths.size()) {
    throw ConfigError("search.depths: duplicate depth");
  }
  if (!(threshold > 0.0 && threshold <= 1.0)) throw ConfigError("search.threshold: must lie in (0,1]");
  if (budget < 1) throw ConfigError("search.budget: must be >= 1");
  if (workers < 1) throw ConfigError("search.workers: must be >= 1");
}

nlohmann::json SearchResult::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const SearchRow& r : rows) {
    rows_json.push_back({{"depth", r.depth},
                         {"parameters", r.parameters},
                         {"accuracy", r.accuracy ? nlohmann::json(*r.accuracy) : nlohmann::json(nullptr)},
                         {"error", r.error}});
  }
  return {{"chosen", variant_to_json(chosen)},
          {"chosen_depth", chosen.depth},
          {"termination", termination_name(termination)},
          {"evaluated", evaluated},
          {"rows", rows_json}};
}

namespace {

SearchRow run_one(const ArchitectureVariant& v, std::size_t params, const Evaluator& evaluate) {
  SearchRow row{v.depth, params, std::nullopt, {}};
  try {
    const double acc = evaluate(v);
    if (!std::isfinite(acc) || acc < 0.0 || acc > 1.0) {
      row.error = "evaluator returned " + std::to_string(acc);
    } else {
      row.accuracy = acc;
    }
  } catch (const std::exception& e) {
    row.error = e.what();
  }
  return row;
}

bool better(const SearchRow& a, const SearchRow& b) {
  if (*a.accuracy != *b.accuracy) return *a.accuracy > *b.accuracy;
  if (a.depth != b.depth) return a.depth < b.depth;
  return a.parameters < b.parameters;
}

}  // namespace

SearchResult routing_search(const SearchConfig& cfg, std::vector<ArchitectureVariant> candidates,
                            const Evaluator& evaluate) {
  cfg.validate();
  if (candidates.empty()) throw ConfigError("search: no candidates");
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const ArchitectureVariant& a, const ArchitectureVariant& b) { return a.depth < b.depth; });
  std::vector<std::size_t> params;
  for (const auto& c : candidates) params.push_back(parameter_count(c));

  const std::size_t limit = std::min(cfg.budget, candidates.size());
  SearchResult result;
  std::optional<std::size_t> best;
  for (std::size_t start = 0; start < limit;) {
    const std::size_t end = std::min(limit, start + cfg.workers);
    std::vector<SearchRow> chunk(end - start);
    if (end - start == 1) {
      chunk[0] = run_one(candidates[start], params[start], evaluate);
    } else {
      std::vector<std::thread> pool;
      for (std::size_t i = start; i < end; ++i) {
        pool.emplace_back([&, i] { chunk[i - start] = run_one(candidates[i], params[i], evaluate); });
      }
      for (auto& t : pool) t.join();
    }
    for (std::size_t i = start; i < end; ++i) {
      result.rows.push_back(chunk[i - start]);
      ++result.evaluated;
      const SearchRow& row = result.rows.back();
      if (!row.accuracy) continue;
      if (!best || better(row, result.rows[*best])) best = result.rows.size() - 1;
      if (*row.accuracy >= cfg.threshold) {
        result.termination = Termination::kThresholdMet;
        result.chosen = candidates[i];
        return result;
      }
    }
    start = end;
  }
  if (!best) throw StateError("search: every evaluated candidate failed");
  result.termination = Termination::kBudgetExhausted;
  result.chosen = candidates[*best];
  return result;
}

std::vector<ArchitectureVariant> depth_candidates(const SearchConfig& cfg, const ArchitectureVariant& base,
                                                  const std::vector<std::size_t>& schedule) {
  cfg.validate();
  std::vector<ArchitectureVariant> out;
  for (std::size_t d : cfg.depths) out.push_back(variant_for_depth(d, base, schedule));
  return out;
}

}  // namespace dsam::search
