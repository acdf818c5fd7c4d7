#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dsam::ct {

struct SplitRatios {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;

  /// Positivity and sum <= 1 always; the 0.70-0.80 / 0.10-0.15 ranges unless `allow_any`.
  void validate(bool allow_any) const;
};

struct DatasetSplit {
  std::vector<std::string> train, validation, test;
  SplitRatios ratios;
  std::uint64_t seed = 0;
};

/// Seeded shuffle, then floor(ratio * n) ids to validation and test; the rest go to train.
DatasetSplit split_dataset(const std::vector<std::string>& ids, const SplitRatios& ratios, std::uint64_t seed,
                           bool allow_any_ratios = false);

}  // namespace dsam::ct
