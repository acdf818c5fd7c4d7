#include "dsam/ct/split.hpp"

#include <cmath>
#include <set>

#include "dsam/common/error.hpp"
#include "dsam/common/rng.hpp"

namespace dsam::ct {

namespace {

// Guards floor() against products like 0.29 * 100 = 28.999999999999996.
constexpr double kFloorSlack = 1e-9;

std::size_t bucket(double ratio, std::size_t n) {
  return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + kFloorSlack));
}

}  // namespace

void SplitRatios::validate(bool allow_any) const {
  if (!(train > 0 && validation > 0 && test > 0)) throw ConfigError("split ratios must all be positive");
  if (train + validation + test > 1.0 + 1e-9) {
    throw ConfigError("split ratios sum to " + std::to_string(train + validation + test) + ", more than 1");
  }
  if (allow_any) return;
  auto in = [](double v, double lo, double hi) { return v >= lo - 1e-12 && v <= hi + 1e-12; };
  if (!in(train, 0.70, 0.80) || !in(validation, 0.10, 0.15) || !in(test, 0.10, 0.15)) {
    throw ConfigError("split ratios (" + std::to_string(train) + ", " + std::to_string(validation) + ", " +
                      std::to_string(test) +
                      ") are outside the supported ranges: train 0.70-0.80, validation and test 0.10-0.15 each "
                      "(set split.override = true to allow)");
  }
}

DatasetSplit split_dataset(const std::vector<std::string>& ids, const SplitRatios& ratios, std::uint64_t seed,
                           bool allow_any_ratios) {
  ratios.validate(allow_any_ratios);
  if (std::set<std::string>(ids.begin(), ids.end()).size() != ids.size()) {
    throw ContractError("split_dataset: ids must be unique");
  }
  std::vector<std::string> order = ids;
  Rng rng(seed);
  rng.shuffle(order);
  const std::size_t n = ids.size();
  const std::size_t n_val = bucket(ratios.validation, n), n_test = bucket(ratios.test, n);
  const std::size_t n_train = n - n_val - n_test;
  DatasetSplit s;
  s.ratios = ratios;
  s.seed = seed;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.validation.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                      order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  return s;
}

}  // namespace dsam::ct
