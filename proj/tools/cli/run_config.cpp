#include "cli/run_config.hpp"

#include <cerrno>
#include <cstdlib>
#include <sstream>

#include "dsam/common/bytes.hpp"
#include "dsam/common/error.hpp"

namespace dsam::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::int64_t to_int(const std::string& key, const std::string& s) {
  errno = 0;
  char* end = nullptr;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (s.empty() || *end != '\0' || errno != 0) throw ConfigError(key + ": expected an integer, got '" + s + "'");
  return v;
}

double to_real(const std::string& key, const std::string& s) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || *end != '\0' || errno != 0) throw ConfigError(key + ": expected a number, got '" + s + "'");
  return v;
}

}  // namespace

RunConfig::RunConfig() {
  values_ = {
      {"seed", {"0", "global seed; every random stream derives from it"}},
      {"train.batch_size", {"32", "mini-batch size"}},
      {"train.learning_rate", {"0.001", "optimizer step size"}},
      {"train.epochs", {"50", "maximum epochs"}},
      {"train.optimizer", {"adam", "adam or sgd"}},
      {"train.loss", {"bce", "loss function (bce)"}},
      {"train.dropout", {"0.5", "dropout rate before the output layer"}},
      {"train.patience", {"10", "early-stopping patience in epochs"}},
      {"train.min_delta", {"0.0001", "minimum validation-loss improvement"}},
      {"train.augment", {"true", "random flips and quarter-turn rotations during training"}},
      {"augment.hflip", {"true", "allow horizontal flips"}},
      {"augment.vflip", {"true", "allow vertical flips"}},
      {"augment.angles", {"0,90,180,270", "rotation angles in degrees"}},
      {"augment.zoom_min", {"1", "minimum zoom factor"}},
      {"augment.zoom_max", {"1", "maximum zoom factor"}},
      {"model.version", {"ver3", "ver0, ver1, ver2, ver3 or depth_slab"}},
      {"model.schedule", {"32,64,128,256", "filters per stage"}},
      {"model.kernel", {"3", "conv kernel size"}},
      {"model.pool", {"2", "max-pool size"}},
      {"model.batchnorm", {"true", "batch normalization after every conv"}},
      {"model.dense_hidden", {"64", "hidden dense width (0 = none)"}},
      {"slab.filters", {"16,32", "depth_slab extractor conv widths"}},
      {"slab.fusion_width", {"64", "depth_slab fusion layer width"}},
      {"attention.heads", {"4", "attention heads"}},
      {"attention.placements", {"2", "1-based conv indices followed by attention"}},
      {"attention.fusion", {"multiply", "multiply, concat or both"}},
      {"attention.iterations", {"1", "refinement passes"}},
      {"attention.hidden", {"8", "attention conv width"}},
      {"search.depths", {"5,7,9,11", "candidate depths (weighted layers)"}},
      {"search.threshold", {"0.95", "validation accuracy that ends the search"}},
      {"search.budget", {"4", "maximum candidates trained"}},
      {"search.tiebreak", {"depth,params", "tie-break rule"}},
      {"search.workers", {"1", "concurrent candidate evaluations"}},
      {"ablation.variants", {"ver0,ver1,ver2,ver3", "variants compared"}},
      {"ablation.seeds", {"5", "seeds per variant"}},
      {"ablation.batchnorm_report", {"true", "add a batchnorm-off copy of the last variant"}},
      {"ablation.report_threshold", {"0.95", "validation accuracy for epochs-to-threshold"}},
      {"window.level", {"60", "window level (HU)"}},
      {"window.width", {"200", "window width (HU)"}},
      {"preprocess.height", {"64", "output height"}},
      {"preprocess.width", {"64", "output width"}},
      {"preprocess.slabs", {"0", "0 = one sample per slice; n = n-slab sample per volume"}},
      {"split.train", {"0.8", "training fraction"}},
      {"split.validation", {"0.1", "validation fraction"}},
      {"split.test", {"0.1", "test fraction"}},
      {"split.override", {"false", "allow ratios outside the standard ranges"}},
      {"phantom.count", {"280", "phantoms generated"}},
      {"phantom.size", {"64", "phantom side length before preprocessing"}},
      {"phantom.lesion_probability", {"0.5", "probability of a lesion"}},
      {"phantom.noise_sd", {"15", "background noise sd (HU)"}},
      {"eval.threshold", {"0.5", "decision threshold"}},
      {"eval.batch_size", {"64", "inference batch size"}},
  };
}

void RunConfig::load_file(const std::filesystem::path& path) { parse(read_text(path), path.string()); }

void RunConfig::parse(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(number) + ": expected 'key = value', got '" + line + "'");
    }
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown configuration key '" + key + "'");
  it->second.value = value;
}

const std::string& RunConfig::text(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown configuration key '" + key + "'");
  return it->second.value;
}

std::int64_t RunConfig::integer(const std::string& key) const { return to_int(key, text(key)); }

std::size_t RunConfig::count(const std::string& key) const {
  const std::int64_t v = integer(key);
  if (v < 0) throw ConfigError(key + ": must be >= 0, got " + std::to_string(v));
  return static_cast<std::size_t>(v);
}

double RunConfig::real(const std::string& key) const { return to_real(key, text(key)); }

bool RunConfig::flag(const std::string& key) const {
  const std::string& v = text(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::vector<std::size_t> RunConfig::counts(const std::string& key) const {
  std::vector<std::size_t> out;
  for (const std::string& w : split_commas(text(key))) {
    const std::int64_t v = to_int(key, w);
    if (v < 0) throw ConfigError(key + ": entries must be >= 0");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

std::vector<double> RunConfig::reals(const std::string& key) const {
  std::vector<double> out;
  for (const std::string& w : split_commas(text(key))) out.push_back(to_real(key, w));
  return out;
}

std::vector<std::string> RunConfig::words(const std::string& key) const { return split_commas(text(key)); }

std::string RunConfig::echo() const {
  std::string out;
  for (const auto& [k, e] : values_) out += k + " = " + e.value + "\n";
  return out;
}

}  // namespace dsam::cli
