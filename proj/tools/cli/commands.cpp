#include "cli/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cli/artifacts.hpp"
#include "cli/run_config.hpp"
#include "cli/svg.hpp"
#include "dsam/common/bytes.hpp"
#include "dsam/common/error.hpp"
#include "dsam/common/rng.hpp"
#include "dsam/ct/dataset.hpp"
#include "dsam/ct/phantom.hpp"
#include "dsam/ct/split.hpp"
#include "dsam/nn/checkpoint.hpp"
#include "dsam/search/ablation.hpp"
#include "dsam/search/depth_slab.hpp"
#include "dsam/search/routing.hpp"
#include "dsam/search/variant.hpp"
#include "dsam/train/metrics.hpp"
#include "dsam/train/trainer.hpp"

namespace dsam::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Flags {
  std::string config;
  std::string out;
  std::string seed;
  std::vector<std::string> sets;
  std::string threshold;
  std::string depths;
  std::string budget;
  std::string data, manifest, model, split, metrics, history, scores;
  std::string name = "Proposed model";
};

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

void require_file(const std::string& path) {
  if (!fs::is_regular_file(path)) throw ConfigError("input file not found: " + path);
}

json parse_json_file(const std::string& path) {
  require_file(path);
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw FormatError(path + ": " + e.what(), e.byte);
  }
}

std::uint64_t global_seed(const RunConfig& rc) { return rc.count("seed"); }

train::TrainingConfig training_config(const RunConfig& rc) {
  train::TrainingConfig c;
  c.batch_size = rc.count("train.batch_size");
  c.learning_rate = rc.real("train.learning_rate");
  c.epochs = rc.count("train.epochs");
  c.optimizer = nn::parse_optimizer(rc.text("train.optimizer"));
  c.loss = rc.text("train.loss");
  c.dropout = rc.real("train.dropout");
  c.patience = rc.count("train.patience");
  c.min_delta = rc.real("train.min_delta");
  c.seed = global_seed(rc);
  c.augment = rc.flag("train.augment");
  c.augmentation.horizontal_flip = rc.flag("augment.hflip");
  c.augmentation.vertical_flip = rc.flag("augment.vflip");
  c.augmentation.angles = rc.reals("augment.angles");
  c.augmentation.zoom_min = rc.real("augment.zoom_min");
  c.augmentation.zoom_max = rc.real("augment.zoom_max");
  c.augmentation.validate();
  c.validate();
  return c;
}

ct::PreprocessOptions preprocess_options(const RunConfig& rc) {
  ct::PreprocessOptions o;
  o.window_level = rc.real("window.level");
  o.window_width = rc.real("window.width");
  o.height = rc.count("preprocess.height");
  o.width = rc.count("preprocess.width");
  o.slabs = rc.count("preprocess.slabs");
  return o;
}

search::ArchitectureVariant styled_preset(search::Version v, const RunConfig& rc, const nn::Shape& input) {
  search::ArchitectureVariant a = search::preset(v, rc.counts("model.schedule"), input);
  a.label = search::version_name(v);
  a.kernel = rc.count("model.kernel");
  a.pool = rc.count("model.pool");
  a.batchnorm = rc.flag("model.batchnorm");
  a.dense_hidden = rc.count("model.dense_hidden");
  a.dropout = rc.real("train.dropout");
  if (a.attention) {
    a.attention->heads = rc.count("attention.heads");
    a.attention->placements = rc.counts("attention.placements");
    a.attention->fusion = attention::parse_fusion(rc.text("attention.fusion"));
    a.attention->iterations = rc.count("attention.iterations");
    a.attention->hidden = rc.count("attention.hidden");
  }
  a.depth = a.weighted_layers();
  a.validate();
  return a;
}

nn::Network build_model(const RunConfig& rc, const ct::Dataset& d) {
  if (rc.text("model.version") == "depth_slab") {
    search::DepthSlabConfig c;
    c.slabs = d.channels();
    c.extractor_filters = rc.counts("slab.filters");
    c.kernel = rc.count("model.kernel");
    c.batchnorm = rc.flag("model.batchnorm");
    c.fusion_width = rc.count("slab.fusion_width");
    c.height = d.height();
    c.width = d.width();
    c.validate();
    return search::build_depth_slab(c, global_seed(rc));
  }
  return search::build_variant(styled_preset(search::parse_version(rc.text("model.version")), rc, d.sample_shape()),
                               global_seed(rc));
}

ct::Dataset load_input_dataset(const std::string& path) {
  require_file(path);
  return ct::load_dataset(path);
}

struct Parts {
  ct::DatasetSplit split;
  ct::Dataset train, validation, test;
};

Parts split_parts(const RunConfig& rc, const ct::Dataset& d) {
  ct::SplitRatios r;
  r.train = rc.real("split.train");
  r.validation = rc.real("split.validation");
  r.test = rc.real("split.test");
  Parts p;
  p.split = ct::split_dataset(d.ids(), r, derive_seed(global_seed(rc), Stream::kSplit), rc.flag("split.override"));
  p.train = d.subset(p.split.train);
  p.validation = d.subset(p.split.validation);
  p.test = d.subset(p.split.test);
  return p;
}

json split_json(const ct::DatasetSplit& s) {
  return {{"seed", s.seed},
          {"ratios", {{"train", s.ratios.train}, {"validation", s.ratios.validation}, {"test", s.ratios.test}}},
          {"train", s.train},
          {"validation", s.validation},
          {"test", s.test}};
}

std::string samples_csv(const ct::Dataset& d) {
  std::string out = "id,label,has_mask\n";
  for (const ct::Sample& s : d.samples()) {
    out += s.id + "," + (s.label == ct::kUnlabeled ? std::string{} : std::to_string(s.label)) + "," +
           (s.mask.empty() ? "0" : "1") + "\n";
  }
  return out;
}

void write_metrics(RunDir& run, const ct::Dataset& data, const train::Evaluation& ev) {
  run.write("metrics.json", train::metrics_to_json(ev.metrics).dump(2) + "\n");
  run.write("metrics.csv", train::metrics_csv_header() + "\n" + train::metrics_csv_row(ev.metrics) + "\n");
  std::string scores = "id,label,score\n";
  for (std::size_t i = 0; i < ev.scores.size(); ++i) {
    scores += data[i].id + "," + std::to_string(ev.labels[i]) + "," + fmt("%.17g", ev.scores[i]) + "\n";
  }
  run.write("scores.csv", scores);
}

std::string summary(const train::MetricsReport& m) {
  auto opt = [](const std::optional<double>& v) { return v ? fmt("%.4f", *v) : std::string("n/a"); };
  return "accuracy=" + opt(m.accuracy) + " sensitivity=" + opt(m.sensitivity) + " specificity=" +
         opt(m.specificity) + " f1=" + opt(m.f1) + " auc=" + opt(m.auc_roc) + " dsc=" + opt(m.dsc);
}

train::EvaluationOptions evaluation_options(const RunConfig& rc) {
  train::EvaluationOptions o;
  o.threshold = rc.real("eval.threshold");
  o.batch_size = rc.count("eval.batch_size");
  if (!(o.threshold >= 0.0 && o.threshold <= 1.0)) throw ConfigError("eval.threshold must lie in [0, 1]");
  if (o.batch_size == 0) throw ConfigError("eval.batch_size must be positive");
  return o;
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  require_file(path);
  std::istringstream in(read_text(path));
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(std::move(cells));
  }
  if (rows.empty()) throw FormatError(path + ": empty CSV", 0);
  rows.erase(rows.begin());
  return rows;
}

double csv_number(const std::string& path, const std::string& cell) {
  try {
    std::size_t used = 0;
    const double v = std::stod(cell, &used);
    if (used == cell.size()) return v;
  } catch (const std::exception&) {
  }
  throw FormatError(path + ": bad number '" + cell + "'", 0);
}

// ---------------------------------------------------------------- commands

void cmd_phantom(const RunConfig& rc, RunDir& run, std::ostream& out) {
  ct::PhantomSpec spec;
  spec.size = rc.count("phantom.size");
  spec.lesion_probability = rc.real("phantom.lesion_probability");
  spec.noise_sd = rc.real("phantom.noise_sd");
  spec.validate();
  const std::size_t count = rc.count("phantom.count");
  if (count == 0) throw ConfigError("phantom.count must be positive");
  ct::PreprocessOptions opts = preprocess_options(rc);
  opts.slabs = 0;
  const ct::Dataset d = ct::phantom_dataset(spec, count, global_seed(rc), opts);
  run.write("dataset.dss", ct::encode_dataset(d));
  run.write("samples.csv", samples_csv(d));
  std::size_t positives = 0;
  for (const ct::Sample& s : d.samples()) positives += s.label == 1;
  run.log("phantoms " + std::to_string(d.size()) + " positives " + std::to_string(positives));
  out << "wrote " << d.size() << " phantoms (" << positives << " with lesions) to " << run.file("dataset.dss").string()
      << "\n";
}

void cmd_preprocess(const RunConfig& rc, const Flags& f, RunDir& run, std::ostream& out) {
  require_file(f.manifest);
  const ct::PreprocessOptions opts = preprocess_options(rc);
  std::optional<ct::Dataset> d;
  for (const ct::ManifestEntry& e : ct::read_manifest(f.manifest)) {
    require_file(e.path.string());
    ct::Volume v = ct::read_volume(e.path);
    if (e.label != ct::VolumeLabel::kUnlabeled) v.label = e.label;
    std::vector<ct::Sample> samples = ct::preprocess_volume(v, e.id, opts);
    for (ct::Sample& s : samples) {
      if (!d) d.emplace(s.image.dim(0), s.image.dim(1), s.image.dim(2));
      d->add(std::move(s));
    }
    run.log("volume " + e.id + " " + std::to_string(v.depth) + "x" + std::to_string(v.height) + "x" +
            std::to_string(v.width));
  }
  if (!d) throw ConfigError("manifest " + f.manifest + " lists no volumes");
  run.write("dataset.dss", ct::encode_dataset(*d));
  run.write("samples.csv", samples_csv(*d));
  out << "wrote " << d->size() << " samples to " << run.file("dataset.dss").string() << "\n";
}

void cmd_train(const RunConfig& rc, const Flags& f, RunDir& run, std::ostream& out) {
  const ct::Dataset data = load_input_dataset(f.data);
  const train::TrainingConfig tcfg = training_config(rc);
  const train::EvaluationOptions eopts = evaluation_options(rc);
  Parts parts = split_parts(rc, data);
  run.write("split.json", split_json(parts.split).dump(2) + "\n");
  nn::Network net = build_model(rc, data);
  run.log("model " + net.descriptor());
  run.log("parameters " + std::to_string(net.parameter_count()));
  const train::TrainingHistory h =
      train::train(net, parts.train, parts.validation, tcfg, [&](std::size_t epoch, const train::TrainingHistory& hist) {
        run.log("epoch " + std::to_string(epoch + 1) + " train_loss " + fmt("%.6f", hist.train_loss.back()) +
                " val_loss " + fmt("%.6f", hist.val_loss.back()) + " val_accuracy " +
                fmt("%.4f", hist.val_accuracy.back()));
      });
  run.log("best epoch " + std::to_string(h.best_epoch + 1) + (h.stopped_early ? " (early stop)" : ""));
  nn::save_checkpoint(net, run.file("model.dsnn"));
  run.track("model.dsnn");
  run.write("history.csv", h.to_csv());
  const train::Evaluation ev = train::evaluate(net, parts.test, eopts);
  write_metrics(run, parts.test, ev);
  run.log("test " + summary(ev.metrics));
  out << "trained " << h.epochs() << " epochs (best " << h.best_epoch + 1 << "); test " << summary(ev.metrics)
      << "\n";
}

void cmd_evaluate(const RunConfig& rc, const Flags& f, RunDir& run, std::ostream& out) {
  require_file(f.model);
  nn::Network net = nn::load_checkpoint(f.model, search::network_from_descriptor);
  ct::Dataset data = load_input_dataset(f.data);
  if (!f.split.empty()) {
    const json s = parse_json_file(f.split);
    try {
      data = data.subset(s.at("test").get<std::vector<std::string>>());
    } catch (const json::exception& e) {
      throw FormatError(f.split + ": " + e.what(), 0);
    }
  }
  const train::Evaluation ev = train::evaluate(net, data, evaluation_options(rc));
  write_metrics(run, data, ev);
  run.log("samples " + std::to_string(data.size()));
  run.log(summary(ev.metrics));
  out << summary(ev.metrics) << "\n";
}

void cmd_search(const RunConfig& rc, const Flags& f, RunDir& run, std::ostream& out) {
  const ct::Dataset data = load_input_dataset(f.data);
  const train::TrainingConfig tcfg = training_config(rc);
  search::SearchConfig scfg;
  scfg.depths = rc.counts("search.depths");
  scfg.threshold = rc.real("search.threshold");
  scfg.budget = rc.count("search.budget");
  scfg.tiebreak = search::parse_tiebreak(rc.text("search.tiebreak"));
  scfg.workers = rc.count("search.workers");
  scfg.validate();
  Parts parts = split_parts(rc, data);
  run.write("split.json", split_json(parts.split).dump(2) + "\n");
  const search::ArchitectureVariant base =
      styled_preset(search::parse_version(rc.text("model.version")), rc, data.sample_shape());
  const std::vector<search::ArchitectureVariant> candidates =
      search::depth_candidates(scfg, base, rc.counts("model.schedule"));
  const std::uint64_t seed = global_seed(rc);
  const search::SearchResult result =
      search::routing_search(scfg, candidates, [&](const search::ArchitectureVariant& v) {
        nn::Network net = search::build_variant(v, seed);
        train::train(net, parts.train, parts.validation, tcfg);
        return train::loss_and_accuracy(parts.validation, train::predict(net, parts.validation)).second;
      });
  run.write("search.json", result.to_json().dump(2) + "\n");
  std::vector<search::ArchitectureVariant> ordered = candidates;
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const auto& a, const auto& b) { return a.depth < b.depth; });
  std::string csv = "depth,parameters,status,val_accuracy,error\n";
  for (const search::ArchitectureVariant& c : ordered) {
    const auto row = std::find_if(result.rows.begin(), result.rows.end(),
                                  [&](const search::SearchRow& r) { return r.depth == c.depth; });
    std::string status = "skipped", acc, error;
    if (row != result.rows.end()) {
      status = row->accuracy ? "evaluated" : "failed";
      if (row->accuracy) acc = fmt("%.6f", *row->accuracy);
      error = row->error;
      std::replace(error.begin(), error.end(), ',', ';');
    }
    csv += std::to_string(c.depth) + "," + std::to_string(search::parameter_count(c)) + "," + status + "," + acc +
           "," + error + "\n";
    run.log("depth " + std::to_string(c.depth) + " " + status + (acc.empty() ? "" : " val_accuracy " + acc));
  }
  run.write("search.csv", csv);
  run.write("chosen.json", search::variant_to_json(result.chosen).dump(2) + "\n");
  run.log(std::string("termination ") + search::termination_name(result.termination));
  out << "chose depth " << result.chosen.depth << " (" << search::termination_name(result.termination) << ", "
      << result.evaluated << " evaluated)\n";
}

void cmd_ablate(const RunConfig& rc, const Flags& f, RunDir& run, std::ostream& out) {
  const ct::Dataset data = load_input_dataset(f.data);
  search::AblationOptions opts;
  opts.training = training_config(rc);
  opts.report_threshold = rc.real("ablation.report_threshold");
  const std::size_t n_seeds = rc.count("ablation.seeds");
  if (n_seeds == 0) throw ConfigError("ablation.seeds must be positive");
  opts.seeds.clear();
  for (std::size_t i = 0; i < n_seeds; ++i) opts.seeds.push_back(derive_seed(global_seed(rc), Stream::kAblation, i));
  std::vector<search::ArchitectureVariant> variants;
  for (const std::string& name : rc.words("ablation.variants")) {
    variants.push_back(styled_preset(search::parse_version(name), rc, data.sample_shape()));
  }
  if (variants.empty()) throw ConfigError("ablation.variants is empty");
  const bool bn_report = rc.flag("ablation.batchnorm_report");
  if (bn_report) {
    search::ArchitectureVariant off = variants.back();
    off.batchnorm = !off.batchnorm;
    off.label = variants.back().name() + (off.batchnorm ? "-bn" : "-nobn");
    variants.push_back(off);
  }
  Parts parts = split_parts(rc, data);
  run.write("split.json", split_json(parts.split).dump(2) + "\n");
  const search::AblationReport report = search::ablate(variants, parts.train, parts.validation, parts.test, opts);
  run.write("ablation_runs.csv", report.runs_csv());
  run.write("ablation.json", report.to_json().dump(2) + "\n");
  run.write("ablation.tsv", report.table());
  if (bn_report) {
    std::string t = "Variant\tBatchnorm\tAccuracy\tEpochs to threshold\n";
    for (std::size_t k = variants.size() - 2; k < variants.size(); ++k) {
      const search::AblationRow& r = report.row(variants[k].name());
      t += r.variant + "\t" + (variants[k].batchnorm ? "on" : "off") + "\t" + fmt("%.4f", r.accuracy.mean) + " +- " +
           fmt("%.4f", r.accuracy.sd) + "\t" +
           (r.mean_epochs_to_threshold ? fmt("%.2f", *r.mean_epochs_to_threshold) : std::string("n/a")) + "\n";
    }
    run.write("batchnorm.tsv", t);
  }
  for (const search::AblationRun& r : report.runs) {
    run.log(r.variant + " seed " + std::to_string(r.seed) + " " +
            (r.metrics ? "accuracy " + fmt("%.4f", r.metrics->accuracy.value_or(0.0)) : "failed: " + r.error));
  }
  out << report.table();
}

void cmd_report(const Flags& f, RunDir& run, std::ostream& out) {
  const json j = parse_json_file(f.metrics);
  train::MetricsReport m;
  try {
    m = train::metrics_from_json(j);
  } catch (const json::exception& e) {
    throw FormatError(f.metrics + ": " + e.what(), 0);
  }
  const std::string table = train::table_header() + "\n" + train::table_row(f.name, m) + "\n";
  run.write("table.tsv", table);
  out << table;
  if (!f.history.empty()) {
    Series train_s{"train", "#1f77b4", {}}, val_s{"validation", "#d62728", {}};
    for (const auto& row : read_csv(f.history)) {
      if (row.size() < 3) throw FormatError(f.history + ": expected epoch,train_loss,val_loss rows", 0);
      const double epoch = csv_number(f.history, row[0]) + 1;
      train_s.points.emplace_back(epoch, csv_number(f.history, row[1]));
      val_s.points.emplace_back(epoch, csv_number(f.history, row[2]));
    }
    run.write("loss.svg", line_chart_svg("Loss", "epoch", "binary cross-entropy", {train_s, val_s}));
  }
  if (!f.scores.empty()) {
    std::vector<int> labels;
    std::vector<double> scores;
    for (const auto& row : read_csv(f.scores)) {
      if (row.size() < 3) throw FormatError(f.scores + ": expected id,label,score rows", 0);
      labels.push_back(static_cast<int>(csv_number(f.scores, row[1])));
      scores.push_back(csv_number(f.scores, row[2]));
    }
    Series roc{"ROC", "#1f77b4", {}}, chance{"chance", "#999999", {{0, 0}, {1, 1}}};
    for (const train::RocPoint& p : train::roc_curve(labels, scores)) roc.points.emplace_back(p.fpr, p.tpr);
    const std::string title = "ROC (AUC " + fmt("%.3f", train::roc_auc(labels, scores)) + ")";
    run.write("roc.svg", line_chart_svg(title, "false positive rate", "true positive rate", {roc, chance}));
  }
}

void add_common(CLI::App* sub, Flags& f, bool with_seed = true) {
  sub->add_option("--config", f.config, "configuration file (key = value)");
  sub->add_option("--out", f.out, "output directory")->required();
  sub->add_option("--set", f.sets, "override one configuration key, as key=value");
  if (with_seed) sub->add_option("--seed", f.seed, "global seed");
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Attention CNN toolkit for CT lesion classification", "dsam"};
  app.require_subcommand(1);
  Flags f;

  auto* phantom = app.add_subcommand("phantom", "generate a seeded phantom dataset");
  add_common(phantom, f);
  auto* preprocess = app.add_subcommand("preprocess", "window, resize and normalise CTV1 volumes");
  add_common(preprocess, f);
  preprocess->add_option("--manifest", f.manifest, "id,path,label manifest")->required();
  auto* train_cmd = app.add_subcommand("train", "train one variant end to end");
  add_common(train_cmd, f);
  train_cmd->add_option("--data", f.data, "dataset file")->required();
  train_cmd->add_option("--threshold", f.threshold, "decision threshold");
  auto* search_cmd = app.add_subcommand("search", "depth search over variants");
  add_common(search_cmd, f);
  search_cmd->add_option("--data", f.data, "dataset file")->required();
  search_cmd->add_option("--depths", f.depths, "candidate depths, e.g. 5,7,9,11");
  search_cmd->add_option("--budget", f.budget, "maximum candidates trained");
  search_cmd->add_option("--threshold", f.threshold, "validation accuracy that ends the search");
  auto* ablate_cmd = app.add_subcommand("ablate", "compare variants over several seeds");
  add_common(ablate_cmd, f);
  ablate_cmd->add_option("--data", f.data, "dataset file")->required();
  auto* evaluate_cmd = app.add_subcommand("evaluate", "metrics of a checkpoint on a dataset");
  add_common(evaluate_cmd, f);
  evaluate_cmd->add_option("--model", f.model, "checkpoint file")->required();
  evaluate_cmd->add_option("--data", f.data, "dataset file")->required();
  evaluate_cmd->add_option("--split", f.split, "split.json; restricts evaluation to its test ids");
  evaluate_cmd->add_option("--threshold", f.threshold, "decision threshold");
  auto* report_cmd = app.add_subcommand("report", "render a comparison-table row and plots");
  add_common(report_cmd, f, false);
  report_cmd->add_option("--metrics", f.metrics, "metrics.json")->required();
  report_cmd->add_option("--history", f.history, "history.csv for the loss plot");
  report_cmd->add_option("--scores", f.scores, "scores.csv for the ROC plot");
  report_cmd->add_option("--name", f.name, "row label");

  if (!args.empty() && !args[0].empty() && args[0][0] != '-') {
    const auto subs = app.get_subcommands([](CLI::App*) { return true; });
    if (std::none_of(subs.begin(), subs.end(), [&](CLI::App* s) { return s->get_name() == args[0]; })) {
      err << "error: unknown subcommand '" << args[0] << "'\n";
      return 1;
    }
  }
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string cmd = sub->get_name();
  try {
    RunConfig rc;
    if (!f.config.empty()) {
      require_file(f.config);
      rc.load_file(f.config);
    }
    for (const std::string& s : f.sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
      rc.set(s.substr(0, eq), s.substr(eq + 1));
    }
    if (!f.seed.empty()) rc.set("seed", f.seed);
    if (!f.threshold.empty()) rc.set(cmd == "search" ? "search.threshold" : "eval.threshold", f.threshold);
    if (!f.depths.empty()) rc.set("search.depths", f.depths);
    if (!f.budget.empty()) rc.set("search.budget", f.budget);
    global_seed(rc);

    RunDir run(f.out);
    run.write("config.txt", rc.echo());
    run.log("command " + cmd);
    run.log("seed " + rc.text("seed"));
    if (cmd == "phantom") cmd_phantom(rc, run, out);
    else if (cmd == "preprocess") cmd_preprocess(rc, f, run, out);
    else if (cmd == "train") cmd_train(rc, f, run, out);
    else if (cmd == "search") cmd_search(rc, f, run, out);
    else if (cmd == "ablate") cmd_ablate(rc, f, run, out);
    else if (cmd == "evaluate") cmd_evaluate(rc, f, run, out);
    else cmd_report(f, run, out);
    run.finish();
    return 0;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const ContractError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const json::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "fault: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace dsam::cli
