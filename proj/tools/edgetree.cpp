// edgetree command-line driver: train, evaluate, sweep, emit, bench, serial-send.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "edgetree/bench.hpp"
#include "edgetree/cart.hpp"
#include "edgetree/codegen.hpp"
#include "edgetree/error.hpp"
#include "edgetree/flowdata.hpp"
#include "edgetree/metrics.hpp"
#include "edgetree/numfmt.hpp"
#include "edgetree/split_kernels.hpp"

#ifndef EDGETREE_VERSION
#define EDGETREE_VERSION "dev"
#endif

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace edgetree {
namespace {

struct DataFlags {
  std::string dataset;
  std::string label_column = "Label";
  std::string label_map;
  std::vector<std::string> drop_columns;

  CsvOptions csv() const {
    CsvOptions opt;
    opt.label_column = label_column;
    if (!label_map.empty()) opt.label_map = parse_label_map(label_map);
    opt.drop_columns = drop_columns;
    return opt;
  }

  json to_json() const {
    return {{"dataset", dataset},
            {"label_column", label_column},
            {"label_map", label_map},
            {"drop_columns", drop_columns}};
  }
};

struct CommonFlags {
  std::uint64_t seed = 0;
  std::size_t jobs = std::max(1u, std::thread::hardware_concurrency());
  std::string out = ".";
};

struct TreeFlags {
  int max_depth = 12;
  double ccp_alpha = 0.0001;

  TrainConfig config(std::uint64_t seed) const {
    TrainConfig c;
    c.max_depth = max_depth;
    c.ccp_alpha = ccp_alpha;
    c.seed = seed;
    return c;
  }
};

struct PreprocessFlags {
  bool scale = false;
  std::vector<std::string> categorical;

  PreprocessOptions options() const { return {scale, categorical}; }
};

void add_label_flags(CLI::App* cmd, DataFlags& d) {
  cmd->add_option("--label-column", d.label_column, "Label column name")->capture_default_str();
  cmd->add_option("--label-map", d.label_map, "String labels to classes, e.g. Benign=0,Attack=1");
  cmd->add_option("--drop-columns", d.drop_columns, "Columns to ignore")->delimiter(',');
}

void add_data_flags(CLI::App* cmd, DataFlags& d) {
  cmd->add_option("dataset", d.dataset, "Flow CSV with a header row")->required()->check(CLI::ExistingFile);
  add_label_flags(cmd, d);
}

void add_common_flags(CLI::App* cmd, CommonFlags& c) {
  cmd->add_option("--seed", c.seed, "Seed for every random choice")->capture_default_str();
  cmd->add_option("--jobs", c.jobs, "Parallel jobs")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--out", c.out, "Output directory")->capture_default_str();
}

void add_tree_flags(CLI::App* cmd, TreeFlags& t) {
  cmd->add_option("--max-depth", t.max_depth, "Maximum tree depth")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--ccp-alpha", t.ccp_alpha, "Cost-complexity pruning alpha")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
}

void add_preprocess_flags(CLI::App* cmd, PreprocessFlags& p) {
  cmd->add_flag("--scale", p.scale, "Z-score numeric columns (fitted on training parts)");
  cmd->add_option("--categorical", p.categorical, "Ordinal-encode these columns")->delimiter(',');
}

const auto open_fraction = CLI::Validator(
    [](std::string& text) -> std::string {
      const auto v = parse_double(text);
      if (!v || !(*v > 0.0 && *v < 1.0)) return "must lie strictly between 0 and 1";
      return {};
    },
    "(0,1)");

std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error("cannot write '" + path.string() + "'");
}

void write_manifest(const fs::path& out_dir, const std::string& subcommand, json params, json outputs,
                    const Toolchain* toolchain = nullptr) {
  json tools = {{"edgetree", EDGETREE_VERSION},
                {"split_kernel", std::string(kernels::isa_name(kernels::active_isa()))}};
  if (toolchain) {
    tools["cc"] = join_command(toolchain->cc);
    tools["cc_version"] = toolchain->compiler_version();
    tools["size"] = join_command(toolchain->size);
  }
  json manifest = {{"subcommand", subcommand},
                   {"params", std::move(params)},
                   {"outputs", std::move(outputs)},
                   {"tool_versions", std::move(tools)},
                   {"timestamp", timestamp()}};
  write_text(out_dir / "run.json", manifest.dump(2) + "\n");
}

void print_tree_stats(const DecisionTree& tree) {
  std::cout << "depth " << tree.depth() << ", nodes " << tree.node_count() << ", leaves " << tree.leaf_count()
            << ", features used " << tree.features_used().size() << " of " << tree.n_features() << "\n";
}

FlowSchema schema_for_model(const DecisionTree& tree, const std::string& schema_csv, const DataFlags& data) {
  if (schema_csv.empty()) return FlowSchema::generic(tree.n_features());
  auto schema = read_csv_schema(schema_csv, data.csv());
  if (schema.feature_count() != tree.n_features()) {
    throw DataError("schema has " + std::to_string(schema.feature_count()) + " features but the model expects " +
                    std::to_string(tree.n_features()));
  }
  return schema;
}

void check_arity(const DecisionTree& tree, const LabeledDataset& data) {
  if (data.feature_count() != tree.n_features()) {
    throw DataError("dataset has " + std::to_string(data.feature_count()) + " features but the model expects " +
                    std::to_string(tree.n_features()));
  }
}

// ---- train ----

struct TrainArgs {
  DataFlags data;
  CommonFlags common;
  TreeFlags tree;
  std::string model;
  bool no_balance = false;
};

int cmd_train(const TrainArgs& a) {
  const auto dataset = load_csv(a.data.dataset, a.data.csv());
  const auto train = a.no_balance ? dataset : undersample_balance(dataset, a.common.seed);
  const auto tree = fit(train, a.tree.config(a.common.seed));

  const fs::path out(a.common.out);
  fs::create_directories(out);
  const fs::path model = a.model.empty() ? out / "model.tree" : fs::path(a.model);
  save_tree(tree, model);
  print_tree_stats(tree);
  std::cout << "model written to " << model.string() << "\n";

  json params = a.data.to_json();
  params.update({{"seed", a.common.seed},
                 {"max_depth", a.tree.max_depth},
                 {"ccp_alpha", a.tree.ccp_alpha},
                 {"balance", !a.no_balance},
                 {"training_rows", train.size()}});
  write_manifest(out, "train", params,
                 {{"model", model.string()},
                  {"depth", tree.depth()},
                  {"nodes", tree.node_count()},
                  {"leaves", tree.leaf_count()}});
  return 0;
}

// ---- evaluate ----

struct EvaluateArgs {
  DataFlags data;
  CommonFlags common;
  TreeFlags tree;
  PreprocessFlags pre;
  std::string mode = "cv";
  std::size_t k = 5;
  std::size_t repeats = 5;
  double holdout = 0.3;
  std::string model;
};

int cmd_evaluate(const EvaluateArgs& a) {
  const auto dataset = load_csv(a.data.dataset, a.data.csv());
  const auto config = a.tree.config(a.common.seed);
  const fs::path out(a.common.out);
  json params = a.data.to_json();
  params.update({{"seed", a.common.seed}, {"jobs", a.common.jobs}});

  if (!a.model.empty()) {
    const auto tree = load_tree(a.model);
    check_arity(tree, dataset);
    const auto cm = score(tree, dataset);
    const double bacc = balanced_accuracy(cm);
    const double f = f1(cm);
    fs::create_directories(out);
    std::ostringstream csv;
    csv << "depth,split,bacc,f1\n" << tree.depth() << ",0," << format_double(bacc) << "," << format_double(f) << "\n";
    write_text(out / "evaluate.csv", csv.str());
    std::cout << "model " << a.model << " on " << dataset.size() << " records: BAcc " << format_double(bacc)
              << ", F1 " << format_double(f) << " (tp " << cm.tp << ", fp " << cm.fp << ", tn " << cm.tn << ", fn "
              << cm.fn << ")\n";
    params.update({{"model", a.model}});
    write_manifest(out, "evaluate", params, {{"csv", (out / "evaluate.csv").string()}, {"bacc", bacc}, {"f1", f}});
    return 0;
  }

  params.update({{"mode", a.mode},
                 {"max_depth", a.tree.max_depth},
                 {"ccp_alpha", a.tree.ccp_alpha},
                 {"scale", a.pre.scale},
                 {"categorical", a.pre.categorical}});

  if (a.mode == "holdout") {
    const auto r = holdout_evaluate(dataset, config, a.holdout, a.common.seed, a.pre.options());
    fs::create_directories(out);
    std::ostringstream csv;
    csv << "depth,split,bacc,f1\n"
        << a.tree.max_depth << ",0," << format_double(r.balanced_accuracy) << "," << format_double(r.f1) << "\n";
    write_text(out / "evaluate.csv", csv.str());
    std::cout << "holdout " << format_double(a.holdout) << ": test " << r.confusion.total() << " records\nBAcc "
              << format_double(r.balanced_accuracy) << ", F1 " << format_double(r.f1) << "\n";
    print_tree_stats(r.tree);
    params.update({{"holdout_fraction", a.holdout}});
    write_manifest(out, "evaluate", params,
                   {{"csv", (out / "evaluate.csv").string()}, {"bacc", r.balanced_accuracy}, {"f1", r.f1}});
    return 0;
  }

  CvOptions cv{a.k, a.repeats, a.common.seed, a.common.jobs, a.pre.options()};
  const auto report = cross_validate(dataset, config, cv);
  fs::create_directories(out);
  std::ofstream csv(out / "evaluate.csv");
  write_cv_csv(csv, report);
  csv.close();
  std::cout << format_cv_table(report);
  params.update({{"k", a.k}, {"repeats", a.repeats}});
  write_manifest(out, "evaluate", params,
                 {{"csv", (out / "evaluate.csv").string()},
                  {"bacc_mean", report.balanced_accuracy.mean},
                  {"bacc_std", report.balanced_accuracy.stddev},
                  {"f1_mean", report.f1.mean},
                  {"f1_std", report.f1.stddev}});
  return 0;
}

// ---- sweep ----

struct SweepArgs {
  DataFlags data;
  CommonFlags common;
  TreeFlags tree;
  PreprocessFlags pre;
  std::vector<int> depths;
  double threshold = 0.985;
  double holdout = 0.3;
  std::size_t runs = 3;
};

int cmd_sweep(const SweepArgs& a) {
  const auto dataset = load_csv(a.data.dataset, a.data.csv());
  SweepOptions opt;
  opt.holdout_fraction = a.holdout;
  opt.threshold = a.threshold;
  opt.runs = a.runs;
  opt.seed = a.common.seed;
  opt.ccp_alpha = a.tree.ccp_alpha;
  opt.preprocess = a.pre.options();
  const auto rows = depth_sweep(dataset, a.depths, opt);

  const fs::path out(a.common.out);
  fs::create_directories(out);
  std::ofstream csv(out / "sweep.csv");
  write_sweep_csv(csv, rows);
  csv.close();
  std::cout << format_sweep_table(rows, a.threshold);

  json params = a.data.to_json();
  params.update({{"seed", a.common.seed},
                 {"depths", a.depths},
                 {"threshold", a.threshold},
                 {"holdout_fraction", a.holdout},
                 {"runs", a.runs},
                 {"ccp_alpha", a.tree.ccp_alpha},
                 {"scale", a.pre.scale},
                 {"categorical", a.pre.categorical}});
  json results = json::array();
  for (const auto& r : rows) {
    results.push_back({{"depth", r.depth}, {"bacc", r.balanced_accuracy}, {"f1", r.f1}, {"passed", r.passed}});
  }
  write_manifest(out, "sweep", params, {{"csv", (out / "sweep.csv").string()}, {"rows", results}});
  return 0;
}

// ---- emit ----

struct EmitArgs {
  DataFlags data;
  CommonFlags common;
  std::string model;
  std::string schema;
  std::string style = "nested-if";
  bool firmware = false;
  std::uint64_t iterations = kDefaultIterations;
};

int cmd_emit(const EmitArgs& a) {
  const auto tree = load_tree(a.model);
  const auto schema = schema_for_model(tree, a.schema, a.data);
  std::vector<EmitterStyle> styles;
  if (a.style == "both") {
    styles = {EmitterStyle::nested_if, EmitterStyle::array_recursive};
  } else {
    styles = {parse_style(a.style)};
  }

  // Render everything before touching the output directory.
  struct Rendered {
    fs::path dir;
    EmittedSource src;
    std::optional<FirmwareBundle> bundle;
  };
  std::vector<Rendered> rendered;
  const fs::path out(a.common.out);
  for (const auto style : styles) {
    Rendered r;
    r.dir = styles.size() > 1 ? out / std::string(style_name(style)) : out;
    r.src = emit(tree, schema, style);
    if (a.firmware) r.bundle = emit_firmware(tree, schema, style, a.iterations);
    rendered.push_back(std::move(r));
  }

  json files = json::array();
  for (const auto& r : rendered) {
    write_sources(r.src, r.dir);
    files.push_back((r.dir / "predict.c").string());
    files.push_back((r.dir / "predict.h").string());
    if (r.bundle) {
      write_firmware(*r.bundle, r.dir);
      files.push_back((r.dir / "firmware.c").string());
    }
    std::cout << style_name(r.src.style) << ": " << r.src.stats.lines << " lines, " << r.src.stats.emitted_nodes
              << " nodes, nesting " << r.src.stats.max_nesting_depth << " -> " << r.dir.string() << "\n";
  }
  write_manifest(out, "emit",
                 {{"model", a.model},
                  {"schema", a.schema},
                  {"style", a.style},
                  {"firmware", a.firmware},
                  {"iterations", a.iterations},
                  {"label_column", a.data.label_column},
                  {"drop_columns", a.data.drop_columns}},
                 {{"files", files}});
  return 0;
}

// ---- bench ----

struct BenchArgs {
  DataFlags data;
  CommonFlags common;
  std::string model;
  std::string port;
  unsigned baud = 115200;
  std::string style = "nested-if";
  std::string opt_level = "O3";
  std::uint64_t iterations = kDefaultIterations;
  std::size_t timing_records = 200;
  double timeout_s = 10.0;
};

int cmd_bench(const BenchArgs& a) {
  const auto tree = load_tree(a.model);
  const auto dataset = load_csv(a.data.dataset, a.data.csv());
  check_arity(tree, dataset);
  const fs::path out(a.common.out);
  json params = a.data.to_json();
  params.update({{"model", a.model},
                 {"iterations", a.iterations},
                 {"timing_records", a.timing_records},
                 {"seed", a.common.seed}});

  if (!a.port.empty()) {
    // The device must already run the firmware for this style and iteration count.
    const auto bundle = emit_firmware(tree, dataset.schema(), parse_style(a.style), a.iterations);
    SerialTransport transport(a.port, a.baud);
    TimingOptions topt;
    topt.max_records = a.timing_records;
    topt.timeout = std::chrono::milliseconds(static_cast<long>(a.timeout_s * 1000));
    const auto timing = time_inference(bundle, tree, dataset, transport, topt);
    fs::create_directories(out);
    std::string raw;
    for (const auto& line : timing.raw_responses) raw += line + "\n";
    write_text(out / "responses.txt", raw);
    write_firmware(bundle, out);
    std::cout << transport.describe() << ": " << style_name(bundle.predictor.style) << " "
              << format_double(timing.avg_ns_per_inference) << " ns/inference over " << timing.records_measured
              << " records x " << timing.iterations << " iterations\n";
    params.update({{"transport", "serial"}, {"port", a.port}, {"baud", a.baud}, {"style", a.style}});
    write_manifest(out, "bench", params,
                   {{"responses", (out / "responses.txt").string()},
                    {"avg_ns_per_inference", timing.avg_ns_per_inference},
                    {"records", timing.records_measured}});
    return 0;
  }

  CompareOptions opt;
  opt.toolchain = Toolchain::from_env();
  opt.timing_level = a.opt_level;
  opt.iterations = a.iterations;
  opt.timing_records = a.timing_records;
  const auto report = compare_emitters(tree, dataset.schema(), dataset, opt);
  fs::create_directories(out);
  write_text(out / "bench.txt", format_comparison_table(report));
  write_text(out / "bench.csv", comparison_csv(report));
  write_text(out / "size_raw.txt", comparison_raw_log(report));
  std::cout << format_comparison_table(report);
  params.update({{"transport", "host"}, {"timing_level", a.opt_level}});
  json rows = json::array();
  for (const auto& r : report.size_rows) {
    rows.push_back({{"style", style_name(r.style)},
                    {"opt", r.sizes.optimization_level},
                    {"text", r.sizes.text_bytes},
                    {"data", r.sizes.data_bytes},
                    {"bss", r.sizes.bss_bytes}});
  }
  for (const auto& r : report.timing_rows) {
    rows.push_back({{"style", style_name(r.style)}, {"avg_ns_per_inference", r.timing.avg_ns_per_inference}});
  }
  write_manifest(out, "bench", params,
                 {{"table", (out / "bench.txt").string()},
                  {"csv", (out / "bench.csv").string()},
                  {"size_raw", (out / "size_raw.txt").string()},
                  {"tree_digest", report.tree_digest},
                  {"rows", rows}},
                 &opt.toolchain);
  return 0;
}

// ---- serial-send ----

struct SerialSendArgs {
  DataFlags data;
  CommonFlags common;
  std::string model;
  std::string port;
  unsigned baud = 115200;
  std::size_t max_records = 0;
  double timeout_s = 10.0;
};

int cmd_serial_send(const SerialSendArgs& a) {
  const auto tree = load_tree(a.model);
  const auto dataset = load_csv(a.data.dataset, a.data.csv());
  check_arity(tree, dataset);

  SerialTransport transport(a.port, a.baud);
  const auto timeout = std::chrono::milliseconds(static_cast<long>(a.timeout_s * 1000));
  const std::size_t n =
      a.max_records == 0 ? dataset.size() : std::min(a.max_records, dataset.size());
  std::vector<std::string> raw;
  std::cout << "record,predicted,expected,elapsed_us,iterations\n";
  for (std::size_t i = 0; i < n; ++i) {
    transport.send_line(format_request(dataset.record(i)));
    const auto line = transport.read_line(timeout);
    const auto r = parse_response(line);
    const auto expected = tree.predict(dataset.record(i));
    std::cout << i << "," << class_index(r.predicted) << "," << class_index(expected) << "," << r.elapsed_us << ","
              << r.iterations << "\n"
              << std::flush;
    if (r.predicted != expected) {
      throw EquivalenceError("record " + std::to_string(i) + ": device answered " +
                             std::to_string(class_index(r.predicted)) + ", tree predicts " +
                             std::to_string(class_index(expected)));
    }
    raw.push_back(line);
  }
  const auto t = timing_from_responses(raw);
  const double mean_us = static_cast<double>(t.total_elapsed_us) / static_cast<double>(t.records_measured);
  std::cout << "summary: records " << t.records_measured << ", mean elapsed_us " << format_double(mean_us)
            << ", ns/inference " << format_double(t.avg_ns_per_inference) << "\n";

  const fs::path out(a.common.out);
  fs::create_directories(out);
  json params = a.data.to_json();
  params.update({{"model", a.model}, {"port", a.port}, {"baud", a.baud}, {"max_records", a.max_records}});
  write_manifest(out, "serial-send", params,
                 {{"records", t.records_measured},
                  {"mean_elapsed_us", mean_us},
                  {"avg_ns_per_inference", t.avg_ns_per_inference}});
  return 0;
}

}  // namespace
}  // namespace edgetree

int main(int argc, char** argv) {
  using namespace edgetree;
  CLI::App app{"Decision-tree intrusion detection for microcontrollers: train, evaluate, emit C, benchmark."};
  app.set_version_flag("--version", EDGETREE_VERSION);
  app.require_subcommand(1);

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "Fit a tree on a balanced sample and save it");
  add_data_flags(c_train, train.data);
  add_common_flags(c_train, train.common);
  add_tree_flags(c_train, train.tree);
  c_train->add_option("--model", train.model, "Model path (default <out>/model.tree)");
  c_train->add_flag("--no-balance", train.no_balance, "Train on the dataset as is");

  EvaluateArgs evaluate;
  auto* c_eval = app.add_subcommand("evaluate", "Cross-validation, holdout, or scoring of a saved model");
  add_data_flags(c_eval, evaluate.data);
  add_common_flags(c_eval, evaluate.common);
  add_tree_flags(c_eval, evaluate.tree);
  add_preprocess_flags(c_eval, evaluate.pre);
  c_eval->add_option("--mode", evaluate.mode, "cv or holdout")
      ->check(CLI::IsMember({"cv", "holdout"}))
      ->capture_default_str();
  c_eval->add_option("--k", evaluate.k, "Folds")->check(CLI::Range(2, 1000))->capture_default_str();
  c_eval->add_option("--repeats", evaluate.repeats, "Repeats")->check(CLI::PositiveNumber)->capture_default_str();
  c_eval->add_option("--holdout", evaluate.holdout, "Test fraction for holdout mode")
      ->check(open_fraction)
      ->capture_default_str();
  c_eval->add_option("--model", evaluate.model, "Score this model on the whole dataset instead")
      ->check(CLI::ExistingFile);

  SweepArgs sweep;
  auto* c_sweep = app.add_subcommand("sweep", "Holdout accuracy per max depth against a threshold");
  add_data_flags(c_sweep, sweep.data);
  add_common_flags(c_sweep, sweep.common);
  add_tree_flags(c_sweep, sweep.tree);
  add_preprocess_flags(c_sweep, sweep.pre);
  sweep.depths = {2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
  auto* depths_opt = c_sweep->add_option("--depths", sweep.depths, "Depths to evaluate")
                         ->delimiter(',')
                         ->check(CLI::PositiveNumber)
                         ->capture_default_str();
  c_sweep->add_option("--threshold", sweep.threshold, "Pass threshold on balanced accuracy")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  c_sweep->add_option("--holdout", sweep.holdout, "Test fraction")->check(open_fraction)->capture_default_str();
  c_sweep->add_option("--sweep-runs", sweep.runs, "Holdout runs averaged per depth")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  EmitArgs emit_args;
  auto* c_emit = app.add_subcommand("emit", "Generate C sources for a saved model");
  add_label_flags(c_emit, emit_args.data);
  add_common_flags(c_emit, emit_args.common);
  c_emit->add_option("--model", emit_args.model, "Model file")->required()->check(CLI::ExistingFile);
  c_emit->add_option("--schema", emit_args.schema, "CSV whose header names the features")
      ->check(CLI::ExistingFile);
  c_emit->add_option("--style", emit_args.style, "nested-if, array-recursive or both")
      ->check(CLI::IsMember({"nested-if", "array-recursive", "both"}))
      ->capture_default_str();
  c_emit->add_flag("--firmware", emit_args.firmware, "Also write the firmware.c timing harness");
  c_emit->add_option("--iterations", emit_args.iterations, "Timing loop iterations")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  BenchArgs bench;
  auto* c_bench = app.add_subcommand("bench", "Compare emitter sizes and inference times");
  add_data_flags(c_bench, bench.data);
  add_common_flags(c_bench, bench.common);
  c_bench->add_option("--model", bench.model, "Model file")->required()->check(CLI::ExistingFile);
  c_bench->add_option("--port", bench.port, "Serial device running the firmware (default: host process)");
  c_bench->add_option("--baud", bench.baud, "Serial baud rate")->capture_default_str();
  c_bench->add_option("--style", bench.style, "Style flashed on the serial device")
      ->check(CLI::IsMember({"nested-if", "array-recursive"}))
      ->capture_default_str();
  c_bench->add_option("--opt", bench.opt_level, "Optimization level for host timing")
      ->check(CLI::IsMember({"O0", "O1", "O2", "O3", "Os"}))
      ->capture_default_str();
  c_bench->add_option("--iterations", bench.iterations, "Timing loop iterations")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_bench->add_option("--timing-records", bench.timing_records, "Records timed per style (0 = all)")
      ->capture_default_str();
  c_bench->add_option("--timeout", bench.timeout_s, "Per-response timeout in seconds")->capture_default_str();

  SerialSendArgs serial;
  auto* c_serial = app.add_subcommand("serial-send", "Stream records to a device and report its answers");
  add_data_flags(c_serial, serial.data);
  add_common_flags(c_serial, serial.common);
  c_serial->add_option("--model", serial.model, "Model the device runs")->required()->check(CLI::ExistingFile);
  c_serial->add_option("--port", serial.port, "Serial device")->required();
  c_serial->add_option("--baud", serial.baud, "Baud rate")->capture_default_str();
  c_serial->add_option("--max-records", serial.max_records, "Stop after this many records (0 = all)")
      ->capture_default_str();
  c_serial->add_option("--timeout", serial.timeout_s, "Per-response timeout in seconds")->capture_default_str();

  try {
    app.parse(argc, argv);
    if (c_sweep->parsed() && depths_opt->count() > 0 && sweep.depths.empty()) {
      throw CLI::ValidationError("--depths", "needs at least one depth");
    }
  } catch (const CLI::ParseError& e) {
    // --help and --version exit 0; every usage error exits 2.
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (c_train->parsed()) return cmd_train(train);
    if (c_eval->parsed()) return cmd_evaluate(evaluate);
    if (c_sweep->parsed()) return cmd_sweep(sweep);
    if (c_emit->parsed()) return cmd_emit(emit_args);
    if (c_bench->parsed()) return cmd_bench(bench);
    if (c_serial->parsed()) return cmd_serial_send(serial);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
