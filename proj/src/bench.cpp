#include "edgetree/bench.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <sstream>

#include "edgetree/error.hpp"
#include "edgetree/numfmt.hpp"

namespace edgetree {

namespace {

const std::vector<std::string> kLevels{"O0", "O1", "O2", "O3", "Os"};

void check_level(std::string_view level) {
  if (std::find(kLevels.begin(), kLevels.end(), level) == kLevels.end()) {
    throw ToolchainError("unsupported optimization level '" + std::string(level) + "'");
  }
}

CommandResult must_succeed(const std::vector<std::string>& argv, std::string_view what) {
  auto result = run_command(argv);
  if (result.exit_code != 0) {
    throw ToolchainError(std::string(what) + " failed (exit " + std::to_string(result.exit_code) + "): " +
                         join_command(argv) + "\n" + result.output);
  }
  return result;
}

SectionSizes measure(const std::filesystem::path& artifact, std::string_view level, const Toolchain& toolchain,
                     std::string compile_command) {
  auto argv = toolchain.size;
  argv.push_back(artifact.string());
  const auto result = must_succeed(argv, "size utility");
  auto sizes = parse_size_output(result.output, level);
  sizes.compile_command = std::move(compile_command);
  return sizes;
}

template <typename Int>
bool parse_uint(std::string_view text, Int& out) {
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc{} && ptr == text.data() + text.size();
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const auto start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

std::string digest(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string holds(bool ok) { return ok ? "holds" : "DOES NOT HOLD"; }

}  // namespace

Toolchain Toolchain::from_env() {
  Toolchain tc;
  if (const char* cc = std::getenv("EDGETREE_CC"); cc && *cc) tc.cc = split_command(cc);
  if (const char* size = std::getenv("EDGETREE_SIZE"); size && *size) tc.size = split_command(size);
  if (tc.cc.empty() || tc.size.empty()) throw ToolchainError("empty EDGETREE_CC or EDGETREE_SIZE");
  return tc;
}

std::string Toolchain::compiler_version() const {
  try {
    auto argv = cc;
    argv.push_back("--version");
    const auto result = run_command(argv);
    if (result.exit_code != 0) return {};
    return std::string(trim(std::string_view(result.output).substr(0, result.output.find('\n'))));
  } catch (const ToolchainError&) {
    return {};
  }
}

bool Toolchain::available() const {
  if (compiler_version().empty()) return false;
  try {
    auto argv = size;
    argv.push_back("--version");
    return run_command(argv).exit_code == 0;
  } catch (const ToolchainError&) {
    return false;
  }
}

SectionSizes parse_size_output(std::string_view raw, std::string_view optimization_level) {
  std::vector<std::string_view> lines;
  for (std::size_t start = 0; start < raw.size();) {
    auto end = raw.find('\n', start);
    if (end == std::string_view::npos) end = raw.size();
    lines.push_back(raw.substr(start, end - start));
    start = end + 1;
  }
  for (std::size_t i = 0; i + 1 < lines.size(); ++i) {
    const auto head = split_ws(lines[i]);
    if (head.size() < 3 || head[0] != "text" || head[1] != "data" || head[2] != "bss") continue;
    for (std::size_t j = i + 1; j < lines.size(); ++j) {
      const auto cols = split_ws(lines[j]);
      if (cols.empty()) continue;
      SectionSizes sizes;
      if (cols.size() < 3 || !parse_uint(cols[0], sizes.text_bytes) || !parse_uint(cols[1], sizes.data_bytes) ||
          !parse_uint(cols[2], sizes.bss_bytes)) {
        break;
      }
      sizes.optimization_level = std::string(optimization_level);
      sizes.raw_output = std::string(raw);
      return sizes;
    }
  }
  throw ToolchainError("unparseable size output:\n" + std::string(raw));
}

SectionSizes compile_and_measure(const EmittedSource& src, std::string_view optimization_level,
                                 const Toolchain& toolchain) {
  check_level(optimization_level);
  TempDir dir("edgetree-size");
  write_sources(src, dir.path());
  const auto object = dir.path() / "predict.o";
  auto argv = toolchain.cc;
  for (const auto& a : {std::string("-") + std::string(optimization_level), std::string("-c"),
                        (dir.path() / "predict.c").string(), std::string("-o"), object.string()}) {
    argv.push_back(a);
  }
  must_succeed(argv, "compiler");
  return measure(object, optimization_level, toolchain, join_command(argv));
}

SectionSizes compile_and_measure(const FirmwareBundle& bundle, std::string_view optimization_level,
                                 const Toolchain& toolchain) {
  check_level(optimization_level);
  const auto binary = HostBinary::build(bundle, toolchain, optimization_level);
  auto argv = toolchain.cc;
  argv.push_back("-" + std::string(optimization_level));
  argv.push_back("firmware.c");
  return measure(binary.path(), optimization_level, toolchain, join_command(argv));
}

HostBinary HostBinary::build(const FirmwareBundle& bundle, const Toolchain& toolchain,
                             std::string_view optimization_level) {
  check_level(optimization_level);
  TempDir dir("edgetree-fw");
  write_firmware(bundle, dir.path());
  auto exe = dir.path() / "firmware";
  auto argv = toolchain.cc;
  for (const auto& a : {std::string("-") + std::string(optimization_level), (dir.path() / "firmware.c").string(),
                        std::string("-o"), exe.string()}) {
    argv.push_back(a);
  }
  must_succeed(argv, "compiler");
  return HostBinary(std::move(dir), std::move(exe));
}

ProtocolResponse parse_response(std::string_view line) {
  const auto bad = [&](const char* why) -> TransportError {
    return TransportError("bad response '" + std::string(line) + "': " + why);
  };
  std::vector<std::string_view> fields;
  for (std::size_t start = 0;;) {
    const auto comma = line.find(',', start);
    fields.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  if (!fields.empty() && fields[0] == "E") throw bad("device reported an error");
  if (fields.size() != 6 || fields[0] != "P" || fields[2] != "T" || fields[4] != "N") throw bad("wrong shape");
  ProtocolResponse r;
  if (fields[1] == "0") {
    r.predicted = FlowClass::benign;
  } else if (fields[1] == "1") {
    r.predicted = FlowClass::attack;
  } else {
    throw bad("class is not 0/1");
  }
  if (!parse_uint(fields[3], r.elapsed_us)) throw bad("elapsed time is not an integer");
  if (!parse_uint(fields[5], r.iterations) || r.iterations == 0) throw bad("iteration count is not positive");
  return r;
}

std::string format_request(FlowRecord record) {
  std::string line;
  for (std::size_t i = 0; i < record.size(); ++i) {
    if (i) line += ',';
    line += format_double(record[i]);
  }
  return line;
}

TimingResult timing_from_responses(const std::vector<std::string>& raw_responses) {
  TimingResult result;
  result.raw_responses = raw_responses;
  for (const auto& line : raw_responses) {
    const auto r = parse_response(line);
    if (result.records_measured > 0 && r.iterations != result.iterations) {
      throw TransportError("iteration count changed between responses");
    }
    result.iterations = r.iterations;
    result.total_elapsed_us += r.elapsed_us;
    ++result.records_measured;
  }
  if (result.records_measured > 0) {
    result.avg_ns_per_inference = static_cast<double>(result.total_elapsed_us) * 1000.0 /
                                  (static_cast<double>(result.iterations) *
                                   static_cast<double>(result.records_measured));
  }
  return result;
}

TimingResult time_inference(const FirmwareBundle& bundle, const DecisionTree& tree, const LabeledDataset& records,
                            LineTransport& transport, const TimingOptions& options) {
  if (records.feature_count() != bundle.feature_count || tree.n_features() != bundle.feature_count) {
    throw DataError("records, tree and firmware disagree on the feature count");
  }
  const std::size_t count =
      options.max_records == 0 ? records.size() : std::min(options.max_records, records.size());
  std::vector<std::string> responses;
  responses.reserve(count);
  for (std::size_t r = 0; r < count; ++r) {
    const auto record = records.record(r);
    transport.send_line(format_request(record));
    auto line = transport.read_line(options.timeout);
    const auto response = parse_response(line);
    const auto expected = tree.predict(record);
    if (response.predicted != expected) {
      throw EquivalenceError("record " + std::to_string(r) + ": " + transport.describe() + " answered class " +
                             std::to_string(class_index(response.predicted)) + ", tree predicts " +
                             std::to_string(class_index(expected)));
    }
    if (response.iterations != bundle.iteration_count) {
      throw TransportError("device ran " + std::to_string(response.iterations) + " iterations, bundle has " +
                           std::to_string(bundle.iteration_count));
    }
    responses.push_back(std::move(line));
  }
  if (responses.empty()) throw DataError("no records to time");
  return timing_from_responses(responses);
}

StaticCost static_cost(const DecisionTree& tree) {
  const auto& nodes = tree.nodes();
  std::vector<std::size_t> depth(nodes.size(), 0);
  double sum = 0.0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].is_leaf()) {
      sum += static_cast<double>(depth[i]);
    } else {
      depth[static_cast<std::size_t>(nodes[i].left)] = depth[i] + 1;
      depth[static_cast<std::size_t>(nodes[i].right)] = depth[i] + 1;
    }
  }
  return {tree.depth(), sum / static_cast<double>(tree.leaf_count())};
}

StaticCost static_cost(const DecisionTree& tree, const LabeledDataset& data) {
  double sum = 0.0;
  for (std::size_t r = 0; r < data.size(); ++r) {
    const auto record = data.record(r);
    std::size_t i = 0;
    std::size_t steps = 0;
    while (!tree.node(i).is_leaf()) {
      const auto& node = tree.node(i);
      i = static_cast<std::size_t>(record[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left
                                                                                                   : node.right);
      ++steps;
    }
    sum += static_cast<double>(steps);
  }
  return {tree.depth(), sum / static_cast<double>(data.size())};
}

std::size_t verify_equivalence(const DecisionTree& tree, const FlowSchema& schema, EmitterStyle style,
                               const LabeledDataset& data, const Toolchain& toolchain,
                               std::string_view optimization_level, std::size_t max_records) {
  const auto bundle = emit_firmware(tree, schema, style, 1);
  const auto binary = HostBinary::build(bundle, toolchain, optimization_level);
  HostProcessTransport transport({binary.path().string()});
  const std::size_t count = max_records == 0 ? data.size() : std::min(max_records, data.size());
  // Pipelined in batches small enough to never fill the pipe buffers.
  constexpr std::size_t kBatch = 128;
  for (std::size_t start = 0; start < count; start += kBatch) {
    const std::size_t end = std::min(count, start + kBatch);
    std::string requests;
    for (std::size_t r = start; r < end; ++r) requests += format_request(data.record(r)) + "\n";
    requests.pop_back();
    transport.send_line(requests);
    for (std::size_t r = start; r < end; ++r) {
      const auto response = parse_response(transport.read_line(std::chrono::milliseconds(10000)));
      const auto expected = tree.predict(data.record(r));
      if (response.predicted != expected) {
        throw EquivalenceError(std::string(style_name(style)) + " build disagrees with the tree on record " +
                               std::to_string(r) + " (" + format_request(data.record(r)) + ")");
      }
    }
  }
  return count;
}

ComparisonReport compare_emitters(const DecisionTree& tree, const FlowSchema& schema, const LabeledDataset& data,
                                  const CompareOptions& options) {
  if (data.feature_count() != tree.n_features()) throw DataError("dataset and tree disagree on the feature count");
  ComparisonReport report;
  report.tree_digest = digest(serialize_tree(tree));
  report.tree_nodes = tree.node_count();
  report.tree_depth = tree.depth();

  const std::vector<EmitterStyle> styles{EmitterStyle::nested_if, EmitterStyle::array_recursive};
  for (const auto style : styles) {
    const auto src = emit(tree, schema, style);
    for (const auto* level : {"O0", "O3"}) {
      report.size_rows.push_back({style, compile_and_measure(src, level, options.toolchain)});
    }
  }

  for (const auto style : styles) {
    report.equivalence_records = verify_equivalence(tree, schema, style, data, options.toolchain,
                                                    options.timing_level, options.equivalence_records);
  }

  for (const auto style : styles) {
    const auto bundle = emit_firmware(tree, schema, style, options.iterations);
    const auto binary = HostBinary::build(bundle, options.toolchain, options.timing_level);
    HostProcessTransport transport({binary.path().string()});
    TimingOptions timing;
    timing.max_records = options.timing_records;
    report.timing_rows.push_back({style, time_inference(bundle, tree, data, transport, timing)});
  }

  const auto size_of = [&](EmitterStyle style, std::string_view level) -> const SectionSizes& {
    for (const auto& row : report.size_rows) {
      if (row.style == style && row.sizes.optimization_level == level) return row.sizes;
    }
    throw Error("missing size row");
  };
  const auto& nested_o0 = size_of(EmitterStyle::nested_if, "O0");
  const auto& array_o0 = size_of(EmitterStyle::array_recursive, "O0");
  report.observations.push_back("nested-if O0 text < array-recursive O0 text: " +
                                holds(nested_o0.text_bytes < array_o0.text_bytes));
  report.observations.push_back("nested-if bss >= array-recursive bss: " +
                                holds(nested_o0.bss_bytes >= array_o0.bss_bytes));
  report.observations.push_back(
      "nested-if host time <= array-recursive host time: " +
      holds(report.timing_rows[0].timing.avg_ns_per_inference <= report.timing_rows[1].timing.avg_ns_per_inference));
  for (const auto style : styles) {
    report.observations.push_back(std::string(style_name(style)) + " O3 text <= O0 text: " +
                                  holds(size_of(style, "O3").text_bytes <= size_of(style, "O0").text_bytes));
  }
  return report;
}

std::string format_comparison_table(const ComparisonReport& report) {
  std::string out;
  char line[200];
  std::snprintf(line, sizeof line, "tree %s: %zu nodes, depth %zu\n\n", report.tree_digest.c_str(), report.tree_nodes,
                report.tree_depth);
  out += line;
  std::snprintf(line, sizeof line, "%-16s %-4s %10s %10s %10s\n", "style", "opt", "text", "data", "bss");
  out += line;
  for (const auto& row : report.size_rows) {
    std::snprintf(line, sizeof line, "%-16s %-4s %10llu %10llu %10llu\n", std::string(style_name(row.style)).c_str(),
                  row.sizes.optimization_level.c_str(), static_cast<unsigned long long>(row.sizes.text_bytes),
                  static_cast<unsigned long long>(row.sizes.data_bytes),
                  static_cast<unsigned long long>(row.sizes.bss_bytes));
    out += line;
  }
  out += "\n";
  std::snprintf(line, sizeof line, "%-16s %14s %12s %8s\n", "style", "ns/inference", "iterations", "records");
  out += line;
  for (const auto& row : report.timing_rows) {
    std::snprintf(line, sizeof line, "%-16s %14.3f %12llu %8zu\n", std::string(style_name(row.style)).c_str(),
                  row.timing.avg_ns_per_inference, static_cast<unsigned long long>(row.timing.iterations),
                  row.timing.records_measured);
    out += line;
  }
  out += "\n";
  std::snprintf(line, sizeof line, "both styles matched the tree on %zu records\n", report.equivalence_records);
  out += line;
  for (const auto& obs : report.observations) out += "  " + obs + "\n";
  return out;
}

std::string comparison_csv(const ComparisonReport& report) {
  std::string out = "style,opt,text,data,bss\n";
  for (const auto& row : report.size_rows) {
    out += std::string(style_name(row.style)) + "," + row.sizes.optimization_level + "," +
           std::to_string(row.sizes.text_bytes) + "," + std::to_string(row.sizes.data_bytes) + "," +
           std::to_string(row.sizes.bss_bytes) + "\n";
  }
  out += "\nstyle,avg_ns_per_inference,iterations,records,total_elapsed_us\n";
  for (const auto& row : report.timing_rows) {
    out += std::string(style_name(row.style)) + "," + format_double(row.timing.avg_ns_per_inference) + "," +
           std::to_string(row.timing.iterations) + "," + std::to_string(row.timing.records_measured) + "," +
           std::to_string(row.timing.total_elapsed_us) + "\n";
  }
  return out;
}

std::string comparison_raw_log(const ComparisonReport& report) {
  std::string out;
  for (const auto& row : report.size_rows) {
    out += "## " + std::string(style_name(row.style)) + " " + row.sizes.optimization_level + "\n$ " +
           row.sizes.compile_command + "\n" + row.sizes.raw_output + "\n";
  }
  for (const auto& row : report.timing_rows) {
    out += "## " + std::string(style_name(row.style)) + " responses\n";
    for (const auto& line : row.timing.raw_responses) out += line + "\n";
  }
  return out;
}

}  // namespace edgetree
