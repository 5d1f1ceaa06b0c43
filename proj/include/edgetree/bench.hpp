#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "edgetree/cart.hpp"
#include "edgetree/codegen.hpp"
#include "edgetree/flowdata.hpp"
#include "edgetree/process.hpp"
#include "edgetree/transport.hpp"

namespace edgetree {

// External C compiler and Berkeley-format `size` utility. Each is a
// whitespace-separated command template, from EDGETREE_CC / EDGETREE_SIZE.
struct Toolchain {
  std::vector<std::string> cc{"cc"};
  std::vector<std::string> size{"size"};

  static Toolchain from_env();
  // First line of `cc --version`, or empty when the compiler is missing.
  std::string compiler_version() const;
  bool available() const;
};

struct SectionSizes {
  std::uint64_t text_bytes = 0;
  std::uint64_t data_bytes = 0;
  std::uint64_t bss_bytes = 0;
  std::string optimization_level;  // "O0", "O3", ...
  std::string raw_output;          // untouched size-tool report
  std::string compile_command;
};

// Parses the Berkeley format ("text data bss dec hex filename") report.
SectionSizes parse_size_output(std::string_view raw, std::string_view optimization_level);

// Compiles predict.c to an object file and measures it.
SectionSizes compile_and_measure(const EmittedSource& src, std::string_view optimization_level,
                                 const Toolchain& toolchain);
// Links firmware.c into a host executable and measures it.
SectionSizes compile_and_measure(const FirmwareBundle& bundle, std::string_view optimization_level,
                                 const Toolchain& toolchain);

// Host executable built from a firmware bundle, deleted with this object.
class HostBinary {
 public:
  static HostBinary build(const FirmwareBundle& bundle, const Toolchain& toolchain,
                          std::string_view optimization_level = "O3");
  const std::filesystem::path& path() const { return exe_; }

 private:
  HostBinary(TempDir dir, std::filesystem::path exe) : dir_(std::move(dir)), exe_(std::move(exe)) {}
  TempDir dir_;
  std::filesystem::path exe_;
};

// One harness response: "P,<class>,T,<elapsed_us>,N,<iterations>".
struct ProtocolResponse {
  FlowClass predicted = FlowClass::benign;
  std::uint64_t elapsed_us = 0;
  std::uint64_t iterations = 0;
};

// Throws TransportError on anything but a well-formed P line.
ProtocolResponse parse_response(std::string_view line);
std::string format_request(FlowRecord record);

struct TimingResult {
  double avg_ns_per_inference = 0.0;
  std::uint64_t iterations = 0;
  std::size_t records_measured = 0;
  std::uint64_t total_elapsed_us = 0;
  std::vector<std::string> raw_responses;
};

// Rebuilds a TimingResult from raw response lines alone.
TimingResult timing_from_responses(const std::vector<std::string>& raw_responses);

struct TimingOptions {
  std::size_t max_records = 0;  // 0 = every record
  std::chrono::milliseconds timeout{10000};
};

// Sends each record, checks the reported class against the tree (a mismatch
// throws EquivalenceError), and averages the device-side loop time.
TimingResult time_inference(const FirmwareBundle& bundle, const DecisionTree& tree, const LabeledDataset& records,
                            LineTransport& transport, const TimingOptions& options = {});

struct StaticCost {
  std::size_t worst_case_comparisons = 0;
  double mean_comparisons = 0.0;
};

// Path lengths in comparisons: worst case is the tree depth; the mean is
// weighted by where `data` lands, or taken over leaves when no data given.
StaticCost static_cost(const DecisionTree& tree);
StaticCost static_cost(const DecisionTree& tree, const LabeledDataset& data);

struct SizeRow {
  EmitterStyle style = EmitterStyle::nested_if;
  SectionSizes sizes;
};

struct TimingRow {
  EmitterStyle style = EmitterStyle::nested_if;
  TimingResult timing;
};

struct ComparisonReport {
  std::vector<SizeRow> size_rows;      // style x {O0, O3}
  std::vector<TimingRow> timing_rows;  // one per style
  std::string tree_digest;             // same tree under every row
  std::size_t tree_nodes = 0;
  std::size_t tree_depth = 0;
  std::size_t equivalence_records = 0;
  std::vector<std::string> observations;  // recorded, not asserted
};

struct CompareOptions {
  Toolchain toolchain;
  std::string timing_level = "O3";
  std::uint64_t iterations = kDefaultIterations;
  std::size_t timing_records = 200;       // 0 = all
  std::size_t equivalence_records = 0;    // 0 = all
};

ComparisonReport compare_emitters(const DecisionTree& tree, const FlowSchema& schema, const LabeledDataset& data,
                                  const CompareOptions& options = {});

// Compiles the bundle with a one-iteration loop and classifies every record
// through it; throws EquivalenceError on the first disagreement.
std::size_t verify_equivalence(const DecisionTree& tree, const FlowSchema& schema, EmitterStyle style,
                               const LabeledDataset& data, const Toolchain& toolchain,
                               std::string_view optimization_level = "O0", std::size_t max_records = 0);

std::string format_comparison_table(const ComparisonReport& report);
// style,opt,text,data,bss rows plus a timing section.
std::string comparison_csv(const ComparisonReport& report);
std::string comparison_raw_log(const ComparisonReport& report);

}  // namespace edgetree
