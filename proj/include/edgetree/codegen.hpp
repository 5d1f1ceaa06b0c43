#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "edgetree/cart.hpp"
#include "edgetree/flowdata.hpp"

namespace edgetree {

enum class EmitterStyle {
  nested_if,        // one global per feature, parameterless predict(), if/else chain
  array_recursive,  // node arrays plus a recursive walker taking a feature array
};

std::string_view style_name(EmitterStyle style);  // "nested-if" / "array-recursive"
EmitterStyle parse_style(std::string_view name);

struct SourceStats {
  std::size_t lines = 0;
  std::size_t emitted_nodes = 0;
  std::size_t max_nesting_depth = 0;

  friend bool operator==(const SourceStats&, const SourceStats&) = default;
};

struct EmittedSource {
  EmitterStyle style = EmitterStyle::nested_if;
  std::string header_text;  // predict.h
  std::string text;         // predict.c
  // Globals and predict function without the #include, for template injection.
  std::string body;
  SourceStats stats;
  // C identifiers in schema order; globals for nested-if, comments for arrays.
  std::vector<std::string> feature_variable_names;
  std::size_t feature_count = 0;
};

EmittedSource emit_nested_if(const DecisionTree& tree, const FlowSchema& schema);
EmittedSource emit_array_recursive(const DecisionTree& tree, const FlowSchema& schema);
EmittedSource emit(const DecisionTree& tree, const FlowSchema& schema, EmitterStyle style);

// Recomputed from the emitted text alone.
SourceStats source_stats(const EmittedSource& src);

// Sanitized, de-duplicated C identifiers for the schema's features.
std::vector<std::string> feature_identifiers(const FlowSchema& schema);

constexpr std::uint64_t kDefaultIterations = 100000;

struct FirmwareBundle {
  std::string program_text;  // firmware.c
  EmittedSource predictor;
  std::uint64_t iteration_count = kDefaultIterations;
  std::size_t feature_count = 0;
};

FirmwareBundle emit_firmware(const DecisionTree& tree, const FlowSchema& schema, EmitterStyle style,
                             std::uint64_t iteration_count = kDefaultIterations);

// Substitutes every {{NAME}} in one pass. Throws Error on an unknown or
// unterminated placeholder, a stray "}}", or delimiters left in the output.
std::string render_template(std::string_view tmpl, const std::map<std::string, std::string, std::less<>>& values);

// The timing-harness template consumed by emit_firmware().
std::string_view firmware_template();

// Writes predict.h and predict.c into `dir` (created if needed).
void write_sources(const EmittedSource& src, const std::filesystem::path& dir);
// Writes firmware.c into `dir`.
void write_firmware(const FirmwareBundle& bundle, const std::filesystem::path& dir);

}  // namespace edgetree
