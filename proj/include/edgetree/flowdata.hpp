#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace edgetree {

enum class FlowClass : std::uint8_t { benign = 0, attack = 1 };

constexpr std::size_t class_index(FlowClass c) { return static_cast<std::size_t>(c); }

// Per-class tallies indexed by class_index().
using ClassCounts = std::array<std::uint64_t, 2>;

struct FlowSchema {
  std::vector<std::string> feature_names;
  std::string label_column = "Label";

  std::size_t feature_count() const { return feature_names.size(); }

  // Throws DataError on empty/duplicate names or a label/feature clash.
  void validate() const;

  // f0, f1, ... for models loaded without a dataset header.
  static FlowSchema generic(std::size_t feature_count);

  friend bool operator==(const FlowSchema&, const FlowSchema&) = default;
};

// View of one flow's feature vector inside a dataset.
using FlowRecord = std::span<const double>;

// Immutable, row-major table of finite features with binary labels.
class LabeledDataset {
 public:
  LabeledDataset(FlowSchema schema, std::vector<double> values, std::vector<FlowClass> labels);

  const FlowSchema& schema() const { return schema_; }
  std::size_t size() const { return labels_.size(); }
  std::size_t feature_count() const { return schema_.feature_count(); }

  FlowRecord record(std::size_t row) const {
    return {values_.data() + row * feature_count(), feature_count()};
  }
  double value(std::size_t row, std::size_t feature) const {
    return values_[row * feature_count() + feature];
  }
  FlowClass label(std::size_t row) const { return labels_[row]; }
  std::span<const FlowClass> labels() const { return labels_; }
  std::span<const double> values() const { return values_; }

  ClassCounts class_counts() const;
  bool has_both_classes() const;

  // Rows in the given order (duplicates allowed).
  LabeledDataset subset(std::span<const std::size_t> rows) const;

  friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;

 private:
  FlowSchema schema_;
  std::vector<double> values_;
  std::vector<FlowClass> labels_;
};

// Explicit string -> class mapping for label columns that are not 0/1.
using LabelMap = std::map<std::string, FlowClass, std::less<>>;

// Parses "benign=0,attack=1". Throws DataError on malformed input.
LabelMap parse_label_map(std::string_view spec);

struct CsvOptions {
  std::string label_column = "Label";
  std::optional<LabelMap> label_map;
  // Columns ignored entirely (e.g. IP address strings, attack category text).
  std::vector<std::string> drop_columns;
};

LabeledDataset load_csv(const std::filesystem::path& path, const CsvOptions& options = {});
void save_csv(const LabeledDataset& dataset, const std::filesystem::path& path);

// Reads only the header row and returns the schema the file would load with.
FlowSchema read_csv_schema(const std::filesystem::path& path, const CsvOptions& options = {});

// Indices (ascending) of a class-balanced subsample: every class keeps
// exactly the minority count, drawn uniformly without replacement.
std::vector<std::size_t> undersample_indices(std::span<const FlowClass> labels, std::uint64_t seed);
LabeledDataset undersample_balance(const LabeledDataset& dataset, std::uint64_t seed);

struct Fold {
  std::size_t repeat = 0;
  std::size_t index = 0;
  std::vector<std::size_t> train;  // ascending
  std::vector<std::size_t> test;   // ascending
};

struct SplitPlan {
  std::vector<Fold> folds;  // repeat-major, k * repeats entries
  std::size_t k = 0;
  std::size_t repeats = 0;
  std::uint64_t seed = 0;
};

SplitPlan stratified_kfold(std::span<const FlowClass> labels, std::size_t k, std::size_t repeats,
                           std::uint64_t seed);
inline SplitPlan stratified_kfold(const LabeledDataset& dataset, std::size_t k, std::size_t repeats,
                                  std::uint64_t seed) {
  return stratified_kfold(dataset.labels(), k, repeats, seed);
}

struct HoldoutIndices {
  std::vector<std::size_t> train;  // ascending
  std::vector<std::size_t> test;   // ascending
};

HoldoutIndices holdout_indices(std::span<const FlowClass> labels, double test_fraction,
                               std::uint64_t seed);
std::pair<LabeledDataset, LabeledDataset> holdout_split(const LabeledDataset& dataset,
                                                        double test_fraction, std::uint64_t seed);

struct PreprocessOptions {
  bool scale_numeric = false;
  std::vector<std::string> categorical;  // ordinal-encoded, never scaled

  bool enabled() const { return scale_numeric || !categorical.empty(); }
};

// Transformation fitted on one dataset and replayable on another with the
// same schema. An unseen categorical value encodes halfway between the ranks
// of its sorted neighbours (-0.5 below all, count - 0.5 above all).
class PreprocessParams {
 public:
  static PreprocessParams fit(const LabeledDataset& train, const PreprocessOptions& options);

  LabeledDataset apply(const LabeledDataset& dataset) const;

  struct ColumnScale {
    double mean = 0.0;
    double stddev = 0.0;  // population; 0 means the column maps to 0

    friend bool operator==(const ColumnScale&, const ColumnScale&) = default;
  };

  const std::vector<std::optional<ColumnScale>>& scales() const { return scales_; }
  const std::vector<std::optional<std::vector<double>>>& categories() const { return categories_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  friend bool operator==(const PreprocessParams&, const PreprocessParams&) = default;

 private:
  std::vector<std::optional<ColumnScale>> scales_;
  std::vector<std::optional<std::vector<double>>> categories_;  // sorted unique values
  std::vector<std::string> warnings_;
};

struct PreprocessResult {
  LabeledDataset dataset;
  PreprocessParams params;
};

PreprocessResult preprocess(const LabeledDataset& dataset, const PreprocessOptions& options);

}  // namespace edgetree
