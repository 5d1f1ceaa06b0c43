#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "edgetree/cart.hpp"
#include "edgetree/flowdata.hpp"

namespace edgetree {

// Attack is the positive class.
struct ConfusionMatrix {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fn = 0;

  void add(FlowClass truth, FlowClass predicted);
  std::uint64_t total() const { return tp + fp + tn + fn; }
  // Same predictions scored with benign as the positive class.
  ConfusionMatrix swapped() const { return {tn, fn, tp, fp}; }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

// (TPR + TNR) / 2. Throws DataError when either class is absent from truth.
double balanced_accuracy(const ConfusionMatrix& cm);

// 2PR/(P+R); 0 when tp == 0. Throws DataError when tp + fp + fn == 0.
double f1(const ConfusionMatrix& cm);

double accuracy(const ConfusionMatrix& cm);

ConfusionMatrix score(const DecisionTree& tree, const LabeledDataset& data);

struct SplitResult {
  std::size_t repeat = 0;
  std::size_t fold = 0;
  double balanced_accuracy = 0.0;
  double f1 = 0.0;
  ConfusionMatrix confusion;
  std::size_t tree_nodes = 0;
  std::size_t tree_depth = 0;
};

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;  // population (divides by n)
};

MeanStd mean_std(const std::vector<double>& values);

struct MetricsReport {
  std::vector<SplitResult> per_split;  // ordered by (repeat, fold)
  MeanStd balanced_accuracy;
  MeanStd f1;
  std::size_t k = 0;
  std::size_t repeats = 0;
  std::uint64_t seed = 0;
  TrainConfig config;
  // Splits whose F1 hit the tp == 0 convention.
  std::size_t zero_tp_splits = 0;

  // Recomputes the aggregate fields from per_split.
  void summarize();
};

struct CvOptions {
  std::size_t k = 5;
  std::size_t repeats = 5;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  // Fitted on each training part and replayed on its test part.
  PreprocessOptions preprocess;
};

// Repeated stratified k-fold. Each training part is undersampled to balance;
// each test part is scored whole.
MetricsReport cross_validate(const LabeledDataset& data, const TrainConfig& config, const CvOptions& options);

struct HoldoutResult {
  DecisionTree tree;
  ConfusionMatrix confusion;
  double balanced_accuracy = 0.0;
  double f1 = 0.0;
};

// Stratified holdout with a balanced training part and an untouched test part.
HoldoutResult holdout_evaluate(const LabeledDataset& data, const TrainConfig& config, double test_fraction,
                               std::uint64_t seed, const PreprocessOptions& preprocess = {});

struct SweepOptions {
  double holdout_fraction = 0.3;
  double threshold = 0.985;
  std::size_t runs = 3;  // holdout repetitions averaged per depth
  std::uint64_t seed = 0;
  double ccp_alpha = 0.0001;
  PreprocessOptions preprocess;
};

struct SweepRow {
  int depth = 0;
  double balanced_accuracy = 0.0;  // mean over runs
  double f1 = 0.0;                 // mean over runs
  bool passed = false;
};

std::vector<SweepRow> depth_sweep(const LabeledDataset& data, const std::vector<int>& depths,
                                  const SweepOptions& options);

// Machine-readable rows: depth,split,bacc,f1.
void write_cv_csv(std::ostream& out, const MetricsReport& report);
void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);
std::string format_cv_table(const MetricsReport& report);
std::string format_sweep_table(const std::vector<SweepRow>& rows, double threshold);

}  // namespace edgetree
