#include "edgetree/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <ostream>
#include <thread>

#include "edgetree/error.hpp"
#include "edgetree/numfmt.hpp"

namespace edgetree {

namespace {

// Independent per-fold seed so fold results do not depend on scheduling.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Training and test parts after optional train-fitted preprocessing.
std::pair<LabeledDataset, LabeledDataset> prepare(LabeledDataset train, LabeledDataset test,
                                                  const PreprocessOptions& preprocess) {
  if (!preprocess.enabled()) return {std::move(train), std::move(test)};
  const auto params = PreprocessParams::fit(train, preprocess);
  return {params.apply(train), params.apply(test)};
}

// Runs body(i) for i in [0, count) on up to `jobs` threads; rethrows the
// first failure.
template <typename Body>
void parallel_for(std::size_t count, std::size_t jobs, Body body) {
  jobs = std::max<std::size_t>(1, std::min(jobs, count));
  if (jobs == 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> workers;
  workers.reserve(jobs);
  for (std::size_t w = 0; w < jobs; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next = count;
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  if (failure) std::rethrow_exception(failure);
}

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", v * 100.0);
  return buf;
}

}  // namespace

void ConfusionMatrix::add(FlowClass truth, FlowClass predicted) {
  if (truth == FlowClass::attack) {
    ++(predicted == FlowClass::attack ? tp : fn);
  } else {
    ++(predicted == FlowClass::attack ? fp : tn);
  }
}

double balanced_accuracy(const ConfusionMatrix& cm) {
  if (cm.tp + cm.fn == 0 || cm.tn + cm.fp == 0) {
    throw DataError("balanced accuracy needs both classes in the ground truth");
  }
  // One rounding of tp*N + tn*P over 2*P*N when both fit a double exactly,
  // so the value is symmetric in the classes and equals accuracy when P == N.
  const unsigned __int128 pos = cm.tp + cm.fn;
  const unsigned __int128 neg = cm.tn + cm.fp;
  const unsigned __int128 num = cm.tp * neg + cm.tn * pos;
  const unsigned __int128 den = 2 * pos * neg;
  constexpr unsigned __int128 exact_limit = static_cast<unsigned __int128>(1) << 53;
  if (den <= exact_limit) return static_cast<double>(num) / static_cast<double>(den);
  const double tpr = static_cast<double>(cm.tp) / static_cast<double>(pos);
  const double tnr = static_cast<double>(cm.tn) / static_cast<double>(neg);
  return (tpr + tnr) / 2.0;
}

double f1(const ConfusionMatrix& cm) {
  if (cm.tp + cm.fp + cm.fn == 0) throw DataError("F1 undefined without positives");
  if (cm.tp == 0) return 0.0;
  const double precision = static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fp);
  const double recall = static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fn);
  return 2.0 * precision * recall / (precision + recall);
}

double accuracy(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw DataError("accuracy of an empty confusion matrix");
  return static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
}

ConfusionMatrix score(const DecisionTree& tree, const LabeledDataset& data) {
  ConfusionMatrix cm;
  for (std::size_t r = 0; r < data.size(); ++r) cm.add(data.label(r), tree.predict(data.record(r)));
  return cm;
}

MeanStd mean_std(const std::vector<double>& values) {
  if (values.empty()) return {};
  double sum = 0.0;
  for (const double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  double ss = 0.0;
  for (const double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(values.size()))};
}

void MetricsReport::summarize() {
  std::vector<double> bacc;
  std::vector<double> f;
  zero_tp_splits = 0;
  for (const auto& s : per_split) {
    bacc.push_back(s.balanced_accuracy);
    f.push_back(s.f1);
    if (s.confusion.tp == 0) ++zero_tp_splits;
  }
  balanced_accuracy = mean_std(bacc);
  f1 = mean_std(f);
}

MetricsReport cross_validate(const LabeledDataset& data, const TrainConfig& config, const CvOptions& options) {
  config.validate();
  const auto plan = stratified_kfold(data, options.k, options.repeats, options.seed);

  MetricsReport report;
  report.k = plan.k;
  report.repeats = plan.repeats;
  report.seed = options.seed;
  report.config = config;
  report.per_split.resize(plan.folds.size());

  parallel_for(plan.folds.size(), options.jobs, [&](std::size_t i) {
    const auto& fold = plan.folds[i];
    const auto [train_all, test] = prepare(data.subset(fold.train), data.subset(fold.test), options.preprocess);
    const auto train = undersample_balance(train_all, mix_seed(options.seed, i));
    const auto tree = fit(train, config);
    const auto cm = score(tree, test);
    report.per_split[i] = SplitResult{fold.repeat, fold.index, balanced_accuracy(cm), f1(cm), cm,
                                      tree.node_count(), tree.depth()};
  });
  report.summarize();
  return report;
}

HoldoutResult holdout_evaluate(const LabeledDataset& data, const TrainConfig& config, double test_fraction,
                               std::uint64_t seed, const PreprocessOptions& preprocess) {
  const auto split = holdout_indices(data.labels(), test_fraction, seed);
  const auto [train_all, test] = prepare(data.subset(split.train), data.subset(split.test), preprocess);
  const auto train = undersample_balance(train_all, mix_seed(seed, 0xb41a));
  auto tree = fit(train, config);
  const auto cm = score(tree, test);
  return HoldoutResult{std::move(tree), cm, balanced_accuracy(cm), f1(cm)};
}

std::vector<SweepRow> depth_sweep(const LabeledDataset& data, const std::vector<int>& depths,
                                  const SweepOptions& options) {
  if (depths.empty()) throw Error("depth sweep needs at least one depth");
  if (options.runs < 1) throw Error("depth sweep needs at least one run");
  for (const int d : depths) {
    if (d < 1) throw Error("sweep depths must be >= 1");
  }
  std::vector<SweepRow> rows;
  for (const int depth : depths) {
    TrainConfig config;
    config.max_depth = depth;
    config.ccp_alpha = options.ccp_alpha;
    double bacc = 0.0;
    double f = 0.0;
    for (std::size_t run = 0; run < options.runs; ++run) {
      // Same splits for every depth so rows differ only by depth.
      const auto result = holdout_evaluate(data, config, options.holdout_fraction, mix_seed(options.seed, run),
                                           options.preprocess);
      bacc += result.balanced_accuracy;
      f += result.f1;
    }
    bacc /= static_cast<double>(options.runs);
    f /= static_cast<double>(options.runs);
    rows.push_back(SweepRow{depth, bacc, f, bacc >= options.threshold});
  }
  return rows;
}

void write_cv_csv(std::ostream& out, const MetricsReport& report) {
  out << "depth,split,bacc,f1\n";
  for (std::size_t i = 0; i < report.per_split.size(); ++i) {
    const auto& s = report.per_split[i];
    out << report.config.max_depth << ',' << i << ',' << format_double(s.balanced_accuracy) << ','
        << format_double(s.f1) << '\n';
  }
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "depth,split,bacc,f1\n";
  for (const auto& row : rows) {
    out << row.depth << ",holdout," << format_double(row.balanced_accuracy) << ',' << format_double(row.f1)
        << '\n';
  }
}

std::string format_cv_table(const MetricsReport& report) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-6s %-5s %-9s %-9s %-6s %-5s\n", "repeat", "fold", "BAcc", "F1", "nodes",
                "depth");
  out += line;
  for (const auto& s : report.per_split) {
    std::snprintf(line, sizeof line, "%-6zu %-5zu %-9s %-9s %-6zu %-5zu\n", s.repeat, s.fold,
                  percent(s.balanced_accuracy).c_str(), percent(s.f1).c_str(), s.tree_nodes, s.tree_depth);
    out += line;
  }
  std::snprintf(line, sizeof line, "mean BAcc %s (std %.4f), mean F1 %s (std %.4f) over %zu x %zu folds\n",
                percent(report.balanced_accuracy.mean).c_str(), report.balanced_accuracy.stddev,
                percent(report.f1.mean).c_str(), report.f1.stddev, report.k, report.repeats);
  out += line;
  return out;
}

std::string format_sweep_table(const std::vector<SweepRow>& rows, double threshold) {
  std::string out;
  char line[128];
  std::snprintf(line, sizeof line, "%-6s %-9s %-9s %s (threshold %s)\n", "depth", "BAcc", "F1", "result",
                percent(threshold).c_str());
  out += line;
  for (const auto& row : rows) {
    std::snprintf(line, sizeof line, "%-6d %-9s %-9s %s\n", row.depth, percent(row.balanced_accuracy).c_str(),
                  percent(row.f1).c_str(), row.passed ? "pass" : "fail");
    out += line;
  }
  return out;
}

}  // namespace edgetree
