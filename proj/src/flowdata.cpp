#include "edgetree/flowdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "edgetree/error.hpp"
#include "edgetree/numfmt.hpp"

namespace edgetree {

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

std::string_view strip_eol(std::string_view line) {
  while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.remove_suffix(1);
  return line;
}

struct CsvLayout {
  FlowSchema schema;
  std::size_t label_position = 0;
  std::vector<std::optional<std::size_t>> feature_slot;  // per file column
};

CsvLayout layout_from_header(std::string_view header, const CsvOptions& options) {
  if (header.size() >= 3 && header.substr(0, 3) == "\xEF\xBB\xBF") header.remove_prefix(3);
  const auto names = split_fields(header);
  CsvLayout layout;
  layout.schema.label_column = options.label_column;
  layout.feature_slot.resize(names.size());
  bool found_label = false;
  for (std::size_t col = 0; col < names.size(); ++col) {
    const auto name = trim(names[col]);
    if (name == options.label_column) {
      if (found_label) throw DataError("label column '" + options.label_column + "' appears twice");
      found_label = true;
      layout.label_position = col;
      continue;
    }
    if (std::find(options.drop_columns.begin(), options.drop_columns.end(), name) !=
        options.drop_columns.end()) {
      continue;
    }
    layout.feature_slot[col] = layout.schema.feature_names.size();
    layout.schema.feature_names.emplace_back(name);
  }
  if (!found_label) throw DataError("missing label column '" + options.label_column + "'");
  layout.schema.validate();
  return layout;
}

FlowClass parse_label(std::string_view cell, const CsvOptions& options, std::size_t line_no) {
  const auto text = trim(cell);
  if (options.label_map) {
    const auto it = options.label_map->find(text);
    if (it == options.label_map->end()) {
      throw DataError("line " + std::to_string(line_no) + ": label '" + std::string(text) +
                      "' not covered by the label map");
    }
    return it->second;
  }
  const auto value = parse_double(text);
  if (value && *value == 0.0) return FlowClass::benign;
  if (value && *value == 1.0) return FlowClass::attack;
  throw DataError("line " + std::to_string(line_no) + ": label '" + std::string(text) +
                  "' is not 0/1; pass an explicit label map");
}

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

std::array<std::vector<std::size_t>, 2> indices_by_class(std::span<const FlowClass> labels) {
  std::array<std::vector<std::size_t>, 2> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[class_index(labels[i])].push_back(i);
  return by_class;
}

}  // namespace

void FlowSchema::validate() const {
  if (feature_names.empty()) throw DataError("schema has no feature columns");
  std::set<std::string_view> seen;
  for (const auto& name : feature_names) {
    if (name.empty()) throw DataError("empty feature column name");
    if (!seen.insert(name).second) throw DataError("duplicate feature column '" + name + "'");
    if (name == label_column) throw DataError("label column '" + name + "' is also a feature");
  }
}

FlowSchema FlowSchema::generic(std::size_t feature_count) {
  FlowSchema schema;
  for (std::size_t i = 0; i < feature_count; ++i) schema.feature_names.push_back("f" + std::to_string(i));
  return schema;
}

LabeledDataset::LabeledDataset(FlowSchema schema, std::vector<double> values,
                               std::vector<FlowClass> labels)
    : schema_(std::move(schema)), values_(std::move(values)), labels_(std::move(labels)) {
  schema_.validate();
  if (labels_.empty()) throw DataError("dataset has no records");
  if (values_.size() != labels_.size() * schema_.feature_count()) {
    throw DataError("feature matrix size does not match record count");
  }
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      throw DataError("non-finite value at record " + std::to_string(i / feature_count()) +
                      ", feature '" + schema_.feature_names[i % feature_count()] + "'");
    }
  }
  for (const auto label : labels_) {
    if (label != FlowClass::benign && label != FlowClass::attack) throw DataError("label is not binary");
  }
}

ClassCounts LabeledDataset::class_counts() const {
  ClassCounts counts{};
  for (const auto label : labels_) ++counts[class_index(label)];
  return counts;
}

bool LabeledDataset::has_both_classes() const {
  const auto counts = class_counts();
  return counts[0] > 0 && counts[1] > 0;
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> rows) const {
  std::vector<double> values;
  values.reserve(rows.size() * feature_count());
  std::vector<FlowClass> labels;
  labels.reserve(rows.size());
  for (const auto row : rows) {
    const auto rec = record(row);
    values.insert(values.end(), rec.begin(), rec.end());
    labels.push_back(labels_[row]);
  }
  return LabeledDataset(schema_, std::move(values), std::move(labels));
}

LabelMap parse_label_map(std::string_view spec) {
  LabelMap map;
  for (const auto entry : split_fields(spec)) {
    const auto item = trim(entry);
    const auto eq = item.find('=');
    if (eq == std::string_view::npos || eq == 0) {
      throw DataError("label map entry '" + std::string(item) + "' is not name=0|1");
    }
    const auto name = trim(item.substr(0, eq));
    const auto bit = trim(item.substr(eq + 1));
    FlowClass cls;
    if (bit == "0") {
      cls = FlowClass::benign;
    } else if (bit == "1") {
      cls = FlowClass::attack;
    } else {
      throw DataError("label map entry '" + std::string(item) + "' must map to 0 or 1");
    }
    if (!map.emplace(std::string(name), cls).second) {
      throw DataError("label map repeats '" + std::string(name) + "'");
    }
  }
  if (map.empty()) throw DataError("empty label map");
  return map;
}

FlowSchema read_csv_schema(const std::filesystem::path& path, const CsvOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::string header;
  if (!std::getline(in, header) || strip_eol(header).empty()) {
    throw DataError("'" + path.string() + "' is empty");
  }
  return layout_from_header(strip_eol(header), options).schema;
}

LabeledDataset load_csv(const std::filesystem::path& path, const CsvOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");

  std::string line;
  if (!std::getline(in, line) || strip_eol(line).empty()) {
    throw DataError("'" + path.string() + "' is empty");
  }
  const auto layout = layout_from_header(strip_eol(line), options);
  const std::size_t columns = layout.feature_slot.size();
  const std::size_t width = layout.schema.feature_count();

  std::vector<double> values;
  std::vector<FlowClass> labels;
  std::vector<double> row(width);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = strip_eol(line);
    if (trim(text).empty()) continue;
    const auto fields = split_fields(text);
    if (fields.size() != columns) {
      throw DataError("line " + std::to_string(line_no) + ": expected " + std::to_string(columns) +
                      " fields, found " + std::to_string(fields.size()));
    }
    for (std::size_t col = 0; col < columns; ++col) {
      if (col == layout.label_position) continue;
      const auto slot = layout.feature_slot[col];
      if (!slot) continue;
      const auto value = parse_double(fields[col]);
      if (!value || !std::isfinite(*value)) {
        throw DataError("line " + std::to_string(line_no) + ", column '" +
                        layout.schema.feature_names[*slot] + "': '" + std::string(trim(fields[col])) +
                        "' is not a finite number");
      }
      row[*slot] = *value;
    }
    labels.push_back(parse_label(fields[layout.label_position], options, line_no));
    values.insert(values.end(), row.begin(), row.end());
  }
  if (labels.empty()) throw DataError("'" + path.string() + "' has a header but no records");
  return LabeledDataset(layout.schema, std::move(values), std::move(labels));
}

void save_csv(const LabeledDataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  const auto& schema = dataset.schema();
  for (const auto& name : schema.feature_names) out << name << ',';
  out << schema.label_column << '\n';
  for (std::size_t r = 0; r < dataset.size(); ++r) {
    for (const double v : dataset.record(r)) out << format_double(v) << ',';
    out << class_index(dataset.label(r)) << '\n';
  }
  if (!out) throw DataError("write to '" + path.string() + "' failed");
}

std::vector<std::size_t> undersample_indices(std::span<const FlowClass> labels, std::uint64_t seed) {
  auto by_class = indices_by_class(labels);
  const std::size_t keep = std::min(by_class[0].size(), by_class[1].size());
  if (keep == 0) throw DataError("undersampling needs both classes present");
  auto rng = make_rng(seed, 0x756e646572ULL);
  std::vector<std::size_t> chosen;
  chosen.reserve(2 * keep);
  for (auto& members : by_class) {
    if (members.size() > keep) {
      // Partial Fisher-Yates: the first `keep` slots become a uniform sample.
      for (std::size_t i = 0; i < keep; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, members.size() - 1);
        std::swap(members[i], members[pick(rng)]);
      }
    }
    chosen.insert(chosen.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(keep));
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

LabeledDataset undersample_balance(const LabeledDataset& dataset, std::uint64_t seed) {
  const auto rows = undersample_indices(dataset.labels(), seed);
  return dataset.subset(rows);
}

SplitPlan stratified_kfold(std::span<const FlowClass> labels, std::size_t k, std::size_t repeats,
                           std::uint64_t seed) {
  if (k < 2) throw DataError("k must be at least 2");
  if (repeats < 1) throw DataError("repeats must be at least 1");
  const auto by_class = indices_by_class(labels);
  for (std::size_t c = 0; c < 2; ++c) {
    if (by_class[c].size() < k) {
      throw DataError("class " + std::to_string(c) + " has " + std::to_string(by_class[c].size()) +
                      " members, fewer than k=" + std::to_string(k));
    }
  }

  SplitPlan plan;
  plan.k = k;
  plan.repeats = repeats;
  plan.seed = seed;
  std::vector<std::size_t> fold_of(labels.size());
  for (std::size_t rep = 0; rep < repeats; ++rep) {
    auto rng = make_rng(seed, 0x6b666f6c64ULL + rep);
    // Deal each shuffled class round-robin, continuing where the previous
    // class stopped so fold sizes stay within one of each other.
    std::size_t next = 0;
    for (auto members : by_class) {
      std::shuffle(members.begin(), members.end(), rng);
      for (const auto idx : members) {
        fold_of[idx] = next;
        next = (next + 1) % k;
      }
    }
    for (std::size_t f = 0; f < k; ++f) {
      Fold fold;
      fold.repeat = rep;
      fold.index = f;
      for (std::size_t i = 0; i < labels.size(); ++i) {
        (fold_of[i] == f ? fold.test : fold.train).push_back(i);
      }
      plan.folds.push_back(std::move(fold));
    }
  }
  return plan;
}

HoldoutIndices holdout_indices(std::span<const FlowClass> labels, double test_fraction,
                               std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw DataError("holdout fraction must lie strictly between 0 and 1");
  }
  auto by_class = indices_by_class(labels);
  const std::size_t n = labels.size();
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));

  // Largest-remainder apportionment of the test quota across classes.
  std::array<std::size_t, 2> quota{};
  std::array<double, 2> remainder{};
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < 2; ++c) {
    const double ideal = static_cast<double>(n_test) * static_cast<double>(by_class[c].size()) /
                         static_cast<double>(n);
    quota[c] = static_cast<std::size_t>(std::floor(ideal));
    remainder[c] = ideal - static_cast<double>(quota[c]);
    assigned += quota[c];
  }
  while (assigned < n_test) {
    const std::size_t c = remainder[1] > remainder[0] ? 1 : 0;
    ++quota[c];
    remainder[c] = -1.0;
    ++assigned;
  }

  auto rng = make_rng(seed, 0x686f6c64ULL);
  HoldoutIndices split;
  for (std::size_t c = 0; c < 2; ++c) {
    auto& members = by_class[c];
    std::shuffle(members.begin(), members.end(), rng);
    const auto cut = static_cast<std::ptrdiff_t>(quota[c]);
    split.test.insert(split.test.end(), members.begin(), members.begin() + cut);
    split.train.insert(split.train.end(), members.begin() + cut, members.end());
  }
  if (split.test.empty() || split.train.empty()) {
    throw DataError("holdout fraction leaves an empty train or test part");
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

std::pair<LabeledDataset, LabeledDataset> holdout_split(const LabeledDataset& dataset,
                                                        double test_fraction, std::uint64_t seed) {
  const auto split = holdout_indices(dataset.labels(), test_fraction, seed);
  return {dataset.subset(split.train), dataset.subset(split.test)};
}

PreprocessParams PreprocessParams::fit(const LabeledDataset& train, const PreprocessOptions& options) {
  const auto& schema = train.schema();
  const std::size_t width = train.feature_count();
  std::vector<bool> is_categorical(width, false);
  for (const auto& name : options.categorical) {
    const auto it = std::find(schema.feature_names.begin(), schema.feature_names.end(), name);
    if (it == schema.feature_names.end()) throw DataError("categorical column '" + name + "' not in schema");
    is_categorical[static_cast<std::size_t>(it - schema.feature_names.begin())] = true;
  }

  PreprocessParams params;
  params.scales_.resize(width);
  params.categories_.resize(width);
  const double n = static_cast<double>(train.size());
  for (std::size_t f = 0; f < width; ++f) {
    if (is_categorical[f]) {
      std::vector<double> uniques;
      uniques.reserve(train.size());
      for (std::size_t r = 0; r < train.size(); ++r) uniques.push_back(train.value(r, f));
      std::sort(uniques.begin(), uniques.end());
      uniques.erase(std::unique(uniques.begin(), uniques.end()), uniques.end());
      params.categories_[f] = std::move(uniques);
    } else if (options.scale_numeric) {
      double mean = 0.0;
      for (std::size_t r = 0; r < train.size(); ++r) mean += train.value(r, f);
      mean /= n;
      double ss = 0.0;
      for (std::size_t r = 0; r < train.size(); ++r) {
        const double d = train.value(r, f) - mean;
        ss += d * d;
      }
      const double stddev = std::sqrt(ss / n);
      if (!(stddev > 0.0)) {
        params.warnings_.push_back("column '" + schema.feature_names[f] +
                                   "' has zero variance; scaled to 0");
      }
      params.scales_[f] = ColumnScale{mean, stddev > 0.0 ? stddev : 0.0};
    }
  }
  return params;
}

LabeledDataset PreprocessParams::apply(const LabeledDataset& dataset) const {
  if (dataset.feature_count() != scales_.size()) {
    throw DataError("preprocessing was fitted on a different schema");
  }
  const std::size_t width = dataset.feature_count();
  std::vector<double> values(dataset.values().begin(), dataset.values().end());
  for (std::size_t r = 0; r < dataset.size(); ++r) {
    for (std::size_t f = 0; f < width; ++f) {
      double& v = values[r * width + f];
      if (const auto& cats = categories_[f]) {
        // Seen values get their rank; unseen ones sit halfway between the
        // ranks of their neighbours, so the encoding stays monotone.
        const auto it = std::lower_bound(cats->begin(), cats->end(), v);
        const auto rank = static_cast<double>(it - cats->begin());
        v = (it != cats->end() && *it == v) ? rank : rank - 0.5;
      } else if (const auto& scale = scales_[f]) {
        v = scale->stddev > 0.0 ? (v - scale->mean) / scale->stddev : 0.0;
      }
    }
  }
  return LabeledDataset(dataset.schema(), std::move(values),
                        std::vector<FlowClass>(dataset.labels().begin(), dataset.labels().end()));
}

PreprocessResult preprocess(const LabeledDataset& dataset, const PreprocessOptions& options) {
  auto params = PreprocessParams::fit(dataset, options);
  auto transformed = params.apply(dataset);
  return {std::move(transformed), std::move(params)};
}

}  // namespace edgetree
