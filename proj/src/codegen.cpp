#include "edgetree/codegen.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

#include "edgetree/error.hpp"
#include "edgetree/numfmt.hpp"

namespace edgetree {

namespace {

constexpr std::string_view kFirmwareTemplate = R"TMPL(/*
 * edgetree timing harness ({{STYLE}} predictor, {{FEATURE_COUNT}} features).
 *
 * Request:  comma-separated feature values terminated by '\n'.
 * Response: "P,<class>,T,<elapsed_us>,N,<iterations>\n" or "E,<reason>\n".
 *
 * Define EDGETREE_PLATFORM_HEADER to supply et_platform_init, et_read_line,
 * et_write and et_micros for a microcontroller, and EDGETREE_CUSTOM_MAIN to
 * drive edgetree_handle_line() from the board's own loop.
 */
#if !defined(EDGETREE_PLATFORM_HEADER) && !defined(_POSIX_C_SOURCE)
#define _POSIX_C_SOURCE 200809L
#endif

#include <stdlib.h>

#define EDGETREE_FEATURE_COUNT {{FEATURE_COUNT}}
#define EDGETREE_LINE_MAX {{LINE_MAX}}

#if defined(EDGETREE_PLATFORM_HEADER)
#include EDGETREE_PLATFORM_HEADER
#else
#include <stdio.h>
#include <time.h>

static void et_platform_init(void) {}

static int et_read_line(char *buf, int cap)
{
    return fgets(buf, cap, stdin) != NULL;
}

static void et_write(const char *text)
{
    fputs(text, stdout);
    fflush(stdout);
}

static unsigned long et_micros(void)
{
    struct timespec ts;
    clock_gettime(CLOCK_MONOTONIC, &ts);
    return (unsigned long)ts.tv_sec * 1000000UL + (unsigned long)(ts.tv_nsec / 1000L);
}
#endif

#if defined(__GNUC__) || defined(__clang__)
/* Forces feature reloads and a real predict() call on every iteration. */
#define ET_BARRIER() __asm__ __volatile__("" ::: "memory")
#else
#define ET_BARRIER() ((void)0)
#endif

/* ---- injected predictor ---- */
{{PREDICT_SOURCE}}
/* ---- end injected predictor ---- */
{{FEATURE_STORAGE}}
static double *const et_slots[EDGETREE_FEATURE_COUNT] = {
{{FEATURE_SLOTS}}
};

volatile int et_sink;

static int et_parse(char *line)
{
    char *cursor = line;
    int i;
    for (i = 0; i < EDGETREE_FEATURE_COUNT; ++i) {
        char *end;
        double value = strtod(cursor, &end);
        if (end == cursor) {
            return 0;
        }
        *et_slots[i] = value;
        cursor = end;
        if (i + 1 < EDGETREE_FEATURE_COUNT) {
            if (*cursor != ',') {
                return 0;
            }
            ++cursor;
        }
    }
    while (*cursor == ' ' || *cursor == '\r' || *cursor == '\n') {
        ++cursor;
    }
    return *cursor == '\0';
}

static char *et_put_ulong(char *dst, unsigned long value)
{
    char digits[24];
    int n = 0;
    do {
        digits[n++] = (char)('0' + (int)(value % 10UL));
        value /= 10UL;
    } while (value != 0UL);
    while (n > 0) {
        *dst++ = digits[--n];
    }
    return dst;
}

void edgetree_handle_line(char *line)
{
    char response[80];
    char *out = response;
    unsigned long i;
    unsigned long start;
    unsigned long elapsed;
    int predicted;

    if (!et_parse(line)) {
        et_write("E,parse\n");
        return;
    }
    predicted = {{PREDICT_CALL}};

    start = et_micros();
    for (i = 0UL; i < {{ITERATIONS}}; ++i) {
        ET_BARRIER();
        et_sink ^= {{PREDICT_CALL}};
    }
    elapsed = et_micros() - start;

    *out++ = 'P';
    *out++ = ',';
    out = et_put_ulong(out, (unsigned long)predicted);
    *out++ = ',';
    *out++ = 'T';
    *out++ = ',';
    out = et_put_ulong(out, elapsed);
    *out++ = ',';
    *out++ = 'N';
    *out++ = ',';
    out = et_put_ulong(out, i);
    *out++ = '\n';
    *out = '\0';
    et_write(response);
}

#if !defined(EDGETREE_CUSTOM_MAIN)
int main(void)
{
    static char line[EDGETREE_LINE_MAX];
    et_platform_init();
    while (et_read_line(line, (int)sizeof line)) {
        edgetree_handle_line(line);
    }
    return 0;
}
#endif
)TMPL";

void check_arity(const DecisionTree& tree, const FlowSchema& schema) {
  schema.validate();
  if (tree.n_features() != schema.feature_count()) {
    throw Error("tree expects " + std::to_string(tree.n_features()) + " features, schema has " +
                std::to_string(schema.feature_count()));
  }
  for (const auto f : tree.features_used()) {
    if (f >= schema.feature_count()) throw Error("split feature " + std::to_string(f) + " outside schema");
  }
}

// Schema text inside C comments: no braces (template delimiters, nesting
// stats) and no comment terminators.
std::string comment_safe(std::string_view text) {
  std::string out;
  for (const char ch : text) {
    const bool printable = static_cast<unsigned char>(ch) >= 0x20 && static_cast<unsigned char>(ch) < 0x7f;
    out += (!printable || ch == '{' || ch == '}' || ch == '*' || ch == '/') ? '?' : ch;
  }
  return out;
}

std::string indent(std::size_t level) { return std::string(level * 4, ' '); }

std::size_t count_lines(std::string_view text) {
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

void emit_nested_node(const DecisionTree& tree, std::size_t index, std::size_t level,
                      const std::vector<std::string>& names, std::string& out) {
  const auto& node = tree.node(index);
  if (node.is_leaf()) {
    out += indent(level) + "return " + std::to_string(class_index(node.predicted)) + ";\n";
    return;
  }
  out += indent(level) + "if (" + names[static_cast<std::size_t>(node.feature)] +
         " <= " + format_c_double(node.threshold) + ") {\n";
  emit_nested_node(tree, static_cast<std::size_t>(node.left), level + 1, names, out);
  out += indent(level) + "} else {\n";
  emit_nested_node(tree, static_cast<std::size_t>(node.right), level + 1, names, out);
  out += indent(level) + "}\n";
}

std::string banner(const DecisionTree& tree, EmitterStyle style) {
  return "/* Generated by edgetree (" + std::string(style_name(style)) + "): " +
         std::to_string(tree.n_features()) + " features, " + std::to_string(tree.node_count()) +
         " nodes, depth " + std::to_string(tree.depth()) + ". */\n";
}

template <typename T, typename Fmt>
std::string c_array(std::string_view decl, const std::vector<T>& items, Fmt fmt) {
  std::string out(decl);
  out += " = {";
  for (std::size_t i = 0; i < items.size(); ++i) {
    out += (i % 8 == 0) ? "\n    " : " ";
    out += fmt(items[i]);
    if (i + 1 < items.size()) out += ",";
  }
  out += "\n};\n";
  return out;
}

}  // namespace

std::string_view style_name(EmitterStyle style) {
  return style == EmitterStyle::nested_if ? "nested-if" : "array-recursive";
}

EmitterStyle parse_style(std::string_view name) {
  if (name == "nested-if") return EmitterStyle::nested_if;
  if (name == "array-recursive") return EmitterStyle::array_recursive;
  throw Error("unknown emitter style '" + std::string(name) + "'");
}

std::vector<std::string> feature_identifiers(const FlowSchema& schema) {
  std::vector<std::string> names;
  std::set<std::string> used;
  for (std::size_t i = 0; i < schema.feature_names.size(); ++i) {
    std::string id = "ft_";
    for (const char ch : schema.feature_names[i]) {
      id += std::isalnum(static_cast<unsigned char>(ch)) ? ch : '_';
    }
    if (used.count(id)) id += "_" + std::to_string(i);
    while (used.count(id)) id += "_";
    used.insert(id);
    names.push_back(std::move(id));
  }
  return names;
}

EmittedSource emit_nested_if(const DecisionTree& tree, const FlowSchema& schema) {
  check_arity(tree, schema);
  EmittedSource src;
  src.style = EmitterStyle::nested_if;
  src.feature_count = schema.feature_count();
  src.feature_variable_names = feature_identifiers(schema);

  std::string header = banner(tree, src.style);
  header += "#ifndef EDGETREE_PREDICT_H\n#define EDGETREE_PREDICT_H\n\n";
  header += "#define EDGETREE_FEATURE_COUNT " + std::to_string(src.feature_count) + "\n\n";
  for (const auto& name : src.feature_variable_names) header += "extern double " + name + ";\n";
  header += "\n/* Classifies the flow held in the feature globals: 0 benign, 1 attack. */\n";
  header += "int predict(void);\n\n#endif\n";

  std::string body;
  for (std::size_t i = 0; i < src.feature_count; ++i) {
    body += "double " + src.feature_variable_names[i] + ";  /* " + comment_safe(schema.feature_names[i]) + " */\n";
  }
  body += "\nint predict(void)\n{\n";
  emit_nested_node(tree, 0, 1, src.feature_variable_names, body);
  body += "}\n";

  src.header_text = std::move(header);
  src.body = std::move(body);
  src.text = banner(tree, src.style) + "#include \"predict.h\"\n\n" + src.body;
  src.stats = source_stats(src);
  return src;
}

EmittedSource emit_array_recursive(const DecisionTree& tree, const FlowSchema& schema) {
  check_arity(tree, schema);
  EmittedSource src;
  src.style = EmitterStyle::array_recursive;
  src.feature_count = schema.feature_count();
  src.feature_variable_names = feature_identifiers(schema);

  const auto& nodes = tree.nodes();
  std::vector<int> left;
  std::vector<int> right;
  std::vector<int> feature;
  std::vector<double> threshold;
  std::vector<ClassCounts> classes;
  for (const auto& node : nodes) {
    left.push_back(node.left);
    right.push_back(node.right);
    feature.push_back(node.is_leaf() ? -2 : node.feature);
    threshold.push_back(node.is_leaf() ? -2.0 : node.threshold);
    classes.push_back(node.counts);
  }

  std::string header = banner(tree, src.style);
  header += "#ifndef EDGETREE_PREDICT_H\n#define EDGETREE_PREDICT_H\n\n";
  header += "#define EDGETREE_FEATURE_COUNT " + std::to_string(src.feature_count) + "\n\n";
  header += "/* Feature order:\n";
  for (std::size_t i = 0; i < src.feature_count; ++i) {
    header += " *   [" + std::to_string(i) + "] " + comment_safe(schema.feature_names[i]) + "\n";
  }
  header += " */\n\n/* Classifies one flow: 0 benign, 1 attack. */\n";
  header += "int predict(const double features[EDGETREE_FEATURE_COUNT]);\n\n#endif\n";

  const auto as_int = [](int v) { return std::to_string(v); };
  std::string body;
  body += "#define EDGETREE_NODE_COUNT " + std::to_string(nodes.size()) + "\n\n";
  body += c_array("static const int et_left[EDGETREE_NODE_COUNT]", left, as_int);
  body += c_array("static const int et_right[EDGETREE_NODE_COUNT]", right, as_int);
  body += c_array("static const int et_feature[EDGETREE_NODE_COUNT]", feature, as_int);
  body += c_array("static const double et_threshold[EDGETREE_NODE_COUNT]", threshold,
                  [](double v) { return format_c_double(v); });
  // Spaced braces keep "{{" / "}}" out of the text for template injection.
  body += c_array("static const unsigned long et_classes[EDGETREE_NODE_COUNT][2]", classes,
                  [](const ClassCounts& c) {
                    return "{ " + std::to_string(c[0]) + "UL, " + std::to_string(c[1]) + "UL }";
                  });
  body += R"C(
static int et_find_max(const unsigned long counts[2])
{
    int best = 0;
    int i;
    for (i = 1; i < 2; ++i) {
        if (counts[i] > counts[best]) {
            best = i;
        }
    }
    return best;
}

static int et_walk(const double features[], int node)
{
    if (et_left[node] != -1) {
        if (features[et_feature[node]] <= et_threshold[node]) {
            return et_walk(features, et_left[node]);
        }
        return et_walk(features, et_right[node]);
    }
    return et_find_max(et_classes[node]);
}

int predict(const double features[EDGETREE_FEATURE_COUNT])
{
    return et_walk(features, 0);
}
)C";

  src.header_text = std::move(header);
  src.body = std::move(body);
  src.text = banner(tree, src.style) + "#include \"predict.h\"\n\n" + src.body;
  src.stats = source_stats(src);
  return src;
}

EmittedSource emit(const DecisionTree& tree, const FlowSchema& schema, EmitterStyle style) {
  return style == EmitterStyle::nested_if ? emit_nested_if(tree, schema) : emit_array_recursive(tree, schema);
}

SourceStats source_stats(const EmittedSource& src) {
  SourceStats stats;
  stats.lines = count_lines(src.text);
  const std::string_view text = src.text;

  if (src.style == EmitterStyle::array_recursive) {
    constexpr std::string_view key = "#define EDGETREE_NODE_COUNT ";
    const auto pos = text.find(key);
    if (pos != std::string_view::npos) {
      stats.emitted_nodes = std::stoul(std::string(text.substr(pos + key.size(), 20)));
    }
    stats.max_nesting_depth = 0;
    return stats;
  }

  // Nested-if: every `if` adds two children to the node count; nesting is
  // the number of braces open around the deepest `if` (the function body
  // brace counts as the first level).
  std::size_t open = 0;
  std::size_t ifs = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const auto line = trim(text.substr(start, end - start));
    if (line.rfind("if (", 0) == 0) {
      ++ifs;
      stats.max_nesting_depth = std::max(stats.max_nesting_depth, open);
    }
    for (const char ch : line) {
      if (ch == '{') ++open;
      if (ch == '}' && open > 0) --open;
    }
    start = end + 1;
  }
  stats.emitted_nodes = 2 * ifs + 1;
  return stats;
}

std::string render_template(std::string_view tmpl,
                            const std::map<std::string, std::string, std::less<>>& values) {
  std::string out;
  out.reserve(tmpl.size() * 2);
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    const auto open = tmpl.find("{{", pos);
    const auto stray = tmpl.find("}}", pos);
    if (stray != std::string_view::npos && (open == std::string_view::npos || stray < open)) {
      throw Error("template has a stray '}}' at offset " + std::to_string(stray));
    }
    if (open == std::string_view::npos) {
      out.append(tmpl.substr(pos));
      break;
    }
    out.append(tmpl.substr(pos, open - pos));
    const auto close = tmpl.find("}}", open + 2);
    if (close == std::string_view::npos) throw Error("unterminated template placeholder");
    const auto name = tmpl.substr(open + 2, close - open - 2);
    const auto it = values.find(name);
    if (it == values.end()) throw Error("unresolved template placeholder {{" + std::string(name) + "}}");
    out += it->second;
    pos = close + 2;
  }
  if (out.find("{{") != std::string::npos || out.find("}}") != std::string::npos) {
    throw Error("placeholder delimiters remain after template injection");
  }
  return out;
}

std::string_view firmware_template() { return kFirmwareTemplate; }

FirmwareBundle emit_firmware(const DecisionTree& tree, const FlowSchema& schema, EmitterStyle style,
                             std::uint64_t iteration_count) {
  if (iteration_count < 1) throw Error("iteration count must be at least 1");
  FirmwareBundle bundle;
  bundle.predictor = emit(tree, schema, style);
  bundle.iteration_count = iteration_count;
  bundle.feature_count = schema.feature_count();

  std::string slots;
  std::string storage;
  std::string call;
  const auto& names = bundle.predictor.feature_variable_names;
  for (std::size_t i = 0; i < names.size(); ++i) {
    slots += "    ";
    slots += style == EmitterStyle::nested_if ? "&" + names[i] : "&et_features[" + std::to_string(i) + "]";
    if (i + 1 < names.size()) slots += ",";
    slots += "\n";
  }
  slots.pop_back();
  if (style == EmitterStyle::nested_if) {
    call = "predict()";
  } else {
    storage = "\nstatic double et_features[EDGETREE_FEATURE_COUNT];\n";
    call = "predict(et_features)";
  }

  const std::size_t line_max = std::max<std::size_t>(256, 48 * bundle.feature_count + 16);
  const std::map<std::string, std::string, std::less<>> values{
      {"STYLE", std::string(style_name(style))},
      {"FEATURE_COUNT", std::to_string(bundle.feature_count)},
      {"LINE_MAX", std::to_string(line_max)},
      {"PREDICT_SOURCE", bundle.predictor.body},
      {"FEATURE_STORAGE", storage},
      {"FEATURE_SLOTS", slots},
      {"PREDICT_CALL", call},
      {"ITERATIONS", std::to_string(iteration_count) + "UL"},
  };
  bundle.program_text = render_template(kFirmwareTemplate, values);
  return bundle;
}

void write_sources(const EmittedSource& src, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& [name, content] : {std::pair{"predict.h", &src.header_text}, std::pair{"predict.c", &src.text}}) {
    std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
    out << *content;
    if (!out) throw Error("cannot write '" + (dir / name).string() + "'");
  }
}

void write_firmware(const FirmwareBundle& bundle, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "firmware.c", std::ios::binary | std::ios::trunc);
  out << bundle.program_text;
  if (!out) throw Error("cannot write '" + (dir / "firmware.c").string() + "'");
}

}  // namespace edgetree
