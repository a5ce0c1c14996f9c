#ifndef CHURNSTACK_TABULAR_HPP
#define CHURNSTACK_TABULAR_HPP

// Tabular ingestion and preprocessing: CSV loading, sparse-column dropping,
// mean/mode imputation, dummy-variable expansion, min-max scaling and the
// stratified hold-out split. Every fitted quantity is computed on training
// rows only and replayed on held-out rows through FittedPreprocessor.

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "churnstack/common.hpp"

namespace churnstack {

enum class ColumnKind : std::uint8_t { numeric, categorical };

struct ColumnSchema {
  std::string name;
  ColumnKind kind = ColumnKind::numeric;
  /// Sorted, distinct; non-empty iff kind == categorical.
  std::vector<std::string> categories;

  bool operator==(const ColumnSchema&) const = default;
};

/// A cell is MISSING (monostate), a number, or a category label.
using Cell = std::variant<std::monostate, double, std::string>;

inline bool is_missing(const Cell& c) noexcept {
  return std::holds_alternative<std::monostate>(c);
}

struct Dataset {
  std::vector<ColumnSchema> schema;
  std::vector<std::vector<Cell>> rows;
  std::vector<Label> labels;

  std::size_t size() const noexcept { return rows.size(); }
  std::size_t width() const noexcept { return schema.size(); }

  std::optional<std::size_t> column_index(std::string_view name) const {
    for (std::size_t j = 0; j < schema.size(); ++j)
      if (schema[j].name == name) return j;
    return std::nullopt;
  }

  /// Throws if a row is ragged, a cell disagrees with its column kind, or
  /// the label count differs from the row count.
  void validate() const {
    if (labels.size() != rows.size())
      throw Error("dataset has " + std::to_string(rows.size()) + " rows but " +
                  std::to_string(labels.size()) + " labels");
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != schema.size())
        throw Error("row " + std::to_string(i) + " has " +
                    std::to_string(rows[i].size()) + " cells, expected " +
                    std::to_string(schema.size()));
      for (std::size_t j = 0; j < schema.size(); ++j) {
        const auto& c = rows[i][j];
        if (is_missing(c)) continue;
        const bool ok = schema[j].kind == ColumnKind::numeric
                            ? std::holds_alternative<double>(c)
                            : std::holds_alternative<std::string>(c);
        if (!ok)
          throw Error("cell (" + std::to_string(i) + ", " + schema[j].name +
                      ") does not match its column kind");
      }
    }
  }

  bool all_numeric() const noexcept {
    return std::all_of(schema.begin(), schema.end(), [](const auto& c) {
      return c.kind == ColumnKind::numeric;
    });
  }
};

/// Recomputes the sorted category vocabulary of every categorical column
/// from the cells actually present.
inline void refresh_categories(Dataset& ds) {
  for (std::size_t j = 0; j < ds.width(); ++j) {
    auto& col = ds.schema[j];
    if (col.kind != ColumnKind::categorical) continue;
    std::set<std::string> seen;
    for (const auto& row : ds.rows)
      if (const auto* s = std::get_if<std::string>(&row[j])) seen.insert(*s);
    col.categories.assign(seen.begin(), seen.end());
  }
}

/// Row subset with the vocabularies narrowed to what the subset observes.
inline Dataset select_rows(const Dataset& ds, std::span<const std::size_t> idx) {
  Dataset out;
  out.schema = ds.schema;
  out.rows.reserve(idx.size());
  out.labels.reserve(idx.size());
  for (auto i : idx) {
    if (i >= ds.size()) throw Error("row index out of range");
    out.rows.push_back(ds.rows[i]);
    out.labels.push_back(ds.labels[i]);
  }
  refresh_categories(out);
  return out;
}

// ---------------------------------------------------------------------------
// CSV

struct CsvOptions {
  std::string label_column = "churn";
  /// Label literal meaning "churner". Anything else is a non-churner unless
  /// nonchurn_label is set, in which case other values are rejected.
  std::string churn_label = "1";
  std::string nonchurn_label;
  std::vector<std::string> missing_tokens{"", "NA"};
  std::map<std::string, ColumnKind> schema_hint;
};

struct CsvRecord {
  std::size_t line = 0;  // 1-based line where the record starts
  std::vector<std::string> fields;
};

/// RFC 4180 reader: quoted fields may hold commas, doubled quotes and line
/// breaks. A trailing newline does not produce an empty record.
inline std::vector<CsvRecord> parse_csv_records(std::string_view text) {
  std::vector<CsvRecord> out;
  std::size_t line = 1;
  std::size_t i = 0;
  const std::size_t n = text.size();
  if (n >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") i = 3;  // UTF-8 BOM
  while (i < n) {
    CsvRecord rec;
    rec.line = line;
    std::string field;
    bool in_quotes = false;
    bool record_done = false;
    while (i < n && !record_done) {
      const char c = text[i];
      if (in_quotes) {
        if (c == '"') {
          if (i + 1 < n && text[i + 1] == '"') {
            field.push_back('"');
            i += 2;
          } else {
            in_quotes = false;
            ++i;
          }
        } else {
          if (c == '\n') ++line;
          field.push_back(c);
          ++i;
        }
        continue;
      }
      switch (c) {
        case '"':
          in_quotes = true;
          ++i;
          break;
        case ',':
          rec.fields.push_back(std::move(field));
          field.clear();
          ++i;
          break;
        case '\r':
          ++i;
          break;
        case '\n':
          ++line;
          ++i;
          record_done = true;
          break;
        default:
          field.push_back(c);
          ++i;
      }
    }
    if (in_quotes)
      throw Error("unterminated quoted field starting on line " +
                  std::to_string(rec.line));
    rec.fields.push_back(std::move(field));
    const bool blank = rec.fields.size() == 1 && rec.fields[0].empty();
    if (!blank) out.push_back(std::move(rec));
  }
  return out;
}

inline Dataset parse_csv(std::string_view text, const CsvOptions& opt) {
  const auto records = parse_csv_records(text);
  if (records.empty()) throw Error("CSV input has no header line");
  const auto& header = records.front().fields;
  std::optional<std::size_t> label_at;
  for (std::size_t j = 0; j < header.size(); ++j)
    if (header[j] == opt.label_column) label_at = j;
  if (!label_at)
    throw Error("label column '" + opt.label_column + "' not found in header");

  auto missing = [&](const std::string& s) {
    return std::find(opt.missing_tokens.begin(), opt.missing_tokens.end(), s) !=
           opt.missing_tokens.end();
  };

  Dataset ds;
  std::vector<std::size_t> feature_at;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (j == *label_at) continue;
    feature_at.push_back(j);
    ds.schema.push_back({header[j], ColumnKind::numeric, {}});
  }

  std::vector<std::vector<std::string>> raw;
  raw.reserve(records.size() - 1);
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.fields.size() != header.size())
      throw Error("ragged row on line " + std::to_string(rec.line) + ": " +
                  std::to_string(rec.fields.size()) + " cells, expected " +
                  std::to_string(header.size()));
    const auto& lab = rec.fields[*label_at];
    if (lab == opt.churn_label) {
      ds.labels.push_back(Label::churner);
    } else if (opt.nonchurn_label.empty() || lab == opt.nonchurn_label) {
      if (missing(lab))
        throw Error("missing label on line " + std::to_string(rec.line));
      ds.labels.push_back(Label::non_churner);
    } else {
      throw Error("unrecognised label '" + lab + "' on line " +
                  std::to_string(rec.line));
    }
    raw.push_back(rec.fields);
  }

  // Kind inference: numeric iff every non-missing cell parses.
  for (std::size_t k = 0; k < feature_at.size(); ++k) {
    auto& col = ds.schema[k];
    const auto hint = opt.schema_hint.find(col.name);
    if (hint != opt.schema_hint.end()) {
      col.kind = hint->second;
      continue;
    }
    bool numeric = true;
    for (const auto& row : raw) {
      const auto& s = row[feature_at[k]];
      double v = 0.0;
      if (!missing(s) && !parse_double(s, v)) {
        numeric = false;
        break;
      }
    }
    col.kind = numeric ? ColumnKind::numeric : ColumnKind::categorical;
  }

  ds.rows.reserve(raw.size());
  for (std::size_t r = 0; r < raw.size(); ++r) {
    std::vector<Cell> cells;
    cells.reserve(feature_at.size());
    for (std::size_t k = 0; k < feature_at.size(); ++k) {
      const auto& s = raw[r][feature_at[k]];
      if (missing(s)) {
        cells.emplace_back(std::monostate{});
      } else if (ds.schema[k].kind == ColumnKind::numeric) {
        double v = 0.0;
        if (!parse_double(s, v))
          throw Error("non-numeric value '" + s + "' in numeric column '" +
                      ds.schema[k].name + "' on line " +
                      std::to_string(records[r + 1].line));
        cells.emplace_back(v);
      } else {
        cells.emplace_back(s);
      }
    }
    ds.rows.push_back(std::move(cells));
  }
  refresh_categories(ds);
  return ds;
}

inline Dataset load_csv(const std::string& path, const CsvOptions& opt) {
  return parse_csv(read_file(path), opt);
}

inline std::string csv_escape(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

/// Writes a dataset back to CSV: features, then the label column with
/// churn_label / nonchurn literal ("0" when nonchurn_label is empty).
inline std::string to_csv(const Dataset& ds, const CsvOptions& opt) {
  std::string out;
  for (const auto& c : ds.schema) out += csv_escape(c.name) + ",";
  out += csv_escape(opt.label_column) + "\n";
  const std::string nonchurn =
      opt.nonchurn_label.empty() ? std::string("0") : opt.nonchurn_label;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (const auto& cell : ds.rows[i]) {
      if (const auto* d = std::get_if<double>(&cell))
        out += format_double17(*d);
      else if (const auto* s = std::get_if<std::string>(&cell))
        out += csv_escape(*s);
      else if (!opt.missing_tokens.empty())
        out += csv_escape(opt.missing_tokens.front());
      out += ",";
    }
    out += csv_escape(ds.labels[i] == Label::churner ? opt.churn_label : nonchurn);
    out += "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Preprocessing steps

struct DroppedColumn {
  std::string name;
  double missing_fraction = 0.0;
  bool operator==(const DroppedColumn&) const = default;
};

using ImputeConstant = std::variant<double, std::string>;

struct ImputedValue {
  std::string name;
  ImputeConstant value;
  bool operator==(const ImputedValue&) const = default;
};

struct MinMaxParams {
  std::string name;
  double min = 0.0;
  double max = 0.0;
  bool operator==(const MinMaxParams&) const = default;
};

struct PreprocessReport {
  std::vector<DroppedColumn> dropped_columns;
  std::vector<ImputedValue> imputed_values;
  std::vector<MinMaxParams> minmax_params;
  std::size_t encoded_width = 0;
  bool operator==(const PreprocessReport&) const = default;
};

inline double missing_fraction(const Dataset& ds, std::size_t col) {
  if (ds.size() == 0) return 0.0;
  std::size_t m = 0;
  for (const auto& row : ds.rows) m += is_missing(row[col]) ? 1 : 0;
  return static_cast<double>(m) / static_cast<double>(ds.size());
}

inline Dataset keep_columns(const Dataset& ds, std::span<const std::size_t> keep) {
  Dataset out;
  out.labels = ds.labels;
  for (auto j : keep) out.schema.push_back(ds.schema[j]);
  out.rows.reserve(ds.size());
  for (const auto& row : ds.rows) {
    std::vector<Cell> cells;
    cells.reserve(keep.size());
    for (auto j : keep) cells.push_back(row[j]);
    out.rows.push_back(std::move(cells));
  }
  return out;
}

/// Removes columns whose missing fraction strictly exceeds `threshold`.
inline std::pair<Dataset, std::vector<DroppedColumn>> drop_sparse_columns(
    const Dataset& ds, double threshold = 0.95) {
  if (!(threshold > 0.0 && threshold <= 1.0))
    throw Error("sparse-column threshold must lie in (0, 1]");
  std::vector<std::size_t> keep;
  std::vector<DroppedColumn> dropped;
  for (std::size_t j = 0; j < ds.width(); ++j) {
    const double f = missing_fraction(ds, j);
    if (f > threshold)
      dropped.push_back({ds.schema[j].name, f});
    else
      keep.push_back(j);
  }
  if (keep.empty()) throw Error("every column exceeds the missing-value threshold");
  return {keep_columns(ds, keep), std::move(dropped)};
}

/// Fits mean (numeric) / mode (categorical, ties to the smallest label).
inline std::vector<ImputedValue> fit_imputation(const Dataset& ds) {
  std::vector<ImputedValue> out;
  out.reserve(ds.width());
  for (std::size_t j = 0; j < ds.width(); ++j) {
    const auto& col = ds.schema[j];
    if (col.kind == ColumnKind::numeric) {
      double sum = 0.0;
      std::size_t cnt = 0;
      for (const auto& row : ds.rows)
        if (const auto* v = std::get_if<double>(&row[j])) {
          sum += *v;
          ++cnt;
        }
      if (cnt == 0)
        throw Error("column '" + col.name + "' has no observed values to impute from");
      out.push_back({col.name, sum / static_cast<double>(cnt)});
    } else {
      std::map<std::string, std::size_t> freq;  // ordered: first max wins ties
      for (const auto& row : ds.rows)
        if (const auto* s = std::get_if<std::string>(&row[j])) ++freq[*s];
      if (freq.empty())
        throw Error("column '" + col.name + "' has no observed values to impute from");
      auto best = freq.begin();
      for (auto it = freq.begin(); it != freq.end(); ++it)
        if (it->second > best->second) best = it;
      out.push_back({col.name, best->first});
    }
  }
  return out;
}

inline Dataset apply_imputation(const Dataset& ds,
                                std::span<const ImputedValue> values) {
  if (values.size() != ds.width())
    throw Error("imputation has " + std::to_string(values.size()) +
                " columns, dataset has " + std::to_string(ds.width()));
  Dataset out = ds;
  for (auto& row : out.rows)
    for (std::size_t j = 0; j < out.width(); ++j)
      if (is_missing(row[j]))
        row[j] = std::visit([](const auto& v) -> Cell { return v; }, values[j].value);
  refresh_categories(out);
  return out;
}

inline std::pair<Dataset, std::vector<ImputedValue>> impute(const Dataset& ds) {
  auto values = fit_imputation(ds);
  auto out = apply_imputation(ds, values);
  return {std::move(out), std::move(values)};
}

/// Dummy-variable expansion against the vocabulary in `fitted` (a schema
/// with the same column names). Categories absent from the vocabulary
/// encode as all zeros.
inline Dataset one_hot_encode(const Dataset& ds,
                              std::span<const ColumnSchema> fitted) {
  if (fitted.size() != ds.width())
    throw Error("encoding schema has " + std::to_string(fitted.size()) +
                " columns, dataset has " + std::to_string(ds.width()));
  Dataset out;
  out.labels = ds.labels;
  for (const auto& col : fitted) {
    if (col.kind == ColumnKind::numeric) {
      out.schema.push_back({col.name, ColumnKind::numeric, {}});
    } else {
      for (const auto& cat : col.categories)
        out.schema.push_back({col.name + "=" + cat, ColumnKind::numeric, {}});
    }
  }
  out.rows.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    std::vector<Cell> cells;
    cells.reserve(out.width());
    for (std::size_t j = 0; j < fitted.size(); ++j) {
      const auto& cell = ds.rows[i][j];
      if (is_missing(cell))
        throw Error("cannot encode MISSING cell in column '" + fitted[j].name + "'");
      if (fitted[j].kind == ColumnKind::numeric) {
        const auto* v = std::get_if<double>(&cell);
        if (!v) throw Error("column '" + fitted[j].name + "' is not numeric");
        cells.emplace_back(*v);
      } else {
        const auto* s = std::get_if<std::string>(&cell);
        if (!s) throw Error("column '" + fitted[j].name + "' is not categorical");
        for (const auto& cat : fitted[j].categories)
          cells.emplace_back(cat == *s ? 1.0 : 0.0);
      }
    }
    out.rows.push_back(std::move(cells));
  }
  return out;
}

inline Dataset one_hot_encode(const Dataset& ds) {
  return one_hot_encode(ds, ds.schema);
}

/// Min-max scaling to [0, 1]. Without `params` the scaling is fitted on
/// `ds`; with them it is replayed and clamped. Constant columns map to 0.
inline std::pair<Dataset, std::vector<MinMaxParams>> normalize_minmax(
    const Dataset& ds,
    std::optional<std::span<const MinMaxParams>> params = std::nullopt) {
  if (!ds.all_numeric()) throw Error("min-max scaling needs an all-numeric dataset");
  std::vector<MinMaxParams> p;
  if (params) {
    if (params->size() != ds.width())
      throw Error("min-max params have " + std::to_string(params->size()) +
                  " columns, dataset has " + std::to_string(ds.width()));
    p.assign(params->begin(), params->end());
  } else {
    p.reserve(ds.width());
    for (std::size_t j = 0; j < ds.width(); ++j) {
      MinMaxParams mm{ds.schema[j].name, 0.0, 0.0};
      bool first = true;
      for (const auto& row : ds.rows) {
        const double v = std::get<double>(row[j]);
        if (first || v < mm.min) mm.min = v;
        if (first || v > mm.max) mm.max = v;
        first = false;
      }
      p.push_back(mm);
    }
  }
  Dataset out = ds;
  for (auto& row : out.rows)
    for (std::size_t j = 0; j < out.width(); ++j) {
      const double v = std::get<double>(row[j]);
      const double range = p[j].max - p[j].min;
      double s = range > 0.0 ? (v - p[j].min) / range : 0.0;
      row[j] = std::clamp(s, 0.0, 1.0);
    }
  return {std::move(out), std::move(p)};
}

/// All-numeric dataset to a row-major matrix.
inline Matrix to_matrix(const Dataset& ds) {
  Matrix m(ds.size(), ds.width());
  for (std::size_t i = 0; i < ds.size(); ++i)
    for (std::size_t j = 0; j < ds.width(); ++j) {
      const auto* v = std::get_if<double>(&ds.rows[i][j]);
      if (!v) throw Error("dataset cell (" + std::to_string(i) + ", " +
                          ds.schema[j].name + ") is not numeric");
      m(i, j) = *v;
    }
  return m;
}

inline Dataset from_matrix(const Matrix& m, std::vector<std::string> names,
                           std::vector<Label> labels) {
  if (names.size() != m.cols || labels.size() != m.rows)
    throw Error("matrix shape does not match names/labels");
  Dataset ds;
  for (auto& n : names) ds.schema.push_back({std::move(n), ColumnKind::numeric, {}});
  ds.labels = std::move(labels);
  ds.rows.reserve(m.rows);
  for (std::size_t i = 0; i < m.rows; ++i) {
    std::vector<Cell> cells;
    cells.reserve(m.cols);
    for (std::size_t j = 0; j < m.cols; ++j) cells.emplace_back(m(i, j));
    ds.rows.push_back(std::move(cells));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Split

struct SplitIndices {
  std::vector<std::size_t> a;
  std::vector<std::size_t> b;
};

/// Per class: seeded shuffle, then round(fraction * n_class) (half up) rows
/// go to A. Both index lists come back sorted.
inline SplitIndices stratified_split(std::span<const Label> labels,
                                     double fraction_a, std::uint64_t seed) {
  if (!(fraction_a > 0.0 && fraction_a < 1.0))
    throw Error("split fraction must lie strictly between 0 and 1");
  SplitIndices out;
  std::mt19937_64 rng(seed);
  for (Label c : kAllLabels) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == c) idx.push_back(i);
    if (idx.empty())
      throw Error("class '" + std::string(label_name(c)) + "' has no rows to split");
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto take = static_cast<std::size_t>(
        std::floor(fraction_a * static_cast<double>(idx.size()) + 0.5));
    out.a.insert(out.a.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take));
    out.b.insert(out.b.end(), idx.begin() + static_cast<std::ptrdiff_t>(take), idx.end());
  }
  std::sort(out.a.begin(), out.a.end());
  std::sort(out.b.begin(), out.b.end());
  return out;
}

inline SplitIndices stratified_split(const Dataset& ds, double fraction_a,
                                     std::uint64_t seed) {
  return stratified_split(ds.labels, fraction_a, seed);
}

// ---------------------------------------------------------------------------
// Fit once, apply anywhere

/// Everything fitted on training rows, replayable on held-out rows with
/// the same column names.
struct FittedPreprocessor {
  std::vector<std::string> kept_columns;
  std::vector<ImputedValue> imputation;
  std::vector<ColumnSchema> encoding_schema;
  std::vector<MinMaxParams> minmax;
  PreprocessReport report;

  /// Returns an all-numeric dataset scaled to [0, 1].
  Dataset transform(const Dataset& ds) const {
    std::vector<std::size_t> keep;
    keep.reserve(kept_columns.size());
    for (const auto& name : kept_columns) {
      const auto j = ds.column_index(name);
      if (!j) throw Error("column '" + name + "' missing from dataset");
      keep.push_back(*j);
    }
    auto kept = keep_columns(ds, keep);
    for (std::size_t j = 0; j < kept.width(); ++j)
      if (kept.schema[j].kind != encoding_schema[j].kind)
        throw Error("column '" + kept.schema[j].name + "' changed kind since fit");
    auto imputed = apply_imputation(kept, imputation);
    auto encoded = one_hot_encode(imputed, encoding_schema);
    return normalize_minmax(encoded, std::span<const MinMaxParams>(minmax)).first;
  }
};

/// drop -> impute -> encode -> normalize, fitted on `train`.
inline FittedPreprocessor fit_preprocessor(const Dataset& train,
                                           double drop_threshold = 0.95) {
  FittedPreprocessor fp;
  auto [dropped, drop_list] = drop_sparse_columns(train, drop_threshold);
  auto [imputed, values] = impute(dropped);
  auto encoded = one_hot_encode(imputed);
  auto [normalized, mm] = normalize_minmax(encoded);
  for (const auto& c : dropped.schema) fp.kept_columns.push_back(c.name);
  fp.encoding_schema = imputed.schema;
  fp.imputation = values;
  fp.minmax = mm;
  fp.report.dropped_columns = std::move(drop_list);
  fp.report.imputed_values = std::move(values);
  fp.report.minmax_params = std::move(mm);
  fp.report.encoded_width = normalized.width();
  return fp;
}

// ---------------------------------------------------------------------------
// Report file: one tab-separated record per line.
//   dropped <name> <fraction>
//   impute  <name> numeric|categorical <value>
//   minmax  <name> <min> <max>
//   encoded_width <n>

inline std::string to_text(const PreprocessReport& r) {
  std::string out;
  for (const auto& d : r.dropped_columns)
    out += "dropped\t" + d.name + "\t" + format_double17(d.missing_fraction) + "\n";
  for (const auto& v : r.imputed_values) {
    if (const auto* d = std::get_if<double>(&v.value))
      out += "impute\t" + v.name + "\tnumeric\t" + format_double17(*d) + "\n";
    else
      out += "impute\t" + v.name + "\tcategorical\t" + std::get<std::string>(v.value) + "\n";
  }
  for (const auto& m : r.minmax_params)
    out += "minmax\t" + m.name + "\t" + format_double17(m.min) + "\t" +
           format_double17(m.max) + "\n";
  out += "encoded_width\t" + std::to_string(r.encoded_width) + "\n";
  return out;
}

inline PreprocessReport parse_preprocess_report(std::string_view text) {
  PreprocessReport r;
  std::size_t lineno = 0;
  for (const auto& raw : split(text, '\n')) {
    ++lineno;
    std::string_view line = raw;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    const auto f = split(line, '\t');
    const auto where = "preprocess report line " + std::to_string(lineno);
    if (f[0] == "dropped" && f.size() == 3) {
      r.dropped_columns.push_back({f[1], parse_double_or_throw(f[2], where)});
    } else if (f[0] == "impute" && f.size() == 4 && f[2] == "numeric") {
      r.imputed_values.push_back({f[1], parse_double_or_throw(f[3], where)});
    } else if (f[0] == "impute" && f.size() == 4 && f[2] == "categorical") {
      r.imputed_values.push_back({f[1], f[3]});
    } else if (f[0] == "minmax" && f.size() == 4) {
      r.minmax_params.push_back({f[1], parse_double_or_throw(f[2], where),
                                 parse_double_or_throw(f[3], where)});
    } else if (f[0] == "encoded_width" && f.size() == 2) {
      r.encoded_width = static_cast<std::size_t>(parse_double_or_throw(f[1], where));
    } else {
      throw Error("unrecognised record in " + where);
    }
  }
  return r;
}

}  // namespace churnstack

#endif  // CHURNSTACK_TABULAR_HPP
