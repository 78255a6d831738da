#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "choicefit/error.hpp"
#include "choicefit/predicate.hpp"

namespace choicefit {

inline constexpr double missing = std::numeric_limits<double>::quiet_NaN();
inline bool is_missing(double v) { return std::isnan(v); }

enum class VariableKind { quantitative, indicator, derived_indicator, categorical };

inline std::string to_string(VariableKind k) {
  switch (k) {
    case VariableKind::quantitative: return "quantitative";
    case VariableKind::indicator: return "indicator";
    case VariableKind::derived_indicator: return "derived-indicator";
    case VariableKind::categorical: return "categorical";
  }
  return "?";
}

inline VariableKind variable_kind_from_string(const std::string& s) {
  if (s == "quantitative") return VariableKind::quantitative;
  if (s == "indicator") return VariableKind::indicator;
  if (s == "derived-indicator") return VariableKind::derived_indicator;
  if (s == "categorical") return VariableKind::categorical;
  throw SchemaError("unknown variable kind '" + s + "'");
}

struct Level {
  double code = 0.0;
  std::string label;
};

struct VariableSpec {
  std::string name;
  VariableKind kind = VariableKind::quantitative;
  std::string base;                      // derived-indicator only
  std::optional<Predicate> derivation;   // derived-indicator only
  std::vector<Level> levels;             // categorical (and optional labels for indicators)
  std::string description;

  bool is_binary() const {
    return kind == VariableKind::indicator || kind == VariableKind::derived_indicator;
  }
  const Level* level_by_label(const std::string& label) const {
    for (const auto& l : levels)
      if (l.label == label) return &l;
    return nullptr;
  }
  const Level* level_by_code(double code) const {
    for (const auto& l : levels)
      if (l.code == code) return &l;
    return nullptr;
  }
};

inline void to_json(nlohmann::json& j, const VariableSpec& v) {
  j = {{"name", v.name}, {"kind", to_string(v.kind)}};
  if (!v.description.empty()) j["description"] = v.description;
  if (v.kind == VariableKind::derived_indicator) {
    j["base"] = v.base;
    if (v.derivation) j["derivation"] = *v.derivation;
  }
  if (!v.levels.empty()) {
    auto& ls = j["levels"] = nlohmann::json::array();
    for (const auto& l : v.levels) ls.push_back({{"code", l.code}, {"label", l.label}});
  }
}

inline void from_json(const nlohmann::json& j, VariableSpec& v) {
  v = VariableSpec{};
  v.name = j.at("name").get<std::string>();
  v.kind = variable_kind_from_string(j.at("kind").get<std::string>());
  v.description = j.value("description", std::string{});
  if (v.kind == VariableKind::derived_indicator) {
    v.base = j.at("base").get<std::string>();
    v.derivation = j.at("derivation").get<Predicate>();
  }
  if (j.contains("levels"))
    for (const auto& l : j.at("levels"))
      v.levels.push_back({l.at("code").get<double>(), l.at("label").get<std::string>()});
}

/// Ordered list of variables plus the tokens read as missing.
class Schema {
 public:
  Schema() = default;
  explicit Schema(std::vector<VariableSpec> vars) {
    for (auto& v : vars) add(std::move(v));
  }

  void add(VariableSpec v) {
    if (index_.count(v.name)) throw SchemaError("duplicate variable '" + v.name + "'");
    if (v.kind == VariableKind::derived_indicator) {
      if (!v.derivation) throw SchemaError("derived indicator '" + v.name + "' has no derivation");
      if (!index_.count(v.base))
        throw SchemaError("derived indicator '" + v.name + "' refers to unknown base '" + v.base + "'");
    }
    index_.emplace(v.name, vars_.size());
    vars_.push_back(std::move(v));
  }

  std::size_t size() const { return vars_.size(); }
  const std::vector<VariableSpec>& variables() const { return vars_; }
  const VariableSpec& operator[](std::size_t i) const { return vars_.at(i); }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw SchemaError("unknown variable '" + name + "'");
    return it->second;
  }
  const VariableSpec& at(const std::string& name) const { return vars_[index_of(name)]; }

  std::vector<std::string> missing_tokens{"", "NA"};

 private:
  std::vector<VariableSpec> vars_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline void to_json(nlohmann::json& j, const Schema& s) {
  j = {{"variables", s.variables()}, {"missing_tokens", s.missing_tokens}};
}

inline void from_json(const nlohmann::json& j, Schema& s) {
  s = Schema{};
  // Base variables first so derivations can be declared in any order.
  std::vector<VariableSpec> derived;
  for (const auto& v : j.at("variables")) {
    auto spec = v.get<VariableSpec>();
    if (spec.kind == VariableKind::derived_indicator)
      derived.push_back(std::move(spec));
    else
      s.add(std::move(spec));
  }
  for (auto& d : derived) s.add(std::move(d));
  if (j.contains("missing_tokens")) s.missing_tokens = j.at("missing_tokens").get<std::vector<std::string>>();
}

inline Schema load_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open schema '" + path + "'");
  try {
    return nlohmann::json::parse(in).get<Schema>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("schema '" + path + "': " + e.what());
  }
}

/// Column-major table. Missing values are NaN. Values are immutable once
/// built; every operation returns a new Dataset.
class Dataset {
 public:
  Dataset() = default;
  Dataset(Schema schema, std::vector<std::vector<double>> columns, std::string provenance = {})
      : schema_(std::move(schema)), provenance_(std::move(provenance)) {
    if (columns.size() != schema_.size()) throw DimensionError("column count does not match schema");
    rows_ = columns.empty() ? 0 : columns.front().size();
    for (const auto& c : columns)
      if (c.size() != rows_) throw DimensionError("ragged columns");
    columns_.reserve(columns.size());
    for (auto& c : columns) columns_.push_back(std::make_shared<const std::vector<double>>(std::move(c)));
  }

  const Schema& schema() const { return schema_; }
  const std::string& provenance() const { return provenance_; }
  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return columns_.size(); }
  bool empty() const { return rows_ == 0; }

  std::span<const double> column(std::size_t i) const { return *columns_.at(i); }
  std::span<const double> column(const std::string& name) const { return column(schema_.index_of(name)); }
  double value(std::size_t row, std::size_t col) const { return (*columns_.at(col))[row]; }

  std::size_t missing_count() const {
    std::size_t n = 0;
    for (const auto& c : columns_)
      n += static_cast<std::size_t>(std::count_if(c->begin(), c->end(), [](double v) { return is_missing(v); }));
    return n;
  }

  /// Rows in the given order (repeats allowed).
  Dataset select_rows(std::span<const std::size_t> idx) const {
    std::vector<std::vector<double>> out(columns_.size());
    for (std::size_t c = 0; c < out.size(); ++c) {
      out[c].reserve(idx.size());
      const auto& src = *columns_[c];
      for (auto r : idx) out[c].push_back(src.at(r));
    }
    return Dataset(schema_, std::move(out), provenance_);
  }

  Dataset with_column(VariableSpec spec, std::vector<double> values) const {
    if (values.size() != rows_ && !(columns_.empty() && rows_ == 0)) throw DimensionError("new column has wrong length");
    Dataset out = *this;
    out.schema_.add(std::move(spec));
    out.columns_.push_back(std::make_shared<const std::vector<double>>(std::move(values)));
    if (columns_.empty()) out.rows_ = out.columns_.back()->size();
    return out;
  }

  Dataset with_provenance(std::string p) const {
    Dataset out = *this;
    out.provenance_ = std::move(p);
    return out;
  }

 private:
  Schema schema_;
  std::vector<std::shared_ptr<const std::vector<double>>> columns_;
  std::size_t rows_ = 0;
  std::string provenance_;
};

// ---------------------------------------------------------------------------
// Delimited text I/O

enum class TypePolicy { strict, lenient };

struct LoadOptions {
  char delimiter = ',';
  TypePolicy policy = TypePolicy::strict;
};

namespace detail {

inline std::vector<std::string> split_record(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == delim) {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::optional<double> parse_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    return std::nullopt;
  }
  if (pos != s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::string format_number(double v) {
  if (is_missing(v)) return "";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace detail

Dataset derive_indicator(const Dataset& ds, const VariableSpec& spec);

/// Parse delimited text. Schema variables other than derived indicators
/// must appear in the header; extra header columns are ignored. Derived
/// indicators are computed after parsing.
inline Dataset read_delimited(std::istream& in, const Schema& schema, const LoadOptions& opt = {},
                              std::string provenance = {}) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("missing header row", 0, "");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  auto header = detail::split_record(line, opt.delimiter);
  for (auto& h : header) h = detail::trim(h);

  std::vector<std::size_t> base_vars;
  std::vector<std::size_t> source_col;
  for (std::size_t i = 0; i < schema.size(); ++i) {
    const auto& v = schema[i];
    if (v.kind == VariableKind::derived_indicator) continue;
    auto it = std::find(header.begin(), header.end(), v.name);
    if (it == header.end()) throw SchemaError("schema variable '" + v.name + "' not found in header");
    base_vars.push_back(i);
    source_col.push_back(static_cast<std::size_t>(it - header.begin()));
  }

  Schema base_schema;
  base_schema.missing_tokens = schema.missing_tokens;
  for (auto i : base_vars) base_schema.add(schema[i]);

  std::vector<std::vector<double>> cols(base_vars.size());
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++row;
    const auto cells = detail::split_record(line, opt.delimiter);
    if (cells.size() != header.size())
      throw ParseError("row " + std::to_string(row) + ": expected " + std::to_string(header.size()) + " fields, got " +
                           std::to_string(cells.size()),
                       row, "");
    for (std::size_t k = 0; k < base_vars.size(); ++k) {
      const auto& spec = schema[base_vars[k]];
      const auto cell = detail::trim(cells[source_col[k]]);
      double value = missing;
      const bool is_sentinel =
          std::find(schema.missing_tokens.begin(), schema.missing_tokens.end(), cell) != schema.missing_tokens.end();
      if (!is_sentinel) {
        std::optional<double> parsed;
        if (spec.kind == VariableKind::categorical) {
          if (const auto* lvl = spec.level_by_label(cell)) parsed = lvl->code;
        }
        if (!parsed) parsed = detail::parse_number(cell);
        std::string problem;
        if (!parsed) {
          problem = "unparseable value '" + cell + "'";
        } else if (spec.kind == VariableKind::indicator && *parsed != 0.0 && *parsed != 1.0) {
          problem = "indicator value '" + cell + "' is not 0 or 1";
        } else if (spec.kind == VariableKind::categorical && !spec.levels.empty() && !spec.level_by_code(*parsed)) {
          problem = "undeclared level '" + cell + "'";
        }
        if (!problem.empty()) {
          if (opt.policy == TypePolicy::strict)
            throw ParseError("row " + std::to_string(row) + ", column '" + spec.name + "': " + problem, row, spec.name);
        } else {
          value = *parsed;
        }
      }
      cols[k].push_back(value);
    }
  }

  Dataset ds(std::move(base_schema), std::move(cols), std::move(provenance));
  for (std::size_t i = 0; i < schema.size(); ++i)
    if (schema[i].kind == VariableKind::derived_indicator) ds = derive_indicator(ds, schema[i]);
  // Restore the declared variable order.
  if (ds.cols() == schema.size()) {
    std::vector<std::vector<double>> ordered;
    for (const auto& v : schema.variables()) {
      auto c = ds.column(v.name);
      ordered.emplace_back(c.begin(), c.end());
    }
    ds = Dataset(schema, std::move(ordered), ds.provenance());
  }
  return ds;
}

inline Dataset load_dataset(const std::string& path, const Schema& schema, const LoadOptions& opt = {}) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open data file '" + path + "'", 0, "");
  return read_delimited(in, schema, opt, path);
}

inline void write_delimited(std::ostream& out, const Dataset& ds, char delim = ',') {
  const auto& vars = ds.schema().variables();
  for (std::size_t c = 0; c < vars.size(); ++c) out << (c ? std::string(1, delim) : "") << vars[c].name;
  out << '\n';
  for (std::size_t r = 0; r < ds.rows(); ++r) {
    for (std::size_t c = 0; c < vars.size(); ++c) {
      if (c) out << delim;
      const double v = ds.value(r, c);
      out << (is_missing(v) ? std::string("NA") : detail::format_number(v));
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Variable derivation and filtering

/// Appends a 0/1 column; missing base stays missing.
inline Dataset derive_indicator(const Dataset& ds, const VariableSpec& spec) {
  if (spec.kind != VariableKind::derived_indicator || !spec.derivation)
    throw SchemaError("'" + spec.name + "' is not a derived indicator");
  if (ds.schema().contains(spec.name)) throw SchemaError("variable '" + spec.name + "' already exists");
  const auto base = ds.column(spec.base);
  std::vector<double> out(base.size());
  for (std::size_t r = 0; r < base.size(); ++r)
    out[r] = is_missing(base[r]) ? missing : ((*spec.derivation)(base[r]) ? 1.0 : 0.0);
  return ds.with_column(spec, std::move(out));
}

/// Indices of rows observed on every listed variable.
inline std::vector<std::size_t> complete_case_rows(const Dataset& ds, std::span<const std::string> vars) {
  std::vector<std::span<const double>> cols;
  for (const auto& v : vars) cols.push_back(ds.column(v));
  std::vector<std::size_t> keep;
  keep.reserve(ds.rows());
  for (std::size_t r = 0; r < ds.rows(); ++r) {
    bool ok = true;
    for (const auto& c : cols)
      if (is_missing(c[r])) {
        ok = false;
        break;
      }
    if (ok) keep.push_back(r);
  }
  return keep;
}

struct FilterResult {
  Dataset data;
  std::size_t removed = 0;
};

inline FilterResult complete_cases(const Dataset& ds, std::span<const std::string> vars) {
  const auto keep = complete_case_rows(ds, vars);
  return {ds.select_rows(keep), ds.rows() - keep.size()};
}

// ---------------------------------------------------------------------------
// Partitioning

struct Category {
  std::string label;
  Predicate when;
};

/// One axis of the taxonomy, e.g. road class, applied to one variable.
struct Dimension {
  std::string name;
  std::string variable;
  std::vector<Category> categories;
};

inline void from_json(const nlohmann::json& j, Category& c) {
  c.label = j.at("label").get<std::string>();
  c.when = j.at("when").get<Predicate>();
}
inline void to_json(nlohmann::json& j, const Category& c) { j = {{"label", c.label}, {"when", c.when}}; }
inline void from_json(const nlohmann::json& j, Dimension& d) {
  d.name = j.at("name").get<std::string>();
  d.variable = j.value("variable", d.name);
  d.categories = j.at("categories").get<std::vector<Category>>();
}
inline void to_json(nlohmann::json& j, const Dimension& d) {
  j = {{"name", d.name}, {"variable", d.variable}, {"categories", d.categories}};
}

struct PartitionKey {
  std::vector<std::string> labels;

  std::string str() const {
    std::string s;
    for (std::size_t i = 0; i < labels.size(); ++i) s += (i ? " / " : "") + labels[i];
    return s;
  }
  auto operator<=>(const PartitionKey&) const = default;
};

/// Declared taxonomy, checked for overlapping categories on construction.
class Taxonomy {
 public:
  Taxonomy() = default;
  explicit Taxonomy(std::vector<Dimension> dims) : dims_(std::move(dims)) {
    for (const auto& d : dims_) {
      if (d.categories.empty()) throw SchemaError("dimension '" + d.name + "' has no categories");
      for (std::size_t a = 0; a < d.categories.size(); ++a)
        for (std::size_t b = a + 1; b < d.categories.size(); ++b)
          if (overlaps(d.categories[a].when, d.categories[b].when))
            throw SchemaError("dimension '" + d.name + "': categories '" + d.categories[a].label + "' and '" +
                              d.categories[b].label + "' overlap");
    }
  }
  const std::vector<Dimension>& dimensions() const { return dims_; }

  /// Every declared key in row-major order of the dimensions.
  std::vector<PartitionKey> keys() const {
    std::vector<PartitionKey> out{PartitionKey{}};
    for (const auto& d : dims_) {
      std::vector<PartitionKey> next;
      for (const auto& k : out)
        for (const auto& c : d.categories) {
          auto nk = k;
          nk.labels.push_back(c.label);
          next.push_back(std::move(nk));
        }
      out = std::move(next);
    }
    return out;
  }

 private:
  std::vector<Dimension> dims_;
};

inline void from_json(const nlohmann::json& j, Taxonomy& t) {
  t = Taxonomy(j.at("dimensions").get<std::vector<Dimension>>());
}
inline void to_json(nlohmann::json& j, const Taxonomy& t) { j = {{"dimensions", t.dimensions()}}; }

struct Partitioning {
  std::vector<std::pair<PartitionKey, Dataset>> parts;  // in taxonomy key order
  Dataset unmodeled;

  const Dataset* find(const PartitionKey& k) const {
    for (const auto& [key, d] : parts)
      if (key == k) return &d;
    return nullptr;
  }
};

/// Route each row to the unique key whose categories it satisfies; rows
/// matching no category in some dimension (or missing) go to `unmodeled`.
inline Partitioning partition(const Dataset& ds, const Taxonomy& tax) {
  const auto keys = tax.keys();
  std::map<PartitionKey, std::vector<std::size_t>> routed;
  std::vector<std::size_t> rest;
  std::vector<std::span<const double>> cols;
  for (const auto& d : tax.dimensions()) cols.push_back(ds.column(d.variable));

  for (std::size_t r = 0; r < ds.rows(); ++r) {
    PartitionKey k;
    bool ok = true;
    for (std::size_t di = 0; di < cols.size() && ok; ++di) {
      const double v = cols[di][r];
      const Category* hit = nullptr;
      if (!is_missing(v))
        for (const auto& c : tax.dimensions()[di].categories)
          if (c.when(v)) {
            hit = &c;
            break;
          }
      if (!hit) ok = false;
      else k.labels.push_back(hit->label);
    }
    if (ok) routed[k].push_back(r);
    else rest.push_back(r);
  }

  Partitioning out;
  for (const auto& k : keys) {
    auto it = routed.find(k);
    const std::vector<std::size_t> none;
    out.parts.emplace_back(k, ds.select_rows(it == routed.end() ? none : it->second)
                                  .with_provenance(ds.provenance() + "[" + k.str() + "]"));
  }
  out.unmodeled = ds.select_rows(rest).with_provenance(ds.provenance() + "[unmodeled]");
  return out;
}

// ---------------------------------------------------------------------------
// Binning

struct Bin {
  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();  // [lo, hi)

  bool contains(double x) const { return x >= lo && x < hi; }
  std::string label() const {
    std::ostringstream os;
    os << '[' << lo << ',';
    if (std::isinf(hi)) os << "inf";
    else os << hi;
    os << ')';
    return os.str();
  }
};

struct BinningSpec {
  std::string variable;
  std::vector<Bin> bins;

  void validate() const {
    if (bins.empty()) throw ConfigError("binning on '" + variable + "' has no bins");
    for (std::size_t i = 0; i < bins.size(); ++i) {
      if (!(bins[i].lo < bins[i].hi)) throw ConfigError("bin " + bins[i].label() + " is empty or reversed");
      if (i > 0 && !(bins[i - 1].hi <= bins[i].lo))
        throw ConfigError("bins " + bins[i - 1].label() + " and " + bins[i].label() + " are unordered or overlap");
    }
  }
};

inline void from_json(const nlohmann::json& j, BinningSpec& b) {
  b.variable = j.at("variable").get<std::string>();
  b.bins.clear();
  for (const auto& e : j.at("bins")) {
    Bin bin;
    bin.lo = e.at(0).get<double>();
    if (e.size() > 1 && !e.at(1).is_null()) bin.hi = e.at(1).get<double>();
    b.bins.push_back(bin);
  }
}
inline void to_json(nlohmann::json& j, const BinningSpec& b) {
  j = {{"variable", b.variable}, {"bins", nlohmann::json::array()}};
  for (const auto& bin : b.bins)
    j["bins"].push_back(std::isinf(bin.hi) ? nlohmann::json{bin.lo, nullptr} : nlohmann::json{bin.lo, bin.hi});
}

struct BinResult {
  std::vector<Dataset> bins;
  std::size_t missing = 0;  // binning variable missing
  std::size_t outside = 0;  // observed but in no interval
};

/// Row indices per bin (used by the structure test, which works on index sets).
inline std::vector<std::vector<std::size_t>> bin_rows(const Dataset& ds, const BinningSpec& spec,
                                                      std::span<const std::size_t> candidates,
                                                      std::size_t* missing_out = nullptr,
                                                      std::size_t* outside_out = nullptr) {
  spec.validate();
  const auto& var = ds.schema().at(spec.variable);
  if (var.kind != VariableKind::quantitative)
    throw SchemaError("binning variable '" + spec.variable + "' is not quantitative");
  const auto col = ds.column(spec.variable);
  std::vector<std::vector<std::size_t>> out(spec.bins.size());
  std::size_t miss = 0, outside = 0;
  for (auto r : candidates) {
    const double v = col[r];
    if (is_missing(v)) {
      ++miss;
      continue;
    }
    bool placed = false;
    for (std::size_t b = 0; b < spec.bins.size(); ++b)
      if (spec.bins[b].contains(v)) {
        out[b].push_back(r);
        placed = true;
        break;
      }
    if (!placed) ++outside;
  }
  if (missing_out) *missing_out = miss;
  if (outside_out) *outside_out = outside;
  return out;
}

inline BinResult bin(const Dataset& ds, const BinningSpec& spec) {
  std::vector<std::size_t> all(ds.rows());
  std::iota(all.begin(), all.end(), std::size_t{0});
  BinResult res;
  const auto rows = bin_rows(ds, spec, all, &res.missing, &res.outside);
  for (std::size_t b = 0; b < rows.size(); ++b)
    res.bins.push_back(ds.select_rows(rows[b]).with_provenance(ds.provenance() + spec.bins[b].label()));
  return res;
}

// ---------------------------------------------------------------------------
// Descriptive distributions

struct Share {
  double code = 0.0;
  std::string label;
  std::size_t count = 0;
  double percent = 0.0;
};

struct Distribution {
  std::string variable;
  std::size_t observed = 0;
  std::size_t missing = 0;
  std::vector<Share> shares;
};

inline void to_json(nlohmann::json& j, const Distribution& d) {
  j = {{"variable", d.variable}, {"observed", d.observed}, {"missing", d.missing}, {"shares", nlohmann::json::array()}};
  for (const auto& s : d.shares)
    j["shares"].push_back({{"code", s.code}, {"label", s.label}, {"count", s.count}, {"percent", s.percent}});
}

inline Distribution describe(const Dataset& ds, const std::string& var) {
  const auto& spec = ds.schema().at(var);
  if (spec.kind == VariableKind::quantitative)
    throw SchemaError("'" + var + "' is quantitative; describe needs an indicator or categorical variable");
  std::vector<Level> levels = spec.levels;
  if (levels.empty() && spec.is_binary()) levels = {{0.0, "0"}, {1.0, "1"}};

  std::map<double, std::size_t> counts;
  Distribution d;
  d.variable = var;
  for (double v : ds.column(var)) {
    if (is_missing(v)) {
      ++d.missing;
      continue;
    }
    ++counts[v];
    ++d.observed;
  }
  if (d.observed == 0) throw Error("describe: all values of '" + var + "' are missing");

  auto add = [&](double code, std::string label) {
    Share s;
    s.code = code;
    s.label = std::move(label);
    auto it = counts.find(code);
    s.count = it == counts.end() ? 0 : it->second;
    s.percent = 100.0 * static_cast<double>(s.count) / static_cast<double>(d.observed);
    d.shares.push_back(std::move(s));
  };
  for (const auto& l : levels) add(l.code, l.label);
  for (const auto& [code, n] : counts)
    if (!std::any_of(levels.begin(), levels.end(), [c = code](const Level& l) { return l.code == c; }))
      add(code, detail::format_number(code));
  return d;
}

}  // namespace choicefit
