#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "choicefit/error.hpp"
#include "choicefit/inference.hpp"

namespace choicefit {

namespace detail {

inline std::string drop_leading_zero(std::string s) {
  if (s.rfind("0.", 0) == 0) return s.substr(1);
  if (s.rfind("-0.", 0) == 0) return "-" + s.substr(2);
  return s;
}

inline std::string printf_double(const char* fmt, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, x);
  return buf;
}

}  // namespace detail

/// Three significant digits, trailing zeros kept, no leading zero:
/// 0.008594 -> ".00859", 2.5 -> "2.50", -0.0023 -> "-.00230".
inline std::string format_sig3(double x) {
  if (!std::isfinite(x)) return std::isnan(x) ? "nan" : (x > 0 ? "inf" : "-inf");
  if (x == 0.0) return "0";
  const int mag = static_cast<int>(std::floor(std::log10(std::abs(x))));
  int decimals = std::max(0, 2 - mag);
  std::string s = detail::printf_double(("%." + std::to_string(decimals) + "f").c_str(), x);
  // Rounding can carry into a new digit (9.996 -> "10.00").
  const double r = std::stod(s);
  if (r != 0.0 && static_cast<int>(std::floor(std::log10(std::abs(r)))) > mag && decimals > 0)
    s = detail::printf_double(("%." + std::to_string(decimals - 1) + "f").c_str(), x);
  return detail::drop_leading_zero(s);
}

/// Three significant digits but at most three decimals, as used for
/// t-ratios and elasticities: 0.0661 -> ".066", 0.0 -> ".000", 1.234 -> "1.23".
inline std::string format_cell(double x) {
  if (!std::isfinite(x)) return format_sig3(x);
  if (std::abs(x) >= 0.1 || x == 0.0) {
    if (x == 0.0) return ".000";
    return format_sig3(x);
  }
  std::string s = detail::printf_double("%.3f", x);
  if (s == "-0.000") s = "0.000";
  return detail::drop_leading_zero(s);
}

/// Two significant digits for p >= 0.01 ("0.60", "0.026"), compact
/// scientific below ("3.8e-4").
inline std::string format_pvalue(double p) {
  if (!std::isfinite(p)) return "nan";
  if (p >= 0.01) {
    std::string s = detail::printf_double("%#.2g", p);
    if (s.find('e') == std::string::npos) return s;
    return detail::printf_double("%.2f", p);
  }
  if (p == 0.0) return "0";
  std::string s = detail::printf_double("%.1e", p);  // 3.8e-04
  const auto e = s.find('e');
  std::string mant = s.substr(0, e);
  int ex = std::stoi(s.substr(e + 1));
  return mant + "e" + std::to_string(ex);
}

inline std::string format_ll(double ll) { return detail::printf_double("%.2f", ll); }

// ---------------------------------------------------------------------------
// Causation / severity tables (focal coefficient + elasticities)

/// One focal coefficient. Bracketed cells come from a probe and never carry
/// elasticities.
struct CoefficientCell {
  bool present = false;
  double estimate = 0.0;
  double t_ratio = 0.0;
  bool bracketed = false;
};

/// Averaged elasticities for one source outcome: own and cross.
struct ElasticityPair {
  double direct = 0.0;
  double cross = 0.0;
};

struct ModelTableRow {
  std::string index;
  std::string label;
  std::optional<double> ll;
  std::optional<double> ll_restricted;
  std::optional<double> rho2;
  std::size_t n_used = 0;
  std::vector<CoefficientCell> cells;                   // one per non-base outcome
  std::vector<std::optional<ElasticityPair>> elasticities;  // parallel to cells
  std::string flag;                                     // estimation problems, empty when fine
};

struct CausationTable {
  std::string title;
  std::string variable;
  std::vector<std::string> outcome_labels;  // non-base outcomes, one per cell
  std::vector<ModelTableRow> rows;
};

inline std::string render_cell(const CoefficientCell& c) {
  if (!c.present) return "";
  std::string s = format_sig3(c.estimate) + " (" + format_cell(c.t_ratio) + ")";
  return c.bracketed ? "[" + s + "]" : s;
}

inline void to_json(nlohmann::json& j, const CoefficientCell& c) {
  if (!c.present) {
    j = nullptr;
    return;
  }
  j = {{"estimate", c.estimate}, {"t_ratio", c.t_ratio}, {"bracketed", c.bracketed}};
}

inline void from_json(const nlohmann::json& j, CoefficientCell& c) {
  c = CoefficientCell{};
  if (j.is_null()) return;
  c.present = true;
  c.estimate = j.at("estimate").get<double>();
  c.t_ratio = j.at("t_ratio").get<double>();
  c.bracketed = j.at("bracketed").get<bool>();
}

namespace detail {
inline nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }
inline std::optional<double> opt(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<double>();
}
}  // namespace detail

inline void to_json(nlohmann::json& j, const ModelTableRow& r) {
  j = {{"index", r.index},
       {"label", r.label},
       {"ll", detail::opt(r.ll)},
       {"ll_restricted", detail::opt(r.ll_restricted)},
       {"rho2", detail::opt(r.rho2)},
       {"n_used", r.n_used},
       {"cells", r.cells},
       {"flag", r.flag}};
  j["elasticities"] = nlohmann::json::array();
  for (const auto& e : r.elasticities)
    j["elasticities"].push_back(e ? nlohmann::json{{"direct", e->direct}, {"cross", e->cross}} : nlohmann::json(nullptr));
}

inline void from_json(const nlohmann::json& j, ModelTableRow& r) {
  r = ModelTableRow{};
  r.index = j.at("index").get<std::string>();
  r.label = j.at("label").get<std::string>();
  r.ll = detail::opt(j, "ll");
  r.ll_restricted = detail::opt(j, "ll_restricted");
  r.rho2 = detail::opt(j, "rho2");
  r.n_used = j.value("n_used", std::size_t{0});
  r.cells = j.at("cells").get<std::vector<CoefficientCell>>();
  for (const auto& e : j.at("elasticities")) {
    if (e.is_null()) r.elasticities.emplace_back();
    else r.elasticities.push_back(ElasticityPair{e.at("direct").get<double>(), e.at("cross").get<double>()});
  }
  r.flag = j.value("flag", std::string{});
}

inline void to_json(nlohmann::json& j, const CausationTable& t) {
  j = {{"title", t.title}, {"variable", t.variable}, {"outcomes", t.outcome_labels}, {"rows", t.rows}};
}

inline void from_json(const nlohmann::json& j, CausationTable& t) {
  t.title = j.value("title", std::string{});
  t.variable = j.at("variable").get<std::string>();
  t.outcome_labels = j.at("outcomes").get<std::vector<std::string>>();
  t.rows = j.at("rows").get<std::vector<ModelTableRow>>();
}

namespace detail {

inline std::string render_grid(const std::vector<std::vector<std::string>>& cells) {
  std::vector<std::size_t> width;
  for (const auto& row : cells)
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (width.size() <= c) width.push_back(0);
      width[c] = std::max(width[c], row[c].size());
    }
  std::ostringstream out;
  for (const auto& row : cells) {
    std::string line;
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) line += "  ";
      line += row[c] + std::string(width[c] - row[c].size(), ' ');
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out << line << '\n';
  }
  return out.str();
}

}  // namespace detail

inline std::string render_causation_table(const CausationTable& t) {
  std::vector<std::vector<std::string>> g;
  std::vector<std::string> head{"#", "model", "LL", "LL(0)", "rho2"};
  for (const auto& o : t.outcome_labels) head.push_back(t.variable + "[" + o + "]");
  for (const auto& o : t.outcome_labels) {
    head.push_back("E(" + o + ",own)");
    head.push_back("E(" + o + ",cross)");
  }
  head.push_back("flag");
  g.push_back(head);
  for (const auto& r : t.rows) {
    std::vector<std::string> line{r.index, r.label, r.ll ? format_ll(*r.ll) : "", r.ll_restricted ? format_ll(*r.ll_restricted) : "",
                                  r.rho2 ? format_sig3(*r.rho2) : ""};
    for (std::size_t i = 0; i < t.outcome_labels.size(); ++i)
      line.push_back(i < r.cells.size() ? render_cell(r.cells[i]) : "");
    for (std::size_t i = 0; i < t.outcome_labels.size(); ++i) {
      const bool show = i < r.elasticities.size() && r.elasticities[i] && i < r.cells.size() && !r.cells[i].bracketed;
      line.push_back(show ? format_cell(r.elasticities[i]->direct) : "");
      line.push_back(show ? format_cell(r.elasticities[i]->cross) : "");
    }
    line.push_back(r.flag);
    g.push_back(std::move(line));
  }
  std::string out;
  if (!t.title.empty()) out = t.title + "\n";
  return out + detail::render_grid(g);
}

// ---------------------------------------------------------------------------
// LR test tables

enum class LRStyle { car_suv, bins };

inline std::string lr_conclusion(LRStyle style, bool reject) {
  if (style == LRStyle::car_suv) return reject ? "Car ≠ SUV" : "Car = SUV";
  return reject ? "SL effect" : "";
}

struct LRTableRow {
  std::string index;
  std::string label;
  LRTestResult test;
  std::string note;   // e.g. removed variables, merged bins
  std::string error;  // test could not be run; numeric cells left blank
};

struct LRTable {
  std::string title;
  LRStyle style = LRStyle::bins;
  std::vector<LRTableRow> rows;
};

inline void to_json(nlohmann::json& j, const LRTableRow& r) {
  j = {{"index", r.index}, {"label", r.label}, {"note", r.note}};
  if (r.error.empty()) j["test"] = r.test;
  else j["error"] = r.error;
}
inline void from_json(const nlohmann::json& j, LRTableRow& r) {
  r.index = j.at("index").get<std::string>();
  r.label = j.at("label").get<std::string>();
  r.note = j.value("note", std::string{});
  r.error = j.value("error", std::string{});
  if (r.error.empty()) r.test = j.at("test").get<LRTestResult>();
}
inline void to_json(nlohmann::json& j, const LRTable& t) {
  j = {{"title", t.title}, {"style", t.style == LRStyle::car_suv ? "car_suv" : "bins"}, {"rows", t.rows}};
  for (std::size_t i = 0; i < t.rows.size(); ++i)
    if (t.rows[i].error.empty()) j["rows"][i]["conclusion"] = lr_conclusion(t.style, t.rows[i].test.reject);
}
inline void from_json(const nlohmann::json& j, LRTable& t) {
  t.title = j.value("title", std::string{});
  t.style = j.value("style", std::string("bins")) == "car_suv" ? LRStyle::car_suv : LRStyle::bins;
  t.rows = j.at("rows").get<std::vector<LRTableRow>>();
}

inline std::string render_lr_table(const LRTable& t) {
  std::vector<std::vector<std::string>> g;
  g.push_back({"#", "model", "M", "K", "LL(pooled)", "sum LL", "stat", "df", "p-value", "conclusion", "note"});
  for (const auto& r : t.rows) {
    const auto& x = r.test;
    if (!r.error.empty()) {
      g.push_back({r.index, r.label, "", "", "", "", "", "", "", "", r.error});
      continue;
    }
    g.push_back({r.index, r.label, std::to_string(x.M), std::to_string(x.K), format_ll(x.ll_pooled), format_ll(x.ll_bins_sum),
                 detail::printf_double("%.2f", x.statistic), std::to_string(x.df), format_pvalue(x.p_value),
                 lr_conclusion(t.style, x.reject), r.note});
  }
  std::string out;
  if (!t.title.empty()) out = t.title + "\n";
  return out + detail::render_grid(g);
}

// ---------------------------------------------------------------------------
// Replay of published LR rows

struct LRFixture {
  std::string table;
  std::string row;
  LRStyle style = LRStyle::bins;
  std::size_t M = 0;
  std::size_t K = 0;
  std::string ll_pooled;  // as printed
  std::string ll_bins_sum;
  std::size_t df = 0;
  std::string p_value;  // as printed
  std::string conclusion;
};

inline void from_json(const nlohmann::json& j, LRFixture& f) {
  f.table = j.at("table").get<std::string>();
  f.row = j.at("row").get<std::string>();
  f.style = j.at("kind").get<std::string>() == "carsuv" ? LRStyle::car_suv : LRStyle::bins;
  f.M = j.at("M").get<std::size_t>();
  f.K = j.at("K").get<std::size_t>();
  f.ll_pooled = j.at("ll_pooled").get<std::string>();
  f.ll_bins_sum = j.at("ll_bins_sum").get<std::string>();
  f.df = j.at("df").get<std::size_t>();
  f.p_value = j.at("p_value").get<std::string>();
  f.conclusion = j.value("conclusion", std::string{});
}

inline std::vector<LRFixture> load_fixtures(const nlohmann::json& doc) {
  return doc.at("fixtures").get<std::vector<LRFixture>>();
}

/// Value of one unit in the last printed digit: "0.30" -> 0.01,
/// "3.8e-4" -> 1e-5, "-1426.61" -> 0.01.
inline double last_digit_unit(const std::string& printed) {
  const auto e = printed.find_first_of("eE");
  const std::string mant = printed.substr(0, e);
  const int exp = e == std::string::npos ? 0 : std::stoi(printed.substr(e + 1));
  const auto dot = mant.find('.');
  const int decimals = dot == std::string::npos ? 0 : static_cast<int>(mant.size() - dot - 1);
  return std::pow(10.0, exp - decimals);
}

enum class ReplayClass { match, rounding, exception };

inline std::string to_string(ReplayClass c) {
  switch (c) {
    case ReplayClass::match: return "match";
    case ReplayClass::rounding: return "rounding";
    case ReplayClass::exception: return "exception";
  }
  return "?";
}

struct ReplayRow {
  LRFixture fixture;
  LRTestResult result;
  std::string computed_conclusion;
  bool p_ok = false;
  bool conclusion_ok = false;
  bool df_ok = false;
  double p_low = 0.0;  // p range over the LL rounding box
  double p_high = 0.0;
  ReplayClass cls = ReplayClass::match;
  std::string reason;
};

/// Recompute one published row. A row matches when df agrees, p lies within
/// one unit of the printed last digit and the conclusion agrees. Otherwise
/// it is put down to rounding when some LL pair inside the half-unit
/// rounding box of the printed LLs reproduces both the printed p (within one
/// unit) and the printed conclusion.
inline ReplayRow replay_fixture(const LRFixture& f, double level = 0.05) {
  ReplayRow r;
  r.fixture = f;
  const double llp = std::stod(f.ll_pooled);
  const double lls = std::stod(f.ll_bins_sum);
  r.df_ok = f.df == (f.M - 1) * f.K;
  const double printed_p = std::stod(f.p_value);
  const double unit = last_digit_unit(f.p_value);

  try {
    r.result = lr_test_from_sum(llp, lls, f.M, f.K, level);
  } catch (const Error& e) {
    r.cls = ReplayClass::exception;
    r.reason = e.what();
    return r;
  }
  r.computed_conclusion = lr_conclusion(f.style, r.result.reject);
  r.p_ok = std::abs(r.result.p_value - printed_p) <= unit * (1 + 1e-9);
  r.conclusion_ok = r.computed_conclusion == f.conclusion;

  const double slack = 0.5 * last_digit_unit(f.ll_pooled) + 0.5 * last_digit_unit(f.ll_bins_sum);
  const double stat = r.result.statistic;
  const auto df = (f.M - 1) * f.K;
  const double stat_lo = std::max(0.0, stat - 2.0 * slack);
  const double stat_hi = stat + 2.0 * slack;
  r.p_high = chi_squared_sf(stat_lo, df);
  r.p_low = chi_squared_sf(stat_hi, df);

  if (r.df_ok && r.p_ok && r.conclusion_ok) {
    r.cls = ReplayClass::match;
    return r;
  }
  const bool p_reachable = r.p_low <= printed_p + unit && r.p_high >= printed_p - unit;
  const bool printed_reject = f.style == LRStyle::car_suv ? f.conclusion != "Car = SUV" : f.conclusion == "SL effect";
  const bool concl_reachable = printed_reject ? r.p_low < level : r.p_high >= level;
  if (r.df_ok && p_reachable && concl_reachable) {
    r.cls = ReplayClass::rounding;
    r.reason = "reproduced within the rounding of the printed log-likelihoods";
    return r;
  }
  r.cls = ReplayClass::exception;
  std::string why;
  if (!r.df_ok) why += "df printed " + std::to_string(f.df) + " but (M-1)K = " + std::to_string(df) + "; ";
  if (!r.p_ok) why += "p printed " + f.p_value + ", computed " + format_pvalue(r.result.p_value) + "; ";
  if (!r.conclusion_ok) why += "conclusion printed '" + f.conclusion + "', computed '" + r.computed_conclusion + "'; ";
  if (!p_reachable) why += "not reachable by LL rounding; ";
  if (why.size() >= 2) why.resize(why.size() - 2);
  r.reason = why;
  return r;
}

struct ReplayReport {
  std::vector<ReplayRow> rows;
  std::size_t matched = 0;
  std::size_t rounding = 0;
  std::size_t exceptions = 0;
};

inline ReplayReport replay_fixtures(const std::vector<LRFixture>& fixtures, double level = 0.05) {
  ReplayReport rep;
  for (const auto& f : fixtures) {
    rep.rows.push_back(replay_fixture(f, level));
    switch (rep.rows.back().cls) {
      case ReplayClass::match: ++rep.matched; break;
      case ReplayClass::rounding: ++rep.rounding; break;
      case ReplayClass::exception: ++rep.exceptions; break;
    }
  }
  return rep;
}

inline void to_json(nlohmann::json& j, const ReplayReport& rep) {
  j = {{"rows", nlohmann::json::array()},
       {"matched", rep.matched},
       {"rounding", rep.rounding},
       {"exceptions", rep.exceptions}};
  for (const auto& r : rep.rows)
    j["rows"].push_back({{"table", r.fixture.table},
                         {"row", r.fixture.row},
                         {"statistic", r.result.statistic},
                         {"df", r.result.df},
                         {"p_value", r.result.p_value},
                         {"printed_p", r.fixture.p_value},
                         {"conclusion", r.computed_conclusion},
                         {"printed_conclusion", r.fixture.conclusion},
                         {"class", to_string(r.cls)},
                         {"reason", r.reason}});
}

/// Rows that do not match strictly, one per line.
inline std::string render_replay_exceptions(const ReplayReport& rep) {
  std::ostringstream out;
  out << "replayed " << rep.rows.size() << " rows: " << rep.matched << " match, " << rep.rounding
      << " explained by LL rounding, " << rep.exceptions << " other\n";
  for (const auto& r : rep.rows) {
    if (r.cls == ReplayClass::match) continue;
    out << "  " << r.fixture.table << " #" << r.fixture.row << " [" << to_string(r.cls) << "] " << r.reason << '\n';
  }
  return out.str();
}

}  // namespace choicefit
