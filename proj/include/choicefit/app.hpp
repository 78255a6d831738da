#pragma once

// Command implementations behind tools/choicefit. Each command returns its
// JSON document and text rendering; the executable decides where they go.

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "choicefit/dataset.hpp"
#include "choicefit/elasticity.hpp"
#include "choicefit/error.hpp"
#include "choicefit/inference.hpp"
#include "choicefit/logit.hpp"
#include "choicefit/mle.hpp"
#include "choicefit/report.hpp"
#include "choicefit/selection.hpp"
#include "choicefit/synth.hpp"

namespace choicefit::app {

inline int log_level() {
  static const int level = [] {
    const char* v = std::getenv("CHOICEFIT_LOG");
    if (!v || !*v) return 0;
    const std::string s = v;
    if (s == "debug") return 2;
    if (s == "info") return 1;
    try {
      return std::stoi(s);
    } catch (...) {
      return 1;
    }
  }();
  return level;
}

inline void log(int level, const std::string& msg) {
  if (log_level() >= level) std::cerr << "choicefit: " << msg << '\n';
}

/// Manually entered LR inputs for `lrtest`.
struct LRInput {
  double ll_pooled = 0.0;
  std::optional<double> ll_sum;
  std::vector<double> ll_bins;
  std::size_t M = 0;
  std::size_t K = 0;
};

struct RunConfig {
  std::string data;
  std::string schema;
  std::string out;
  std::string mode = "causation";  // causation | severity
  std::optional<ModelSpec> model;  // outcome layout; covariates used by `fit`
  std::vector<std::string> candidates;
  std::string terms = "auto";  // shared | per_outcome | auto
  std::vector<std::string> focal;
  std::vector<std::string> forced;
  std::optional<Taxonomy> taxonomy;
  std::optional<BinningSpec> binning;
  bool merge_small_bins = false;
  std::optional<Dimension> pooling;
  std::vector<std::string> describe;
  std::string procedure = "auto";
  double level = 0.05;
  OptimizerConfig optimizer;
  std::uint64_t seed = 1;
  std::size_t jobs = 0;  // 0: hardware concurrency
  std::string fixtures;
  std::optional<GeneratorSpec> generator;
  std::optional<LRInput> lrtest;
  char delimiter = ',';
  TypePolicy policy = TypePolicy::strict;
  std::size_t refresh_every = 4;
};

inline void from_json(const nlohmann::json& j, LRInput& l) {
  l.ll_pooled = j.at("ll_pooled").get<double>();
  if (j.contains("ll_sum")) l.ll_sum = j["ll_sum"].get<double>();
  l.ll_bins = j.value("ll_bins", std::vector<double>{});
  l.M = j.value("M", l.ll_bins.size());
  l.K = j.at("K").get<std::size_t>();
}

inline RunConfig parse_config(const nlohmann::json& j) {
  RunConfig c;
  try {
    c.data = j.value("data", std::string{});
    c.schema = j.value("schema", std::string{});
    c.out = j.value("out", std::string{});
    c.mode = j.value("mode", c.mode);
    if (j.contains("model")) c.model = j["model"].get<ModelSpec>();
    c.candidates = j.value("candidates", std::vector<std::string>{});
    c.terms = j.value("terms", c.terms);
    c.focal = j.value("focal", std::vector<std::string>{});
    c.forced = j.value("forced", std::vector<std::string>{});
    if (j.contains("taxonomy")) c.taxonomy = j["taxonomy"].get<Taxonomy>();
    if (j.contains("binning")) c.binning = j["binning"].get<BinningSpec>();
    c.merge_small_bins = j.value("merge_small_bins", false);
    if (j.contains("pooling")) c.pooling = j["pooling"].get<Dimension>();
    c.describe = j.value("describe", std::vector<std::string>{});
    c.procedure = j.value("procedure", c.procedure);
    c.level = j.value("level", c.level);
    if (j.contains("optimizer")) c.optimizer = j["optimizer"].get<OptimizerConfig>();
    c.seed = j.value("seed", c.seed);
    c.jobs = j.value("jobs", c.jobs);
    c.fixtures = j.value("fixtures", std::string{});
    if (j.contains("generator")) c.generator = j["generator"].get<GeneratorSpec>();
    if (j.contains("lrtest")) c.lrtest = j["lrtest"].get<LRInput>();
    const auto d = j.value("delimiter", std::string(","));
    if (d.size() != 1) throw ConfigError("delimiter must be one character");
    c.delimiter = d[0];
    const auto p = j.value("type_policy", std::string("strict"));
    if (p != "strict" && p != "lenient") throw ConfigError("type_policy must be strict or lenient");
    c.policy = p == "strict" ? TypePolicy::strict : TypePolicy::lenient;
    c.refresh_every = j.value("refresh_every", c.refresh_every);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  auto c = parse_config(j);
  // Relative paths are relative to the config file.
  const auto base = std::filesystem::path(path).parent_path();
  auto fix = [&](std::string& p) {
    if (!p.empty() && std::filesystem::path(p).is_relative()) p = (base / p).lexically_normal().string();
  };
  fix(c.data);
  fix(c.schema);
  fix(c.fixtures);
  return c;
}

inline void require_file(const std::string& p, const char* what) {
  if (p.empty()) throw ConfigError(std::string("no ") + what + " given");
  if (!std::filesystem::exists(p)) throw ConfigError(std::string(what) + " '" + p + "' does not exist");
}

inline void validate_common(const RunConfig& c) {
  if (!(c.level > 0 && c.level < 1)) throw ConfigError("level must be in (0,1)");
  if (c.procedure != "A" && c.procedure != "B" && c.procedure != "auto")
    throw ConfigError("procedure must be A, B or auto");
  if (c.mode != "causation" && c.mode != "severity") throw ConfigError("mode must be causation or severity");
  if (c.terms != "auto" && c.terms != "shared" && c.terms != "per_outcome")
    throw ConfigError("terms must be shared, per_outcome or auto");
  c.optimizer.validate();
}

struct Loaded {
  Schema schema;
  Dataset data;
};

inline Loaded load_inputs(const RunConfig& c) {
  require_file(c.schema, "schema");
  require_file(c.data, "data file");
  Loaded l;
  l.schema = load_schema(c.schema);
  l.data = load_dataset(c.data, l.schema, LoadOptions{c.delimiter, c.policy});
  return l;
}

inline const ModelSpec& require_model(const RunConfig& c, const Schema& s) {
  if (!c.model) throw ConfigError("config has no model section");
  if (!s.contains(c.model->outcome)) throw ConfigError("unknown outcome variable '" + c.model->outcome + "'");
  auto check = [&](const std::vector<std::string>& vs, const char* what) {
    for (const auto& v : vs)
      if (!s.contains(v)) throw ConfigError(std::string("unknown ") + what + " variable '" + v + "'");
  };
  check(c.candidates, "candidate");
  check(c.focal, "focal");
  check(c.forced, "forced");
  for (const auto& cv : c.model->covariates) check(cv, "covariate");
  if (c.mode == "severity" && c.model->num_outcomes() < 3)
    throw ConfigError("severity mode needs at least three outcomes");
  return *c.model;
}

/// Selection problem over one data subset.
inline SelectionProblem make_problem(const RunConfig& c, const ModelSpec& base, const Dataset& ds) {
  SelectionProblem pb;
  pb.data = &ds;
  pb.base = base;
  pb.base.covariates.assign(base.num_outcomes() - 1, {});
  const bool shared = c.terms == "shared" || (c.terms == "auto" && base.num_outcomes() == 2);
  auto make = [&](const std::string& v, std::vector<Term>& out) {
    if (shared) {
      out.push_back(Term::all(base, v));
    } else {
      for (std::size_t i = 0; i + 1 < base.num_outcomes(); ++i) out.push_back(Term::for_outcome(base, v, i));
    }
  };
  for (const auto& v : c.candidates)
    if (std::find(c.forced.begin(), c.forced.end(), v) == c.forced.end()) make(v, pb.candidates);
  for (const auto& v : c.forced) make(v, pb.forced);
  pb.config.optimizer = c.optimizer;
  pb.config.level = c.level;
  pb.config.refresh_every = c.refresh_every;
  return pb;
}

inline SelectionResult run_selection(const RunConfig& c, const SelectionProblem& pb) {
  if (c.procedure == "A") return run_procedure(Procedure::A, pb);
  if (c.procedure == "B") return run_procedure(Procedure::B, pb);
  return run_auto(pb);
}

// ---------------------------------------------------------------------------
// Deterministic parallel map: results land by index regardless of pool size.

inline std::size_t resolve_jobs(std::size_t jobs) {
  if (jobs) return jobs;
  const auto h = std::thread::hardware_concurrency();
  return h ? h : 1;
}

template <class Fn>
auto parallel_map(std::size_t n, std::size_t jobs, Fn fn) -> std::vector<decltype(fn(std::size_t{}))> {
  std::vector<decltype(fn(std::size_t{}))> out(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) out[i] = fn(i);
  };
  const std::size_t k = std::min(resolve_jobs(jobs), std::max<std::size_t>(n, 1));
  if (k <= 1) {
    worker();
    return out;
  }
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < k; ++t) pool.emplace_back(worker);
  }
  return out;
}

struct Output {
  nlohmann::json json;
  std::string text;
  std::vector<std::pair<std::string, std::string>> files;  // extra (relative path, content)
};

inline void write_output(const Output& o, const std::string& dir, const std::string& name) {
  if (dir.empty()) return;
  std::filesystem::create_directories(dir);
  std::ofstream(std::filesystem::path(dir) / (name + ".json")) << o.json.dump(2) << '\n';
  std::ofstream(std::filesystem::path(dir) / (name + ".txt")) << o.text;
  for (const auto& [rel, content] : o.files) {
    const auto p = std::filesystem::path(dir) / rel;
    std::filesystem::create_directories(p.parent_path());
    std::ofstream(p) << content;
  }
}

// ---------------------------------------------------------------------------
// describe

inline Output cmd_describe(const RunConfig& c) {
  validate_common(c);
  auto in = load_inputs(c);
  if (c.describe.empty()) throw ConfigError("no variables to describe");
  for (const auto& v : c.describe)
    if (!in.schema.contains(v)) throw ConfigError("unknown variable '" + v + "'");

  Output o;
  o.json = {{"blocks", nlohmann::json::array()}};
  std::ostringstream txt;
  auto block = [&](const std::string& var, const std::string& scope, const Dataset& ds) {
    nlohmann::json b = {{"variable", var}, {"scope", scope}};
    txt << var << " [" << scope << "]\n";
    try {
      const auto d = describe(ds, var);
      b["distribution"] = d;
      for (const auto& s : d.shares)
        txt << "  " << s.label << "  " << s.count << "  " << choicefit::detail::printf_double("%.1f", s.percent) << "%\n";
      txt << "  observed " << d.observed << ", missing " << d.missing << '\n';
    } catch (const Error& e) {
      b["no_data"] = true;
      b["message"] = e.what();
      txt << "  no data\n";
    }
    o.json["blocks"].push_back(std::move(b));
  };
  for (const auto& v : c.describe) {
    block(v, "all", in.data);
    if (c.binning) {
      const auto res = bin(in.data, *c.binning);
      for (std::size_t b = 0; b < res.bins.size(); ++b)
        block(v, c.binning->variable + " " + c.binning->bins[b].label(), res.bins[b]);
    }
  }
  o.text = txt.str();
  return o;
}

// ---------------------------------------------------------------------------
// fit / select / probe / elasticity on the whole dataset

inline std::string coefficient_table(const FitResult& f) {
  std::vector<std::vector<std::string>> g{{"parameter", "estimate", "std.err", "t"}};
  for (std::size_t k = 0; k < f.names.size(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    g.push_back({f.names[k], format_sig3(f.beta(kk)), format_sig3(std::sqrt(f.covariance(kk, kk))),
                 format_cell(f.t_ratios(kk))});
  }
  std::ostringstream s;
  s << choicefit::detail::render_grid(g);
  s << "LL " << format_ll(f.ll) << "  LL(0) " << format_ll(f.ll_restricted) << "  rho2 " << format_sig3(f.rho2)
    << "  AIC " << format_ll(f.aic) << "  n " << f.n_used << '\n';
  return s.str();
}

inline Output cmd_fit(const RunConfig& c) {
  validate_common(c);
  auto in = load_inputs(c);
  ModelSpec spec = require_model(c, in.schema);
  if (std::all_of(spec.covariates.begin(), spec.covariates.end(), [](const auto& v) { return v.empty(); }) &&
      !c.candidates.empty())
    spec.covariates.assign(spec.num_outcomes() - 1, c.candidates);
  const auto f = fit(spec, in.data, c.optimizer);
  Output o;
  o.json = f;
  o.text = coefficient_table(f);
  return o;
}

inline std::string trace_lines(const SelectionTrace& t) {
  std::ostringstream s;
  write_trace(s, t);
  return s.str();
}

inline Output cmd_select(const RunConfig& c) {
  validate_common(c);
  auto in = load_inputs(c);
  const auto& base = require_model(c, in.schema);
  const auto pb = make_problem(c, base, in.data);
  const auto r = run_selection(c, pb);
  Output o;
  o.json = r;
  o.text = "procedure " + to_string(r.procedure) + "\nAIC-optimal model\n" + coefficient_table(r.aic_optimal) +
           "final model\n" + coefficient_table(r.final);
  o.files.emplace_back("trace.jsonl", trace_lines(r.trace));
  return o;
}

namespace detail {

/// Coefficient cells for one focal variable: significant from the final
/// model, bracketed from a probe of the AIC-optimal model otherwise.
struct FocalCells {
  std::vector<CoefficientCell> cells;
  std::vector<std::optional<ElasticityPair>> elasticities;
  std::string notes;
};

inline FocalCells focal_cells(const RunConfig& c, const Dataset& ds, const SelectionResult& r, const std::string& var) {
  FocalCells out;
  const auto& spec = r.final.spec;
  const std::size_t J = spec.num_outcomes() - 1;
  out.cells.resize(J);
  out.elasticities.resize(J);
  std::optional<ElasticityReport> el;
  const bool continuous = ds.schema().at(var).kind == VariableKind::quantitative;
  for (std::size_t i = 0; i < J; ++i) {
    auto& cell = out.cells[i];
    if (spec.param_index(i, var) != static_cast<std::size_t>(-1)) {
      cell.present = true;
      cell.estimate = r.final.coefficient(i, var);
      cell.t_ratio = r.final.t_ratio(i, var);
      if (continuous) {
        if (!el) el = averaged_elasticities(r.final, ds, var);
        for (const auto& e : el->entries)
          if (e.source == i) out.elasticities[i] = ElasticityPair{e.averaged[i], e.averaged[i == 0 ? 1 : 0]};
      }
      continue;
    }
    cell.bracketed = true;
    if (r.aic_optimal.spec.param_index(i, var) != static_cast<std::size_t>(-1)) {
      // In the AIC-optimal model but dropped as insignificant in step 3.
      cell.present = true;
      cell.estimate = r.aic_optimal.coefficient(i, var);
      cell.t_ratio = r.aic_optimal.t_ratio(i, var);
      continue;
    }
    try {
      const auto p = probe_variable(ds, r.aic_optimal, Term::for_outcome(spec, var, i), c.optimizer);
      cell.present = true;
      cell.estimate = p.coefficients[0];
      cell.t_ratio = p.t_ratios[0];
    } catch (const Error& e) {
      out.notes += "probe of " + var + "@" + spec.outcomes[i].label + " failed: " + e.what() + "; ";
    }
  }
  return out;
}

}  // namespace detail

inline Output cmd_probe(const RunConfig& c) {
  validate_common(c);
  auto in = load_inputs(c);
  const auto& base = require_model(c, in.schema);
  if (c.focal.empty()) throw ConfigError("no focal variables to probe");
  const auto pb = make_problem(c, base, in.data);
  const auto r = run_selection(c, pb);
  Output o;
  o.json = {{"procedure", to_string(r.procedure)}, {"probes", nlohmann::json::array()}};
  std::ostringstream txt;
  for (const auto& v : c.focal) {
    const auto fc = detail::focal_cells(c, in.data, r, v);
    nlohmann::json pj = {{"variable", v}, {"cells", fc.cells}, {"notes", fc.notes}};
    txt << v << ':';
    for (std::size_t i = 0; i < fc.cells.size(); ++i)
      txt << "  " << base.outcomes[i].label << ' ' << (fc.cells[i].present ? render_cell(fc.cells[i]) : "-");
    txt << '\n';
    o.json["probes"].push_back(std::move(pj));
  }
  o.text = txt.str();
  return o;
}

inline Output cmd_elasticity(const RunConfig& c) {
  validate_common(c);
  auto in = load_inputs(c);
  const auto& base = require_model(c, in.schema);
  if (c.focal.empty()) throw ConfigError("no focal variables for elasticities");
  const auto pb = make_problem(c, base, in.data);
  const auto r = run_selection(c, pb);
  Output o;
  o.json = {{"reports", nlohmann::json::array()}};
  std::ostringstream txt;
  for (const auto& v : c.focal) {
    const auto rep = averaged_elasticities(r.final, in.data, v);
    o.json["reports"].push_back(rep);
    for (const auto& e : rep.entries) {
      txt << v << " in " << e.source_label << " utility (coef " << format_sig3(e.coefficient) << "):";
      for (std::size_t i = 0; i < e.averaged.size(); ++i)
        txt << "  P(" << base.outcomes[i].label << ") " << format_cell(e.averaged[i]);
      txt << '\n';
    }
  }
  o.text = txt.str();
  return o;
}

// ---------------------------------------------------------------------------
// lrtest: replay or manual inputs

inline Output replay_output(const std::string& fixtures, double level) {
  require_file(fixtures, "fixtures file");
  std::ifstream in(fixtures);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("fixtures file is not valid JSON: " + std::string(e.what()));
  }
  const auto rep = replay_fixtures(load_fixtures(doc), level);
  Output o;
  o.json = rep;
  // Recomputed tables, grouped by source table.
  std::ostringstream txt;
  std::vector<std::string> order;
  for (const auto& r : rep.rows)
    if (std::find(order.begin(), order.end(), r.fixture.table) == order.end()) order.push_back(r.fixture.table);
  for (const auto& name : order) {
    LRTable t;
    t.title = "Table " + name;
    for (const auto& r : rep.rows) {
      if (r.fixture.table != name) continue;
      t.style = r.fixture.style;
      LRTableRow row;
      row.index = r.fixture.row;
      row.label = "printed p " + r.fixture.p_value;
      row.test = r.result;
      if (r.cls == ReplayClass::exception && r.result.M == 0) row.error = r.reason;
      else if (r.cls != ReplayClass::match) row.note = to_string(r.cls);
      t.rows.push_back(std::move(row));
    }
    txt << render_lr_table(t) << '\n';
  }
  txt << render_replay_exceptions(rep);
  o.text = txt.str();
  return o;
}

inline Output cmd_lrtest(const RunConfig& c) {
  if (!(c.level > 0 && c.level < 1)) throw ConfigError("level must be in (0,1)");
  if (!c.fixtures.empty()) return replay_output(c.fixtures, c.level);
  if (!c.lrtest) throw ConfigError("lrtest needs --fixtures or LL inputs");
  const auto& l = *c.lrtest;
  LRTestResult r;
  if (!l.ll_bins.empty()) r = lr_test(l.ll_pooled, l.ll_bins, l.K, c.level);
  else if (l.ll_sum) r = lr_test_from_sum(l.ll_pooled, *l.ll_sum, l.M, l.K, c.level);
  else throw ConfigError("lrtest needs ll_sum or ll_bins");
  Output o;
  o.json = r;
  o.json["conclusion"] = r.reject ? "separately" : "together";
  o.text = "statistic " + choicefit::detail::printf_double("%.2f", r.statistic) + "  df " + std::to_string(r.df) + "  p " +
           format_pvalue(r.p_value) + "  " + (r.reject ? "separately" : "together") + '\n';
  return o;
}

// ---------------------------------------------------------------------------
// grid

struct GridRow {
  std::string index;
  std::string label;
  std::size_t n_rows = 0;
  std::optional<SelectionResult> selection;
  std::vector<detail::FocalCells> focal;  // parallel to config focal list
  std::string flag;
};

inline GridRow grid_row(const RunConfig& c, const ModelSpec& base, const std::string& index, const std::string& label,
                        const Dataset& ds) {
  GridRow row;
  row.index = index;
  row.label = label;
  row.n_rows = ds.rows();
  if (ds.rows() == 0) {
    row.flag = "no data";
    return row;
  }
  try {
    const auto pb = make_problem(c, base, ds);
    row.selection = run_selection(c, pb);
  } catch (const DegenerateOutcomeError& e) {
    row.flag = std::string("degenerate outcome: ") + e.what();
    return row;
  } catch (const SeparationError& e) {
    row.flag = std::string("separation: ") + e.what();
    return row;
  } catch (const Error& e) {
    row.flag = std::string("estimation failed: ") + e.what();
    return row;
  }
  for (const auto& v : c.focal) {
    try {
      row.focal.push_back(detail::focal_cells(c, ds, *row.selection, v));
    } catch (const Error& e) {
      detail::FocalCells fc;
      fc.notes = e.what();
      row.focal.push_back(std::move(fc));
    }
  }
  return row;
}

struct Grid {
  std::vector<GridRow> rows;
  std::size_t unmodeled = 0;
};

inline Grid run_grid(const RunConfig& c, const Dataset& ds, const ModelSpec& base) {
  if (!c.taxonomy) throw ConfigError("grid needs a taxonomy");
  const auto parts = partition(ds, *c.taxonomy);
  Grid g;
  g.unmodeled = parts.unmodeled.rows();
  g.rows = parallel_map(parts.parts.size(), c.jobs, [&](std::size_t i) {
    const auto& [key, sub] = parts.parts[i];
    log(1, "partition " + key.str() + " (" + std::to_string(sub.rows()) + " rows)");
    return grid_row(c, base, std::to_string(i + 1), key.str(), sub);
  });
  return g;
}

inline Output cmd_grid(const RunConfig& c) {
  validate_common(c);
  auto in = load_inputs(c);
  const auto& base = require_model(c, in.schema);
  const auto g = run_grid(c, in.data, base);

  Output o;
  o.json = {{"rows", nlohmann::json::array()}, {"unmodeled_rows", g.unmodeled}, {"tables", nlohmann::json::array()}};
  std::vector<std::string> outcome_labels;
  for (std::size_t i = 0; i + 1 < base.num_outcomes(); ++i) outcome_labels.push_back(base.outcomes[i].label);

  std::vector<CausationTable> tables(c.focal.size());
  for (std::size_t f = 0; f < c.focal.size(); ++f) {
    tables[f].title = (c.mode == "causation" ? "causation models: " : "severity models: ") + c.focal[f];
    tables[f].variable = c.focal[f];
    tables[f].outcome_labels = outcome_labels;
  }
  for (const auto& r : g.rows) {
    nlohmann::json rj = {{"index", r.index}, {"label", r.label}, {"rows", r.n_rows}, {"flag", r.flag}};
    if (r.selection) {
      rj["selection"] = *r.selection;
      o.files.emplace_back("traces/" + r.index + ".jsonl", trace_lines(r.selection->trace));
    }
    o.json["rows"].push_back(std::move(rj));
    for (std::size_t f = 0; f < c.focal.size(); ++f) {
      ModelTableRow mr;
      mr.index = r.index;
      mr.label = r.label;
      mr.flag = r.flag;
      if (r.selection) {
        mr.ll = r.selection->final.ll;
        mr.ll_restricted = r.selection->final.ll_restricted;
        mr.rho2 = r.selection->final.rho2;
        mr.n_used = r.selection->final.n_used;
        mr.cells = r.focal[f].cells;
        mr.elasticities = r.focal[f].elasticities;
        if (!r.focal[f].notes.empty()) mr.flag = r.focal[f].notes;
      }
      tables[f].rows.push_back(std::move(mr));
    }
  }
  std::string text;
  for (const auto& t : tables) {
    o.json["tables"].push_back(t);
    text += render_causation_table(t) + '\n';
  }
  if (c.focal.empty()) {
    std::vector<std::vector<std::string>> gr{{"#", "model", "n", "final terms", "flag"}};
    for (const auto& r : g.rows) {
      std::string terms;
      if (r.selection)
        for (const auto& t : r.selection->final_terms) terms += (terms.empty() ? "" : " ") + t.name;
      gr.push_back({r.index, r.label, std::to_string(r.n_rows), terms, r.flag});
    }
    text += choicefit::detail::render_grid(gr);
  }
  text += "rows outside the taxonomy: " + std::to_string(g.unmodeled) + '\n';
  o.text = text;
  return o;
}

// ---------------------------------------------------------------------------
// tests: car/SUV pooling and speed-limit bin structure per partition

inline Output cmd_tests(const RunConfig& c) {
  validate_common(c);
  if (!c.fixtures.empty()) return replay_output(c.fixtures, c.level);
  if (c.mode == "severity" && !c.binning) throw ConfigError("severity mode tests need a binning spec");
  if (!c.binning && !c.pooling) throw ConfigError("tests need a binning spec or a pooling split");
  auto in = load_inputs(c);
  const auto& base = require_model(c, in.schema);

  struct Part {
    std::string index, label;
    Dataset data;
  };
  std::vector<Part> parts;
  if (c.taxonomy) {
    const auto p = partition(in.data, *c.taxonomy);
    for (std::size_t i = 0; i < p.parts.size(); ++i)
      parts.push_back({std::to_string(i + 1), p.parts[i].first.str(), p.parts[i].second});
  } else {
    parts.push_back({"1", "all", in.data});
  }

  struct Rows {
    std::optional<LRTableRow> pooling, bins;
  };
  const auto results = parallel_map(parts.size(), c.jobs, [&](std::size_t i) {
    const auto& part = parts[i];
    Rows out;
    auto fail = [&](const std::string& msg) {
      LRTableRow r{part.index, part.label, {}, {}, msg};
      if (c.pooling) out.pooling = r;
      if (c.binning) out.bins = r;
    };
    if (part.data.rows() == 0) {
      fail("no data");
      return out;
    }
    SelectionResult sel;
    try {
      sel = run_selection(c, make_problem(c, base, part.data));
    } catch (const Error& e) {
      fail(std::string("selection failed: ") + e.what());
      return out;
    }
    if (c.pooling) {
      LRTableRow r{part.index, part.label, {}, {}, {}};
      try {
        const auto pr = pooling_test(sel.final.spec, part.data, *c.pooling, c.optimizer, c.level);
        r.test = pr.test;
        for (const auto& l : pr.labels) r.note += (r.note.empty() ? "" : "+") + l;
      } catch (const Error& e) {
        r.error = e.what();
      }
      out.pooling = r;
    }
    if (c.binning) {
      LRTableRow r{part.index, part.label, {}, {}, {}};
      try {
        StructureOptions opt;
        opt.level = c.level;
        opt.merge_small_bins = c.merge_small_bins;
        const auto br = bin_structure_test(sel.final.spec, part.data, *c.binning, c.optimizer, opt);
        r.test = br.test;
        if (!br.removed.empty()) {
          r.note = "removed";
          for (const auto& v : br.removed) r.note += " " + v;
        }
        std::string bins;
        for (const auto& l : br.bin_labels) bins += (bins.empty() ? "" : " ") + l;
        r.note += (r.note.empty() ? "" : "; ") + std::string("bins ") + bins;
      } catch (const Error& e) {
        r.error = e.what();
      }
      out.bins = r;
    }
    return out;
  });

  Output o;
  o.json = nlohmann::json::object();
  std::string text;
  if (c.pooling) {
    LRTable t;
    t.title = "pooled vs split by " + c.pooling->name;
    t.style = LRStyle::car_suv;
    for (const auto& r : results) t.rows.push_back(*r.pooling);
    o.json["pooling"] = t;
    text += render_lr_table(t) + '\n';
  }
  if (c.binning) {
    LRTable t;
    t.title = "structure across " + c.binning->variable + " bins";
    t.style = LRStyle::bins;
    for (const auto& r : results) t.rows.push_back(*r.bins);
    o.json["bins"] = t;
    text += render_lr_table(t);
  }
  o.text = text;
  return o;
}

// ---------------------------------------------------------------------------
// simulate

inline Output cmd_simulate(const RunConfig& c) {
  if (!c.generator) throw ConfigError("simulate needs a generator section");
  const auto& g = *c.generator;
  const auto ds = generate(g);
  Output o;
  std::ostringstream csv;
  write_delimited(csv, ds, ',');
  o.files.emplace_back("data.csv", csv.str());
  o.files.emplace_back("schema.json", nlohmann::json(ds.schema()).dump(2) + '\n');
  o.json = {{"generator", g}, {"rows", ds.rows()}, {"rng", kRngAlgorithm}, {"provenance", ds.provenance()}};
  o.text = "generated " + std::to_string(ds.rows()) + " rows (seed " + std::to_string(g.seed) + ")\n";
  return o;
}

}  // namespace choicefit::app
