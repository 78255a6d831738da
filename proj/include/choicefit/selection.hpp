#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "choicefit/dataset.hpp"
#include "choicefit/error.hpp"
#include "choicefit/logit.hpp"
#include "choicefit/mle.hpp"

namespace choicefit {

/// A selectable unit: one variable entering the utilities of one or more
/// non-base outcomes.
struct Term {
  std::string variable;
  std::vector<std::size_t> outcomes;
  std::string name;

  /// The variable in every non-base utility (binary models, shared covariates).
  static Term all(const ModelSpec& base, std::string var) {
    Term t;
    t.variable = var;
    for (std::size_t i = 0; i + 1 < base.num_outcomes(); ++i) t.outcomes.push_back(i);
    t.name = std::move(var);
    return t;
  }
  static Term for_outcome(const ModelSpec& base, std::string var, std::size_t outcome) {
    if (outcome + 1 >= base.num_outcomes()) throw DimensionError("the base outcome has no utility");
    Term t;
    t.variable = var;
    t.outcomes = {outcome};
    t.name = var + "@" + base.outcomes[outcome].label;
    return t;
  }
  bool operator==(const Term& o) const { return variable == o.variable && outcomes == o.outcomes; }
};

struct SelectionConfig {
  OptimizerConfig optimizer;
  double level = 0.05;
  std::size_t refresh_every = 4;
  std::size_t max_rounds = 100;
};

/// Base data, the outcome layout, and the candidate terms in schema order.
struct SelectionProblem {
  const Dataset* data = nullptr;
  ModelSpec base;  // outcome, outcomes, intercept; covariate lists ignored
  std::vector<Term> candidates;
  std::vector<Term> forced;  // never removed
  SelectionConfig config;
};

enum class Procedure { A, B };

inline std::string to_string(Procedure p) { return p == Procedure::A ? "A" : "B"; }

enum class EventKind { start, add, remove, refresh, skip, aic_optimal, drop, finalize, cycle };

inline std::string to_string(EventKind k) {
  switch (k) {
    case EventKind::start: return "start";
    case EventKind::add: return "add";
    case EventKind::remove: return "remove";
    case EventKind::refresh: return "refresh";
    case EventKind::skip: return "skip";
    case EventKind::aic_optimal: return "aic_optimal";
    case EventKind::drop: return "drop";
    case EventKind::finalize: return "finalize";
    case EventKind::cycle: return "cycle";
  }
  return "?";
}

inline EventKind event_kind_from_string(const std::string& s) {
  for (auto k : {EventKind::start, EventKind::add, EventKind::remove, EventKind::refresh, EventKind::skip,
                 EventKind::aic_optimal, EventKind::drop, EventKind::finalize, EventKind::cycle})
    if (to_string(k) == s) return k;
  throw Error("unknown selection event '" + s + "'");
}

struct SelectionEvent {
  EventKind kind = EventKind::start;
  std::string term;
  double aic_before = std::numeric_limits<double>::quiet_NaN();
  double aic_after = std::numeric_limits<double>::quiet_NaN();
  std::size_t n_before = 0;
  std::size_t n_after = 0;
  double t_ratio = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::string> included;  // start / aic_optimal / finalize / cycle snapshots
  std::string note;
};

inline void to_json(nlohmann::json& j, const SelectionEvent& e) {
  j = {{"event", to_string(e.kind)}};
  if (!e.term.empty()) j["term"] = e.term;
  if (!std::isnan(e.aic_before)) j["aic_before"] = e.aic_before;
  if (!std::isnan(e.aic_after)) j["aic_after"] = e.aic_after;
  if (e.n_before) j["n_before"] = e.n_before;
  if (e.n_after) j["n_after"] = e.n_after;
  if (!std::isnan(e.t_ratio)) j["t_ratio"] = e.t_ratio;
  if (e.kind == EventKind::start || e.kind == EventKind::aic_optimal || e.kind == EventKind::finalize ||
      e.kind == EventKind::cycle)
    j["included"] = e.included;
  if (!e.note.empty()) j["note"] = e.note;
}

inline void from_json(const nlohmann::json& j, SelectionEvent& e) {
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  e = SelectionEvent{};
  e.kind = event_kind_from_string(j.at("event").get<std::string>());
  e.term = j.value("term", std::string{});
  e.aic_before = j.contains("aic_before") ? j["aic_before"].get<double>() : nan;
  e.aic_after = j.contains("aic_after") ? j["aic_after"].get<double>() : nan;
  e.n_before = j.value("n_before", std::size_t{0});
  e.n_after = j.value("n_after", std::size_t{0});
  e.t_ratio = j.contains("t_ratio") ? j["t_ratio"].get<double>() : nan;
  e.included = j.value("included", std::vector<std::string>{});
  e.note = j.value("note", std::string{});
}

using SelectionTrace = std::vector<SelectionEvent>;

/// One event per line.
inline void write_trace(std::ostream& out, const SelectionTrace& trace) {
  for (const auto& e : trace) out << nlohmann::json(e).dump() << '\n';
}

inline SelectionTrace read_trace(std::istream& in) {
  SelectionTrace t;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) t.push_back(nlohmann::json::parse(line).get<SelectionEvent>());
  return t;
}

/// Apply the add/remove/drop events of a trace to its start snapshot.
/// Returns {AIC-optimal set, final set}.
inline std::pair<std::vector<std::string>, std::vector<std::string>> replay_trace(const SelectionTrace& trace) {
  std::vector<std::string> cur, optimal;
  for (const auto& e : trace) {
    switch (e.kind) {
      case EventKind::start: cur = e.included; break;
      case EventKind::add: cur.push_back(e.term); break;
      case EventKind::remove:
      case EventKind::drop: cur.erase(std::remove(cur.begin(), cur.end(), e.term), cur.end()); break;
      case EventKind::cycle: cur = e.included; break;
      case EventKind::aic_optimal: optimal = cur; break;
      default: break;
    }
  }
  return {optimal, cur};
}

struct SelectionState {
  std::vector<Term> included;
  std::vector<Term> pool;
  std::vector<std::size_t> sample;
  FitResult current;
  std::size_t removals_since_refresh = 0;
};

struct SelectionResult {
  Procedure procedure = Procedure::A;
  FitResult aic_optimal;
  FitResult final;
  std::vector<Term> aic_optimal_terms;
  std::vector<Term> final_terms;
  SelectionTrace trace;
  bool converged = true;  // false when the cycle guard or round cap stopped the search
};

namespace detail {

inline ModelSpec spec_for(const SelectionProblem& pb, const std::vector<Term>& included) {
  ModelSpec s = pb.base;
  s.covariates.assign(s.num_outcomes() - 1, {});
  auto put = [&](const Term& t) {
    for (auto i : t.outcomes) s.covariates.at(i).push_back(t.variable);
  };
  for (const auto& t : pb.forced) put(t);
  for (const auto& t : included) put(t);
  return s;
}

inline std::vector<std::size_t> sample_for(const SelectionProblem& pb, const std::vector<Term>& included) {
  return complete_case_rows(*pb.data, spec_for(pb, included).required_columns());
}

/// Largest |t| over the term's coefficients.
inline double term_t(const FitResult& f, const Term& t) {
  double best = 0.0;
  double signed_t = 0.0;
  for (auto i : t.outcomes) {
    const double v = f.t_ratio(i, t.variable);
    if (std::isnan(v)) return std::numeric_limits<double>::quiet_NaN();
    if (std::abs(v) >= best) {
      best = std::abs(v);
      signed_t = v;
    }
  }
  return signed_t;
}

inline FitResult fit_terms(const SelectionProblem& pb, const std::vector<Term>& included,
                           const std::vector<std::size_t>& rows) {
  const auto spec = spec_for(pb, included);
  auto f = fit(spec, make_design(spec, *pb.data, rows), pb.config.optimizer);
  if (!f.converged) throw EstimationError("fit did not converge");
  return f;
}

inline std::size_t candidate_index(const SelectionProblem& pb, const Term& t) {
  for (std::size_t i = 0; i < pb.candidates.size(); ++i)
    if (pb.candidates[i] == t) return i;
  return pb.candidates.size();
}

inline std::vector<std::string> names(const std::vector<Term>& ts) {
  std::vector<std::string> out;
  for (const auto& t : ts) out.push_back(t.name);
  return out;
}

inline void refresh(const SelectionProblem& pb, SelectionState& st, SelectionTrace& trace) {
  SelectionEvent ev;
  ev.kind = EventKind::refresh;
  ev.aic_before = st.current.aic;
  ev.n_before = st.current.n_used;
  auto rows = sample_for(pb, st.included);
  try {
    auto f = fit_terms(pb, st.included, rows);
    st.sample = std::move(rows);
    st.current = std::move(f);
  } catch (const EstimationError& e) {
    ev.note = std::string("refresh failed, sample kept: ") + e.what();
  }
  ev.aic_after = st.current.aic;
  ev.n_after = st.current.n_used;
  st.removals_since_refresh = 0;
  trace.push_back(std::move(ev));
}

}  // namespace detail

/// Step 1: remove the least significant term while its removal lowers AIC
/// on the current (fixed) sample and it is insignificant. The sample is
/// refreshed every `refresh_every` removals and once more at the end.
inline bool step_remove(const SelectionProblem& pb, SelectionState& st, SelectionTrace& trace) {
  const double crit = critical_value(pb.config.level);
  bool changed = false;
  for (;;) {
    struct Cand {
      std::size_t pos;
      double abs_t;
      std::size_t order;
    };
    std::vector<Cand> order;
    for (std::size_t i = 0; i < st.included.size(); ++i) {
      const double t = detail::term_t(st.current, st.included[i]);
      order.push_back({i, std::isnan(t) ? 0.0 : std::abs(t), detail::candidate_index(pb, st.included[i])});
    }
    std::sort(order.begin(), order.end(), [](const Cand& a, const Cand& b) {
      if (a.abs_t != b.abs_t) return a.abs_t < b.abs_t;
      return a.order > b.order;  // later in schema order first
    });

    bool removed = false;
    for (const auto& c : order) {
      if (c.abs_t >= crit) break;
      auto reduced = st.included;
      const Term term = reduced[c.pos];
      reduced.erase(reduced.begin() + static_cast<std::ptrdiff_t>(c.pos));
      FitResult f;
      try {
        f = detail::fit_terms(pb, reduced, st.sample);
      } catch (const EstimationError& e) {
        SelectionEvent ev;
        ev.kind = EventKind::skip;
        ev.term = term.name;
        ev.note = std::string("removal refit failed: ") + e.what();
        trace.push_back(std::move(ev));
        continue;
      }
      if (!(f.aic < st.current.aic)) continue;
      SelectionEvent ev;
      ev.kind = EventKind::remove;
      ev.term = term.name;
      ev.aic_before = st.current.aic;
      ev.aic_after = f.aic;
      ev.n_before = st.current.n_used;
      ev.n_after = f.n_used;
      ev.t_ratio = detail::term_t(st.current, term);
      trace.push_back(std::move(ev));
      st.included = std::move(reduced);
      // Return to the pool in schema order.
      st.pool.push_back(term);
      std::sort(st.pool.begin(), st.pool.end(), [&](const Term& a, const Term& b) {
        return detail::candidate_index(pb, a) < detail::candidate_index(pb, b);
      });
      st.current = std::move(f);
      ++st.removals_since_refresh;
      removed = changed = true;
      break;
    }
    if (!removed) break;
    if (pb.config.refresh_every > 0 && st.removals_since_refresh >= pb.config.refresh_every)
      detail::refresh(pb, st, trace);
  }
  if (st.removals_since_refresh > 0) detail::refresh(pb, st, trace);
  return changed;
}

/// Step 2: add candidates one at a time. AIC-lowering candidates (compared
/// on the complete cases of included + candidate) take precedence over
/// merely significant ones.
inline bool step_add(const SelectionProblem& pb, SelectionState& st, SelectionTrace& trace) {
  const double crit = critical_value(pb.config.level);
  bool changed = false;
  std::map<std::vector<std::size_t>, double> reference_aic;  // AIC of the current terms per sample
  for (;;) {
    struct Eval {
      std::size_t pool_pos;
      FitResult with;
      double aic_without;
      double t;
    };
    std::vector<Eval> evals;
    std::set<std::string> skipped;
    for (std::size_t p = 0; p < st.pool.size(); ++p) {
      const Term& cand = st.pool[p];
      auto grown = st.included;
      grown.push_back(cand);
      const auto rows = detail::sample_for(pb, grown);
      try {
        double without;
        if (rows == st.sample) {
          without = st.current.aic;
        } else if (auto it = reference_aic.find(rows); it != reference_aic.end()) {
          without = it->second;
        } else {
          without = detail::fit_terms(pb, st.included, rows).aic;
          reference_aic.emplace(rows, without);
        }
        auto with = detail::fit_terms(pb, grown, rows);
        const double t = detail::term_t(with, cand);
        evals.push_back({p, std::move(with), without, t});
      } catch (const EstimationError& e) {
        SelectionEvent ev;
        ev.kind = EventKind::skip;
        ev.term = cand.name;
        ev.note = std::string("not addable: ") + e.what();
        trace.push_back(std::move(ev));
      }
    }

    const Eval* pick = nullptr;
    for (const auto& e : evals) {
      const double delta = e.with.aic - e.aic_without;
      if (!(delta < 0)) continue;
      if (!pick) {
        pick = &e;
        continue;
      }
      const double best = pick->with.aic - pick->aic_without;
      if (delta < best || (delta == best && e.with.n_used > pick->with.n_used)) pick = &e;
    }
    if (!pick)
      for (const auto& e : evals) {
        if (std::isnan(e.t) || std::abs(e.t) < crit) continue;
        if (!pick || std::abs(e.t) > std::abs(pick->t)) pick = &e;
      }
    if (!pick) break;

    const Term term = st.pool[pick->pool_pos];
    SelectionEvent ev;
    ev.kind = EventKind::add;
    ev.term = term.name;
    ev.aic_before = pick->aic_without;
    ev.aic_after = pick->with.aic;
    ev.n_before = st.current.n_used;
    ev.n_after = pick->with.n_used;
    ev.t_ratio = pick->t;
    ev.note = pick->with.aic < pick->aic_without ? "aic" : "significant";
    trace.push_back(std::move(ev));
    st.included.push_back(term);
    st.sample = pick->with.rows;
    st.current = pick->with;
    st.pool.erase(st.pool.begin() + static_cast<std::ptrdiff_t>(pick->pool_pos));
    st.removals_since_refresh = 0;
    changed = true;
  }
  return changed;
}

namespace detail {

/// Step 3: drop insignificant terms one at a time, lowest |t| first,
/// refitting on the refreshed sample after each drop.
inline void finalize(const SelectionProblem& pb, SelectionState& st, SelectionTrace& trace) {
  const double crit = critical_value(pb.config.level);
  for (;;) {
    std::size_t worst = st.included.size();
    double worst_t = crit;
    for (std::size_t i = 0; i < st.included.size(); ++i) {
      const double t = term_t(st.current, st.included[i]);
      const double a = std::isnan(t) ? 0.0 : std::abs(t);
      if (a < worst_t || (a == worst_t && a < crit && worst < st.included.size() &&
                          candidate_index(pb, st.included[i]) > candidate_index(pb, st.included[worst]))) {
        worst = i;
        worst_t = a;
      }
    }
    if (worst == st.included.size()) break;
    SelectionEvent ev;
    ev.kind = EventKind::drop;
    ev.term = st.included[worst].name;
    ev.t_ratio = term_t(st.current, st.included[worst]);
    ev.aic_before = st.current.aic;
    ev.n_before = st.current.n_used;
    st.pool.push_back(st.included[worst]);
    st.included.erase(st.included.begin() + static_cast<std::ptrdiff_t>(worst));
    st.sample = sample_for(pb, st.included);
    st.current = fit_terms(pb, st.included, st.sample);
    ev.aic_after = st.current.aic;
    ev.n_after = st.current.n_used;
    trace.push_back(std::move(ev));
  }
}

inline std::string state_key(const SelectionState& st) {
  auto n = names(st.included);
  std::sort(n.begin(), n.end());
  std::string k;
  for (const auto& s : n) k += s + '\x1f';
  return k + std::to_string(st.current.n_used);
}

}  // namespace detail

/// Procedure A starts from every candidate, B from intercepts only. Both
/// alternate steps 1 and 2 to a fixed point (the AIC-optimal model), then
/// apply step 3 (the final model).
inline SelectionResult run_procedure(Procedure kind, const SelectionProblem& pb) {
  if (!pb.data) throw ConfigError("selection problem has no data");
  SelectionResult res;
  res.procedure = kind;
  SelectionState st;
  if (kind == Procedure::A) {
    st.included = pb.candidates;
  } else {
    st.pool = pb.candidates;
  }
  st.sample = detail::sample_for(pb, st.included);
  {
    const auto spec = detail::spec_for(pb, st.included);
    st.current = fit(spec, make_design(spec, *pb.data, st.sample), pb.config.optimizer);
    if (!st.current.converged) throw EstimationError("initial model did not converge");
  }
  SelectionEvent start;
  start.kind = EventKind::start;
  start.included = detail::names(st.included);
  start.aic_after = st.current.aic;
  start.n_after = st.current.n_used;
  start.note = "procedure " + to_string(kind);
  res.trace.push_back(start);

  std::map<std::string, std::size_t> visited;
  std::vector<SelectionState> history;
  visited.emplace(detail::state_key(st), 0);
  history.push_back(st);
  for (std::size_t round = 0;; ++round) {
    bool changed = false;
    if (kind == Procedure::A) {
      changed |= step_remove(pb, st, res.trace);
      changed |= step_add(pb, st, res.trace);
    } else {
      changed |= step_add(pb, st, res.trace);
      changed |= step_remove(pb, st, res.trace);
    }
    if (!changed) break;
    const auto key = detail::state_key(st);
    if (visited.count(key) || round + 1 >= pb.config.max_rounds) {
      // Oscillation or round cap: settle on the best AIC seen.
      history.push_back(st);
      const auto best = std::min_element(history.begin(), history.end(), [](const auto& a, const auto& b) {
        return a.current.aic < b.current.aic;
      });
      st = *best;
      res.converged = false;
      SelectionEvent ev;
      ev.kind = EventKind::cycle;
      ev.included = detail::names(st.included);
      ev.aic_after = st.current.aic;
      ev.n_after = st.current.n_used;
      ev.note = visited.count(key) ? "state revisited" : "round cap reached";
      res.trace.push_back(std::move(ev));
      break;
    }
    visited.emplace(key, history.size());
    history.push_back(st);
  }

  res.aic_optimal = st.current;
  res.aic_optimal_terms = st.included;
  SelectionEvent opt;
  opt.kind = EventKind::aic_optimal;
  opt.included = detail::names(st.included);
  opt.aic_after = st.current.aic;
  opt.n_after = st.current.n_used;
  res.trace.push_back(opt);

  detail::finalize(pb, st, res.trace);
  res.final = st.current;
  res.final_terms = st.included;
  SelectionEvent fin;
  fin.kind = EventKind::finalize;
  fin.included = detail::names(st.included);
  fin.aic_after = st.current.aic;
  fin.n_after = st.current.n_used;
  res.trace.push_back(fin);
  return res;
}

/// Procedure A, falling back to B when the all-variables model cannot be
/// estimated.
inline SelectionResult run_auto(const SelectionProblem& pb) {
  try {
    return run_procedure(Procedure::A, pb);
  } catch (const EstimationError&) {
    return run_procedure(Procedure::B, pb);
  }
}

struct ProbeResult {
  Term term;
  std::vector<double> coefficients;  // one per outcome of the term
  std::vector<double> t_ratios;
  std::size_t n_used = 0;
};

/// Coefficient and t-ratio of `term` when test-added to the AIC-optimal
/// model on the complete cases of the enlarged variable set. The model
/// itself is not changed.
inline ProbeResult probe_variable(const Dataset& ds, const FitResult& aic_optimal, const Term& term,
                                  const OptimizerConfig& cfg = {}) {
  ModelSpec spec = aic_optimal.spec;
  for (auto i : term.outcomes) {
    auto& cv = spec.covariates.at(i);
    if (std::find(cv.begin(), cv.end(), term.variable) != cv.end())
      throw Error("'" + term.name + "' is already in the model");
    cv.push_back(term.variable);
  }
  const auto f = fit(spec, ds, cfg);
  ProbeResult r;
  r.term = term;
  for (auto i : term.outcomes) {
    r.coefficients.push_back(f.coefficient(i, term.variable));
    r.t_ratios.push_back(f.t_ratio(i, term.variable));
  }
  r.n_used = f.n_used;
  return r;
}

inline void to_json(nlohmann::json& j, const SelectionResult& r) {
  j = {{"procedure", to_string(r.procedure)},
       {"converged", r.converged},
       {"aic_optimal_terms", detail::names(r.aic_optimal_terms)},
       {"final_terms", detail::names(r.final_terms)},
       {"aic_optimal", r.aic_optimal},
       {"final", r.final}};
}

}  // namespace choicefit
