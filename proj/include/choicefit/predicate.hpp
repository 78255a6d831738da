#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "choicefit/error.hpp"

namespace choicefit {

/// A closed/open interval on the real line. Infinite ends are always open.
struct Interval {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  bool lo_closed = false;
  bool hi_closed = false;

  bool empty() const {
    if (lo < hi) return false;
    return !(lo == hi && lo_closed && hi_closed);
  }
  bool contains(double x) const {
    const bool above = lo_closed ? x >= lo : x > lo;
    const bool below = hi_closed ? x <= hi : x < hi;
    return above && below;
  }
};

inline Interval intersect(const Interval& a, const Interval& b) {
  Interval r;
  if (a.lo > b.lo) {
    r.lo = a.lo;
    r.lo_closed = a.lo_closed;
  } else if (b.lo > a.lo) {
    r.lo = b.lo;
    r.lo_closed = b.lo_closed;
  } else {
    r.lo = a.lo;
    r.lo_closed = a.lo_closed && b.lo_closed;
  }
  if (a.hi < b.hi) {
    r.hi = a.hi;
    r.hi_closed = a.hi_closed;
  } else if (b.hi < a.hi) {
    r.hi = b.hi;
    r.hi_closed = b.hi_closed;
  } else {
    r.hi = a.hi;
    r.hi_closed = a.hi_closed && b.hi_closed;
  }
  return r;
}

/// Finite union of intervals. Used to check category rules for overlap
/// exactly, before any data is seen.
class IntervalSet {
 public:
  IntervalSet() = default;
  explicit IntervalSet(std::vector<Interval> parts) {
    for (auto& p : parts)
      if (!p.empty()) parts_.push_back(p);
  }
  static IntervalSet everything() { return IntervalSet({Interval{}}); }

  const std::vector<Interval>& parts() const { return parts_; }
  bool empty() const { return parts_.empty(); }

  IntervalSet intersect(const IntervalSet& other) const {
    std::vector<Interval> out;
    for (const auto& a : parts_)
      for (const auto& b : other.parts_) {
        auto c = choicefit::intersect(a, b);
        if (!c.empty()) out.push_back(c);
      }
    return IntervalSet(std::move(out));
  }
  IntervalSet unite(const IntervalSet& other) const {
    auto out = parts_;
    out.insert(out.end(), other.parts_.begin(), other.parts_.end());
    return IntervalSet(std::move(out));
  }
  IntervalSet complement() const {
    IntervalSet result = everything();
    for (const auto& p : parts_) {
      std::vector<Interval> pieces;
      if (std::isfinite(p.lo)) pieces.push_back({-std::numeric_limits<double>::infinity(), p.lo, false, !p.lo_closed});
      if (std::isfinite(p.hi)) pieces.push_back({p.hi, std::numeric_limits<double>::infinity(), !p.hi_closed, false});
      result = result.intersect(IntervalSet(std::move(pieces)));
    }
    return result;
  }

 private:
  std::vector<Interval> parts_;
};

/// Predicate over a single numeric value: comparison against a constant,
/// set membership, or and/or/not of sub-predicates.
///
/// JSON forms:
///   {"op": "<", "value": 25}        ops: < <= > >= == !=
///   {"op": "in", "values": [1, 4]}
///   {"op": "and", "args": [p, q]}   also "or"; {"op": "not", "args": [p]}
struct Predicate {
  enum class Op { lt, le, gt, ge, eq, ne, in, all_of, any_of, negate };

  Op op = Op::eq;
  double value = 0.0;
  std::vector<double> values;
  std::vector<Predicate> args;

  static Predicate compare(Op op, double v) {
    Predicate p;
    p.op = op;
    p.value = v;
    return p;
  }
  static Predicate member(std::vector<double> vs) {
    Predicate p;
    p.op = Op::in;
    p.values = std::move(vs);
    return p;
  }
  static Predicate both(Predicate a, Predicate b) {
    Predicate p;
    p.op = Op::all_of;
    p.args = {std::move(a), std::move(b)};
    return p;
  }
  static Predicate either(Predicate a, Predicate b) {
    Predicate p;
    p.op = Op::any_of;
    p.args = {std::move(a), std::move(b)};
    return p;
  }

  bool operator()(double x) const {
    switch (op) {
      case Op::lt: return x < value;
      case Op::le: return x <= value;
      case Op::gt: return x > value;
      case Op::ge: return x >= value;
      case Op::eq: return x == value;
      case Op::ne: return x != value;
      case Op::in: return std::find(values.begin(), values.end(), x) != values.end();
      case Op::all_of:
        return std::all_of(args.begin(), args.end(), [x](const Predicate& p) { return p(x); });
      case Op::any_of:
        return std::any_of(args.begin(), args.end(), [x](const Predicate& p) { return p(x); });
      case Op::negate: return !args.at(0)(x);
    }
    return false;
  }

  /// Exact set of reals on which the predicate holds.
  IntervalSet support() const {
    constexpr double inf = std::numeric_limits<double>::infinity();
    switch (op) {
      case Op::lt: return IntervalSet({{-inf, value, false, false}});
      case Op::le: return IntervalSet({{-inf, value, false, true}});
      case Op::gt: return IntervalSet({{value, inf, false, false}});
      case Op::ge: return IntervalSet({{value, inf, true, false}});
      case Op::eq: return IntervalSet({{value, value, true, true}});
      case Op::ne: return IntervalSet({{value, value, true, true}}).complement();
      case Op::in: {
        std::vector<Interval> pts;
        for (double v : values) pts.push_back({v, v, true, true});
        return IntervalSet(std::move(pts));
      }
      case Op::all_of: {
        auto s = IntervalSet::everything();
        for (const auto& a : args) s = s.intersect(a.support());
        return s;
      }
      case Op::any_of: {
        IntervalSet s;
        for (const auto& a : args) s = s.unite(a.support());
        return s;
      }
      case Op::negate: return args.at(0).support().complement();
    }
    return {};
  }
};

inline bool overlaps(const Predicate& a, const Predicate& b) {
  return !a.support().intersect(b.support()).empty();
}

inline void to_json(nlohmann::json& j, const Predicate& p) {
  using Op = Predicate::Op;
  switch (p.op) {
    case Op::lt: j = {{"op", "<"}, {"value", p.value}}; break;
    case Op::le: j = {{"op", "<="}, {"value", p.value}}; break;
    case Op::gt: j = {{"op", ">"}, {"value", p.value}}; break;
    case Op::ge: j = {{"op", ">="}, {"value", p.value}}; break;
    case Op::eq: j = {{"op", "=="}, {"value", p.value}}; break;
    case Op::ne: j = {{"op", "!="}, {"value", p.value}}; break;
    case Op::in: j = {{"op", "in"}, {"values", p.values}}; break;
    case Op::all_of: j = {{"op", "and"}, {"args", p.args}}; break;
    case Op::any_of: j = {{"op", "or"}, {"args", p.args}}; break;
    case Op::negate: j = {{"op", "not"}, {"args", p.args}}; break;
  }
}

inline void from_json(const nlohmann::json& j, Predicate& p) {
  using Op = Predicate::Op;
  const auto op = j.at("op").get<std::string>();
  p = Predicate{};
  if (op == "<") p.op = Op::lt;
  else if (op == "<=") p.op = Op::le;
  else if (op == ">") p.op = Op::gt;
  else if (op == ">=") p.op = Op::ge;
  else if (op == "==") p.op = Op::eq;
  else if (op == "!=") p.op = Op::ne;
  else if (op == "in") p.op = Op::in;
  else if (op == "and") p.op = Op::all_of;
  else if (op == "or") p.op = Op::any_of;
  else if (op == "not") p.op = Op::negate;
  else throw SchemaError("unknown predicate op '" + op + "'");

  switch (p.op) {
    case Op::in: p.values = j.at("values").get<std::vector<double>>(); break;
    case Op::all_of:
    case Op::any_of:
      p.args = j.at("args").get<std::vector<Predicate>>();
      if (p.args.size() < 2) throw SchemaError("'" + op + "' needs two arguments");
      break;
    case Op::negate:
      p.args = j.at("args").get<std::vector<Predicate>>();
      if (p.args.size() != 1) throw SchemaError("'not' takes one argument");
      break;
    default: p.value = j.at("value").get<double>();
  }
}

}  // namespace choicefit
