#include "gridclear/solver.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace gridclear {

Eigen::Index LinearProgram::add_variable(std::string name, double lower, double upper, double cost) {
  vars_.push_back({std::move(name), lower, upper});
  cost_.push_back(cost);
  return static_cast<Eigen::Index>(vars_.size()) - 1;
}

Eigen::Index LinearProgram::add_constraint(std::string name,
                                           std::vector<std::pair<Eigen::Index, double>> terms,
                                           Sense sense, double rhs) {
  cons_.push_back({std::move(name), std::move(terms), sense, rhs});
  return static_cast<Eigen::Index>(cons_.size()) - 1;
}

void LinearProgram::check() const {
  for (std::size_t j = 0; j < cost_.size(); ++j) {
    if (!std::isfinite(cost_[j])) {
      throw std::invalid_argument("objective coefficient of '" + vars_[j].name + "' is not finite");
    }
  }
  const auto n = num_variables();
  for (const auto& c : cons_) {
    for (const auto& [j, v] : c.terms) {
      if (j < 0 || j >= n) {
        throw std::invalid_argument("constraint '" + c.name + "' references an undeclared variable");
      }
      if (!std::isfinite(v)) {
        throw std::invalid_argument("constraint '" + c.name + "' has a non-finite coefficient");
      }
    }
  }
}

namespace {

void row_bounds(const LpConstraint& c, double& lo, double& up) {
  switch (c.sense) {
    case Sense::less_equal: lo = -kInfinity; up = c.rhs; break;
    case Sense::greater_equal: lo = c.rhs; up = kInfinity; break;
    case Sense::equal: lo = c.rhs; up = c.rhs; break;
  }
}

}  // namespace

namespace {

// Solves lp restricted to the rows flagged in `active`; duals of inactive
// rows are zero.
LpSolution solve_rows(const LinearProgram& lp, const std::vector<char>& active, const SimplexOptions<double>& options) {
  const Eigen::Index n = lp.num_variables();
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < lp.num_constraints(); ++i) {
    if (active[static_cast<std::size_t>(i)]) rows.push_back(i);
  }
  const auto m = static_cast<Eigen::Index>(rows.size());

  std::vector<Eigen::Triplet<double>> trip;
  Eigen::VectorXd row_lo(m), row_up(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    const auto& c = lp.constraint(rows[static_cast<std::size_t>(k)]);
    for (const auto& [j, v] : c.terms) {
      if (v != 0.0) trip.emplace_back(k, j, v);
    }
    row_bounds(c, row_lo[k], row_up[k]);
  }
  Eigen::SparseMatrix<double> a(m, n);
  a.setFromTriplets(trip.begin(), trip.end());  // duplicates are summed

  Eigen::VectorXd col_lo(n), col_up(n), cost(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    col_lo[j] = lp.variable(j).lower;
    col_up[j] = lp.variable(j).upper;
    cost[j] = lp.costs()[static_cast<std::size_t>(j)];
  }

  RevisedSimplex<double> simplex(std::move(a), col_lo, col_up, row_lo, row_up, options);
  simplex.set_objective(cost);
  LpSolution sol;
  sol.status = simplex.solve();
  sol.iterations = simplex.iterations();
  if (sol.status == LpStatus::optimal) {
    sol.primal = simplex.primal();
    const Eigen::VectorXd y = simplex.duals();
    sol.duals = Eigen::VectorXd::Zero(lp.num_constraints());
    for (Eigen::Index k = 0; k < m; ++k) sol.duals[rows[static_cast<std::size_t>(k)]] = y[k];
    sol.reduced_costs = simplex.reduced_costs();
    sol.objective = simplex.objective() + lp.offset();
  }
  return sol;
}

}  // namespace

LpSolution solve_lp(const LinearProgram& lp, const SimplexOptions<double>& options) {
  lp.check();
  return solve_rows(lp, std::vector<char>(static_cast<std::size_t>(lp.num_constraints()), 1), options);
}

LpSolution solve_lp_lazy(const LinearProgram& lp, const std::vector<Eigen::Index>& lazy, int rows_per_round,
                         const SimplexOptions<double>& options) {
  lp.check();
  std::vector<char> active(static_cast<std::size_t>(lp.num_constraints()), 1);
  for (auto i : lazy) active[static_cast<std::size_t>(i)] = 0;
  std::int64_t iterations = 0;
  while (true) {
    auto sol = solve_rows(lp, active, options);
    iterations += sol.iterations;
    sol.iterations = iterations;
    if (!sol.optimal()) return sol;
    std::vector<std::pair<double, Eigen::Index>> violated;
    for (auto i : lazy) {
      if (active[static_cast<std::size_t>(i)]) continue;
      const auto& c = lp.constraint(i);
      double act = 0.0;
      for (const auto& [j, v] : c.terms) act += v * sol.primal[j];
      double lo = 0.0, up = 0.0;
      row_bounds(c, lo, up);
      const double excess = std::max(lo - act, act - up);
      const double scale = 1.0 + std::abs(std::isfinite(up) ? up : lo);
      if (excess > options.primal_tolerance * scale) violated.emplace_back(excess / scale, i);
    }
    if (violated.empty()) return sol;
    // Most violated first; index breaks ties so the sequence is deterministic.
    std::sort(violated.begin(), violated.end(), [](const auto& x, const auto& y) {
      return x.first != y.first ? x.first > y.first : x.second < y.second;
    });
    if (static_cast<int>(violated.size()) > rows_per_round) violated.resize(static_cast<std::size_t>(rows_per_round));
    for (const auto& [v, i] : violated) active[static_cast<std::size_t>(i)] = 1;
  }
}

std::string sanitize_lp_name(const std::string& name) {
  std::string out;
  out.reserve(name.size());
  for (char ch : name) {
    const bool ok = (ch >= 'A' && ch <= 'Z') || (ch >= 'a' && ch <= 'z') || (ch >= '0' && ch <= '9') || ch == '_';
    out.push_back(ok ? ch : '_');
  }
  if (out.empty() || (out[0] >= '0' && out[0] <= '9')) out.insert(out.begin(), '_');
  return out;
}

namespace {

std::string fmt_num(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

void write_terms(std::ostream& out, const std::vector<std::pair<Eigen::Index, double>>& terms,
                 const std::vector<std::string>& names) {
  bool first = true;
  for (const auto& [j, v] : terms) {
    if (v == 0.0) continue;
    if (v < 0) out << (first ? "- " : " - ");
    else if (!first) out << " + ";
    out << fmt_num(std::abs(v)) << ' ' << names[static_cast<std::size_t>(j)];
    first = false;
  }
  if (first) out << "0 " << (names.empty() ? std::string("_zero") : names.front());
}

}  // namespace

void write_lp_file(const LinearProgram& lp, std::ostream& out) {
  std::vector<std::string> names;
  names.reserve(lp.variables().size());
  for (std::size_t j = 0; j < lp.variables().size(); ++j) {
    names.push_back(sanitize_lp_name(lp.variables()[j].name) + "_" + std::to_string(j));
  }
  out << "\\ generated by gridclear\nMinimize\n obj: ";
  std::vector<std::pair<Eigen::Index, double>> obj;
  for (std::size_t j = 0; j < lp.costs().size(); ++j) {
    if (lp.costs()[j] != 0.0) obj.emplace_back(static_cast<Eigen::Index>(j), lp.costs()[j]);
  }
  write_terms(out, obj, names);
  out << "\nSubject To\n";
  for (std::size_t i = 0; i < lp.constraints().size(); ++i) {
    const auto& c = lp.constraints()[i];
    out << ' ' << sanitize_lp_name(c.name) << '_' << i << ": ";
    write_terms(out, c.terms, names);
    switch (c.sense) {
      case Sense::less_equal: out << " <= "; break;
      case Sense::greater_equal: out << " >= "; break;
      case Sense::equal: out << " = "; break;
    }
    out << fmt_num(c.rhs) << '\n';
  }
  out << "Bounds\n";
  for (std::size_t j = 0; j < lp.variables().size(); ++j) {
    const auto& v = lp.variables()[j];
    const bool lo_inf = std::isinf(v.lower);
    const bool up_inf = std::isinf(v.upper);
    if (lo_inf && up_inf) {
      out << ' ' << names[j] << " free\n";
    } else {
      out << ' ' << (lo_inf ? std::string("-inf") : fmt_num(v.lower)) << " <= " << names[j]
          << " <= " << (up_inf ? std::string("+inf") : fmt_num(v.upper)) << '\n';
    }
  }
  out << "End\n";
}

LpAudit audit_solution(const LinearProgram& lp, const LpSolution& sol) {
  LpAudit audit;
  if (!sol.optimal()) return audit;
  const auto& x = sol.primal;
  double dual_obj = lp.offset();
  for (Eigen::Index i = 0; i < lp.num_constraints(); ++i) {
    const auto& c = lp.constraint(i);
    double act = 0.0;
    for (const auto& [j, v] : c.terms) act += v * x[j];
    double lo = 0.0, up = 0.0;
    row_bounds(c, lo, up);
    audit.primal_infeasibility = std::max({audit.primal_infeasibility, lo - act, act - up});
    const double y = sol.duals[i];
    // y > 0 pairs with the lower row bound, y < 0 with the upper one.
    const double bound = y > 0 ? lo : up;
    if (y != 0.0) {
      if (std::isinf(bound)) {
        audit.dual_infeasibility = std::max(audit.dual_infeasibility, std::abs(y));
      } else {
        audit.complementary_slackness = std::max(audit.complementary_slackness, std::abs(y * (act - bound)));
        dual_obj += y * bound;
      }
    }
  }
  for (Eigen::Index j = 0; j < lp.num_variables(); ++j) {
    const auto& v = lp.variable(j);
    audit.primal_infeasibility = std::max({audit.primal_infeasibility, v.lower - x[j], x[j] - v.upper});
    const double d = sol.reduced_costs[j];
    const double bound = d > 0 ? v.lower : v.upper;
    if (d != 0.0) {
      if (std::isinf(bound)) {
        audit.dual_infeasibility = std::max(audit.dual_infeasibility, std::abs(d));
      } else {
        audit.complementary_slackness = std::max(audit.complementary_slackness, std::abs(d * (x[j] - bound)));
        dual_obj += d * bound;
      }
    }
  }
  audit.duality_gap = std::abs(sol.objective - dual_obj);
  return audit;
}

}  // namespace gridclear
