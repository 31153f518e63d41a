#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <iosfwd>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "gridclear/simplex.hpp"

namespace gridclear {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

enum class Sense { less_equal, equal, greater_equal };

struct LpVariable {
  std::string name;
  double lower = 0.0;
  double upper = kInfinity;
};

struct LpConstraint {
  std::string name;
  std::vector<std::pair<Eigen::Index, double>> terms;
  Sense sense = Sense::less_equal;
  double rhs = 0.0;
};

// Minimization LP: min c.x + offset  s.t. constraints, variable bounds.
class LinearProgram {
 public:
  Eigen::Index add_variable(std::string name, double lower, double upper, double cost = 0.0);
  Eigen::Index add_constraint(std::string name, std::vector<std::pair<Eigen::Index, double>> terms,
                              Sense sense, double rhs);
  void set_cost(Eigen::Index var, double cost) { cost_[static_cast<std::size_t>(var)] = cost; }
  void add_cost(Eigen::Index var, double cost) { cost_[static_cast<std::size_t>(var)] += cost; }
  void set_offset(double offset) { offset_ = offset; }

  Eigen::Index num_variables() const { return static_cast<Eigen::Index>(vars_.size()); }
  Eigen::Index num_constraints() const { return static_cast<Eigen::Index>(cons_.size()); }
  const std::vector<LpVariable>& variables() const { return vars_; }
  const std::vector<LpConstraint>& constraints() const { return cons_; }
  const std::vector<double>& costs() const { return cost_; }
  double offset() const { return offset_; }

  LpVariable& variable(Eigen::Index j) { return vars_[static_cast<std::size_t>(j)]; }
  const LpVariable& variable(Eigen::Index j) const { return vars_[static_cast<std::size_t>(j)]; }
  const LpConstraint& constraint(Eigen::Index i) const { return cons_[static_cast<std::size_t>(i)]; }

  // Throws std::invalid_argument for non-finite costs or dangling variable references.
  void check() const;

 private:
  std::vector<LpVariable> vars_;
  std::vector<double> cost_;
  std::vector<LpConstraint> cons_;
  double offset_ = 0.0;
};

struct LpSolution {
  LpStatus status = LpStatus::numerical_failure;
  Eigen::VectorXd primal;
  Eigen::VectorXd duals;          // one per constraint, d(objective)/d(rhs)
  Eigen::VectorXd reduced_costs;  // one per variable
  double objective = 0.0;
  std::int64_t iterations = 0;

  bool optimal() const { return status == LpStatus::optimal; }
};

LpSolution solve_lp(const LinearProgram& lp, const SimplexOptions<double>& options = {});

// Same optimum as solve_lp. Rows listed in `lazy` start out of the model;
// after each solve up to rows_per_round of the most violated ones are added
// until none is violated. Duals of rows never added are zero.
LpSolution solve_lp_lazy(const LinearProgram& lp, const std::vector<Eigen::Index>& lazy, int rows_per_round = 64,
                         const SimplexOptions<double>& options = {});

// CPLEX-style LP text; names are sanitized to [A-Za-z0-9_].
void write_lp_file(const LinearProgram& lp, std::ostream& out);
std::string sanitize_lp_name(const std::string& name);

// Residual diagnostics used by tests and by callers that want to audit a solution.
struct LpAudit {
  double primal_infeasibility = 0.0;
  double complementary_slackness = 0.0;
  double dual_infeasibility = 0.0;
  double duality_gap = 0.0;
};
LpAudit audit_solution(const LinearProgram& lp, const LpSolution& sol);

}  // namespace gridclear
