#pragma once

// max c.x  s.t.  G x <= h,  lower <= x <= upper,  sum of x over each group = 0
//
// Solved through its dual, whose basis is d x d regardless of how many rows
// G has. The current basis always describes a vertex x of the primal region
// (once optimal), so a new objective only needs dual simplex steps on the
// dual problem and a new row only needs primal steps. Bounds must be finite.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

namespace gridclear {

template <typename Scalar>
class VertexLp {
 public:
  using Index = Eigen::Index;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  enum class Status { optimal, unbounded, infeasible, failure };

  VertexLp(Vector lower, Vector upper, const std::vector<std::vector<Index>>& groups)
      : lower_(std::move(lower)), upper_(std::move(upper)), d_(lower_.size()) {
    if (upper_.size() != d_) throw std::invalid_argument("VertexLp: bound size mismatch");
    group_of_.assign(static_cast<std::size_t>(d_), -1);
    Scalar scale = 0;
    for (Index j = 0; j < d_; ++j) {
      if (!std::isfinite(lower_[j]) || !std::isfinite(upper_[j]) || lower_[j] > upper_[j]) {
        throw std::invalid_argument("VertexLp: bounds must be finite and ordered");
      }
      scale = std::max({scale, std::abs(lower_[j]), std::abs(upper_[j])});
    }
    for (std::size_t g = 0; g < groups.size(); ++g) {
      for (Index j : groups[g]) group_of_[static_cast<std::size_t>(j)] = static_cast<Index>(g);
    }
    groups_ = groups;
    tol_ = Scalar(1e-9) * (Scalar(1) + scale);
    g_.resize(16, d_);
    h_.resize(16);
    up_pos_.assign(static_cast<std::size_t>(d_), -1);
    lo_pos_.assign(static_cast<std::size_t>(d_), -1);
    c_ = Vector::Zero(d_);
    if (!initial_basis()) throw std::invalid_argument("VertexLp: bounds and balance admit no point");
  }

  Index num_rows() const { return n_; }
  std::int64_t iterations() const { return iterations_; }
  const Vector& point() const { return x_; }
  Scalar value() const { return c_.dot(x_); }
  const char* failure_reason() const { return reason_; }

  void set_objective(const Vector& c) {
    if (c.size() != d_) throw std::invalid_argument("VertexLp: objective size mismatch");
    c_ = c;
    lam_ = binv_ * c_;
  }

  // Appends g.x <= h and re-optimizes.
  Status add_row(const Eigen::Ref<const Vector>& g, Scalar h) {
    if (g.size() != d_) throw std::invalid_argument("VertexLp: row size mismatch");
    if (n_ == g_.rows()) {
      g_.conservativeResize(2 * n_, Eigen::NoChange);
      h_.conservativeResize(2 * n_);
    }
    g_.row(n_) = g.transpose();
    h_[n_] = h;
    row_pos_.push_back(-1);
    ++n_;
    tol_ = std::max(tol_, Scalar(1e-9) * (Scalar(1) + std::abs(h)));
    redc_.conservativeResize(n_);
    redc_[n_ - 1] = h - g.dot(x_);
    return solve();
  }

  Status solve() {
    iterations_ = 0;
    int degenerate = 0;
    const std::int64_t limit = 50 * (d_ + n_) + 1000;
    while (true) {
      if (iterations_ >= limit) return fail("iteration limit");
      const bool bland = degenerate > 50;
      const Col q = most_negative_reduced_cost(bland);
      const Index r = most_negative_multiplier(bland);
      if (q.kind == Kind::none && r < 0) return Status::optimal;
      bool moved;
      bool primal = q.kind != Kind::none;
      if (primal && r >= 0) {
        // Harris steps leave small infeasibilities; take the side whose
        // violation is small enough to be drift.
        const Scalar loose = Scalar(1e3) * tol_;
        if (lam_[r] >= -loose) {
          primal = true;
        } else if (reduced_cost(q) >= -loose) {
          primal = false;
        } else {
          return fail("basis lost both primal and dual feasibility");
        }
      }
      if (primal) {
        const auto s = primal_step(q, bland, moved);
        if (s != Status::optimal) return s;
      } else {
        const auto s = dual_step(r, bland, moved);
        if (s != Status::optimal) return s;
      }
      ++iterations_;
      degenerate = moved ? 0 : degenerate + 1;
      if (singular_) return fail("singular basis");
    }
  }

 private:
  Status fail(const char* why) {
    reason_ = why;
    return Status::failure;
  }

  enum class Kind : std::uint8_t { none, row, up, lo, balance };
  struct Col {
    Kind kind = Kind::none;
    Index idx = 0;
  };

  // Initial vertex: every coordinate at a bound except one per balance group.
  bool initial_basis() {
    basis_.clear();
    x_ = Vector::Zero(d_);
    for (Index j = 0; j < d_; ++j) {
      if (group_of_[static_cast<std::size_t>(j)] < 0) x_[j] = upper_[j];
    }
    std::vector<Index> pivot(groups_.size(), -1);
    for (std::size_t g = 0; g < groups_.size(); ++g) {
      Scalar need = 0;
      for (Index j : groups_[g]) {
        x_[j] = lower_[j];
        need -= lower_[j];
      }
      for (Index j : groups_[g]) {
        if (lower_[j] == upper_[j]) continue;
        const Scalar step = std::min(need, upper_[j] - lower_[j]);
        if (step > 0) {
          x_[j] += step;
          need -= step;
        }
        pivot[g] = j;
        if (need <= 0) break;
      }
      if (std::abs(need) > tol_) return false;
      if (pivot[g] < 0) {
        if (groups_[g].empty()) return false;
        pivot[g] = groups_[g].front();
      }
    }
    for (Index j = 0; j < d_; ++j) {
      const Index g = group_of_[static_cast<std::size_t>(j)];
      if (g >= 0 && pivot[static_cast<std::size_t>(g)] == j) continue;
      const bool at_upper = x_[j] == upper_[j];
      push_basic(Col{at_upper ? Kind::up : Kind::lo, j});
    }
    for (std::size_t g = 0; g < groups_.size(); ++g) push_basic(Col{Kind::balance, static_cast<Index>(g)});
    if (static_cast<Index>(basis_.size()) != d_) return false;
    if (!refactor()) return false;
    lam_ = binv_ * c_;
    redc_.resize(0);
    return true;
  }

  void push_basic(Col c) {
    const Index pos = static_cast<Index>(basis_.size());
    basis_.push_back(c);
    mark(c, pos);
  }

  void mark(Col c, Index pos) {
    switch (c.kind) {
      case Kind::row: row_pos_[static_cast<std::size_t>(c.idx)] = pos; break;
      case Kind::up: up_pos_[static_cast<std::size_t>(c.idx)] = pos; break;
      case Kind::lo: lo_pos_[static_cast<std::size_t>(c.idx)] = pos; break;
      default: break;
    }
  }

  Vector column(Col c) const {
    Vector a = Vector::Zero(d_);
    switch (c.kind) {
      case Kind::row: a = g_.row(c.idx).transpose(); break;
      case Kind::up: a[c.idx] = 1; break;
      case Kind::lo: a[c.idx] = -1; break;
      case Kind::balance:
        for (Index j : groups_[static_cast<std::size_t>(c.idx)]) a[j] = 1;
        break;
      default: break;
    }
    return a;
  }

  Scalar cost(Col c) const {
    switch (c.kind) {
      case Kind::row: return h_[c.idx];
      case Kind::up: return upper_[c.idx];
      case Kind::lo: return -lower_[c.idx];
      default: return 0;
    }
  }

  // Deterministic column order for Bland's rule.
  Index ordinal(Col c) const {
    switch (c.kind) {
      case Kind::row: return c.idx;
      case Kind::up: return n_ + 2 * c.idx;
      case Kind::lo: return n_ + 2 * c.idx + 1;
      default: return std::numeric_limits<Index>::max();
    }
  }

  bool refactor() {
    Matrix b(d_, d_);
    for (Index k = 0; k < d_; ++k) b.col(k) = column(basis_[static_cast<std::size_t>(k)]);
    Eigen::FullPivLU<Matrix> lu(b);
    if (lu.rank() < d_) {
      singular_ = true;
      return false;
    }
    binv_ = lu.inverse();
    since_refactor_ = 0;
    recompute();
    return true;
  }

  void recompute() {
    Vector cb(d_);
    for (Index k = 0; k < d_; ++k) cb[k] = cost(basis_[static_cast<std::size_t>(k)]);
    x_ = binv_.transpose() * cb;
    lam_ = binv_ * c_;
    redc_ = h_.head(n_) - g_.topRows(n_) * x_;
  }

  Scalar reduced_cost(Col c) const {
    switch (c.kind) {
      case Kind::row: return redc_[c.idx];
      case Kind::up: return upper_[c.idx] - x_[c.idx];
      case Kind::lo: return x_[c.idx] - lower_[c.idx];
      default: return 0;
    }
  }

  Col most_negative_reduced_cost(bool bland) const {
    Col best;
    Scalar value = -tol_;
    Index best_ord = std::numeric_limits<Index>::max();
    auto consider = [&](Col c, Scalar r) {
      if (r >= -tol_) return;
      if (bland) {
        const Index o = ordinal(c);
        if (o < best_ord) {
          best_ord = o;
          best = c;
        }
      } else if (r < value) {
        value = r;
        best = c;
      }
    };
    for (Index k = 0; k < n_; ++k) {
      if (row_pos_[static_cast<std::size_t>(k)] < 0) consider(Col{Kind::row, k}, redc_[k]);
    }
    for (Index j = 0; j < d_; ++j) {
      if (up_pos_[static_cast<std::size_t>(j)] < 0) consider(Col{Kind::up, j}, upper_[j] - x_[j]);
      if (lo_pos_[static_cast<std::size_t>(j)] < 0) consider(Col{Kind::lo, j}, x_[j] - lower_[j]);
    }
    return best;
  }

  Index most_negative_multiplier(bool bland) const {
    Index best = -1;
    Scalar value = -tol_;
    Index best_ord = std::numeric_limits<Index>::max();
    for (Index k = 0; k < d_; ++k) {
      const Col c = basis_[static_cast<std::size_t>(k)];
      if (c.kind == Kind::balance || lam_[k] >= -tol_) continue;
      if (bland) {
        if (ordinal(c) < best_ord) {
          best_ord = ordinal(c);
          best = k;
        }
      } else if (lam_[k] < value) {
        value = lam_[k];
        best = k;
      }
    }
    return best;
  }

  Status primal_step(Col q, bool bland, bool& moved) {
    const Vector alpha = binv_ * column(q);
    const Scalar piv = Scalar(1e-9);
    Scalar bound = std::numeric_limits<Scalar>::infinity();
    for (Index k = 0; k < d_; ++k) {
      if (basis_[static_cast<std::size_t>(k)].kind == Kind::balance || alpha[k] <= piv) continue;
      bound = std::min(bound, (std::max(lam_[k], Scalar(0)) + tol_) / alpha[k]);
    }
    if (!std::isfinite(bound)) return Status::infeasible;
    Index r = -1;
    Scalar best = 0;
    Scalar theta = 0;
    for (Index k = 0; k < d_; ++k) {
      if (basis_[static_cast<std::size_t>(k)].kind == Kind::balance || alpha[k] <= piv) continue;
      const Scalar ratio = std::max(lam_[k], Scalar(0)) / alpha[k];
      if (ratio > bound) continue;
      bool take;
      if (r < 0) take = true;
      else if (bland) take = ordinal(basis_[static_cast<std::size_t>(k)]) < ordinal(basis_[static_cast<std::size_t>(r)]);
      else take = alpha[k] > best;
      if (take) {
        r = k;
        best = alpha[k];
        theta = ratio;
      }
    }
    moved = theta > tol_;
    pivot(r, q, alpha);
    return Status::optimal;
  }

  Status dual_step(Index r, bool bland, bool& moved) {
    const Vector rho = binv_.row(r).transpose();
    const Vector alpha_rows = g_.topRows(n_) * rho;
    const Scalar piv = Scalar(1e-9);
    Scalar bound = std::numeric_limits<Scalar>::infinity();
    auto scan = [&](auto&& visit) {
      for (Index k = 0; k < n_; ++k) {
        if (row_pos_[static_cast<std::size_t>(k)] < 0) visit(Col{Kind::row, k}, alpha_rows[k], redc_[k]);
      }
      for (Index j = 0; j < d_; ++j) {
        if (up_pos_[static_cast<std::size_t>(j)] < 0) visit(Col{Kind::up, j}, rho[j], upper_[j] - x_[j]);
        if (lo_pos_[static_cast<std::size_t>(j)] < 0) visit(Col{Kind::lo, j}, -rho[j], x_[j] - lower_[j]);
      }
    };
    scan([&](Col, Scalar a, Scalar rc) {
      if (a < -piv) bound = std::min(bound, (std::max(rc, Scalar(0)) + tol_) / -a);
    });
    if (!std::isfinite(bound)) return Status::unbounded;
    Col q;
    Scalar best = 0;
    Scalar step = 0;
    scan([&](Col c, Scalar a, Scalar rc) {
      if (a >= -piv) return;
      const Scalar ratio = std::max(rc, Scalar(0)) / -a;
      if (ratio > bound) return;
      bool take;
      if (q.kind == Kind::none) take = true;
      else if (bland) take = ordinal(c) < ordinal(q);
      else take = -a > best;
      if (take) {
        q = c;
        best = -a;
        step = ratio;
      }
    });
    moved = step > tol_;
    pivot(r, q, binv_ * column(q));
    return Status::optimal;
  }

  void pivot(Index r, Col q, const Vector& alpha) {
    const Col out = basis_[static_cast<std::size_t>(r)];
    mark(out, -1);
    basis_[static_cast<std::size_t>(r)] = q;
    mark(q, r);
    const Scalar p = alpha[r];
    const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> pivot_row = binv_.row(r) / p;
    binv_.noalias() -= alpha * pivot_row;
    binv_.row(r) = pivot_row;
    if (++since_refactor_ >= 64) {
      refactor();
    } else {
      recompute();
    }
  }

  Vector lower_;
  Vector upper_;
  Index d_;
  std::vector<std::vector<Index>> groups_;
  std::vector<Index> group_of_;
  Scalar tol_ = Scalar(1e-9);
  Matrix g_;
  Vector h_;
  Index n_ = 0;
  std::vector<Col> basis_;
  std::vector<Index> row_pos_;
  std::vector<Index> up_pos_;
  std::vector<Index> lo_pos_;
  Matrix binv_;
  Vector c_;
  Vector x_;
  Vector lam_;
  Vector redc_;
  int since_refactor_ = 0;
  bool singular_ = false;
  std::int64_t iterations_ = 0;
  const char* reason_ = "";
};

}  // namespace gridclear
