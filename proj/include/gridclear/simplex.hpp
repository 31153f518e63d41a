#pragma once

// Dense bounded-variable revised simplex.
//
// Internal form: every row i gets a logical column r_i = a_i x, so the
// constraint system is  A x - r = 0  with box bounds on both x and r.
// Rows that cannot start with their logical in the basis get an artificial
// column, which phase 1 drives to zero. The basis inverse is kept dense and
// updated in product form, with periodic refactorization through Eigen's LU.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

namespace gridclear {

enum class LpStatus { optimal, infeasible, unbounded, numerical_failure, iteration_limit, cutoff };

inline const char* to_string(LpStatus s) {
  switch (s) {
    case LpStatus::optimal: return "optimal";
    case LpStatus::infeasible: return "infeasible";
    case LpStatus::unbounded: return "unbounded";
    case LpStatus::numerical_failure: return "numerical_failure";
    case LpStatus::iteration_limit: return "iteration_limit";
    case LpStatus::cutoff: return "cutoff";
  }
  return "unknown";
}

template <typename Scalar>
struct SimplexOptions {
  Scalar primal_tolerance = Scalar(1e-9);
  Scalar dual_tolerance = Scalar(1e-9);
  Scalar pivot_tolerance = Scalar(1e-9);
  int refactor_interval = 64;
  // Consecutive degenerate pivots before switching to Bland's rule.
  int degenerate_limit = 40;
  std::int64_t max_iterations = 200000;
};

template <typename Scalar>
class RevisedSimplex {
 public:
  using Index = Eigen::Index;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using SparseMatrix = Eigen::SparseMatrix<Scalar, Eigen::ColMajor>;
  using SparseVector = Eigen::SparseVector<Scalar>;

  static constexpr Scalar kInf = std::numeric_limits<Scalar>::infinity();

  RevisedSimplex(SparseMatrix a, Vector col_lower, Vector col_upper, Vector row_lower,
                 Vector row_upper, SimplexOptions<Scalar> options = {})
      : a_(std::move(a)), options_(options) {
    a_.makeCompressed();
    n_ = a_.cols();
    m_ = a_.rows();
    if (col_lower.size() != n_ || col_upper.size() != n_ || row_lower.size() != m_ ||
        row_upper.size() != m_) {
      throw std::invalid_argument("RevisedSimplex: bound vectors do not match matrix shape");
    }
    lower_.resize(n_ + m_);
    upper_.resize(n_ + m_);
    lower_ << col_lower, row_lower;
    upper_ << col_upper, row_upper;
    for (Index j = 0; j < n_ + m_; ++j) {
      if (lower_[j] > upper_[j]) {
        bounds_conflict_ = true;
      }
    }
    cost_ = Vector::Zero(n_);
    crash();
  }

  Index num_cols() const { return n_; }
  Index num_rows() const { return m_; }

  void set_objective(const Vector& c) {
    if (c.size() != n_) throw std::invalid_argument("RevisedSimplex: objective size mismatch");
    cost_ = c;
  }

  // Appends the row lo <= a x <= up, keeping the current basis. When the
  // current point violates the row, an artificial is introduced and the next
  // solve() restarts phase 1 from the current basis.
  void add_row(const Eigen::Ref<const Vector>& coeffs, Scalar lo, Scalar up) {
    if (coeffs.size() != n_) throw std::invalid_argument("RevisedSimplex: row size mismatch");
    // Rebuild A with the extra row.
    std::vector<Eigen::Triplet<Scalar>> trip;
    trip.reserve(static_cast<std::size_t>(a_.nonZeros() + n_));
    for (Index j = 0; j < a_.outerSize(); ++j) {
      for (typename SparseMatrix::InnerIterator it(a_, j); it; ++it) {
        trip.emplace_back(it.row(), j, it.value());
      }
    }
    for (Index j = 0; j < n_; ++j) {
      if (coeffs[j] != Scalar(0)) trip.emplace_back(m_, j, coeffs[j]);
    }
    SparseMatrix grown(m_ + 1, n_);
    grown.setFromTriplets(trip.begin(), trip.end());
    grown.makeCompressed();
    a_ = std::move(grown);

    const Index new_row = m_;
    const Index logical = n_ + m_;  // column index of the new logical before renumbering
    // Column layout is [structural | logical | artificial]; inserting a
    // logical shifts the artificial block by one.
    shift_artificials();
    ++m_;
    lower_.conservativeResize(n_ + m_ + num_artificials());
    upper_.conservativeResize(n_ + m_ + num_artificials());
    x_.conservativeResize(n_ + m_ + num_artificials());
    state_.resize(static_cast<std::size_t>(n_ + m_ + num_artificials()));
    // Move artificial data one slot to the right.
    for (Index k = num_artificials() - 1; k >= 0; --k) {
      const Index to = n_ + m_ + k;
      const Index from = to - 1;
      lower_[to] = lower_[from];
      upper_[to] = upper_[from];
      x_[to] = x_[from];
      state_[static_cast<std::size_t>(to)] = state_[static_cast<std::size_t>(from)];
    }
    lower_[logical] = lo;
    upper_[logical] = up;
    if (lo > up) bounds_conflict_ = true;

    Scalar activity = 0;
    for (Index j = 0; j < n_; ++j) activity += coeffs[j] * x_[j];

    Index basic_col;
    Scalar beta;
    if (activity >= lo - options_.primal_tolerance && activity <= up + options_.primal_tolerance) {
      basic_col = logical;
      beta = Scalar(-1);
      x_[logical] = activity;
      state_[static_cast<std::size_t>(logical)] = VarState::basic;
    } else {
      const Scalar target = activity < lo ? lo : up;
      x_[logical] = target;
      state_[static_cast<std::size_t>(logical)] =
          activity < lo ? VarState::at_lower : VarState::at_upper;
      // a x - r + sigma * art = 0  =>  art = (r - a x) / sigma >= 0
      const Scalar sigma = (target - activity) >= 0 ? Scalar(1) : Scalar(-1);
      art_row_.push_back(new_row);
      art_sign_.push_back(sigma);
      const Index art = n_ + m_ + num_artificials() - 1;
      lower_.conservativeResize(art + 1);
      upper_.conservativeResize(art + 1);
      x_.conservativeResize(art + 1);
      state_.resize(static_cast<std::size_t>(art + 1));
      lower_[art] = 0;
      upper_[art] = kInf;
      x_[art] = std::abs(target - activity);
      state_[static_cast<std::size_t>(art)] = VarState::basic;
      basic_col = art;
      beta = sigma;
    }

    // Extend the basis inverse: B' = [[B, 0], [r^T, beta]].
    Vector r(m_ - 1);
    for (Index i = 0; i < m_ - 1; ++i) {
      const Index col = basis_[static_cast<std::size_t>(i)];
      r[i] = col < n_ ? coeffs[col] : Scalar(0);
    }
    Matrix grown_inv = Matrix::Zero(m_, m_);
    grown_inv.topLeftCorner(m_ - 1, m_ - 1) = binv_;
    grown_inv.block(m_ - 1, 0, 1, m_ - 1) = -(r.transpose() * binv_) / beta;
    grown_inv(m_ - 1, m_ - 1) = Scalar(1) / beta;
    binv_ = std::move(grown_inv);
    basis_.push_back(basic_col);
  }

  // Minimizes c x. With a cutoff, phase 2 stops as soon as a feasible basis
  // reaches an objective strictly below it (status cutoff).
  LpStatus solve(std::optional<Scalar> cutoff = std::nullopt) {
    iterations_ = 0;
    if (bounds_conflict_) return status_ = LpStatus::infeasible;
    if (has_active_artificials()) {
      const LpStatus s = run_phase(true, std::nullopt);
      if (s != LpStatus::optimal) return status_ = s;
      if (phase_objective(true) > options_.primal_tolerance * Scalar(10) * (Scalar(1) + artificial_scale_)) {
        return status_ = LpStatus::infeasible;
      }
      retire_artificials();
    }
    LpStatus s = run_phase(false, cutoff);
    if (s == LpStatus::optimal && since_refactor_ > 0 &&
        max_primal_violation() > Scalar(1e-9) * (Scalar(1) + value_scale())) {
      refactor();
      if (max_primal_violation() > Scalar(1e-7) * (Scalar(1) + value_scale())) {
        // One more pass from the refactored point usually repairs drift.
        s = run_phase(false, cutoff);
        if (s == LpStatus::optimal && max_primal_violation() > Scalar(1e-6) * (Scalar(1) + value_scale())) {
          s = LpStatus::numerical_failure;
        }
      }
    }
    return status_ = s;
  }

  LpStatus status() const { return status_; }
  std::int64_t iterations() const { return iterations_; }

  Vector primal() const { return x_.head(n_); }
  Vector row_activity() const { return x_.segment(n_, m_); }
  Scalar objective() const { return cost_.dot(x_.head(n_)); }

  // Row duals y with  c - A^T y  = reduced costs; d(objective)/d(row bound).
  Vector duals() const {
    Vector cb(m_);
    for (Index i = 0; i < m_; ++i) {
      const Index col = basis_[static_cast<std::size_t>(i)];
      cb[i] = col < n_ ? cost_[col] : Scalar(0);
    }
    return (cb.transpose() * binv_).transpose();
  }

  Vector reduced_costs() const {
    const Vector y = duals();
    Vector d = cost_;
    d.noalias() -= a_.transpose() * y;
    return d;
  }

 private:
  enum class VarState : std::uint8_t { basic, at_lower, at_upper, free_zero };

  Index num_artificials() const { return static_cast<Index>(art_row_.size()); }
  Index total_cols() const { return n_ + m_ + num_artificials(); }

  void shift_artificials() {
    for (auto& col : basis_) {
      if (col >= n_ + m_) ++col;
    }
  }

  bool has_active_artificials() const {
    for (Index k = 0; k < num_artificials(); ++k) {
      if (upper_[n_ + m_ + k] > 0) return true;
    }
    return false;
  }

  Scalar column_cost(Index j, bool phase1) const {
    if (phase1) return j >= n_ + m_ ? Scalar(1) : Scalar(0);
    return j < n_ ? cost_[j] : Scalar(0);
  }

  // y^T a_j for column j.
  Scalar dot_column(const Vector& y, Index j) const {
    if (j < n_) {
      Scalar s = 0;
      for (typename SparseMatrix::InnerIterator it(a_, j); it; ++it) s += y[it.row()] * it.value();
      return s;
    }
    if (j < n_ + m_) return -y[j - n_];
    const Index k = j - n_ - m_;
    return art_sign_[static_cast<std::size_t>(k)] * y[art_row_[static_cast<std::size_t>(k)]];
  }

  // B^{-1} a_j.
  Vector ftran(Index j) const {
    if (j < n_) {
      Vector out = Vector::Zero(m_);
      for (typename SparseMatrix::InnerIterator it(a_, j); it; ++it) {
        out.noalias() += it.value() * binv_.col(it.row());
      }
      return out;
    }
    if (j < n_ + m_) return -binv_.col(j - n_);
    const Index k = j - n_ - m_;
    return art_sign_[static_cast<std::size_t>(k)] * binv_.col(art_row_[static_cast<std::size_t>(k)]);
  }

  void crash() {
    x_ = Vector::Zero(n_ + m_);
    state_.assign(static_cast<std::size_t>(n_ + m_), VarState::at_lower);
    for (Index j = 0; j < n_; ++j) {
      place_nonbasic(j);
    }
    const Vector activity = a_ * x_.head(n_);
    basis_.clear();
    art_row_.clear();
    art_sign_.clear();
    artificial_scale_ = 0;
    for (Index i = 0; i < m_; ++i) {
      const Index logical = n_ + i;
      const Scalar act = activity[i];
      if (act >= lower_[logical] && act <= upper_[logical]) {
        x_[logical] = act;
        state_[static_cast<std::size_t>(logical)] = VarState::basic;
        basis_.push_back(logical);
      } else {
        place_nonbasic(logical);
        const Scalar target = x_[logical];
        art_row_.push_back(i);
        art_sign_.push_back((target - act) >= 0 ? Scalar(1) : Scalar(-1));
        basis_.push_back(-1);  // patched below once artificial indices are final
        artificial_scale_ = std::max(artificial_scale_, std::abs(target - act));
      }
    }
    const Index total = total_cols();
    lower_.conservativeResize(total);
    upper_.conservativeResize(total);
    x_.conservativeResize(total);
    state_.resize(static_cast<std::size_t>(total));
    for (Index k = 0; k < num_artificials(); ++k) {
      const Index col = n_ + m_ + k;
      const Index row = art_row_[static_cast<std::size_t>(k)];
      lower_[col] = 0;
      upper_[col] = kInf;
      x_[col] = std::abs(x_[n_ + row] - activity[row]);
      state_[static_cast<std::size_t>(col)] = VarState::basic;
      basis_[static_cast<std::size_t>(row)] = col;
    }
    refactor();
  }

  void place_nonbasic(Index j) {
    const bool lo_finite = std::isfinite(lower_[j]);
    const bool up_finite = std::isfinite(upper_[j]);
    if (lo_finite && up_finite) {
      // Start at the bound closer to zero.
      if (std::abs(lower_[j]) <= std::abs(upper_[j])) {
        x_[j] = lower_[j];
        state_[static_cast<std::size_t>(j)] = VarState::at_lower;
      } else {
        x_[j] = upper_[j];
        state_[static_cast<std::size_t>(j)] = VarState::at_upper;
      }
    } else if (lo_finite) {
      x_[j] = lower_[j];
      state_[static_cast<std::size_t>(j)] = VarState::at_lower;
    } else if (up_finite) {
      x_[j] = upper_[j];
      state_[static_cast<std::size_t>(j)] = VarState::at_upper;
    } else {
      x_[j] = 0;
      state_[static_cast<std::size_t>(j)] = VarState::free_zero;
    }
  }

  // Artificials are fixed at zero once feasibility is reached; basic ones
  // remain as degenerate placeholders.
  void retire_artificials() {
    for (Index k = 0; k < num_artificials(); ++k) {
      const Index col = n_ + m_ + k;
      upper_[col] = 0;
      if (state_[static_cast<std::size_t>(col)] != VarState::basic) {
        x_[col] = 0;
        state_[static_cast<std::size_t>(col)] = VarState::at_lower;
      } else {
        x_[col] = std::max(Scalar(0), std::min(x_[col], Scalar(0)));
      }
    }
  }

  Scalar phase_objective(bool phase1) const {
    if (phase1) {
      Scalar s = 0;
      for (Index k = 0; k < num_artificials(); ++k) s += x_[n_ + m_ + k];
      return s;
    }
    return objective();
  }

  Scalar value_scale() const {
    Scalar s = 0;
    for (Index j = 0; j < total_cols(); ++j) {
      if (std::isfinite(x_[j])) s = std::max(s, std::abs(x_[j]));
    }
    return s;
  }

  Scalar max_primal_violation() const {
    Scalar worst = 0;
    for (Index j = 0; j < total_cols(); ++j) {
      worst = std::max(worst, lower_[j] - x_[j]);
      worst = std::max(worst, x_[j] - upper_[j]);
    }
    // Row equations A x - r + art = 0.
    Vector resid = a_ * x_.head(n_) - x_.segment(n_, m_);
    for (Index k = 0; k < num_artificials(); ++k) {
      resid[art_row_[static_cast<std::size_t>(k)]] += art_sign_[static_cast<std::size_t>(k)] * x_[n_ + m_ + k];
    }
    if (m_ > 0) worst = std::max(worst, resid.cwiseAbs().maxCoeff());
    return worst;
  }

  bool refactor() {
    Matrix b = Matrix::Zero(m_, m_);
    for (Index i = 0; i < m_; ++i) {
      const Index col = basis_[static_cast<std::size_t>(i)];
      if (col < n_) {
        for (typename SparseMatrix::InnerIterator it(a_, col); it; ++it) b(it.row(), i) = it.value();
      } else if (col < n_ + m_) {
        b(col - n_, i) = Scalar(-1);
      } else {
        const Index k = col - n_ - m_;
        b(art_row_[static_cast<std::size_t>(k)], i) = art_sign_[static_cast<std::size_t>(k)];
      }
    }
    if (m_ == 0) {
      binv_.resize(0, 0);
      return true;
    }
    Eigen::PartialPivLU<Matrix> lu(b);
    const Scalar det_scale = lu.matrixLU().diagonal().cwiseAbs().minCoeff();
    if (!(det_scale > Scalar(1e-13))) {
      singular_ = true;
      return false;
    }
    binv_ = lu.inverse();
    since_refactor_ = 0;
    recompute_basic_values();
    return true;
  }

  void recompute_basic_values() {
    // B x_B = -N x_N  (all row equations have zero right-hand side)
    Vector rhs = Vector::Zero(m_);
    for (Index j = 0; j < total_cols(); ++j) {
      if (state_[static_cast<std::size_t>(j)] == VarState::basic || x_[j] == Scalar(0)) continue;
      if (j < n_) {
        for (typename SparseMatrix::InnerIterator it(a_, j); it; ++it) rhs[it.row()] -= it.value() * x_[j];
      } else if (j < n_ + m_) {
        rhs[j - n_] += x_[j];
      } else {
        const Index k = j - n_ - m_;
        rhs[art_row_[static_cast<std::size_t>(k)]] -= art_sign_[static_cast<std::size_t>(k)] * x_[j];
      }
    }
    const Vector xb = binv_ * rhs;
    for (Index i = 0; i < m_; ++i) x_[basis_[static_cast<std::size_t>(i)]] = xb[i];
  }

  LpStatus run_phase(bool phase1, std::optional<Scalar> cutoff) {
    const Scalar ptol = options_.primal_tolerance;
    const Scalar dtol = options_.dual_tolerance;
    int degenerate_run = 0;
    bool bland = false;
    Vector cb(m_);
    while (true) {
      if (iterations_ >= options_.max_iterations) return LpStatus::iteration_limit;
      if (singular_) return LpStatus::numerical_failure;
      if (!phase1 && cutoff && objective() < *cutoff) return LpStatus::cutoff;

      for (Index i = 0; i < m_; ++i) cb[i] = column_cost(basis_[static_cast<std::size_t>(i)], phase1);
      const Vector y = (cb.transpose() * binv_).transpose();

      // Pricing.
      Index entering = -1;
      Scalar best = 0;
      Scalar entering_d = 0;
      const Index cols = total_cols();
      for (Index j = 0; j < cols; ++j) {
        const VarState st = state_[static_cast<std::size_t>(j)];
        if (st == VarState::basic) continue;
        if (lower_[j] == upper_[j]) continue;
        const Scalar d = column_cost(j, phase1) - dot_column(y, j);
        Scalar score = 0;
        if (st == VarState::at_lower && d < -dtol) score = -d;
        else if (st == VarState::at_upper && d > dtol) score = d;
        else if (st == VarState::free_zero && std::abs(d) > dtol) score = std::abs(d);
        if (score <= 0) continue;
        if (bland) {
          entering = j;
          entering_d = d;
          break;
        }
        if (score > best) {
          best = score;
          entering = j;
          entering_d = d;
        }
      }
      if (entering < 0) return LpStatus::optimal;

      const Scalar dir = entering_d < 0 ? Scalar(1) : Scalar(-1);
      const Vector alpha = ftran(entering);

      // Harris two-pass ratio test. delta_i = change of basic i per unit step.
      Scalar theta_relaxed = upper_[entering] - lower_[entering];
      for (Index i = 0; i < m_; ++i) {
        const Scalar delta = -dir * alpha[i];
        if (std::abs(delta) <= options_.pivot_tolerance) continue;
        const Index col = basis_[static_cast<std::size_t>(i)];
        if (delta < 0 && std::isfinite(lower_[col])) {
          theta_relaxed = std::min(theta_relaxed, (x_[col] - lower_[col] + ptol) / -delta);
        } else if (delta > 0 && std::isfinite(upper_[col])) {
          theta_relaxed = std::min(theta_relaxed, (upper_[col] - x_[col] + ptol) / delta);
        }
      }
      if (!std::isfinite(theta_relaxed)) {
        if (phase1) return LpStatus::numerical_failure;
        return LpStatus::unbounded;
      }
      Index leave = -1;
      Scalar leave_mag = 0;
      Scalar theta = 0;
      for (Index i = 0; i < m_; ++i) {
        const Scalar delta = -dir * alpha[i];
        if (std::abs(delta) <= options_.pivot_tolerance) continue;
        const Index col = basis_[static_cast<std::size_t>(i)];
        Scalar ratio;
        if (delta < 0 && std::isfinite(lower_[col])) {
          ratio = (x_[col] - lower_[col]) / -delta;
        } else if (delta > 0 && std::isfinite(upper_[col])) {
          ratio = (upper_[col] - x_[col]) / delta;
        } else {
          continue;
        }
        if (ratio > theta_relaxed) continue;
        const Scalar mag = std::abs(delta);
        bool take = false;
        if (leave < 0) take = true;
        else if (bland) take = col < basis_[static_cast<std::size_t>(leave)];
        else take = mag > leave_mag;
        if (take) {
          leave = i;
          leave_mag = mag;
          theta = ratio;
        }
      }
      const Scalar flip_range = upper_[entering] - lower_[entering];
      bool bound_flip = false;
      if (leave < 0 || (std::isfinite(flip_range) && flip_range <= theta)) {
        if (!std::isfinite(flip_range)) {
          return phase1 ? LpStatus::numerical_failure : LpStatus::unbounded;
        }
        bound_flip = true;
        theta = flip_range;
      }
      theta = std::max(theta, Scalar(0));

      ++iterations_;
      if (theta <= ptol) {
        if (++degenerate_run > options_.degenerate_limit) bland = true;
      } else {
        degenerate_run = 0;
        bland = false;
      }

      // Move.
      x_[entering] += dir * theta;
      for (Index i = 0; i < m_; ++i) {
        x_[basis_[static_cast<std::size_t>(i)]] += -dir * alpha[i] * theta;
      }
      if (bound_flip) {
        VarState& st = state_[static_cast<std::size_t>(entering)];
        st = dir > 0 ? VarState::at_upper : VarState::at_lower;
        x_[entering] = dir > 0 ? upper_[entering] : lower_[entering];
        continue;
      }

      const Index leaving_col = basis_[static_cast<std::size_t>(leave)];
      const Scalar delta_leave = -dir * alpha[leave];
      if (delta_leave < 0) {
        x_[leaving_col] = lower_[leaving_col];
        state_[static_cast<std::size_t>(leaving_col)] = VarState::at_lower;
      } else {
        x_[leaving_col] = upper_[leaving_col];
        state_[static_cast<std::size_t>(leaving_col)] = VarState::at_upper;
      }
      if (leaving_col >= n_ + m_ && phase1) {
        // An artificial that left the basis never needs to re-enter.
        upper_[leaving_col] = 0;
        x_[leaving_col] = 0;
        state_[static_cast<std::size_t>(leaving_col)] = VarState::at_lower;
      }
      state_[static_cast<std::size_t>(entering)] = VarState::basic;
      basis_[static_cast<std::size_t>(leave)] = entering;

      // Product-form update of the inverse.
      const Scalar pivot = alpha[leave];
      const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> pivot_row = binv_.row(leave) / pivot;
      binv_.noalias() -= alpha * pivot_row;
      binv_.row(leave) = pivot_row;
      if (++since_refactor_ >= options_.refactor_interval) {
        if (!refactor()) return LpStatus::numerical_failure;
      }
    }
  }

  SparseMatrix a_;
  SimplexOptions<Scalar> options_;
  Index n_ = 0;
  Index m_ = 0;
  Vector lower_;
  Vector upper_;
  Vector cost_;
  Vector x_;
  std::vector<VarState> state_;
  std::vector<Index> basis_;
  std::vector<Index> art_row_;
  std::vector<Scalar> art_sign_;
  Matrix binv_;
  Scalar artificial_scale_ = 0;
  int since_refactor_ = 0;
  std::int64_t iterations_ = 0;
  bool bounds_conflict_ = false;
  bool singular_ = false;
  LpStatus status_ = LpStatus::numerical_failure;
};

}  // namespace gridclear
