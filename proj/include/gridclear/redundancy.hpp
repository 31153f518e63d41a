#pragma once

// Redundant-row elimination for  {x : A x <= b, lower <= x <= upper, balance}.
//
// reduce() runs, in order: a projected presolve (zero rows, duplicates,
// rows implied by the box and balance alone), a max-slack LP for an interior
// point, ray shooting from that point along each row normal, and finally
// per-row LP tests against a growing essential set (Clarkson's scheme: a
// failed test yields a point x*, and the first row crossed on the segment
// interior -> x* is essential).

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "gridclear/errors.hpp"
#include "gridclear/simplex.hpp"
#include "gridclear/vertex_lp.hpp"

namespace gridclear {

template <typename Scalar>
struct Polytope {
  using Index = Eigen::Index;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Matrix a;
  Vector b;
  Vector lower;
  Vector upper;
  // Disjoint index groups; the coordinates of each group sum to zero.
  std::vector<std::vector<Index>> balance;

  Index num_rows() const { return a.rows(); }
  Index dim() const { return a.cols(); }

  // Box polytope with default infinite bounds replaced by the given ones.
  static Polytope make(Matrix a, Vector b, Vector lower, Vector upper, std::vector<std::vector<Index>> balance = {}) {
    Polytope p{std::move(a), std::move(b), std::move(lower), std::move(upper), std::move(balance)};
    p.check();
    return p;
  }

  // One balance group over every coordinate.
  void set_global_balance() {
    balance.assign(1, {});
    for (Index j = 0; j < dim(); ++j) balance[0].push_back(j);
  }

  void check() const {
    if (a.rows() < 1) throw std::invalid_argument("Polytope: needs at least one row");
    if (b.size() != a.rows()) throw std::invalid_argument("Polytope: b size mismatch");
    if (lower.size() != a.cols() || upper.size() != a.cols()) throw std::invalid_argument("Polytope: bound size mismatch");
    std::vector<bool> seen(static_cast<std::size_t>(a.cols()), false);
    for (const auto& g : balance) {
      for (Index j : g) {
        if (j < 0 || j >= a.cols() || seen[static_cast<std::size_t>(j)]) {
          throw std::invalid_argument("Polytope: balance groups must be disjoint coordinate sets");
        }
        seen[static_cast<std::size_t>(j)] = true;
      }
    }
  }
};

struct RedundancyOptions {
  double tolerance = 1e-6;  // relative: row i may exceed b_i by tolerance * (1 + |b_i|)
  Eigen::Index ray_block = 64;
  Eigen::Index max_rays = 4096;  // spread evenly over the undecided rows
  // Order in which rows are LP-tested; empty means index order. Putting
  // similar rows next to each other shortens the warm-started solves.
  std::vector<Eigen::Index> order;
};

struct RedundancyStats {
  Eigen::Index rows = 0;
  Eigen::Index zero_rows = 0;
  Eigen::Index duplicates = 0;
  Eigen::Index box_redundant = 0;
  Eigen::Index ray_essential = 0;
  Eigen::Index dominated = 0;  // rows implied by one essential row and the box
  Eigen::Index lp_tested = 0;  // rows decided by LP tests
  Eigen::Index lp_solves = 0;
  std::int64_t simplex_iterations = 0;
  bool interior_point = false;
  double removal_fraction = 0.0;
  // Wall-clock seconds per phase.
  double presolve_seconds = 0.0;
  double interior_seconds = 0.0;
  double ray_seconds = 0.0;
  double lp_seconds = 0.0;
};

template <typename Scalar>
struct EssentialSet {
  std::vector<Eigen::Index> indices;  // sorted, unique
  Scalar tolerance = Scalar(1e-6);
  RedundancyStats stats;
  std::vector<std::string> warnings;
};

// Membership with tolerance tol*(1+|b_i|) on rows and tol on bounds and balance.
template <typename Scalar>
bool contains(const Polytope<Scalar>& p, const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& x, Scalar tol = Scalar(1e-6)) {
  using Index = Eigen::Index;
  if (x.size() != p.dim()) throw std::invalid_argument("contains: dimension mismatch");
  for (Index j = 0; j < x.size(); ++j) {
    if (x[j] < p.lower[j] - tol || x[j] > p.upper[j] + tol) return false;
  }
  for (const auto& g : p.balance) {
    Scalar s = 0;
    Scalar mag = 0;
    for (Index j : g) {
      s += x[j];
      mag = std::max(mag, std::abs(x[j]));
    }
    if (std::abs(s) > tol * (Scalar(1) + mag)) return false;
  }
  const auto ax = (p.a * x).eval();
  for (Index i = 0; i < p.num_rows(); ++i) {
    if (ax[i] > p.b[i] + tol * (Scalar(1) + std::abs(p.b[i]))) return false;
  }
  return true;
}

// Same region with only the listed rows kept.
template <typename Scalar>
Polytope<Scalar> subset(const Polytope<Scalar>& p, const std::vector<Eigen::Index>& rows) {
  Polytope<Scalar> out{typename Polytope<Scalar>::Matrix(static_cast<Eigen::Index>(rows.size()), p.dim()),
                       typename Polytope<Scalar>::Vector(static_cast<Eigen::Index>(rows.size())), p.lower, p.upper,
                       p.balance};
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.a.row(static_cast<Eigen::Index>(r)) = p.a.row(rows[r]);
    out.b[static_cast<Eigen::Index>(r)] = p.b[rows[r]];
  }
  return out;
}

namespace detail {

template <typename Scalar>
class RedundancyWorker {
 public:
  using Index = Eigen::Index;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Sparse = Eigen::SparseMatrix<Scalar, Eigen::ColMajor>;
  static constexpr Scalar kInf = std::numeric_limits<Scalar>::infinity();

  RedundancyWorker(const Polytope<Scalar>& p, const RedundancyOptions& opt) : p_(p), opt_(opt) {
    p_.check();
    m_ = p.num_rows();
    d_ = p.dim();
    group_.assign(static_cast<std::size_t>(d_), -1);
    for (std::size_t g = 0; g < p.balance.size(); ++g) {
      for (Index j : p.balance[g]) group_[static_cast<std::size_t>(j)] = static_cast<Index>(g);
    }
    fixed_.assign(static_cast<std::size_t>(d_), false);
    for (Index j = 0; j < d_; ++j) {
      if (p.lower[j] > p.upper[j]) throw DataError("redundancy: lower bound above upper bound in dimension " + std::to_string(j));
      fixed_[static_cast<std::size_t>(j)] = p.lower[j] == p.upper[j];
    }
  }

  // Max of a.x over the test LP {rows in `active`, bounds, balance}; nullopt if infeasible.
  std::optional<Scalar> max_over(const Vector& c, const std::vector<Index>& active) {
    auto lp = make_lp(active, /*projected=*/false);
    lp.set_objective(-c);
    const LpStatus s = lp.solve();
    ++stats_.lp_solves;
    stats_.simplex_iterations += lp.iterations();
    if (s == LpStatus::infeasible) return std::nullopt;
    if (s == LpStatus::unbounded) throw SolveError("redundancy test LP is unbounded; the polytope needs finite bounds");
    if (s != LpStatus::optimal) throw SolveError(std::string("redundancy test LP failed: ") + to_string(s));
    return -lp.objective();
  }

  Scalar tol_for(Index i) const { return Scalar(opt_.tolerance) * (Scalar(1) + std::abs(p_.b[i])); }

  EssentialSet<Scalar> run() {
    stats_.rows = m_;
    state_.assign(static_cast<std::size_t>(m_), State::undecided);
    using Clock = std::chrono::steady_clock;
    auto mark = Clock::now();
    auto lap = [&mark](double& into) {
      const auto now = Clock::now();
      into += std::chrono::duration<double>(now - mark).count();
      mark = now;
    };
    presolve();
    lap(stats_.presolve_seconds);
    find_interior_point();
    lap(stats_.interior_seconds);
    if (stats_.interior_point) {
      shoot_rays();
      lap(stats_.ray_seconds);
      clarkson();
      verify_tie_breaks();
    } else {
      sequential_tests();
    }
    lap(stats_.lp_seconds);
    EssentialSet<Scalar> out;
    for (Index i = 0; i < m_; ++i) {
      if (state_[static_cast<std::size_t>(i)] == State::essential) out.indices.push_back(i);
    }
    out.tolerance = Scalar(opt_.tolerance);
    stats_.removal_fraction = 1.0 - static_cast<double>(out.indices.size()) / static_cast<double>(m_);
    out.stats = stats_;
    out.warnings = warnings_;
    return out;
  }

 private:
  enum class State : std::uint8_t { undecided, essential, redundant };

  // Projects a onto the subspace left free by fixed coordinates and the
  // balance groups; returns the constant a.x - P(a).x on the feasible set.
  Scalar project(Eigen::Ref<Vector> a) const {
    Scalar kappa = 0;
    std::vector<Scalar> mean(p_.balance.size(), Scalar(0));
    for (std::size_t g = 0; g < p_.balance.size(); ++g) {
      Index free = 0;
      Scalar sum = 0;
      for (Index j : p_.balance[g]) {
        if (!fixed_[static_cast<std::size_t>(j)]) {
          sum += a[j];
          ++free;
        }
      }
      mean[g] = free > 0 ? sum / static_cast<Scalar>(free) : Scalar(0);
    }
    for (Index j = 0; j < d_; ++j) {
      const Index g = group_[static_cast<std::size_t>(j)];
      if (fixed_[static_cast<std::size_t>(j)]) {
        kappa += (a[j] - (g >= 0 ? mean[static_cast<std::size_t>(g)] : Scalar(0))) * p_.lower[j];
        a[j] = 0;
      } else if (g >= 0) {
        a[j] -= mean[static_cast<std::size_t>(g)];
      }
    }
    return kappa;
  }

  // max w.x over box and balance (w already projected). +inf when unbounded.
  Scalar box_max(const Vector& w) const {
    Scalar total = 0;
    for (Index j = 0; j < d_; ++j) {
      if (group_[static_cast<std::size_t>(j)] >= 0 || fixed_[static_cast<std::size_t>(j)] || w[j] == Scalar(0)) continue;
      const Scalar v = w[j] > 0 ? p_.upper[j] : p_.lower[j];
      if (!std::isfinite(v)) return kInf;
      total += w[j] * v;
    }
    std::vector<Index> order;
    for (const auto& g : p_.balance) {
      // Fractional knapsack: start at lower bounds, raise the best coordinates.
      Scalar need = 0;
      order.clear();
      for (Index j : g) {
        if (fixed_[static_cast<std::size_t>(j)]) {
          need -= p_.lower[j];
          continue;
        }
        if (!std::isfinite(p_.lower[j]) || !std::isfinite(p_.upper[j])) return kInf;
        need -= p_.lower[j];
        total += w[j] * p_.lower[j];
        order.push_back(j);
      }
      std::stable_sort(order.begin(), order.end(), [&](Index x, Index y) { return w[x] > w[y]; });
      for (Index j : order) {
        if (need <= 0) break;
        const Scalar step = std::min(need, p_.upper[j] - p_.lower[j]);
        total += w[j] * step;
        need -= step;
      }
      if (need > Scalar(1e-9) * (Scalar(1) + std::abs(need))) return -kInf;  // balance unreachable
    }
    return total;
  }

  void presolve() {
    rows_ = Matrix(m_, d_);
    rhs_ = Vector(m_);
    scale_ = Vector(m_);
    std::map<std::vector<std::int64_t>, Index> seen;
    Vector w(d_);
    for (Index i = 0; i < m_; ++i) {
      w = p_.a.row(i).transpose();
      const Scalar kappa = project(w);
      const Scalar norm = w.norm();
      const Scalar bi = p_.b[i] - kappa;
      const Scalar tol = tol_for(i);
      const Scalar ref = p_.a.row(i).cwiseAbs().maxCoeff();
      if (norm <= Scalar(1e-12) * (Scalar(1) + ref)) {
        if (bi < -tol) throw DataError("redundancy: row " + std::to_string(i) + " is infeasible on its own");
        set(i, State::redundant);
        ++stats_.zero_rows;
        rows_.row(i).setZero();
        rhs_[i] = kInf;
        scale_[i] = 0;
        continue;
      }
      rows_.row(i) = w.transpose() / norm;
      rhs_[i] = bi / norm;
      scale_[i] = norm;

      const Scalar bm = box_max(w);
      if (bm == -kInf) throw DataError("redundancy: bounds and balance admit no point");
      if (bm <= bi + tol) {
        set(i, State::redundant);
        ++stats_.box_redundant;
        continue;
      }

      // Identical direction: the smaller right-hand side wins, lowest index on ties.
      std::vector<std::int64_t> key(static_cast<std::size_t>(d_));
      for (Index j = 0; j < d_; ++j) key[static_cast<std::size_t>(j)] = std::llround(rows_(i, j) * Scalar(1e9));
      auto [it, inserted] = seen.emplace(std::move(key), i);
      if (!inserted) {
        const Index k = it->second;
        const Scalar tol_norm = std::max(tol_for(i) / scale_[i], tol_for(k) / scale_[k]);
        if (rhs_[i] < rhs_[k] - tol_norm) {
          set(k, State::redundant);
          it->second = i;
        } else {
          set(i, State::redundant);
        }
        ++stats_.duplicates;
      }
    }
  }

  void set(Index i, State s) { state_[static_cast<std::size_t>(i)] = s; }
  State state(Index i) const { return state_[static_cast<std::size_t>(i)]; }

  RevisedSimplex<Scalar> make_lp(const std::vector<Index>& active, bool projected) const {
    const Index nb = static_cast<Index>(p_.balance.size());
    const Index nrows = nb + static_cast<Index>(active.size());
    const Index ncols = d_;
    std::vector<Eigen::Triplet<Scalar>> trip;
    for (Index g = 0; g < nb; ++g) {
      for (Index j : p_.balance[static_cast<std::size_t>(g)]) trip.emplace_back(g, j, Scalar(1));
    }
    Vector rlo(nrows), rup(nrows);
    rlo.head(nb).setZero();
    rup.head(nb).setZero();
    for (std::size_t r = 0; r < active.size(); ++r) {
      const Index i = active[r];
      const Index row = nb + static_cast<Index>(r);
      for (Index j = 0; j < d_; ++j) {
        const Scalar v = projected ? rows_(i, j) : p_.a(i, j);
        if (v != Scalar(0)) trip.emplace_back(row, j, v);
      }
      rlo[row] = -kInf;
      rup[row] = projected ? rhs_[i] : p_.b[i];
    }
    Sparse a(nrows, ncols);
    a.setFromTriplets(trip.begin(), trip.end());
    Vector lo = p_.lower, up = p_.upper;
    return RevisedSimplex<Scalar>(std::move(a), std::move(lo), std::move(up), std::move(rlo), std::move(rup));
  }

  std::vector<Index> undecided() const {
    std::vector<Index> out;
    for (Index i = 0; i < m_; ++i) {
      if (state(i) == State::undecided) out.push_back(i);
    }
    return out;
  }

  // A point of box and balance strictly inside every non-fixed bound, or
  // nullopt when none exists.
  std::optional<Vector> box_center() const {
    Vector y(d_);
    for (Index j = 0; j < d_; ++j) {
      const Scalar l = p_.lower[j], u = p_.upper[j];
      if (std::isfinite(l) && std::isfinite(u)) y[j] = Scalar(0.5) * (l + u);
      else if (std::isfinite(l)) y[j] = l + 1;
      else if (std::isfinite(u)) y[j] = u - 1;
      else y[j] = 0;
    }
    for (const auto& g : p_.balance) {
      Scalar total = 0, room = 0;
      for (Index j : g) total += y[j];
      for (Index j : g) room += total > 0 ? y[j] - p_.lower[j] : p_.upper[j] - y[j];
      if (total == Scalar(0)) continue;
      if (!std::isfinite(room)) {
        // An unbounded coordinate absorbs the whole imbalance.
        for (Index j : g) {
          if (!std::isfinite(total > 0 ? p_.lower[j] : p_.upper[j])) {
            y[j] -= total;
            break;
          }
        }
        continue;
      }
      if (std::abs(total) >= room) return std::nullopt;
      for (Index j : g) y[j] -= total * (total > 0 ? y[j] - p_.lower[j] : p_.upper[j] - y[j]) / room;
    }
    return y;
  }

  // Max-slack point over the undecided rows, with row generation, then
  // nudged toward the box center so that rays do not start on a box face.
  void find_interior_point() {
    const auto cand = undecided();
    if (cand.empty()) {
      stats_.interior_point = true;
      x0_ = Vector::Zero(d_);
      return;
    }
    Scalar bmax = 0;
    for (Index i : cand) bmax = std::max(bmax, std::abs(rhs_[i]));
    Scalar big = Scalar(1) + bmax;
    for (Index j = 0; j < d_; ++j) {
      if (std::isfinite(p_.lower[j])) big = std::max(big, std::abs(p_.lower[j]));
      if (std::isfinite(p_.upper[j])) big = std::max(big, std::abs(p_.upper[j]));
    }
    big *= Scalar(1e3);
    const Scalar cap = Scalar(1) + bmax;
    Vector lo(d_ + 1), up(d_ + 1);
    for (Index j = 0; j < d_; ++j) {
      lo[j] = std::isfinite(p_.lower[j]) ? p_.lower[j] : -big;
      up[j] = std::isfinite(p_.upper[j]) ? p_.upper[j] : big;
    }
    lo[d_] = -big;
    up[d_] = cap;
    using Status = typename VertexLp<Scalar>::Status;
    VertexLp<Scalar> lp(lo, up, p_.balance);
    Vector c = Vector::Zero(d_ + 1);
    c[d_] = 1;
    lp.set_objective(c);
    auto check = [this](Status s, const VertexLp<Scalar>& l) {
      ++stats_.lp_solves;
      stats_.simplex_iterations += l.iterations();
      if (s == Status::infeasible) throw DataError("redundancy: polytope is empty");
      if (s != Status::optimal) {
        throw SolveError(std::string("redundancy: interior-point LP failed: ") +
                         (s == Status::unbounded ? "unbounded" : l.failure_reason()));
      }
    };
    check(lp.solve(), lp);
    std::vector<bool> in(static_cast<std::size_t>(m_), false);
    const Index batch = std::max<Index>(20, d_);
    Vector row(d_ + 1);
    while (true) {
      const Vector x = lp.point();
      const Vector xs = x.head(d_);
      std::vector<std::pair<Scalar, Index>> viol;
      for (Index i : cand) {
        if (in[static_cast<std::size_t>(i)]) continue;
        const Scalar v = rows_.row(i).dot(xs) + x[d_] - rhs_[i];
        if (v > Scalar(1e-9) * (Scalar(1) + std::abs(rhs_[i]))) viol.emplace_back(-v, i);
      }
      if (viol.empty()) break;
      std::sort(viol.begin(), viol.end());
      if (static_cast<Index>(viol.size()) > batch) viol.resize(static_cast<std::size_t>(batch));
      for (const auto& [v, i] : viol) {
        row.head(d_) = rows_.row(i).transpose();
        row[d_] = 1;
        check(lp.add_row(row, rhs_[i]), lp);
        in[static_cast<std::size_t>(i)] = true;
      }
    }
    const Scalar s = lp.point()[d_];
    if (s < -Scalar(opt_.tolerance) * (Scalar(1) + bmax)) throw DataError("redundancy: polytope is empty");
    if (s <= Scalar(1e-9) * (Scalar(1) + bmax)) {
      warnings_.push_back("redundancy: polytope has no interior (implicit equalities); falling back to sequential LP tests");
      stats_.interior_point = false;
      return;
    }
    stats_.interior_point = true;
    x0_ = lp.point().head(d_);
    if (const auto center = box_center()) {
      // Rows keep at least half their slack.
      Scalar worst = 0;
      for (Index i : cand) worst = std::max(worst, rows_.row(i).dot(*center - x0_));
      const Scalar eps = worst > 0 ? std::min(Scalar(0.5), s / (2 * worst)) : Scalar(0.5);
      x0_ += eps * (*center - x0_);
    }
    slack0_ = rhs_ - rows_ * x0_;
  }

  Scalar box_distance(const Vector& dir) const {
    Scalar t = kInf;
    for (Index k = 0; k < d_; ++k) {
      if (dir[k] > Scalar(1e-15)) t = std::min(t, (p_.upper[k] - x0_[k]) / dir[k]);
      else if (dir[k] < -Scalar(1e-15)) t = std::min(t, (p_.lower[k] - x0_[k]) / dir[k]);
    }
    return t;
  }

  void shoot_rays() {
    auto cand = undecided();
    if (cand.empty()) return;
    const Index nc = static_cast<Index>(cand.size());
    Matrix rows(nc, d_);
    Vector slack(nc);
    for (Index r = 0; r < nc; ++r) {
      rows.row(r) = rows_.row(cand[static_cast<std::size_t>(r)]);
      slack[r] = slack0_[cand[static_cast<std::size_t>(r)]];
    }
    std::vector<Index> shots;
    const Index stride = (nc + opt_.max_rays - 1) / std::max<Index>(opt_.max_rays, 1);
    for (Index r = 0; r < nc; r += std::max<Index>(stride, 1)) shots.push_back(r);
    const Index ns = static_cast<Index>(shots.size());
    std::vector<Index> hits;
    for (Index start = 0; start < ns; start += opt_.ray_block) {
      const Index len = std::min(opt_.ray_block, ns - start);
      Matrix dirs(d_, len);  // unit normals as columns
      for (Index k = 0; k < len; ++k) dirs.col(k) = rows.row(shots[static_cast<std::size_t>(start + k)]).transpose();
      const Matrix rates = rows * dirs;                              // nc x len
      for (Index c = 0; c < len; ++c) {
        const Scalar tbox = box_distance(dirs.col(c));
        Scalar best = kInf, second = kInf;
        Index arg = -1;
        for (Index r = 0; r < nc; ++r) {
          const Scalar rate = rates(r, c);
          if (rate <= Scalar(1e-12)) continue;
          const Scalar t = slack[r] / rate;
          if (t < best) {
            second = best;
            best = t;
            arg = r;
          } else if (t < second) {
            second = t;
          }
        }
        if (arg < 0) continue;
        const Scalar gap = Scalar(1e-9) * (Scalar(1) + best);
        if (best + gap < tbox && best + gap < second) hits.push_back(cand[static_cast<std::size_t>(arg)]);
      }
    }
    for (Index i : hits) {
      if (state(i) != State::essential) {
        set(i, State::essential);
        ++stats_.ray_essential;
      }
    }
  }

  // Row j that the segment x0 -> x* crosses first, among rows not yet in the
  // essential set. Ties go to the lowest index and are re-checked later.
  Index first_crossing(const Vector& xstar, Index fallback) {
    const Vector dir = xstar - x0_;
    Scalar best = kInf;
    Index arg = -1;
    bool tie = false;
    for (Index j : open_) {
      if (state(j) != State::undecided && j != fallback) continue;
      const Scalar rate = rows_.row(j).dot(dir);
      if (rate <= Scalar(1e-12)) continue;
      const Scalar t = slack0_[j] / rate;
      if (t > Scalar(1) + Scalar(1e-9)) continue;
      const Scalar gap = Scalar(1e-9) * (Scalar(1) + t);
      if (t < best - gap) {
        best = t;
        arg = j;
        tie = false;
      } else if (t <= best + gap) {
        tie = true;
        if (j < arg) arg = j;
      }
    }
    if (arg < 0) {
      arg = fallback;
      tie = true;
    }
    if (tie) tie_added_.push_back(arg);
    return arg;
  }

  std::vector<Index> test_order() const {
    std::vector<Index> out;
    if (opt_.order.empty()) return undecided();
    if (static_cast<Index>(opt_.order.size()) != m_) throw std::invalid_argument("reduce: order must list every row once");
    std::vector<bool> seen(static_cast<std::size_t>(m_), false);
    for (Index i : opt_.order) {
      if (i < 0 || i >= m_ || seen[static_cast<std::size_t>(i)]) {
        throw std::invalid_argument("reduce: order must list every row once");
      }
      seen[static_cast<std::size_t>(i)] = true;
      if (state(i) == State::undecided) out.push_back(i);
    }
    return out;
  }

  bool finite_box() const {
    for (Index j = 0; j < d_; ++j) {
      if (!std::isfinite(p_.lower[j]) || !std::isfinite(p_.upper[j])) return false;
    }
    return true;
  }

  // Clarkson step after a failed test of row i at x*: admit the first row
  // crossed. Returns true once i itself is admitted.
  bool admit(Index i, const Vector& xstar, std::vector<Index>& active) {
    const Index j = first_crossing(xstar, i);
    set(j, State::essential);
    active.push_back(j);
    return j == i;
  }

  void clarkson() {
    open_ = test_order();
    std::vector<Index> active;
    for (Index i = 0; i < m_; ++i) {
      if (state(i) == State::essential) active.push_back(i);
    }
    if (finite_box()) {
      clarkson_vertex(active);
    } else {
      clarkson_simplex(active);
    }
  }

  std::optional<VertexLp<Scalar>> build_vertex_lp(const std::vector<Index>& active) {
    VertexLp<Scalar> lp(p_.lower, p_.upper, p_.balance);
    for (Index j : active) {
      const auto s = lp.add_row(rows_.row(j).transpose(), rhs_[j]);
      stats_.simplex_iterations += lp.iterations();
      if (s == VertexLp<Scalar>::Status::infeasible) throw DataError("redundancy: polytope is empty");
      if (s != VertexLp<Scalar>::Status::optimal) return std::nullopt;
    }
    return lp;
  }

  // Cheap proof that row i is implied: for an active row k and l >= 0,
  // a_i.x <= l b_k + max (a_i - l a_k).x over box and balance. Tries the
  // active rows most parallel to a_i.
  bool dominated(Index i) {
    if (nbasis_ == 0) return false;
    const Vector a = rows_.row(i).transpose();
    const Vector dots = basis_.leftCols(nbasis_).transpose() * a;
    std::vector<std::pair<Scalar, Index>> top;
    for (Index c = 0; c < nbasis_; ++c) {
      if (dots[c] > Scalar(0)) top.emplace_back(-dots[c], c);
    }
    const std::size_t keep = std::min<std::size_t>(top.size(), 3);
    std::partial_sort(top.begin(), top.begin() + static_cast<std::ptrdiff_t>(keep), top.end());
    Vector w(d_);
    for (std::size_t t = 0; t < keep; ++t) {
      const Index c = top[t].second;
      const Index k = basis_rows_[static_cast<std::size_t>(c)];
      auto bound = [&](Scalar l) {
        w = a - l * basis_.col(c);
        return l * rhs_[k] + box_max(w);
      };
      // Convex in l; the projection coefficient is a good start.
      Scalar lo = 0, hi = Scalar(2) * -top[t].first;
      if (bound(-top[t].first) <= rhs_[i]) return true;
      for (int it = 0; it < 12; ++it) {
        const Scalar m1 = lo + (hi - lo) / 3, m2 = hi - (hi - lo) / 3;
        const Scalar f1 = bound(m1), f2 = bound(m2);
        if (std::min(f1, f2) <= rhs_[i]) return true;
        if (f1 < f2) hi = m2;
        else lo = m1;
      }
    }
    return false;
  }

  void add_basis(Index j) {
    if (nbasis_ == basis_.cols()) basis_.conservativeResize(d_, std::max<Index>(64, 2 * nbasis_));
    basis_.col(nbasis_++) = rows_.row(j).transpose();
    basis_rows_.push_back(j);
  }

  void clarkson_vertex(std::vector<Index>& active) {
    using Status = typename VertexLp<Scalar>::Status;
    auto lp = build_vertex_lp(active);
    if (!lp) throw SolveError("redundancy test LP failed to start");
    for (Index j : active) add_basis(j);
    for (Index i : open_) {
      if (state(i) != State::undecided) continue;
      if (dominated(i)) {
        set(i, State::redundant);
        ++stats_.dominated;
        continue;
      }
      ++stats_.lp_tested;
      const Scalar limit = rhs_[i] + tol_for(i) / scale_[i];
      lp->set_objective(rows_.row(i).transpose());
      int rebuilds = 0;
      while (true) {
        const Status s = lp->solve();
        ++stats_.lp_solves;
        stats_.simplex_iterations += lp->iterations();
        if (s == Status::failure) {
          if (rebuilds++ > 0) throw SolveError("redundancy test LP failed: numerical trouble");
          lp = build_vertex_lp(active);
          if (!lp) throw SolveError("redundancy test LP failed: numerical trouble");
          lp->set_objective(rows_.row(i).transpose());
          continue;
        }
        if (s == Status::unbounded) throw SolveError("redundancy test LP is unbounded");
        if (s == Status::infeasible) throw SolveError("redundancy test LP became infeasible");
        if (lp->value() <= limit) {
          set(i, State::redundant);
          break;
        }
        const bool done = admit(i, lp->point(), active);
        add_basis(active.back());
        const Status a = lp->add_row(rows_.row(active.back()).transpose(), rhs_[active.back()]);
        stats_.simplex_iterations += lp->iterations();
        if (a != Status::optimal) {
          lp = build_vertex_lp(active);
          if (!lp) throw SolveError("redundancy test LP failed: numerical trouble");
        }
        if (done) break;
        lp->set_objective(rows_.row(i).transpose());
      }
    }
  }

  void clarkson_simplex(std::vector<Index>& active) {
    auto lp = make_lp(active, true);
    for (Index i : open_) {
      if (state(i) != State::undecided) continue;
      ++stats_.lp_tested;
      const Scalar limit = rhs_[i] + tol_for(i) / scale_[i];
      int rebuilds = 0;
      while (true) {
        lp.set_objective(-rows_.row(i).transpose());
        LpStatus s = lp.solve(-limit);
        ++stats_.lp_solves;
        stats_.simplex_iterations += lp.iterations();
        if (s == LpStatus::numerical_failure || s == LpStatus::iteration_limit) {
          if (rebuilds++ > 0) throw SolveError(std::string("redundancy test LP failed: ") + to_string(s));
          lp = make_lp(active, true);
          continue;
        }
        if (s == LpStatus::unbounded) throw SolveError("redundancy test LP is unbounded; the polytope needs finite bounds");
        if (s == LpStatus::infeasible) throw SolveError("redundancy test LP became infeasible");
        if (s == LpStatus::optimal && -lp.objective() <= limit) {
          set(i, State::redundant);
          break;
        }
        const bool done = admit(i, lp.primal(), active);
        lp.add_row(rows_.row(active.back()).transpose(), -kInf, rhs_[active.back()]);
        if (done) break;
      }
    }
  }

  // Rows admitted through a tie are kept only if they are not implied by
  // the rest of the essential set.
  void verify_tie_breaks() {
    std::sort(tie_added_.begin(), tie_added_.end());
    tie_added_.erase(std::unique(tie_added_.begin(), tie_added_.end()), tie_added_.end());
    for (Index r : tie_added_) {
      if (state(r) != State::essential) continue;
      std::vector<Index> others;
      for (Index i = 0; i < m_; ++i) {
        if (i != r && state(i) == State::essential) others.push_back(i);
      }
      const auto best = max_over(p_.a.row(r).transpose(), others);
      if (!best || *best <= p_.b[r] + tol_for(r)) set(r, State::redundant);
    }
  }

  // No interior point: test each row against all rows still standing.
  void sequential_tests() {
    auto standing = undecided();
    for (Index i : undecided()) {
      ++stats_.lp_tested;
      std::vector<Index> others;
      for (Index j : standing) {
        if (j != i) others.push_back(j);
      }
      const auto best = max_over(p_.a.row(i).transpose(), others);
      if (!best || *best <= p_.b[i] + tol_for(i)) {
        set(i, State::redundant);
        standing.erase(std::find(standing.begin(), standing.end(), i));
      } else {
        set(i, State::essential);
      }
    }
  }

  Polytope<Scalar> p_;
  RedundancyOptions opt_;
  Index m_ = 0;
  Index d_ = 0;
  std::vector<Index> group_;
  std::vector<bool> fixed_;
  std::vector<State> state_;
  Matrix rows_;    // projected, unit-norm rows
  Vector rhs_;     // matching right-hand sides
  Vector scale_;   // norm of each projected row
  Vector x0_;
  Vector slack0_;
  std::vector<Index> open_;
  std::vector<Index> tie_added_;
  Matrix basis_;  // active rows as columns
  Index nbasis_ = 0;
  std::vector<Index> basis_rows_;
  RedundancyStats stats_;
  std::vector<std::string> warnings_;
};

}  // namespace detail

// max a_i.x over rows `active` (minus i), bounds and balance; redundant iff
// that maximum is at most b_i + tol*(1+|b_i|). Throws SolveError when unbounded.
template <typename Scalar>
bool test_row_redundant(const Polytope<Scalar>& p, Eigen::Index i, const std::vector<Eigen::Index>& active,
                        double tol = 1e-6) {
  if (i < 0 || i >= p.num_rows()) throw std::invalid_argument("test_row_redundant: row out of range");
  std::vector<Eigen::Index> rows;
  for (auto j : active) {
    if (j != i) rows.push_back(j);
  }
  RedundancyOptions opt;
  opt.tolerance = tol;
  detail::RedundancyWorker<Scalar> w(p, opt);
  const auto best = w.max_over(p.a.row(i).transpose(), rows);
  return !best || *best <= p.b[i] + w.tol_for(i);
}

template <typename Scalar>
EssentialSet<Scalar> reduce(const Polytope<Scalar>& p, const RedundancyOptions& options = {}) {
  return detail::RedundancyWorker<Scalar>(p, options).run();
}

// CSV dump of rows, right-hand sides and the essential flag, for reuse
// across runs: columns row,b,essential,a0..a{d-1}.
void write_reduction_csv(const std::string& path, const Polytope<double>& p, const EssentialSet<double>& e);

struct StoredReduction {
  Polytope<double> polytope;  // bounds and balance are not stored
  std::vector<Eigen::Index> essential;
};
StoredReduction read_reduction_csv(const std::string& path);

struct GridRepresentation;

// Keeps only rows `keep` (indices into the current rows) and marks `rep` reduced.
void keep_rows(GridRepresentation& rep, const std::vector<Eigen::Index>& keep);

// Reduces `rep` in place to its essential rows over the box
// [lower, upper] with the given balance groups. Returns the full result.
EssentialSet<double> reduce_representation(GridRepresentation& rep, const Eigen::VectorXd& lower,
                                           const Eigen::VectorXd& upper,
                                           const std::vector<std::vector<Eigen::Index>>& balance,
                                           const RedundancyOptions& options = {});

}  // namespace gridclear
