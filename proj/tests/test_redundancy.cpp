#include <doctest.h>

#include <numeric>
#include <optional>
#include <random>

#include "fixtures.hpp"
#include "gridclear/grid.hpp"
#include "gridclear/redundancy.hpp"
#include "gridclear/vertex_lp.hpp"
#include "oracles.hpp"

using namespace gridclear;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

Polytope<double> square_with_cuts() {
  MatrixXd a(6, 2);
  a << 1, 0, 0, 1, -1, 0, 0, -1, 1, 1, 1, 1;
  VectorXd b(6);
  b << 1, 1, 0, 0, 1.5, 3;
  return Polytope<double>::make(a, b, VectorXd::Constant(2, -10), VectorXd::Constant(2, 10));
}

Polytope<double> random_polytope(std::mt19937& rng, Index d, Index m, double box) {
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> rhs(0.5, 2.0), scale(0.2, 5.0);
  MatrixXd a(m, d);
  VectorXd b(m);
  for (Index i = 0; i < m; ++i) {
    VectorXd n(d);
    for (Index j = 0; j < d; ++j) n[j] = normal(rng);
    const double s = scale(rng);
    a.row(i) = s * n.normalized().transpose();
    b[i] = s * rhs(rng);
  }
  return Polytope<double>::make(a, b, VectorXd::Constant(d, -box), VectorXd::Constant(d, box));
}

// Rows plus the box as explicit halfspaces.
oracle::Halfspaces with_box(const Polytope<double>& p, const std::vector<Index>& rows) {
  const Index d = p.dim();
  oracle::Halfspaces hs;
  hs.g = MatrixXd::Zero(static_cast<Index>(rows.size()) + 2 * d, d);
  hs.h = VectorXd::Zero(hs.g.rows());
  Index r = 0;
  for (Index i : rows) {
    hs.g.row(r) = p.a.row(i);
    hs.h[r++] = p.b[i];
  }
  for (Index j = 0; j < d; ++j) {
    hs.g(r, j) = 1;
    hs.h[r++] = p.upper[j];
    hs.g(r, j) = -1;
    hs.h[r++] = -p.lower[j];
  }
  return hs;
}

std::vector<Index> oracle_essential(const Polytope<double>& p) {
  std::vector<Index> out;
  for (Index i = 0; i < p.num_rows(); ++i) {
    std::vector<Index> others;
    for (Index j = 0; j < p.num_rows(); ++j) {
      if (j != i) others.push_back(j);
    }
    const auto m = oracle::lp_min(with_box(p, others), -p.a.row(i).transpose());
    REQUIRE(m.has_value());
    if (-*m > p.b[i] + 1e-7) out.push_back(i);
  }
  return out;
}

}  // namespace

TEST_CASE("contains checks rows, bounds and balance") {
  auto p = square_with_cuts();
  CHECK(contains(p, VectorXd((VectorXd(2) << 0.5, 0.5).finished())));
  CHECK(contains(p, VectorXd((VectorXd(2) << 1.0, 0.5).finished())));
  CHECK_FALSE(contains(p, VectorXd((VectorXd(2) << 1.0, 0.6).finished())));
  CHECK(contains(p, VectorXd((VectorXd(2) << 1.0 + 1e-8, 0.0).finished())));
  p.set_global_balance();
  CHECK_FALSE(contains(p, VectorXd((VectorXd(2) << 0.5, 0.5).finished())));
  CHECK(contains(p, VectorXd((VectorXd(2) << 0.0, 0.0).finished())));
  CHECK_THROWS_AS(contains(p, VectorXd(VectorXd::Zero(3))), std::invalid_argument);
}

TEST_CASE("test_row_redundant on the cut square") {
  const auto p = square_with_cuts();
  const std::vector<Index> all{0, 1, 2, 3, 4, 5};
  CHECK(test_row_redundant(p, 5, all));
  CHECK_FALSE(test_row_redundant(p, 4, all));
  CHECK_FALSE(test_row_redundant(p, 0, all));
  // Without the square, x + y <= 3 is cut only by the +-10 box.
  CHECK_FALSE(test_row_redundant(p, 5, {5}));
  CHECK(test_row_redundant(p, 5, {4, 5}));
}

TEST_CASE("reduce keeps the square and the tight cut") {
  const auto e = reduce(square_with_cuts());
  CHECK(e.indices == std::vector<Index>{0, 1, 2, 3, 4});
  CHECK(e.stats.rows == 6);
  CHECK(e.stats.interior_point);
  CHECK(e.stats.removal_fraction == doctest::Approx(1.0 / 6.0));
  CHECK(e.warnings.empty());
}

TEST_CASE("duplicate rows keep the first, scaled copies included") {
  MatrixXd a(5, 2);
  a << 1, 0, 2, 0, 1, 0, 0, 1, -1, -1;
  VectorXd b(5);
  b << 1, 2, 1, 1, 1;
  const auto p = Polytope<double>::make(a, b, VectorXd::Constant(2, -10), VectorXd::Constant(2, 10));
  const auto e = reduce(p);
  CHECK(e.indices == std::vector<Index>{0, 3, 4});
  CHECK(e.stats.duplicates == 2);
}

TEST_CASE("a tighter later duplicate replaces the earlier row") {
  MatrixXd a(4, 2);
  a << 1, 0, 0, 1, -1, -1, 3, 0;
  VectorXd b(4);
  b << 1, 1, 1, 2.4;
  const auto e = reduce(Polytope<double>::make(a, b, VectorXd::Constant(2, -10), VectorXd::Constant(2, 10)));
  CHECK(e.indices == std::vector<Index>{1, 2, 3});
}

TEST_CASE("rows implied by the box are prescreened") {
  MatrixXd a(3, 2);
  a << 1, 1, 1, -1, 1, 0;
  VectorXd b(3);
  b << 2, 5, 0.5;
  const auto p = Polytope<double>::make(a, b, VectorXd::Constant(2, -1), VectorXd::Constant(2, 1));
  const auto e = reduce(p);
  CHECK(e.indices == std::vector<Index>{2});
  CHECK(e.stats.box_redundant == 2);
}

TEST_CASE("a row implied by one essential row and the box skips its LP") {
  // x <= 0.5 and |y| <= 1 give x + 0.1 y <= 0.6 < 0.7.
  MatrixXd a(2, 2);
  a << 1, 0, 1, 0.1;
  VectorXd b(2);
  b << 0.5, 0.7;
  RedundancyOptions opt;
  opt.order = {0, 1};
  const auto e = reduce(Polytope<double>::make(a, b, VectorXd::Constant(2, -1), VectorXd::Constant(2, 1)), opt);
  CHECK(e.indices == std::vector<Index>{0});
  CHECK(e.stats.dominated == 1);
}

TEST_CASE("balance and fixed coordinates make rows coincide") {
  // x0 + x1 + x2 = 0 with x2 fixed at 0 leaves x0 = -x1, so x0 <= 1 and
  // -x1 <= 1 are the same constraint.
  MatrixXd a(3, 3);
  a << 1, 0, 0, 0, -1, 0, 0, 1, 0;
  VectorXd b(3);
  b << 1, 1, 0.5;
  VectorXd lo(3), up(3);
  lo << -5, -5, 0;
  up << 5, 5, 0;
  auto p = Polytope<double>::make(a, b, lo, up);
  p.set_global_balance();
  const auto e = reduce(p);
  CHECK(e.indices == std::vector<Index>{0, 2});
  CHECK(e.stats.duplicates == 1);
}

TEST_CASE("a zero row is redundant when satisfiable and an error otherwise") {
  MatrixXd a(2, 2);
  a << 0, 0, 1, 0;
  VectorXd b(2);
  b << 0, 1;
  auto p = Polytope<double>::make(a, b, VectorXd::Constant(2, -2), VectorXd::Constant(2, 2));
  auto e = reduce(p);
  CHECK(e.indices == std::vector<Index>{1});
  CHECK(e.stats.zero_rows == 1);
  p.b[0] = -1;
  CHECK_THROWS_AS(reduce(p), DataError);
}

TEST_CASE("empty and unbounded polytopes are reported") {
  MatrixXd a(2, 1);
  a << 1, -1;
  VectorXd b(2);
  b << -1, -1;
  CHECK_THROWS_AS(reduce(Polytope<double>::make(a, b, VectorXd::Constant(1, -5), VectorXd::Constant(1, 5))),
                  DataError);

  const double inf = std::numeric_limits<double>::infinity();
  MatrixXd u(2, 2);
  u << 1, 0, 1, 1;
  VectorXd ub(2);
  ub << 1, 5;
  const auto open = Polytope<double>::make(u, ub, VectorXd::Constant(2, -inf), VectorXd::Constant(2, inf));
  CHECK_THROWS_AS(test_row_redundant(open, 1, {0, 1}), SolveError);
}

TEST_CASE("implicit equalities fall back to sequential tests") {
  MatrixXd a(5, 2);
  a << 1, 0, -1, 0, 0, 1, 0, -1, 1, 1;
  VectorXd b(5);
  b << 1, -1, 1, 0, 5;
  const auto e = reduce(Polytope<double>::make(a, b, VectorXd::Constant(2, -10), VectorXd::Constant(2, 10)));
  CHECK_FALSE(e.stats.interior_point);
  REQUIRE(e.warnings.size() == 1);
  CHECK(e.indices == std::vector<Index>{0, 1, 2, 3});
}

TEST_CASE("reduce matches a vertex-enumeration oracle") {
  std::mt19937 rng(7);
  for (int trial = 0; trial < 60; ++trial) {
    const Index d = trial % 2 == 0 ? 2 : 3;
    const auto p = random_polytope(rng, d, d == 2 ? 14 : 12, 1.5);
    const auto e = reduce(p);
    CAPTURE(trial);
    CHECK(e.indices == oracle_essential(p));
  }
}

TEST_CASE("reduced and full polytopes agree on 10000 sampled points") {
  std::mt19937 rng(11);
  const Index d = 5;
  auto p = random_polytope(rng, d, 80, 3.0);
  p.set_global_balance();
  const auto e = reduce(p);
  const auto q = subset(p, e.indices);
  CHECK(e.indices.size() < 80);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  int checked = 0, inside = 0, mismatches = 0;
  while (checked < 10000) {
    VectorXd x(d);
    for (Index j = 0; j < d; ++j) x[j] = u(rng);
    x.array() -= x.mean();
    if ((x.array().abs() > 3.0).any()) continue;
    ++checked;
    const bool full = contains(p, x);
    inside += full ? 1 : 0;
    mismatches += full != contains(q, x) ? 1 : 0;
  }
  CHECK(mismatches == 0);
  CHECK(inside > 100);
}

TEST_CASE("adding a redundant row leaves the essential set unchanged") {
  std::mt19937 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    auto p = random_polytope(rng, 3, 15, 2.0);
    const auto before = reduce(p);
    // Sum of two rows with a looser right-hand side is implied by them.
    const Index i = before.indices.front(), j = before.indices.back();
    p.a.conservativeResize(16, Eigen::NoChange);
    p.b.conservativeResize(16);
    p.a.row(15) = p.a.row(i) + p.a.row(j);
    p.b[15] = p.b[i] + p.b[j] + 0.1;
    const auto after = reduce(p);
    CAPTURE(trial);
    CHECK(after.indices == before.indices);
  }
}

TEST_CASE("reduce is deterministic") {
  std::mt19937 rng(5);
  const auto p = random_polytope(rng, 4, 60, 2.0);
  const auto a = reduce(p);
  const auto b = reduce(p);
  CHECK(a.indices == b.indices);
  CHECK(a.stats.lp_solves == b.stats.lp_solves);
  CHECK(a.stats.simplex_iterations == b.stats.simplex_iterations);
}

TEST_CASE("reduction dump round-trips") {
  const auto p = square_with_cuts();
  const auto e = reduce(p);
  const auto path = (fixture::scratch_dir("reduction") / "rows.csv").string();
  write_reduction_csv(path, p, e);
  const auto back = read_reduction_csv(path);
  CHECK(back.essential == e.indices);
  CHECK(back.polytope.a == p.a);
  CHECK(back.polytope.b == p.b);
}

TEST_CASE("security rows with generous capacities reduce to nothing") {
  auto ds = load_dataset(fixture::data("ring3"));
  for (auto& l : ds.lines) l.capacity = 1e4;
  ds.reindex();
  ds.validation = validate_dataset(ds);
  const auto topo = build_topology(ds);
  const auto ptdf = compute_ptdf(topo);
  ContingencyOptions co;
  co.enabled = true;
  const auto cs = enumerate_contingencies(topo, ptdf, co);
  auto rep = build_security_constraints(ptdf, cs, topo);
  const Index full = rep.size();
  const auto bounds = injection_bounds(ds, topo);
  const auto e = reduce_representation(rep, bounds.lower, bounds.upper, {{0, 1, 2}});
  CHECK(e.indices.empty());
  CHECK(rep.reduced);
  CHECK(rep.size() == 0);
  CHECK(rep.unreduced_rows == full);
}

TEST_CASE("synthetic N-1 rows: reduced set admits the same injections") {
  const auto imp = import_matpower_case(fixture::data("cases/synth30.m"));
  const auto& ds = imp.dataset;
  const auto topo = build_topology(ds);
  const auto ptdf = compute_ptdf(topo);
  ContingencyOptions co;
  co.enabled = true;
  const auto cs = enumerate_contingencies(topo, ptdf, co);
  auto rep = build_security_constraints(ptdf, cs, topo);
  const MatrixXd rows = rep.rows;
  const VectorXd rhs = rep.rhs;
  const auto bounds = injection_bounds(ds, topo);
  std::vector<Index> all(static_cast<std::size_t>(topo.num_nodes()));
  std::iota(all.begin(), all.end(), 0);
  const auto e = reduce_representation(rep, bounds.lower, bounds.upper, {all});
  CHECK(e.stats.removal_fraction > 0.5);
  CHECK(rep.size() == static_cast<Index>(e.indices.size()));

  auto full = Polytope<double>::make(rows, rhs, bounds.lower, bounds.upper, {all});
  auto reduced = Polytope<double>::make(rep.rows, rep.rhs, bounds.lower, bounds.upper, {all});
  // Random points of box and balance, plus points just either side of the
  // full set's boundary found by bisecting between an inside and an outside
  // sample.
  std::mt19937 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const VectorXd lo = bounds.lower, hi = bounds.upper;
  auto sample = [&] {
    VectorXd y(lo.size());
    for (Index j = 0; j < y.size(); ++j) y[j] = lo[j] + u(rng) * (hi[j] - lo[j]);
    const double total = y.sum();
    const VectorXd room = total > 0 ? VectorXd(y - lo) : VectorXd(hi - y);
    y -= total * room / room.sum();
    return y;
  };
  int mismatches = 0, inside = 0, probes = 0;
  std::optional<VectorXd> last_in;
  for (int k = 0; k < 10000; ++k) {
    const VectorXd y = sample();
    const bool in = contains(full, y);
    inside += in ? 1 : 0;
    mismatches += in != contains(reduced, y) ? 1 : 0;
    if (in) {
      last_in = y;
    } else if (last_in && probes < 2000) {
      double a = 0.0, b = 1.0;
      for (int it = 0; it < 50; ++it) {
        const double m = 0.5 * (a + b);
        (contains(full, VectorXd(*last_in + m * (y - *last_in)), 0.0) ? a : b) = m;
      }
      for (double f : {a - 1e-3, b + 1e-3}) {
        const VectorXd z = *last_in + f * (y - *last_in);
        mismatches += contains(full, z) != contains(reduced, z) ? 1 : 0;
        ++probes;
      }
    }
  }
  CHECK(inside > 100);
  CHECK(probes > 100);
  CHECK(mismatches == 0);
}

TEST_CASE("VertexLp matches vertex enumeration under warm starts") {
  std::mt19937 rng(23);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = random_polytope(rng, 3, 10, 2.0);
    VertexLp<double> lp(p.lower, p.upper, {});
    std::vector<Index> rows;
    for (Index i = 0; i < p.num_rows(); ++i) {
      REQUIRE(lp.add_row(p.a.row(i).transpose(), p.b[i]) == VertexLp<double>::Status::optimal);
      rows.push_back(i);
      for (int k = 0; k < 3; ++k) {
        const VectorXd c = VectorXd::NullaryExpr(3, [&] { return normal(rng); });
        lp.set_objective(c);
        REQUIRE(lp.solve() == VertexLp<double>::Status::optimal);
        const auto best = oracle::lp_min(with_box(p, rows), -c);
        REQUIRE(best.has_value());
        CHECK(lp.value() == doctest::Approx(-*best).epsilon(1e-9));
        CHECK(contains(subset(p, rows), lp.point(), 1e-9));
      }
    }
  }
}

TEST_CASE("VertexLp with a balance group agrees with the revised simplex") {
  std::mt19937 rng(29);
  std::normal_distribution<double> normal;
  const Index d = 6;
  auto p = random_polytope(rng, d, 30, 3.0);
  p.set_global_balance();
  VertexLp<double> lp(p.lower, p.upper, p.balance);
  for (Index i = 0; i < p.num_rows(); ++i) {
    REQUIRE(lp.add_row(p.a.row(i).transpose(), p.b[i]) == VertexLp<double>::Status::optimal);
  }
  for (int k = 0; k < 20; ++k) {
    const VectorXd c = VectorXd::NullaryExpr(d, [&] { return normal(rng); });
    lp.set_objective(c);
    REQUIRE(lp.solve() == VertexLp<double>::Status::optimal);

    std::vector<Eigen::Triplet<double>> trip;
    for (Index i = 0; i < p.num_rows(); ++i) {
      for (Index j = 0; j < d; ++j) trip.emplace_back(i, j, p.a(i, j));
    }
    for (Index j = 0; j < d; ++j) trip.emplace_back(p.num_rows(), j, 1.0);
    Eigen::SparseMatrix<double> a(p.num_rows() + 1, d);
    a.setFromTriplets(trip.begin(), trip.end());
    VectorXd rlo = VectorXd::Constant(p.num_rows() + 1, -std::numeric_limits<double>::infinity());
    VectorXd rup(p.num_rows() + 1);
    rup << p.b, 0.0;
    rlo[p.num_rows()] = 0.0;
    RevisedSimplex<double> ref(a, p.lower, p.upper, rlo, rup);
    ref.set_objective(-c);
    REQUIRE(ref.solve() == LpStatus::optimal);
    CHECK(lp.value() == doctest::Approx(-ref.objective()).epsilon(1e-9));
    CHECK(std::abs(lp.point().sum()) < 1e-9);
  }
}

TEST_CASE("VertexLp reports an empty region") {
  VertexLp<double> lp(VectorXd::Constant(2, -1), VectorXd::Constant(2, 1), {});
  CHECK(lp.add_row(Eigen::Vector2d(1, 0), -2) == VertexLp<double>::Status::infeasible);
}

namespace {

Dataset load_fixture(const std::string& name) {
  if (name.size() > 2 && name.substr(name.size() - 2) == ".m") return import_matpower_case(fixture::data("cases/" + name)).dataset;
  return load_dataset(fixture::data(name));
}

struct FixtureRows {
  Topology topology;
  GridRepresentation full;
  InjectionBounds bounds;
  std::vector<std::vector<Index>> groups;
};

// Unreduced N-1 rows (every non-islanding single outage) of a fixture.
FixtureRows fixture_rows(const std::string& name) {
  const auto ds = load_fixture(name);
  FixtureRows f;
  f.topology = build_topology(ds);
  const auto ptdf = compute_ptdf(f.topology);
  ContingencyOptions co;
  co.enabled = true;
  co.sensitivity_threshold = 0.0;
  f.full = build_security_constraints(ptdf, enumerate_contingencies(f.topology, ptdf, co), f.topology);
  f.bounds = injection_bounds(ds, f.topology);
  for (Index c = 0; c < f.topology.num_components(); ++c) f.groups.push_back(f.topology.component_nodes(c));
  return f;
}

}  // namespace

TEST_CASE("reducing an essential set again keeps every row") {
  std::mt19937 rng(23);
  for (int trial = 0; trial < 30; ++trial) {
    auto p = random_polytope(rng, 2 + trial % 3, 25, 2.0);
    if (trial % 2) p.set_global_balance();
    const auto first = reduce(p);
    const auto again = reduce(subset(p, first.indices));
    std::vector<Index> all(first.indices.size());
    std::iota(all.begin(), all.end(), Index{0});
    CAPTURE(trial);
    CHECK(again.indices == all);
  }
  auto f = fixture_rows("synth30.m");
  reduce_representation(f.full, f.bounds.lower, f.bounds.upper, f.groups);
  const auto q = Polytope<double>::make(f.full.rows, f.full.rhs, f.bounds.lower, f.bounds.upper, f.groups);
  CHECK(reduce(q).indices.size() == static_cast<std::size_t>(f.full.size()));
}

TEST_CASE("2D regions of full and reduced sets have identical vertices") {
  auto same_vertices = [](const oracle::Halfspaces& a, const oracle::Halfspaces& b) {
    auto va = oracle::vertices(a), vb = oracle::vertices(b);
    auto less = [](const VectorXd& x, const VectorXd& y) { return std::tie(x[0], x[1]) < std::tie(y[0], y[1]); };
    std::sort(va.begin(), va.end(), less);
    std::sort(vb.begin(), vb.end(), less);
    if (va.size() != vb.size() || va.empty()) return false;
    for (std::size_t i = 0; i < va.size(); ++i) {
      if ((va[i] - vb[i]).cwiseAbs().maxCoeff() > 1e-9) return false;
    }
    return true;
  };
  std::mt19937 rng(29);
  for (int trial = 0; trial < 40; ++trial) {
    const auto p = random_polytope(rng, 2, 20, 1.5);
    std::vector<Index> all(20);
    std::iota(all.begin(), all.end(), Index{0});
    CAPTURE(trial);
    CHECK(same_vertices(with_box(p, all), with_box(p, reduce(p).indices)));
  }

  // ring3 N-1 in the plane (x1, x2) with x3 = -x1 - x2, every injection
  // within +-100 MW and l13 tightened so that some rows bind.
  auto ds = load_dataset(fixture::data("ring3"));
  ds.lines[1].capacity = 80;
  ds.reindex();
  ds.validation = validate_dataset(ds);
  const auto topo = build_topology(ds);
  const auto ptdf = compute_ptdf(topo);
  ContingencyOptions co;
  co.enabled = true;
  co.sensitivity_threshold = 0.0;
  auto rep = build_security_constraints(ptdf, enumerate_contingencies(topo, ptdf, co), topo);
  const MatrixXd rows = rep.rows;
  const VectorXd rhs = rep.rhs;
  InjectionBounds bounds{VectorXd::Constant(3, -100), VectorXd::Constant(3, 100)};
  reduce_representation(rep, bounds.lower, bounds.upper, {{0, 1, 2}});
  CHECK(rep.size() > 0);
  CHECK(rep.size() < rows.rows());
  auto plane = [&](const MatrixXd& a, const VectorXd& b) {
    oracle::Halfspaces hs;
    hs.g.resize(a.rows() + 6, 2);
    hs.h.resize(a.rows() + 6);
    for (Index i = 0; i < a.rows(); ++i) {
      hs.g.row(i) << a(i, 0) - a(i, 2), a(i, 1) - a(i, 2);
      hs.h[i] = b[i];
    }
    const Index r = a.rows();
    hs.g.block(r, 0, 6, 2) << 1, 0, -1, 0, 0, 1, 0, -1, -1, -1, 1, 1;
    hs.h.segment(r, 6) << bounds.upper[0], -bounds.lower[0], bounds.upper[1], -bounds.lower[1], bounds.upper[2],
        -bounds.lower[2];
    return hs;
  };
  CHECK(same_vertices(plane(rows, rhs), plane(rep.rows, rep.rhs)));
}

TEST_CASE("reduced CBCO sets agree with the full sets on 10000 samples, every fixture") {
  for (const std::string name : {"two_node", "ring3", "mixed", "synth30.m"}) {
    CAPTURE(name);
    const auto f = fixture_rows(name);
    auto reduced = f.full;
    reduce_representation(reduced, f.bounds.lower, f.bounds.upper, f.groups);
    const auto st = oracle::compare_membership(f.full.rows, f.full.rhs, reduced.rows, reduced.rhs, f.bounds.lower,
                                               f.bounds.upper, f.groups, 10000, 31);
    CHECK(st.samples == 10000);
    CHECK(st.mismatches == 0);
    CHECK(st.inside > 0);
  }
}
