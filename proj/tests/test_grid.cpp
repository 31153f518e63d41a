#include <doctest.h>

#include <random>

#include "fixtures.hpp"
#include "gridclear/grid.hpp"
#include "oracles.hpp"

using namespace gridclear;

namespace {

struct Edge {
  std::string id, from, to;
  double x = 1.0;
  double cap = 100.0;
};

Dataset network(const std::vector<std::string>& nodes, const std::vector<Edge>& edges,
                const std::vector<std::string>& slack = {}) {
  Dataset ds;
  ds.zones.push_back({"Z"});
  for (const auto& n : nodes) {
    ds.nodes.push_back({n, "Z", std::find(slack.begin(), slack.end(), n) != slack.end(), std::nullopt, std::nullopt});
  }
  for (const auto& e : edges) ds.lines.push_back({e.id, e.from, e.to, e.x, e.cap, true});
  ds.demand = Eigen::MatrixXd::Zero(static_cast<Index>(nodes.size()), 1);
  ds.reindex();
  ds.validation = validate_dataset(ds);
  return ds;
}

Dataset ring() { return network({"1", "2", "3"}, {{"1-2", "1", "2"}, {"1-3", "1", "3"}, {"2-3", "2", "3"}}, {"1"}); }

std::vector<oracle::OracleLine> oracle_lines(const Topology& t) {
  std::vector<oracle::OracleLine> out;
  for (Index k = 0; k < t.num_lines(); ++k) {
    out.push_back({static_cast<int>(t.line_from[static_cast<std::size_t>(k)]),
                   static_cast<int>(t.line_to[static_cast<std::size_t>(k)]), 1.0 / t.susceptance[k]});
  }
  return out;
}

Eigen::VectorXd random_balanced(const Topology& t, std::mt19937& rng) {
  std::uniform_real_distribution<double> u(-100.0, 100.0);
  Eigen::VectorXd inj(t.num_nodes());
  for (Index i = 0; i < inj.size(); ++i) inj[i] = u(rng);
  for (Index c = 0; c < t.num_components(); ++c) {
    const auto nodes = t.component_nodes(c);
    double sum = 0.0;
    for (Index i : nodes) sum += inj[i];
    for (Index i : nodes) inj[i] -= sum / static_cast<double>(nodes.size());
  }
  return inj;
}

Topology synth30() { return build_topology(import_matpower_case(fixture::data("cases/synth30.m")).dataset); }

}  // namespace

TEST_CASE("build_topology: components and slack choice") {
  SUBCASE("ring uses the flagged slack") {
    const auto t = build_topology(ring());
    CHECK(t.num_components() == 1);
    CHECK(t.node_ids[static_cast<std::size_t>(t.slack[0])] == "1");
    for (Index k = 0; k < t.num_lines(); ++k) {
      CHECK(t.incidence.row(k).sum() == 0.0);
      CHECK(t.incidence.row(k).cwiseAbs().sum() == 2.0);
    }
  }
  SUBCASE("two disjoint pairs without flags") {
    const auto t = build_topology(network({"b2", "10", "9", "a1"}, {{"x", "b2", "a1"}, {"y", "10", "9"}}));
    REQUIRE(t.num_components() == 2);
    CHECK(t.node_ids[static_cast<std::size_t>(t.slack[0])] == "a1");
    CHECK(t.node_ids[static_cast<std::size_t>(t.slack[1])] == "9");  // numeric order, not lexicographic
  }
  SUBCASE("two slack flags in one component") {
    CHECK_THROWS_AS(build_topology(network({"1", "2"}, {{"l", "1", "2"}}, {"1", "2"})), DataError);
  }
  SUBCASE("invalid dataset is refused") {
    auto ds = ring();
    ds.lines[0].reactance = 0.0;
    ds.validation = validate_dataset(ds);
    CHECK_THROWS_AS(build_topology(ds), DataError);
  }
}

TEST_CASE("compute_ptdf: hand-derived values") {
  SUBCASE("ring column of node 2") {
    const auto p = compute_ptdf(build_topology(ring()));
    CHECK(p.matrix(0, 1) == doctest::Approx(-2.0 / 3.0).epsilon(1e-12));
    CHECK(p.matrix(1, 1) == doctest::Approx(-1.0 / 3.0).epsilon(1e-12));
    CHECK(p.matrix(2, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(p.matrix.col(0).isZero(0.0));
  }
  SUBCASE("radial single line") {
    const auto p = compute_ptdf(build_topology(network({"1", "2"}, {{"l", "1", "2"}}, {"2"})));
    CHECK(p.matrix(0, 0) == doctest::Approx(1.0));
    CHECK(p.matrix(0, 1) == 0.0);
  }
  SUBCASE("cross-component entries are zero") {
    const auto t = build_topology(network({"1", "2", "3", "4"}, {{"a", "1", "2"}, {"b", "3", "4"}}));
    const auto p = compute_ptdf(t);
    CHECK(p.matrix(0, 2) == 0.0);
    CHECK(p.matrix(0, 3) == 0.0);
    CHECK(p.matrix(1, 0) == 0.0);
    CHECK(p.matrix(1, 1) == 0.0);
  }
}

TEST_CASE("compute_flows: ring examples and balance check") {
  const auto p = compute_ptdf(build_topology(ring()));
  const auto f = compute_flows(p, Eigen::Vector3d(-1, 1, 0));
  CHECK(f[0] == doctest::Approx(-2.0 / 3.0));
  CHECK(f[1] == doctest::Approx(-1.0 / 3.0));
  CHECK(f[2] == doctest::Approx(1.0 / 3.0));
  CHECK(compute_flows(p, Eigen::Vector3d::Zero()).isZero(0.0));
  const Eigen::Vector3d inj(1, 1, -2);
  CHECK((compute_flows(p, inj) - p.matrix.col(0) - p.matrix.col(1) + 2.0 * p.matrix.col(2)).norm() < 1e-12);
  CHECK_THROWS_AS(compute_flows(p, Eigen::Vector3d(1, 0, 0)), DataError);
}

TEST_CASE("PTDF properties on the 30-bus case") {
  const auto t = synth30();
  const auto p = compute_ptdf(t);
  const auto lines = oracle_lines(t);
  std::mt19937 rng(5);
  std::uniform_int_distribution<Index> pick(0, t.num_nodes() - 1);
  for (int trial = 0; trial < 100; ++trial) {
    const auto inj = random_balanced(t, rng);
    const auto f = compute_flows(p, inj);
    // Kirchhoff: A^T f = injections.
    CHECK((t.incidence.transpose() * f - inj).cwiseAbs().maxCoeff() < 1e-9);
    // Slack invariance.
    const auto q = compute_ptdf(t, {pick(rng)});
    CHECK((compute_flows(q, inj) - f).cwiseAbs().maxCoeff() < 1e-9);
    // Independent angle-based oracle.
    CHECK((oracle::dc_flows(static_cast<int>(t.num_nodes()), lines, 0, inj) - f).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("compute_lodf: examples") {
  SUBCASE("parallel lines") {
    const auto t = build_topology(network({"1", "2"}, {{"a", "1", "2"}, {"b", "1", "2"}}));
    const auto l = compute_lodf(compute_ptdf(t), t, std::vector<std::string>{"a"});
    CHECK(!l.islanding);
    CHECK(l.matrix(1, 0) == doctest::Approx(1.0));
    CHECK(l.matrix(0, 0) == -1.0);
  }
  SUBCASE("ring outage of 2-3") {
    const auto t = build_topology(ring());
    const auto l = compute_lodf(compute_ptdf(t), t, std::vector<std::string>{"2-3"});
    CHECK(l.matrix(0, 0) == doctest::Approx(-1.0));
    CHECK(l.matrix(1, 0) == doctest::Approx(1.0));
  }
  SUBCASE("radial outage islands") {
    const auto t = build_topology(network({"1", "2", "3"}, {{"a", "1", "2"}, {"b", "2", "3"}}));
    CHECK(compute_lodf(compute_ptdf(t), t, std::vector<std::string>{"b"}).islanding);
  }
  SUBCASE("double outage that cuts a ring node off") {
    const auto t = build_topology(ring());
    CHECK(compute_lodf(compute_ptdf(t), t, std::vector<std::string>{"1-2", "2-3"}).islanding);
  }
  SUBCASE("unknown outage id") {
    const auto t = build_topology(ring());
    CHECK_THROWS_AS(compute_lodf(compute_ptdf(t), t, std::vector<std::string>{"9-9"}), DataError);
  }
}

TEST_CASE("post_contingency_flows: ring examples") {
  const auto t = build_topology(ring());
  const auto p = compute_ptdf(t);
  ContingencyOptions opt;
  opt.enabled = true;
  const auto cs = enumerate_contingencies(t, p, opt);
  REQUIRE(cs.scenarios.size() == 3);
  const auto& out23 = cs.scenarios[2];
  CHECK(out23.id == "2-3");
  const auto f = post_contingency_flows(p, out23, Eigen::Vector3d(-1, 1, 0));
  CHECK(f[0] == doctest::Approx(-1.0));
  CHECK(f[1] == doctest::Approx(0.0));
  CHECK(f[2] == 0.0);
  CHECK(post_contingency_flows(p, out23, Eigen::Vector3d::Zero()).isZero(0.0));

  // Outage of an unloaded line leaves flows unchanged.
  const auto t2 = build_topology(network({"1", "2", "3"}, {{"a", "1", "2"}, {"b", "1", "2"}, {"c", "2", "3"}, {"d", "1", "3"}}));
  const auto p2 = compute_ptdf(t2);
  const Eigen::Vector3d inj(0, 0, 0);
  const auto cs2 = enumerate_contingencies(t2, p2, opt);
  for (const auto& sc : cs2.scenarios) CHECK(post_contingency_flows(p2, sc, inj).isZero(0.0));
}

TEST_CASE("LODF flows equal flows on the rebuilt outaged topology") {
  auto check_case = [](const Topology& t, int trials) {
    const auto p = compute_ptdf(t);
    std::mt19937 rng(17);
    std::size_t checked = 0;
    for (Index k = 0; k < t.num_lines(); ++k) {
      const auto l = compute_lodf(p, t, std::vector<Index>{k});
      if (l.islanding) continue;
      ContingencyScenario sc{t.line_ids[static_cast<std::size_t>(k)], {k}, false, l};
      const auto reduced = remove_lines(t, {k});
      REQUIRE(reduced.num_components() == t.num_components());
      const auto pr = compute_ptdf(reduced);
      for (int i = 0; i < trials; ++i) {
        const auto inj = random_balanced(t, rng);
        const auto post = post_contingency_flows(p, sc, inj);
        const auto ref = compute_flows(pr, inj);
        double err = std::abs(post[k]);
        for (Index j = 0, r = 0; j < t.num_lines(); ++j) {
          if (j == k) continue;
          err = std::max(err, std::abs(post[j] - ref[r++]));
        }
        CHECK(err <= 1e-8);
      }
      ++checked;
    }
    return checked;
  };
  CHECK(check_case(build_topology(ring()), 5) == 3);
  CHECK(check_case(synth30(), 3) > 20);
}

TEST_CASE("enumerate_contingencies: grouping, islanding, sensitivity") {
  const auto t = build_topology(ring());
  const auto p = compute_ptdf(t);
  ContingencyOptions opt;
  CHECK(enumerate_contingencies(t, p, opt).scenarios.empty());  // disabled
  opt.enabled = true;
  CHECK(enumerate_contingencies(t, p, opt).scenarios.size() == 3);

  SUBCASE("group") {
    opt.groups = {{"1-2", "1-3"}};
    const auto cs = enumerate_contingencies(t, p, opt);
    // Cutting both lines at node 1 isolates it.
    CHECK(cs.scenarios.size() == 1);
    CHECK(cs.islanding.size() == 1);
    CHECK(cs.scenarios[0].id == "2-3");
    CHECK(cs.islanding[0].id == "1-2+1-3");
  }
  SUBCASE("non-islanding group") {
    const auto t4 = build_topology(network({"1", "2"}, {{"a", "1", "2"}, {"b", "1", "2"}, {"c", "1", "2"}}));
    opt.groups = {{"a", "b"}};
    const auto cs = enumerate_contingencies(t4, compute_ptdf(t4), opt);
    REQUIRE(cs.scenarios.size() == 2);
    CHECK(cs.scenarios[0].id == "c");
    CHECK(cs.scenarios[1].id == "a+b");
    CHECK(cs.scenarios[1].lodf.matrix(2, 0) == doctest::Approx(1.0));
  }
  SUBCASE("ineligible line in a group") {
    auto ds = ring();
    ds.lines[2].contingency = false;
    const auto t2 = build_topology(ds);
    opt.groups = {{"2-3"}};
    CHECK_THROWS_AS(enumerate_contingencies(t2, compute_ptdf(t2), opt), DataError);
  }
  SUBCASE("radial network") {
    const auto t2 = build_topology(network({"1", "2"}, {{"l", "1", "2"}}));
    const auto cs = enumerate_contingencies(t2, compute_ptdf(t2), opt);
    CHECK(cs.scenarios.empty());
    CHECK(cs.islanding.size() == 1);
    CHECK(cs.warnings.size() == 1);
  }
  SUBCASE("threshold above every LODF") {
    opt.sensitivity_threshold = 1.1;
    const auto cs = enumerate_contingencies(t, p, opt);
    CHECK(cs.scenarios.empty());
    CHECK(cs.dropped.size() == 3);
  }
}

TEST_CASE("build_security_constraints: row counts and content") {
  const auto t = build_topology(ring());
  const auto p = compute_ptdf(t);
  ContingencyOptions opt;
  CHECK(build_security_constraints(p, enumerate_contingencies(t, p, opt), t).size() == 6);
  opt.enabled = true;
  const auto rep = build_security_constraints(p, enumerate_contingencies(t, p, opt), t);
  CHECK(rep.size() == 24);
  CHECK(rep.unreduced_rows == 24);
  CHECK(rep.row_id(0) == "1-2|basecase|+");
  CHECK(rep.row_id(1) == "1-2|basecase|-");
  CHECK(rep.row_id(6) == "1-2|1-2|+");
  CHECK(rep.rows.row(6).isZero(0.0));  // outaged line carries nothing
  // Line 1-2 under outage of 2-3 equals the radial PTDF row.
  const Eigen::Vector3d inj(-1, 1, 0);
  CHECK(rep.rows.row(18).dot(inj) == doctest::Approx(-1.0));
  for (Index i = 0; i < rep.size(); ++i) CHECK(rep.rhs[i] == 100.0);
  opt.sensitivity_threshold = 1.1;
  CHECK(build_security_constraints(p, enumerate_contingencies(t, p, opt), t).size() == 6);

  // Closed-form count on the 30-bus case.
  const auto t30 = synth30();
  const auto p30 = compute_ptdf(t30);
  ContingencyOptions all;
  all.enabled = true;
  const auto cs30 = enumerate_contingencies(t30, p30, all);
  const auto rep30 = build_security_constraints(p30, cs30, t30);
  CHECK(rep30.size() == 2 * t30.num_lines() * static_cast<Index>(cs30.scenarios.size() + 1));
  CHECK(cs30.scenarios.size() + cs30.islanding.size() + cs30.dropped.size() == static_cast<std::size_t>(t30.num_lines()));
}

TEST_CASE("injection_bounds: peak demand, capacity, storage and curtailment") {
  const auto ds = load_dataset(fixture::data("two_node"));
  const auto b = injection_bounds(ds, build_topology(ds));
  CHECK(b.lower == Eigen::Vector2d(0.0, -100.0));
  // Full curtailment of n2's 100 MW leaves p2's 100 MW as the upper end.
  CHECK(b.upper == Eigen::Vector2d(100.0, 100.0));

  // w2 carries wind at 0.9 peak availability, e2 gas and a 50 MW battery.
  const auto mixed = load_dataset(fixture::data("mixed"));
  const auto topo = build_topology(mixed);
  const auto m = injection_bounds(mixed, topo);
  const auto w2 = static_cast<Index>(mixed.node_index("w2"));
  const auto e2 = static_cast<Index>(mixed.node_index("e2"));
  CHECK(m.lower[w2] == doctest::Approx(-70.0));
  CHECK(m.upper[w2] == doctest::Approx(0.9 * 150.0));
  CHECK(m.lower[e2] == doctest::Approx(-90.0 - 50.0));
  CHECK(m.upper[e2] == doctest::Approx(150.0 + 50.0));
}
