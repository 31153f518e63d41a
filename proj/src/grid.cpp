#include "gridclear/grid.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <set>

namespace gridclear {
namespace {

constexpr double kBalanceTolerance = 1e-6;
constexpr double kIslandingTolerance = 1e-8;

std::optional<double> as_number(const std::string& s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

// Labels nodes by connected component (BFS in node order) and returns the count.
Index label_components(const Topology& t, std::vector<Index>& component) {
  const auto n = static_cast<std::size_t>(t.num_nodes());
  std::vector<std::vector<Index>> adj(n);
  for (std::size_t k = 0; k < t.line_from.size(); ++k) {
    adj[static_cast<std::size_t>(t.line_from[k])].push_back(t.line_to[k]);
    adj[static_cast<std::size_t>(t.line_to[k])].push_back(t.line_from[k]);
  }
  component.assign(n, -1);
  Index count = 0;
  std::vector<Index> queue;
  for (std::size_t s = 0; s < n; ++s) {
    if (component[s] >= 0) continue;
    component[s] = count;
    queue.assign(1, static_cast<Index>(s));
    for (std::size_t q = 0; q < queue.size(); ++q) {
      for (Index v : adj[static_cast<std::size_t>(queue[q])]) {
        if (component[static_cast<std::size_t>(v)] < 0) {
          component[static_cast<std::size_t>(v)] = count;
          queue.push_back(v);
        }
      }
    }
    ++count;
  }
  return count;
}

// Picks one slack per component. `preferred` flags win; otherwise the lowest id.
std::vector<Index> choose_slacks(const Topology& t, Index components, const std::vector<bool>& preferred) {
  std::vector<Index> slack(static_cast<std::size_t>(components), -1);
  for (Index i = 0; i < t.num_nodes(); ++i) {
    const auto c = static_cast<std::size_t>(t.component[static_cast<std::size_t>(i)]);
    if (!preferred[static_cast<std::size_t>(i)]) continue;
    if (slack[c] >= 0) {
      throw DataError("nodes '" + t.node_ids[static_cast<std::size_t>(slack[c])] + "' and '" +
                      t.node_ids[static_cast<std::size_t>(i)] + "' are both slack in one connected component");
    }
    slack[c] = i;
  }
  for (Index i = 0; i < t.num_nodes(); ++i) {
    const auto c = static_cast<std::size_t>(t.component[static_cast<std::size_t>(i)]);
    if (slack[c] < 0 || (!preferred[static_cast<std::size_t>(slack[c])] &&
                         node_id_less(t.node_ids[static_cast<std::size_t>(i)],
                                      t.node_ids[static_cast<std::size_t>(slack[c])]))) {
      slack[c] = i;
    }
  }
  return slack;
}

void fill_matrices(Topology& t, const std::vector<double>& reactance) {
  const Index m = t.num_lines();
  t.incidence = Eigen::MatrixXd::Zero(m, t.num_nodes());
  t.susceptance.resize(m);
  for (Index k = 0; k < m; ++k) {
    t.incidence(k, t.line_from[static_cast<std::size_t>(k)]) = 1.0;
    t.incidence(k, t.line_to[static_cast<std::size_t>(k)]) = -1.0;
    t.susceptance[k] = 1.0 / reactance[static_cast<std::size_t>(k)];
  }
}

}  // namespace

bool node_id_less(const std::string& a, const std::string& b) {
  const auto na = as_number(a);
  const auto nb = as_number(b);
  if (na && nb && *na != *nb) return *na < *nb;
  if (na.has_value() != nb.has_value()) return na.has_value();
  return a < b;
}

std::vector<Index> Topology::component_nodes(Index c) const {
  std::vector<Index> out;
  for (Index i = 0; i < num_nodes(); ++i) {
    if (component[static_cast<std::size_t>(i)] == c) out.push_back(i);
  }
  return out;
}

Index Topology::line_index(const std::string& id) const {
  auto it = std::find(line_ids.begin(), line_ids.end(), id);
  if (it == line_ids.end()) throw DataError("unknown line '" + id + "'");
  return static_cast<Index>(it - line_ids.begin());
}

Topology build_topology(const Dataset& ds) {
  ds.require_valid();
  Topology t;
  std::vector<bool> flagged;
  for (const auto& n : ds.nodes) {
    t.node_ids.push_back(n.id);
    flagged.push_back(n.slack);
  }
  std::vector<double> reactance;
  t.capacity.resize(static_cast<Index>(ds.lines.size()));
  for (const auto& l : ds.lines) {
    t.capacity[static_cast<Index>(t.line_ids.size())] = l.capacity;
    t.line_ids.push_back(l.id);
    t.line_from.push_back(static_cast<Index>(ds.node_index(l.from)));
    t.line_to.push_back(static_cast<Index>(ds.node_index(l.to)));
    t.contingency.push_back(l.contingency);
    reactance.push_back(l.reactance);
  }
  fill_matrices(t, reactance);
  const Index comps = label_components(t, t.component);
  t.slack = choose_slacks(t, comps, flagged);
  return t;
}

Topology remove_lines(const Topology& src, const std::vector<Index>& lines) {
  const std::set<Index> drop(lines.begin(), lines.end());
  Topology t;
  t.node_ids = src.node_ids;
  std::vector<double> reactance;
  std::vector<double> cap;
  for (Index k = 0; k < src.num_lines(); ++k) {
    if (drop.count(k)) continue;
    const auto ks = static_cast<std::size_t>(k);
    t.line_ids.push_back(src.line_ids[ks]);
    t.line_from.push_back(src.line_from[ks]);
    t.line_to.push_back(src.line_to[ks]);
    t.contingency.push_back(src.contingency[ks]);
    reactance.push_back(1.0 / src.susceptance[k]);
    cap.push_back(src.capacity[k]);
  }
  t.capacity = Eigen::Map<const Eigen::VectorXd>(cap.data(), static_cast<Index>(cap.size()));
  fill_matrices(t, reactance);
  const Index comps = label_components(t, t.component);
  std::vector<bool> keep(static_cast<std::size_t>(t.num_nodes()), false);
  std::vector<bool> taken(static_cast<std::size_t>(comps), false);
  for (Index s : src.slack) {
    const auto c = static_cast<std::size_t>(t.component[static_cast<std::size_t>(s)]);
    if (!taken[c]) keep[static_cast<std::size_t>(s)] = taken[c] = true;
  }
  t.slack = choose_slacks(t, comps, keep);
  return t;
}

PtdfMatrix compute_ptdf(const Topology& t) { return compute_ptdf(t, t.slack); }

PtdfMatrix compute_ptdf(const Topology& t, const std::vector<Index>& slack) {
  if (static_cast<Index>(slack.size()) != t.num_components()) {
    throw std::invalid_argument("compute_ptdf: need one slack per component");
  }
  PtdfMatrix out;
  out.slack = slack;
  out.component = t.component;
  out.matrix = Eigen::MatrixXd::Zero(t.num_lines(), t.num_nodes());

  std::vector<std::vector<Index>> comp_lines(static_cast<std::size_t>(t.num_components()));
  for (Index k = 0; k < t.num_lines(); ++k) {
    comp_lines[static_cast<std::size_t>(t.component[static_cast<std::size_t>(t.line_from[static_cast<std::size_t>(k)])])]
        .push_back(k);
  }
  for (Index c = 0; c < t.num_components(); ++c) {
    const auto s = slack[static_cast<std::size_t>(c)];
    if (t.component[static_cast<std::size_t>(s)] != c) {
      throw std::invalid_argument("compute_ptdf: slack node outside its component");
    }
    std::vector<Index> nodes;  // non-slack nodes of the component
    for (Index i : t.component_nodes(c)) {
      if (i != s) nodes.push_back(i);
    }
    const auto& lines = comp_lines[static_cast<std::size_t>(c)];
    if (nodes.empty() || lines.empty()) continue;

    const auto nn = static_cast<Index>(nodes.size());
    const auto nl = static_cast<Index>(lines.size());
    Eigen::MatrixXd a(nl, nn);  // reduced incidence
    Eigen::VectorXd b(nl);
    for (Index r = 0; r < nl; ++r) {
      b[r] = t.susceptance[lines[static_cast<std::size_t>(r)]];
      for (Index j = 0; j < nn; ++j) a(r, j) = t.incidence(lines[static_cast<std::size_t>(r)], nodes[static_cast<std::size_t>(j)]);
    }
    const Eigen::MatrixXd ba = b.asDiagonal() * a;
    const Eigen::MatrixXd laplacian = a.transpose() * ba;
    Eigen::LLT<Eigen::MatrixXd> llt(laplacian);
    if (llt.info() != Eigen::Success) throw InternalError("compute_ptdf: singular reduced susceptance matrix");
    // PTDF block = diag(b) A_red B_red^-1 = (B_red^-1 A_red^T diag(b))^T, B_red symmetric.
    const Eigen::MatrixXd block = llt.solve(ba.transpose()).transpose();
    for (Index r = 0; r < nl; ++r) {
      for (Index j = 0; j < nn; ++j) {
        out.matrix(lines[static_cast<std::size_t>(r)], nodes[static_cast<std::size_t>(j)]) = block(r, j);
      }
    }
  }
  return out;
}

Eigen::VectorXd compute_flows(const PtdfMatrix& ptdf, const Eigen::VectorXd& inj) {
  if (inj.size() != ptdf.matrix.cols()) throw std::invalid_argument("compute_flows: injection vector has wrong size");
  std::vector<double> balance(ptdf.slack.size(), 0.0);
  for (Index i = 0; i < inj.size(); ++i) balance[static_cast<std::size_t>(ptdf.component[static_cast<std::size_t>(i)])] += inj[i];
  for (std::size_t c = 0; c < balance.size(); ++c) {
    if (std::abs(balance[c]) > kBalanceTolerance) {
      throw DataError("compute_flows: injections in component " + std::to_string(c) + " do not balance (sum " +
                      std::to_string(balance[c]) + " MW)");
    }
  }
  return ptdf.matrix * inj;
}

Lodf compute_lodf(const PtdfMatrix& ptdf, const Topology& t, const std::vector<Index>& outage) {
  if (outage.empty()) throw std::invalid_argument("compute_lodf: empty outage set");
  std::set<Index> seen;
  for (Index k : outage) {
    if (k < 0 || k >= t.num_lines()) throw DataError("compute_lodf: outage line index out of range");
    if (!seen.insert(k).second) throw DataError("compute_lodf: line '" + t.line_ids[static_cast<std::size_t>(k)] + "' listed twice");
  }
  const auto no = static_cast<Index>(outage.size());
  // PTDF * D_O: flow response to a unit transfer across each outaged line.
  Eigen::MatrixXd pd(t.num_lines(), no);
  for (Index j = 0; j < no; ++j) {
    const auto k = static_cast<std::size_t>(outage[static_cast<std::size_t>(j)]);
    pd.col(j) = ptdf.matrix.col(t.line_from[k]) - ptdf.matrix.col(t.line_to[k]);
  }
  Eigen::MatrixXd m(no, no);
  for (Index i = 0; i < no; ++i) m.row(i) = -pd.row(outage[static_cast<std::size_t>(i)]);
  m.diagonal().array() += 1.0;

  Lodf out;
  out.outaged = outage;
  if (no == 1) {
    out.islanding = std::abs(m(0, 0)) < kIslandingTolerance;
  } else {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    out.islanding = svd.singularValues().minCoeff() < kIslandingTolerance;
  }
  if (out.islanding) {
    out.matrix = Eigen::MatrixXd::Zero(t.num_lines(), no);
  } else {
    out.matrix = m.transpose().partialPivLu().solve(pd.transpose()).transpose();
  }
  for (Index i = 0; i < no; ++i) {
    out.matrix.row(outage[static_cast<std::size_t>(i)]).setZero();
    out.matrix(outage[static_cast<std::size_t>(i)], i) = -1.0;
  }
  return out;
}

Lodf compute_lodf(const PtdfMatrix& ptdf, const Topology& t, const std::vector<std::string>& ids) {
  std::vector<Index> idx;
  for (const auto& id : ids) idx.push_back(t.line_index(id));
  return compute_lodf(ptdf, t, idx);
}

ContingencySet enumerate_contingencies(const Topology& t, const PtdfMatrix& ptdf, const ContingencyOptions& opt) {
  ContingencySet out;
  if (!opt.enabled) return out;

  std::vector<std::vector<Index>> groups;
  std::vector<bool> grouped(static_cast<std::size_t>(t.num_lines()), false);
  for (const auto& g : opt.groups) {
    std::vector<Index> idx;
    for (const auto& id : g) {
      const Index k = t.line_index(id);
      if (!t.contingency[static_cast<std::size_t>(k)]) {
        throw DataError("contingency group contains line '" + id + "', which is not eligible as an outage");
      }
      idx.push_back(k);
      grouped[static_cast<std::size_t>(k)] = true;
    }
    groups.push_back(std::move(idx));
  }

  std::vector<std::pair<std::string, std::vector<Index>>> candidates;
  for (Index k = 0; k < t.num_lines(); ++k) {
    if (t.contingency[static_cast<std::size_t>(k)] && !grouped[static_cast<std::size_t>(k)]) {
      candidates.push_back({t.line_ids[static_cast<std::size_t>(k)], {k}});
    }
  }
  for (const auto& g : groups) {
    std::string id;
    for (Index k : g) id += (id.empty() ? "" : "+") + t.line_ids[static_cast<std::size_t>(k)];
    candidates.push_back({id, g});
  }

  for (auto& [id, lines] : candidates) {
    ContingencyScenario sc;
    sc.id = id;
    sc.outaged = lines;
    sc.lodf = compute_lodf(ptdf, t, lines);
    sc.islanding = sc.lodf.islanding;
    if (sc.islanding) {
      out.warnings.push_back("contingency '" + id + "' splits the network; excluded from security constraints");
      out.islanding.push_back(std::move(sc));
      continue;
    }
    double sensitivity = 0.0;
    const std::set<Index> outaged(lines.begin(), lines.end());
    for (Index l = 0; l < t.num_lines(); ++l) {
      if (!outaged.count(l)) sensitivity = std::max(sensitivity, sc.lodf.matrix.row(l).cwiseAbs().maxCoeff());
    }
    if (sensitivity < opt.sensitivity_threshold) {
      out.dropped.push_back(id);
      continue;
    }
    out.scenarios.push_back(std::move(sc));
  }
  return out;
}

Eigen::VectorXd post_contingency_flows(const PtdfMatrix& ptdf, const ContingencyScenario& sc, const Eigen::VectorXd& inj) {
  if (sc.islanding) throw DataError("contingency '" + sc.id + "' islands the network; post-outage flows undefined");
  const Eigen::VectorXd f = compute_flows(ptdf, inj);
  Eigen::VectorXd fo(static_cast<Index>(sc.outaged.size()));
  for (std::size_t j = 0; j < sc.outaged.size(); ++j) fo[static_cast<Index>(j)] = f[sc.outaged[j]];
  Eigen::VectorXd post = f + sc.lodf.matrix * fo;
  for (Index k : sc.outaged) post[k] = 0.0;
  return post;
}

std::string GridRepresentation::row_id(Index i) const {
  const auto& c = cbcos[static_cast<std::size_t>(i)];
  const std::string sc = c.scenario < 0 ? "basecase" : scenario_ids[static_cast<std::size_t>(c.scenario)];
  return line_ids[static_cast<std::size_t>(c.line)] + "|" + sc + "|" + (c.direction > 0 ? "+" : "-");
}

GridRepresentation build_security_constraints(const PtdfMatrix& ptdf, const ContingencySet& cs, const Topology& t) {
  GridRepresentation rep;
  rep.space = GridRepresentation::Space::nodal;
  rep.line_ids = t.line_ids;
  for (const auto& sc : cs.scenarios) rep.scenario_ids.push_back(sc.id);

  const Index nl = t.num_lines();
  const Index total = 2 * nl * static_cast<Index>(cs.scenarios.size() + 1);
  rep.rows.resize(total, t.num_nodes());
  rep.rhs.resize(total);
  rep.cbcos.reserve(static_cast<std::size_t>(total));
  Index r = 0;
  auto emit = [&](const Eigen::MatrixXd& sens, Index scenario) {
    for (Index l = 0; l < nl; ++l) {
      for (int dir : {1, -1}) {
        rep.rows.row(r) = dir * sens.row(l);
        rep.rhs[r] = t.capacity[l];
        rep.cbcos.push_back({l, scenario, dir});
        ++r;
      }
    }
  };
  emit(ptdf.matrix, -1);
  for (std::size_t s = 0; s < cs.scenarios.size(); ++s) {
    const auto& sc = cs.scenarios[s];
    Eigen::MatrixXd po(static_cast<Index>(sc.outaged.size()), t.num_nodes());
    for (std::size_t j = 0; j < sc.outaged.size(); ++j) po.row(static_cast<Index>(j)) = ptdf.matrix.row(sc.outaged[j]);
    Eigen::MatrixXd sens = ptdf.matrix + sc.lodf.matrix * po;
    for (Index k : sc.outaged) sens.row(k).setZero();
    emit(sens, static_cast<Index>(s));
  }
  rep.unreduced_rows = total;
  return rep;
}

InjectionBounds injection_bounds(const Dataset& ds, const Topology& t) {
  ds.require_valid();
  const Index n = t.num_nodes();
  InjectionBounds out{Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n)};
  // Curtailment can cancel any demand, so demand only lowers the lower bound.
  if (ds.demand.cols() > 0) out.lower = -ds.demand.rowwise().maxCoeff();
  for (const auto& p : ds.plants) {
    const auto k = static_cast<Index>(ds.node_index(p.node));
    if (p.is_storage()) {
      out.lower[k] -= p.g_max;
      out.upper[k] += p.g_max;
    } else if (p.has_electric_output()) {
      double peak = 0.0;
      for (int s = 0; s < ds.timesteps; ++s) peak = std::max(peak, ds.availability_factor(p, s));
      out.upper[k] += p.g_max * peak;
    }
  }
  return out;
}

}  // namespace gridclear
