#pragma once

// DC network model: topology, PTDF/LODF sensitivities, contingency scenarios
// and the flow constraint rows (CBCOs) built from them.

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

#include "gridclear/dataio.hpp"

namespace gridclear {

using Eigen::Index;

struct Topology {
  std::vector<std::string> node_ids;
  std::vector<std::string> line_ids;
  std::vector<Index> line_from;
  std::vector<Index> line_to;
  Eigen::MatrixXd incidence;      // lines x nodes, +1 at from, -1 at to
  Eigen::VectorXd susceptance;    // 1 / reactance
  Eigen::VectorXd capacity;       // MW
  std::vector<bool> contingency;  // eligible as outage
  std::vector<Index> component;   // per node
  std::vector<Index> slack;       // per component

  Index num_nodes() const { return static_cast<Index>(node_ids.size()); }
  Index num_lines() const { return static_cast<Index>(line_ids.size()); }
  Index num_components() const { return static_cast<Index>(slack.size()); }
  std::vector<Index> component_nodes(Index c) const;
  Index line_index(const std::string& id) const;
};

// Slack per component: the flagged node, else the lowest node id
// (numeric ids compared as numbers).
Topology build_topology(const Dataset& dataset);

// Same nodes and slack choice rules, with `lines` removed. Components are
// recomputed; a component keeps its old slack when it still contains it.
Topology remove_lines(const Topology& topology, const std::vector<Index>& lines);

bool node_id_less(const std::string& a, const std::string& b);

struct PtdfMatrix {
  Eigen::MatrixXd matrix;  // lines x nodes
  std::vector<Index> slack;
  std::vector<Index> component;
};

PtdfMatrix compute_ptdf(const Topology& topology);
// Explicit slack per component (used to check slack invariance).
PtdfMatrix compute_ptdf(const Topology& topology, const std::vector<Index>& slack);

// Throws DataError when a component's injections do not sum to zero (1e-6 MW).
Eigen::VectorXd compute_flows(const PtdfMatrix& ptdf, const Eigen::VectorXd& injections);

struct Lodf {
  Eigen::MatrixXd matrix;  // lines x outaged lines; outaged block is -I
  std::vector<Index> outaged;
  bool islanding = false;
};

Lodf compute_lodf(const PtdfMatrix& ptdf, const Topology& topology, const std::vector<Index>& outage);
Lodf compute_lodf(const PtdfMatrix& ptdf, const Topology& topology, const std::vector<std::string>& outage_ids);

struct ContingencyScenario {
  std::string id;
  std::vector<Index> outaged;
  bool islanding = false;
  Lodf lodf;
};

struct ContingencySet {
  std::vector<ContingencyScenario> scenarios;  // usable: not islanding, above the sensitivity threshold
  std::vector<ContingencyScenario> islanding;
  std::vector<std::string> dropped;            // ids below the sensitivity threshold
  std::vector<std::string> warnings;
};

// One scenario per eligible line not covered by a group (line order), then
// one per group (declaration order). Empty when contingencies are disabled.
ContingencySet enumerate_contingencies(const Topology& topology, const PtdfMatrix& ptdf,
                                       const ContingencyOptions& options);

// f + L * f[outaged]. Throws DataError for islanding scenarios.
Eigen::VectorXd post_contingency_flows(const PtdfMatrix& ptdf, const ContingencyScenario& scenario,
                                       const Eigen::VectorXd& injections);

struct CbcoConstraint {
  Index line = 0;
  Index scenario = -1;  // -1 for the basecase
  int direction = 1;    // +1 or -1
};

// Linear flow constraints  rows * x <= rhs  over nodal injections (nodal
// space) or zonal net positions (zonal space).
struct GridRepresentation {
  enum class Space { nodal, zonal };

  Space space = Space::nodal;
  Eigen::MatrixXd rows;
  Eigen::VectorXd rhs;
  std::vector<CbcoConstraint> cbcos;  // one per row
  std::vector<std::string> line_ids;
  std::vector<std::string> scenario_ids;
  bool reduced = false;
  std::vector<Index> essential;  // indices into the unreduced rows when reduced
  Index unreduced_rows = 0;
  std::string provenance;        // cache key the rows were built for

  Index size() const { return rows.rows(); }
  std::string row_id(Index i) const;
};

// Rows grouped by scenario (basecase first); within a scenario, line order,
// + direction before -.
GridRepresentation build_security_constraints(const PtdfMatrix& ptdf, const ContingencySet& contingencies,
                                              const Topology& topology);

// Per-node range of net injection over the whole dataset horizon:
// [-peak demand - storage charging, generation capacity at peak availability
// + storage discharging]. The upper end assumes full curtailment. Every
// dispatch without infeasibility slack respects it, so it serves as the box
// for redundancy removal.
struct InjectionBounds {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
};
InjectionBounds injection_bounds(const Dataset& dataset, const Topology& topology);

}  // namespace gridclear
