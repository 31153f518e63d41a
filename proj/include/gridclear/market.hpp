#pragma once

// Dispatch LP (market clearing and redispatch), result extraction and
// overload analytics.

#include <Eigen/Dense>

#include <filesystem>
#include <string>
#include <vector>

#include "gridclear/dataio.hpp"
#include "gridclear/grid.hpp"
#include "gridclear/solver.hpp"

namespace gridclear {

struct FbParameters;

// Topology and PTDF of a dataset, built once and shared by every stage.
struct Network {
  Topology topology;
  PtdfMatrix ptdf;
};
Network build_network(const Dataset& dataset);

enum class Stage { market, redispatch };
const char* to_string(Stage s);

struct MarketConfig {
  MarketType type = MarketType::nodal;
  int t_start = 0;
  int t_end = 1;
  double curtailment_cost = 1000.0;
  double infeasibility_penalty = 10000.0;
  double redispatch_cost = 50.0;

  static MarketConfig from_options(const Options& options, const Dataset& dataset);
  int timesteps() const { return t_end - t_start; }
};

// Variable and row indices of a built dispatch LP. Index -1 marks an absent
// variable. Plant tables are plant x timestep; node tables node x timestep.
struct DispatchProblem {
  LinearProgram lp;
  MarketType type = MarketType::nodal;
  Stage stage = Stage::market;
  int t_start = 0;
  int timesteps = 1;

  std::vector<std::vector<Index>> g, h, charge, discharge, level;
  std::vector<std::vector<Index>> delta_up, delta_down;
  std::vector<std::vector<Index>> curtailment;  // per node
  std::vector<std::vector<Index>> injection;    // per node, nodal models only
  std::vector<std::vector<Index>> net_position; // per zone, zonal_fbmc only
  struct Exchange {
    std::size_t from = 0;
    std::size_t to = 0;
    std::vector<Index> vars;
  };
  std::vector<Exchange> exchanges;  // zonal_ntc only

  // Energy balances: one unit per node (nodal), zone (zonal) or the system
  // (copper plate). Rows are unit x timestep.
  std::vector<std::string> balance_units;
  std::vector<std::vector<std::size_t>> balance_nodes;
  std::vector<std::vector<Index>> balance_rows;
  std::vector<std::vector<Index>> infeasibility_up, infeasibility_down;

  std::vector<std::string> heat_areas;
  std::vector<std::vector<Index>> heat_shortfall;

  // Redispatch only: penalized deviation from the fixed zonal balances, so
  // a network that cannot carry the market's net positions stays solvable.
  std::vector<std::vector<Index>> zone_deviation_up, zone_deviation_down;

  Index network_rows = 0;
  Index storage_rows = 0;
  std::vector<Index> network_row_indices;  // LP rows of the grid (CBCO or FB) constraints
};

struct CostBreakdown {
  double generation = 0.0;
  double heat = 0.0;
  double curtailment = 0.0;
  double infeasibility = 0.0;
  double redispatch = 0.0;

  double total() const { return generation + heat + curtailment + infeasibility + redispatch; }
};

struct DispatchResult {
  Stage stage = Stage::market;
  MarketType type = MarketType::nodal;
  int t_start = 0;
  int timesteps = 1;

  std::vector<std::string> plant_ids;
  std::vector<std::string> node_ids;
  std::vector<std::string> zone_ids;
  std::vector<std::string> line_ids;

  Eigen::MatrixXd g, h, charge, discharge, level;  // plant x timestep
  Eigen::MatrixXd curtailment;                     // node x timestep
  std::vector<std::string> balance_units;
  Eigen::MatrixXd infeasibility;                   // unit x timestep, up minus down
  Eigen::MatrixXd infeasibility_abs;               // unit x timestep, up plus down
  Eigen::MatrixXd prices;                          // unit x timestep
  std::vector<std::string> heat_areas;
  Eigen::MatrixXd heat_shortfall;                  // area x timestep

  bool has_injections = false;
  Eigen::MatrixXd injections;     // node x timestep, from schedules
  Eigen::MatrixXd flows;          // line x timestep, PTDF * injections
  Eigen::MatrixXd net_positions;  // zone x timestep

  Eigen::MatrixXd delta_up, delta_down;  // redispatch stage only
  Eigen::MatrixXd zone_deviation;        // zone x timestep, redispatch stage only

  double objective = 0.0;
  CostBreakdown costs;
  std::vector<std::string> warnings;

  double total_infeasibility() const;
};

// grid: nodal rows for nodal models, nullptr otherwise. fb: required for
// zonal_fbmc, nullptr otherwise.
DispatchProblem build_dispatch(const Dataset& dataset, const Network& network, const GridRepresentation* grid,
                               const MarketConfig& config, const FbParameters* fb = nullptr);

DispatchResult run_market(const Dataset& dataset, const Network& network, const GridRepresentation* grid,
                          const MarketConfig& config, const FbParameters* fb = nullptr);

// Least-cost change of the market schedule that satisfies the nodal rows,
// with zonal balances fixed at the market's net positions (the system
// balance only, after a copper-plate market).
DispatchResult run_redispatch(const Dataset& dataset, const Network& network, const GridRepresentation& grid,
                              const DispatchResult& market, const MarketConfig& config);

struct Overload {
  std::string line;
  std::string scenario;  // "basecase" for N-0
  int timestep = 0;
  double flow = 0.0;
  double capacity = 0.0;
  double overload = 0.0;
};

std::vector<Overload> overloaded_lines_n0(const DispatchResult& result, const Network& network);
std::vector<Overload> overloaded_lines_n1(const DispatchResult& result, const Network& network,
                                          const ContingencySet& contingencies);

// Sum over plants and timesteps of |G_redispatch - G_market| (MWh); entries
// within 1e-9 relative of the market value count as zero.
double redispatch_quantity(const DispatchResult& market, const DispatchResult& redispatch);

// G.csv, H.csv, storage.csv, curtailment.csv, flows_n0.csv, net_positions.csv,
// prices.csv, redispatch.csv (redispatch stage), objective.json. Returns the
// written file names.
std::vector<std::string> write_results(const DispatchResult& result, const std::filesystem::path& dir);

}  // namespace gridclear
