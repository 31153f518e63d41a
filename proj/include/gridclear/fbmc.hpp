#pragma once

// Flow-based market coupling parameters (GSK, zonal PTDF, RAM) and 2D
// projections of the resulting net-position domain.

#include <Eigen/Dense>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "gridclear/market.hpp"

namespace gridclear {

// nodes x zones; each column sums to 1 over the zone's nodes.
struct Gsk {
  Eigen::MatrixXd matrix;
  GskStrategy strategy = GskStrategy::flat;
  std::vector<std::string> zone_ids;
  std::vector<std::string> warnings;
};

// basecase and timestep are used by the basecase strategy only (timestep is
// an index into the base case's horizon).
Gsk compute_gsk(const Dataset& dataset, const DispatchResult* basecase, GskStrategy strategy, int timestep = 0);

struct FbParameters {
  std::vector<std::string> zone_ids;
  std::vector<std::string> cbco_ids;
  Eigen::VectorXd capacity;                 // per row
  int t_start = 0;
  int timesteps = 1;
  std::vector<Eigen::MatrixXd> zonal_ptdf;  // per timestep: rows x zones
  Eigen::MatrixXd f_ref;                    // rows x timestep
  Eigen::MatrixXd ram;                      // rows x timestep, after flooring
  Eigen::MatrixXd np_base;                  // zones x timestep
  std::vector<int> floored;                 // rows floored per timestep
  std::vector<std::string> warnings;

  Index num_rows() const { return capacity.size(); }
};

// Per row: z = row * GSK, f_ref = row * INJ_base, ram = cap - f_ref + z * NP_base,
// floored at min_ram * cap. The GSK is recomputed per timestep for the
// basecase strategy and shared otherwise.
FbParameters compute_fb_parameters(const Dataset& dataset, const GridRepresentation& security, GskStrategy strategy,
                                   const DispatchResult& basecase, double min_ram);

// Drops FB rows that cannot bind for any net positions within
// [np_lower, np_upper] summing to zero. A row is kept when it is essential
// at some timestep. Returns the number of rows removed.
Index reduce_fb_parameters(FbParameters& fb, const Eigen::VectorXd& np_lower, const Eigen::VectorXd& np_upper);

struct DomainPolygon {
  std::string zone_x;
  std::string zone_y;
  int timestep = 0;
  std::vector<Eigen::Vector2d> vertices;     // counterclockwise
  std::vector<std::string> constraint_ids;   // halfspaces defining an edge
  bool clipped = false;                      // touches the plotting box
  bool empty() const { return vertices.empty(); }
  std::string diagnostic;
};

// Polygon of {p : a p <= b} inside the square |p_i| <= box. Redundant
// halfspaces are removed before the pairwise intersection.
DomainPolygon halfspace_polygon(const Eigen::MatrixX2d& a, const Eigen::VectorXd& b, const std::vector<std::string>& ids,
                                double box);

// Slice of the FB domain in the (zone_x, zone_y) plane; every other zone is
// held at fixed_np (missing entries default to the base-case net position).
DomainPolygon project_domain(const FbParameters& fb, int timestep, const std::string& zone_x, const std::string& zone_y,
                             const std::map<std::string, double>& fixed_np, double box);

// Sum of nodal demand peaks, the default plotting half-width.
double plotting_box(const Dataset& dataset);

// fb_parameters.csv with columns timestep,cbco_id,<zones...>,ram.
void write_fb_parameters(const FbParameters& fb, const std::filesystem::path& path);
// Ordered vertices as CSV and a minimal SVG rendering.
void write_domain_csv(const DomainPolygon& polygon, const std::filesystem::path& path);
void write_domain_svg(const DomainPolygon& polygon, double box, const std::filesystem::path& path);

}  // namespace gridclear
