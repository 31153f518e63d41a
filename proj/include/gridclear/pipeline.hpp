#pragma once

// Multi-stage run: load, grid representation, (FB parameters), market,
// (redispatch), report and exports, with a cache for reduced grids.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "gridclear/fbmc.hpp"
#include "gridclear/market.hpp"

namespace gridclear {

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

struct RunManifest {
  std::string options_hash;
  std::string dataset_path;
  std::string output_dir;
  std::vector<std::string> stages;  // completed, in order
  std::vector<StageTiming> timings;
  std::vector<std::string> warnings;
  std::vector<std::string> files;   // relative to output_dir, sorted
  bool success = false;
  std::string failed_stage;
  std::string error;
  std::string cache;                // "hit", "miss" or "off"
};

// The four quantities of the printed run summary plus their detail lists.
struct RunReport {
  std::optional<std::size_t> n0_market;      // unset when the market has no nodal injections
  std::optional<std::size_t> n1_market;
  std::optional<std::size_t> n0_redispatch;  // unset without a redispatch stage
  std::optional<std::size_t> n1_redispatch;
  std::optional<double> redispatch_mwh;
  std::vector<Overload> market_overloads;
  std::vector<Overload> redispatch_overloads;
};

struct PipelineOptions {
  bool use_cache = true;
  std::filesystem::path cache_dir;  // empty: <out>/cache
  std::ostream* log = nullptr;      // stage-prefixed progress lines
};

struct PipelineResult {
  RunManifest manifest;
  RunReport report;
  Options options;
  std::optional<DispatchResult> market;
  std::optional<DispatchResult> redispatch;
  std::optional<FbParameters> fb;
  Index grid_rows = 0;       // rows of the grid representation used
  Index unreduced_rows = 0;
};

// FNV-1a, 64 bit.
std::uint64_t fnv1a(const std::string& data, std::uint64_t seed = 14695981039346656037ull);
std::string hex64(std::uint64_t v);

// Directory or .zip of CSV tables, or a Matpower .m case (warnings appended).
Dataset load_any_dataset(const std::filesystem::path& path, std::vector<std::string>* warnings = nullptr);

// Security representation per options (N-0, or N-1 when contingencies are
// enabled), reduced when options.redundancy_removal is set. The essential
// row set is cached in cache_dir (empty: no cache) under a key of topology,
// scenarios, capacities, injection bounds and the reduction options.
struct GridBuild {
  Network network;
  ContingencySet contingencies;          // constrained scenarios
  ContingencySet analysis;               // scenarios for N-1 overload reports
  GridRepresentation security;           // reduced when requested
  std::optional<GridRepresentation> full;  // unreduced copy, when asked for
  std::string cache_key;
  std::string cache = "off";             // "hit", "miss" or "off"
  std::vector<std::string> warnings;
};
GridBuild build_grid(const Dataset& dataset, const Options& options, const std::filesystem::path& cache_dir,
                     bool keep_full = false, std::ostream* log = nullptr);

// Per-zone sums of the nodal injection bounds.
void zonal_injection_bounds(const Dataset& dataset, const Topology& topology, Eigen::VectorXd& lower,
                            Eigen::VectorXd& upper);

// Nodal base case on the grid, then FB parameters from the unreduced rows
// (grid.full when present), reduced in net-position space when
// options.redundancy_removal is set. The reduction holds only for net
// positions within the zonal injection bounds summing to zero; `unreduced`
// receives the parameters before it, for domain slices.
FbParameters build_fb_parameters(const Dataset& dataset, const Options& options, const GridBuild& grid,
                                  DispatchResult* basecase = nullptr, FbParameters* unreduced = nullptr);

// Throws DataError / SolveError / InternalError prefixed with the failing
// stage; the manifest is written before rethrowing.
PipelineResult run_pipeline(const std::filesystem::path& dataset_path, const std::filesystem::path& options_path,
                            const std::filesystem::path& out_dir, const PipelineOptions& run = {});

// The reduce subcommand: grid stage only; writes reduced_cbcos.csv and
// reduction.json to out_dir.
GridBuild run_reduce(const std::filesystem::path& dataset_path, const std::filesystem::path& options_path,
                     const std::filesystem::path& out_dir, const PipelineOptions& run = {});

// The domain subcommand: FB domain slice for zones (zone_x, zone_y) at
// absolute timestep t; writes domain_<x>_<y>_t<t>.csv and .svg to out_dir.
DomainPolygon run_domain(const std::filesystem::path& dataset_path, const std::filesystem::path& options_path,
                         const std::filesystem::path& out_dir, const std::string& zone_x, const std::string& zone_y,
                         int t, const PipelineOptions& run = {});

// report.txt and report.json in out_dir; returns the file names.
std::vector<std::string> write_report(const RunReport& report, const std::filesystem::path& out_dir);
std::string format_report(const RunReport& report);

// geo_nodes.csv, geo_lines.csv and geo.geojson. Skipped (warning) when any
// node lacks coordinates. Returns the written file names.
std::vector<std::string> emit_geo_data(const Dataset& dataset, const DispatchResult& market,
                                       const DispatchResult* redispatch, const std::filesystem::path& out_dir,
                                       std::vector<std::string>& warnings);

}  // namespace gridclear
