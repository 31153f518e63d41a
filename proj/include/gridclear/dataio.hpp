#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "gridclear/errors.hpp"

namespace gridclear {

struct Node {
  std::string id;
  std::string zone;
  bool slack = false;
  std::optional<double> lat;
  std::optional<double> lon;
};

struct Zone {
  std::string id;
};

struct Line {
  std::string id;
  std::string from;
  std::string to;
  double reactance = 0.0;  // per unit
  double capacity = 0.0;   // MW
  bool contingency = true;
};

struct Plant {
  std::string id;
  std::string node;
  double mc_el = 0.0;  // currency/MWh
  double g_max = 0.0;  // MW
  double h_max = 0.0;  // MWth
  std::optional<std::string> heat_area;
  std::optional<double> eta;
  double storage_capacity = 0.0;  // MWh
  std::optional<double> chp_ratio;
  std::optional<std::string> availability;

  bool is_storage() const { return storage_capacity > 0.0; }
  bool is_chp() const { return !is_storage() && chp_ratio.has_value() && h_max > 0.0; }
  bool is_heat_only() const { return !is_storage() && !is_chp() && h_max > 0.0; }
  bool has_electric_output() const { return !is_storage() && (g_max > 0.0 || is_chp()); }
  bool has_heat_output() const { return is_chp() || is_heat_only(); }
};

struct Ntc {
  std::string from_zone;
  std::string to_zone;
  double capacity = 0.0;
};

// Per-timestep values, index = timestep.
struct TimeSeries {
  std::string id;
  std::vector<double> values;
};

enum class Severity { error, warning };

struct Finding {
  Severity severity = Severity::error;
  std::string table;
  std::string row;
  std::string message;

  std::string to_string() const;
};

struct ValidationReport {
  std::vector<Finding> findings;

  std::size_t errors() const;
  std::size_t warnings() const;
  bool valid() const { return errors() == 0; }
};

class Dataset {
 public:
  std::vector<Node> nodes;
  std::vector<Zone> zones;
  std::vector<Line> lines;
  std::vector<Plant> plants;
  std::vector<Ntc> ntcs;
  // nodes x timesteps, MW. Missing (timestep, node) entries are zero.
  Eigen::MatrixXd demand;
  // heat area -> per-timestep MWth.
  std::map<std::string, std::vector<double>> heat_demand;
  std::map<std::string, TimeSeries> availability;
  int timesteps = 1;
  ValidationReport validation;

  // Rebuilds id lookups; call after editing tables by hand.
  void reindex();

  std::optional<std::size_t> find_node(const std::string& id) const;
  std::optional<std::size_t> find_zone(const std::string& id) const;
  std::optional<std::size_t> find_line(const std::string& id) const;
  std::optional<std::size_t> find_plant(const std::string& id) const;

  std::size_t node_index(const std::string& id) const;
  std::size_t zone_index(const std::string& id) const;
  std::size_t line_index(const std::string& id) const;

  // Throws DataError unless the last validation found zero errors.
  void require_valid() const;

  // Model-facing accessors; each calls require_valid().
  double node_demand(std::size_t node, int t) const;
  double heat_demand_at(const std::string& area, int t) const;
  double availability_factor(const Plant& plant, int t) const;
  double demand_peak(std::size_t node) const;
  std::vector<std::string> heat_areas() const;

 private:
  std::unordered_map<std::string, std::size_t> node_ix_, zone_ix_, line_ix_, plant_ix_;
};

// Directory of CSV tables or a .zip archive holding the same files.
Dataset load_dataset(const std::filesystem::path& path);
ValidationReport validate_dataset(const Dataset& dataset);
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);

struct MatpowerImport {
  Dataset dataset;
  std::vector<std::string> warnings;
};
// Buses become nodes, in-service branches lines, in-service generators plants.
// Bus loads become a flat demand series over `timesteps`. Area pairs joined
// by branches get an NTC equal to the summed tie-line ratings.
MatpowerImport import_matpower_case(const std::filesystem::path& path, int timesteps = 1);
MatpowerImport parse_matpower_case(const std::string& text, int timesteps = 1);

enum class MarketType { copper_plate, nodal, zonal_ntc, zonal_fbmc };
enum class GskStrategy { flat, gmax, basecase };

const char* to_string(MarketType t);
const char* to_string(GskStrategy s);

struct RedispatchOptions {
  bool include = false;
  double cost = 50.0;
};

struct ContingencyOptions {
  bool enabled = false;
  double sensitivity_threshold = 0.05;
  std::vector<std::vector<std::string>> groups;
};

struct Options {
  MarketType type = MarketType::nodal;
  // [t_start, t_end); unset means the full dataset horizon.
  std::optional<std::pair<int, int>> model_horizon;
  RedispatchOptions redispatch;
  ContingencyOptions contingency;
  GskStrategy gsk_strategy = GskStrategy::flat;
  double min_ram = 0.0;
  double curtailment_cost = 1000.0;
  double infeasibility_penalty = 10000.0;
  bool redundancy_removal = true;

  std::vector<std::string> warnings;

  std::pair<int, int> horizon(const Dataset& dataset) const;
};

Options load_options(const std::filesystem::path& path);
Options parse_options(const std::string& json_text);

// Canonical JSON of the effective options (warnings excluded).
std::string options_to_json(const Options& options);

}  // namespace gridclear
