#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "csv.hpp"
#include "gridclear/dataio.hpp"
#include "zip.hpp"

namespace gridclear {

std::string Finding::to_string() const {
  std::string s = severity == Severity::error ? "error" : "warning";
  s += " [" + table;
  if (!row.empty()) s += ":" + row;
  s += "] " + message;
  return s;
}

std::size_t ValidationReport::errors() const {
  return static_cast<std::size_t>(std::count_if(findings.begin(), findings.end(),
                                                [](const Finding& f) { return f.severity == Severity::error; }));
}

std::size_t ValidationReport::warnings() const { return findings.size() - errors(); }

void Dataset::reindex() {
  node_ix_.clear();
  zone_ix_.clear();
  line_ix_.clear();
  plant_ix_.clear();
  for (std::size_t i = 0; i < nodes.size(); ++i) node_ix_.emplace(nodes[i].id, i);
  for (std::size_t i = 0; i < zones.size(); ++i) zone_ix_.emplace(zones[i].id, i);
  for (std::size_t i = 0; i < lines.size(); ++i) line_ix_.emplace(lines[i].id, i);
  for (std::size_t i = 0; i < plants.size(); ++i) plant_ix_.emplace(plants[i].id, i);
}

namespace {

std::optional<std::size_t> lookup(const std::unordered_map<std::string, std::size_t>& ix, const std::string& id) {
  auto it = ix.find(id);
  if (it == ix.end()) return std::nullopt;
  return it->second;
}

}  // namespace

std::optional<std::size_t> Dataset::find_node(const std::string& id) const { return lookup(node_ix_, id); }
std::optional<std::size_t> Dataset::find_zone(const std::string& id) const { return lookup(zone_ix_, id); }
std::optional<std::size_t> Dataset::find_line(const std::string& id) const { return lookup(line_ix_, id); }
std::optional<std::size_t> Dataset::find_plant(const std::string& id) const { return lookup(plant_ix_, id); }

std::size_t Dataset::node_index(const std::string& id) const {
  if (auto i = find_node(id)) return *i;
  throw DataError("unknown node '" + id + "'");
}
std::size_t Dataset::zone_index(const std::string& id) const {
  if (auto i = find_zone(id)) return *i;
  throw DataError("unknown zone '" + id + "'");
}
std::size_t Dataset::line_index(const std::string& id) const {
  if (auto i = find_line(id)) return *i;
  throw DataError("unknown line '" + id + "'");
}

void Dataset::require_valid() const {
  if (!validation.valid()) {
    std::string msg = "dataset has " + std::to_string(validation.errors()) + " validation error(s)";
    for (const auto& f : validation.findings) {
      if (f.severity == Severity::error) {
        msg += "; first: " + f.to_string();
        break;
      }
    }
    throw DataError(msg);
  }
}

double Dataset::node_demand(std::size_t node, int t) const {
  require_valid();
  return demand(static_cast<Eigen::Index>(node), t);
}

double Dataset::heat_demand_at(const std::string& area, int t) const {
  require_valid();
  auto it = heat_demand.find(area);
  if (it == heat_demand.end()) return 0.0;
  return it->second[static_cast<std::size_t>(t)];
}

double Dataset::availability_factor(const Plant& plant, int t) const {
  require_valid();
  if (!plant.availability) return 1.0;
  return availability.at(*plant.availability).values[static_cast<std::size_t>(t)];
}

double Dataset::demand_peak(std::size_t node) const {
  require_valid();
  if (demand.cols() == 0) return 0.0;
  return std::max(0.0, demand.row(static_cast<Eigen::Index>(node)).maxCoeff());
}

std::vector<std::string> Dataset::heat_areas() const {
  std::set<std::string> areas;
  for (const auto& p : plants) {
    if (p.heat_area) areas.insert(*p.heat_area);
  }
  for (const auto& [a, v] : heat_demand) areas.insert(a);
  return {areas.begin(), areas.end()};
}

// ---------------------------------------------------------------------------
// Loading

namespace {

class Source {
 public:
  explicit Source(const std::filesystem::path& path) : path_(path) {
    if (std::filesystem::is_directory(path)) return;
    if (!std::filesystem::exists(path)) throw DataError("dataset path does not exist: " + path.string());
    auto files = zip::read_archive(path);
    for (auto& [name, content] : files) {
      // Archives may wrap the tables in a top-level folder.
      const auto base = std::filesystem::path(name).filename().string();
      archive_.emplace(base, std::move(content));
    }
    is_archive_ = true;
  }

  std::optional<std::string> read(const std::string& file) const {
    if (is_archive_) {
      auto it = archive_.find(file);
      if (it == archive_.end()) return std::nullopt;
      return it->second;
    }
    const auto p = path_ / file;
    if (!std::filesystem::exists(p)) return std::nullopt;
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

 private:
  std::filesystem::path path_;
  bool is_archive_ = false;
  std::map<std::string, std::string> archive_;
};

struct TableReader {
  const csv::Table& table;

  std::size_t require_column(const std::string& col) const {
    if (auto c = table.column(col)) return *c;
    throw DataError(table.name + ": missing column '" + col + "'");
  }

  std::string where(std::size_t row, const std::string& col) const {
    return table.name + " row " + std::to_string(table.line_numbers[row]) + " column '" + col + "'";
  }

  std::string str(std::size_t row, const std::string& col) const {
    return table.rows[row][require_column(col)];
  }

  std::optional<std::string> opt_str(std::size_t row, const std::string& col) const {
    auto c = table.column(col);
    if (!c) return std::nullopt;
    const auto& v = table.rows[row][*c];
    if (v.empty()) return std::nullopt;
    return v;
  }

  double num(std::size_t row, const std::string& col) const {
    auto v = opt_num(row, col);
    if (!v) throw DataError(where(row, col) + ": value required");
    return *v;
  }

  std::optional<double> opt_num(std::size_t row, const std::string& col) const {
    auto s = opt_str(row, col);
    if (!s) return std::nullopt;
    std::string lower = *s;
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == "inf" || lower == "+inf" || lower == "infinity") return kInf();
    if (lower == "-inf" || lower == "-infinity") return -kInf();
    char* end = nullptr;
    const double v = std::strtod(s->c_str(), &end);
    if (end == s->c_str() || *end != '\0' || std::isnan(v)) {
      throw DataError(where(row, col) + ": '" + *s + "' is not a number");
    }
    return v;
  }

  int integer(std::size_t row, const std::string& col) const {
    const double v = num(row, col);
    if (v != std::floor(v) || v < 0 || v > 1e9) {
      throw DataError(where(row, col) + ": expected a non-negative integer");
    }
    return static_cast<int>(v);
  }

  bool boolean(std::size_t row, const std::string& col, bool fallback) const {
    auto s = opt_str(row, col);
    if (!s) return fallback;
    std::string v = *s;
    std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw DataError(where(row, col) + ": '" + *s + "' is not a boolean");
  }

  static double kInf() { return std::numeric_limits<double>::infinity(); }
};

csv::Table required_table(const Source& src, const std::string& file) {
  auto text = src.read(file);
  if (!text) throw DataError("missing table " + file);
  return csv::parse(*text, file);
}

std::optional<csv::Table> optional_table(const Source& src, const std::string& file) {
  auto text = src.read(file);
  if (!text) return std::nullopt;
  return csv::parse(*text, file);
}

void require_reference(bool ok, const TableReader& r, std::size_t row, const std::string& col, const std::string& what) {
  if (!ok) throw DataError(r.where(row, col) + ": reference to unknown " + what + " '" + r.str(row, col) + "'");
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& path) {
  const Source src(path);
  Dataset ds;

  const auto zones = required_table(src, "zones.csv");
  {
    TableReader r{zones};
    for (std::size_t i = 0; i < zones.rows.size(); ++i) ds.zones.push_back({r.str(i, "id")});
  }
  const auto nodes = required_table(src, "nodes.csv");
  {
    TableReader r{nodes};
    for (std::size_t i = 0; i < nodes.rows.size(); ++i) {
      Node n;
      n.id = r.str(i, "id");
      n.zone = r.str(i, "zone");
      n.slack = r.boolean(i, "slack", false);
      n.lat = r.opt_num(i, "lat");
      n.lon = r.opt_num(i, "lon");
      ds.nodes.push_back(std::move(n));
    }
  }
  const auto lines = required_table(src, "lines.csv");
  {
    TableReader r{lines};
    for (std::size_t i = 0; i < lines.rows.size(); ++i) {
      Line l;
      l.id = r.str(i, "id");
      l.from = r.str(i, "node_from");
      l.to = r.str(i, "node_to");
      l.reactance = r.num(i, "reactance");
      l.capacity = r.num(i, "capacity");
      l.contingency = r.boolean(i, "contingency", true);
      ds.lines.push_back(std::move(l));
    }
  }
  const auto plants = required_table(src, "plants.csv");
  {
    TableReader r{plants};
    for (std::size_t i = 0; i < plants.rows.size(); ++i) {
      Plant p;
      p.id = r.str(i, "id");
      p.node = r.str(i, "node");
      p.mc_el = r.num(i, "mc_el");
      p.g_max = r.num(i, "g_max");
      p.h_max = r.opt_num(i, "h_max").value_or(0.0);
      p.heat_area = r.opt_str(i, "heat_area");
      p.eta = r.opt_num(i, "eta");
      p.storage_capacity = r.opt_num(i, "storage_capacity").value_or(0.0);
      p.chp_ratio = r.opt_num(i, "chp_ratio");
      p.availability = r.opt_str(i, "availability");
      ds.plants.push_back(std::move(p));
    }
  }
  if (auto ntc = optional_table(src, "ntc.csv")) {
    TableReader r{*ntc};
    for (std::size_t i = 0; i < ntc->rows.size(); ++i) {
      ds.ntcs.push_back({r.str(i, "zone_from"), r.str(i, "zone_to"), r.num(i, "capacity")});
    }
  }
  ds.reindex();

  // Cross references.
  {
    TableReader r{nodes};
    for (std::size_t i = 0; i < ds.nodes.size(); ++i) {
      require_reference(ds.find_zone(ds.nodes[i].zone).has_value(), r, i, "zone", "zone");
    }
  }
  {
    TableReader r{lines};
    for (std::size_t i = 0; i < ds.lines.size(); ++i) {
      require_reference(ds.find_node(ds.lines[i].from).has_value(), r, i, "node_from", "node");
      require_reference(ds.find_node(ds.lines[i].to).has_value(), r, i, "node_to", "node");
    }
  }
  {
    TableReader r{plants};
    for (std::size_t i = 0; i < ds.plants.size(); ++i) {
      require_reference(ds.find_node(ds.plants[i].node).has_value(), r, i, "node", "node");
    }
  }
  if (auto ntc = optional_table(src, "ntc.csv")) {
    TableReader r{*ntc};
    for (std::size_t i = 0; i < ds.ntcs.size(); ++i) {
      require_reference(ds.find_zone(ds.ntcs[i].from_zone).has_value(), r, i, "zone_from", "zone");
      require_reference(ds.find_zone(ds.ntcs[i].to_zone).has_value(), r, i, "zone_to", "zone");
    }
  }

  // Time series. Collect first, then size everything to the common horizon.
  struct Entry {
    int t;
    std::string key;
    double value;
    std::size_t row;
  };
  auto read_series = [&](const csv::Table& table, const std::string& key_col) {
    TableReader r{table};
    std::vector<Entry> out;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
      out.push_back({r.integer(i, "timestep"), r.str(i, key_col), r.num(i, "value"), i});
    }
    return out;
  };
  const auto demand_table = required_table(src, "demand.csv");
  const auto demand_rows = read_series(demand_table, "node");
  const auto heat_table = optional_table(src, "heat_demand.csv");
  const auto heat_rows = heat_table ? read_series(*heat_table, "heat_area") : std::vector<Entry>{};
  const auto avail_table = optional_table(src, "availability.csv");
  const auto avail_rows = avail_table ? read_series(*avail_table, "id") : std::vector<Entry>{};

  int max_t = -1;
  for (const auto* rows : {&demand_rows, &heat_rows, &avail_rows}) {
    for (const auto& e : *rows) max_t = std::max(max_t, e.t);
  }
  ds.timesteps = std::max(1, max_t + 1);

  ds.demand = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(ds.nodes.size()), ds.timesteps);
  {
    TableReader r{demand_table};
    std::set<std::pair<int, std::string>> seen;
    for (const auto& e : demand_rows) {
      auto n = ds.find_node(e.key);
      require_reference(n.has_value(), r, e.row, "node", "node");
      if (!seen.emplace(e.t, e.key).second) throw DataError(r.where(e.row, "node") + ": duplicate (timestep, node)");
      ds.demand(static_cast<Eigen::Index>(*n), e.t) = e.value;
    }
  }
  for (const auto& e : heat_rows) {
    auto& v = ds.heat_demand[e.key];
    v.resize(static_cast<std::size_t>(ds.timesteps), 0.0);
    v[static_cast<std::size_t>(e.t)] = e.value;
  }
  for (auto& [area, v] : ds.heat_demand) v.resize(static_cast<std::size_t>(ds.timesteps), 0.0);

  // Availability must be dense; gaps are reported by validation (NaN marks a gap).
  for (const auto& e : avail_rows) {
    auto& s = ds.availability[e.key];
    s.id = e.key;
    s.values.resize(static_cast<std::size_t>(ds.timesteps), std::numeric_limits<double>::quiet_NaN());
    s.values[static_cast<std::size_t>(e.t)] = e.value;
  }
  for (auto& [id, s] : ds.availability) {
    s.values.resize(static_cast<std::size_t>(ds.timesteps), std::numeric_limits<double>::quiet_NaN());
  }

  ds.validation = validate_dataset(ds);
  return ds;
}

// ---------------------------------------------------------------------------
// Validation

ValidationReport validate_dataset(const Dataset& ds) {
  ValidationReport rep;
  auto error = [&](std::string table, std::string row, std::string msg) {
    rep.findings.push_back({Severity::error, std::move(table), std::move(row), std::move(msg)});
  };
  auto warn = [&](std::string table, std::string row, std::string msg) {
    rep.findings.push_back({Severity::warning, std::move(table), std::move(row), std::move(msg)});
  };

  auto check_unique = [&](const std::string& table, auto const& items, auto id_of) {
    std::set<std::string> seen;
    for (const auto& it : items) {
      if (!seen.insert(id_of(it)).second) error(table, id_of(it), "duplicate id");
    }
  };
  check_unique("zones", ds.zones, [](const Zone& z) { return z.id; });
  check_unique("nodes", ds.nodes, [](const Node& n) { return n.id; });
  check_unique("lines", ds.lines, [](const Line& l) { return l.id; });
  check_unique("plants", ds.plants, [](const Plant& p) { return p.id; });

  std::set<std::string> zone_ids, node_ids;
  for (const auto& z : ds.zones) zone_ids.insert(z.id);
  for (const auto& n : ds.nodes) node_ids.insert(n.id);

  if (ds.nodes.empty()) error("nodes", "", "no nodes defined");
  for (const auto& n : ds.nodes) {
    if (!zone_ids.count(n.zone)) error("nodes", n.id, "unknown zone '" + n.zone + "'");
    if (n.lat.has_value() != n.lon.has_value()) warn("nodes", n.id, "only one of lat/lon given");
  }
  for (const auto& l : ds.lines) {
    if (!node_ids.count(l.from)) error("lines", l.id, "unknown node_from '" + l.from + "'");
    if (!node_ids.count(l.to)) error("lines", l.id, "unknown node_to '" + l.to + "'");
    if (l.from == l.to) error("lines", l.id, "node_from equals node_to");
    if (!(l.reactance > 0.0) || !std::isfinite(l.reactance)) error("lines", l.id, "reactance must be positive and finite");
    if (!std::isfinite(l.capacity) || l.capacity < 0.0) error("lines", l.id, "capacity must be finite and non-negative");
    else if (l.capacity == 0.0) warn("lines", l.id, "zero capacity");
  }

  std::set<std::string> heat_areas;
  for (const auto& p : ds.plants) {
    if (p.heat_area) heat_areas.insert(*p.heat_area);
  }
  for (const auto& p : ds.plants) {
    if (!node_ids.count(p.node)) error("plants", p.id, "unknown node '" + p.node + "'");
    if (!std::isfinite(p.mc_el)) error("plants", p.id, "mc_el must be finite");
    if (!std::isfinite(p.g_max) || p.g_max < 0.0) error("plants", p.id, "g_max must be finite and non-negative");
    if (!std::isfinite(p.h_max) || p.h_max < 0.0) error("plants", p.id, "h_max must be finite and non-negative");
    if (!std::isfinite(p.storage_capacity) || p.storage_capacity < 0.0) {
      error("plants", p.id, "storage_capacity must be finite and non-negative");
    }
    if (p.storage_capacity > 0.0 && !p.eta) error("plants", p.id, "storage plant requires eta");
    if (p.eta && !(*p.eta > 0.0 && *p.eta <= 1.0)) error("plants", p.id, "eta must lie in (0, 1]");
    if (p.h_max > 0.0 && !p.heat_area) error("plants", p.id, "h_max > 0 requires heat_area");
    if (p.chp_ratio && !(*p.chp_ratio > 0.0)) error("plants", p.id, "chp_ratio must be positive");
    if (p.availability) {
      auto it = ds.availability.find(*p.availability);
      if (it == ds.availability.end()) error("plants", p.id, "unknown availability series '" + *p.availability + "'");
    }
  }
  for (const auto& [area, v] : ds.heat_demand) {
    if (!heat_areas.count(area)) warn("heat_demand", area, "heat area has demand but no heat plant");
    if (static_cast<int>(v.size()) != ds.timesteps) error("heat_demand", area, "series length mismatch");
  }
  for (const auto& [id, s] : ds.availability) {
    for (std::size_t t = 0; t < s.values.size(); ++t) {
      const double v = s.values[t];
      if (std::isnan(v)) {
        error("availability", id, "missing value at timestep " + std::to_string(t));
        break;
      }
      if (v < 0.0 || v > 1.0) {
        error("availability", id, "value outside [0, 1] at timestep " + std::to_string(t));
        break;
      }
    }
  }
  if (ds.demand.rows() != static_cast<Eigen::Index>(ds.nodes.size()) || ds.demand.cols() != ds.timesteps) {
    error("demand", "", "demand matrix shape does not match nodes x timesteps");
  } else if (!ds.demand.allFinite()) {
    error("demand", "", "non-finite demand value");
  }

  std::set<std::pair<std::string, std::string>> ntc_pairs;
  for (const auto& n : ds.ntcs) {
    if (!zone_ids.count(n.from_zone)) error("ntc", n.from_zone, "unknown zone_from");
    if (!zone_ids.count(n.to_zone)) error("ntc", n.to_zone, "unknown zone_to");
    if (!std::isfinite(n.capacity) || n.capacity < 0.0) error("ntc", n.from_zone + "->" + n.to_zone, "capacity must be finite and non-negative");
    if (!ntc_pairs.emplace(n.from_zone, n.to_zone).second) error("ntc", n.from_zone + "->" + n.to_zone, "duplicate directed pair");
  }

  // Islands without load: union-find over lines.
  if (!ds.nodes.empty() && rep.errors() == 0) {
    std::vector<std::size_t> parent(ds.nodes.size());
    for (std::size_t i = 0; i < parent.size(); ++i) parent[i] = i;
    auto find = [&](std::size_t x) {
      while (parent[x] != x) x = parent[x] = parent[parent[x]];
      return x;
    };
    for (const auto& l : ds.lines) {
      const auto a = find(*ds.find_node(l.from));
      const auto b = find(*ds.find_node(l.to));
      if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
    std::map<std::size_t, double> load;
    for (std::size_t i = 0; i < ds.nodes.size(); ++i) {
      load[find(i)] += ds.demand.row(static_cast<Eigen::Index>(i)).cwiseAbs().sum();
    }
    if (load.size() > 1) {
      for (const auto& [root, total] : load) {
        if (total == 0.0) warn("nodes", ds.nodes[root].id, "island without load");
      }
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Writing

namespace {

std::string opt(const std::optional<double>& v) { return v ? csv::format_number(*v) : std::string(); }
std::string opt(const std::optional<std::string>& v) { return v ? csv::escape(*v) : std::string(); }

}  // namespace

void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const std::string& name) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw DataError("cannot write " + (dir / name).string());
    return out;
  };
  {
    auto out = open("zones.csv");
    out << "id\n";
    for (const auto& z : ds.zones) out << csv::escape(z.id) << '\n';
  }
  {
    auto out = open("nodes.csv");
    out << "id,zone,slack,lat,lon\n";
    for (const auto& n : ds.nodes) {
      out << csv::escape(n.id) << ',' << csv::escape(n.zone) << ',' << (n.slack ? "true" : "false") << ','
          << opt(n.lat) << ',' << opt(n.lon) << '\n';
    }
  }
  {
    auto out = open("lines.csv");
    out << "id,node_from,node_to,reactance,capacity,contingency\n";
    for (const auto& l : ds.lines) {
      out << csv::escape(l.id) << ',' << csv::escape(l.from) << ',' << csv::escape(l.to) << ','
          << csv::format_number(l.reactance) << ',' << csv::format_number(l.capacity) << ','
          << (l.contingency ? "true" : "false") << '\n';
    }
  }
  {
    auto out = open("plants.csv");
    out << "id,node,mc_el,g_max,h_max,heat_area,eta,storage_capacity,chp_ratio,availability\n";
    for (const auto& p : ds.plants) {
      out << csv::escape(p.id) << ',' << csv::escape(p.node) << ',' << csv::format_number(p.mc_el) << ','
          << csv::format_number(p.g_max) << ',' << csv::format_number(p.h_max) << ',' << opt(p.heat_area) << ','
          << opt(p.eta) << ',' << csv::format_number(p.storage_capacity) << ',' << opt(p.chp_ratio) << ','
          << opt(p.availability) << '\n';
    }
  }
  {
    auto out = open("demand.csv");
    out << "timestep,node,value\n";
    for (int t = 0; t < ds.timesteps; ++t) {
      for (std::size_t n = 0; n < ds.nodes.size(); ++n) {
        const double v = ds.demand(static_cast<Eigen::Index>(n), t);
        if (v != 0.0) out << t << ',' << csv::escape(ds.nodes[n].id) << ',' << csv::format_number(v) << '\n';
      }
    }
  }
  {
    auto out = open("heat_demand.csv");
    out << "timestep,heat_area,value\n";
    for (int t = 0; t < ds.timesteps; ++t) {
      for (const auto& [area, v] : ds.heat_demand) {
        out << t << ',' << csv::escape(area) << ',' << csv::format_number(v[static_cast<std::size_t>(t)]) << '\n';
      }
    }
  }
  {
    auto out = open("availability.csv");
    out << "timestep,id,value\n";
    for (int t = 0; t < ds.timesteps; ++t) {
      for (const auto& [id, s] : ds.availability) {
        out << t << ',' << csv::escape(id) << ',' << csv::format_number(s.values[static_cast<std::size_t>(t)]) << '\n';
      }
    }
  }
  {
    auto out = open("ntc.csv");
    out << "zone_from,zone_to,capacity\n";
    for (const auto& n : ds.ntcs) {
      out << csv::escape(n.from_zone) << ',' << csv::escape(n.to_zone) << ',' << csv::format_number(n.capacity) << '\n';
    }
  }
}

}  // namespace gridclear
