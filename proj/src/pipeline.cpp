#include "gridclear/pipeline.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <ostream>
#include <sstream>

#include "csv.hpp"
#include "gridclear/redundancy.hpp"

namespace gridclear {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

void log_line(std::ostream* log, const std::string& stage, const std::string& message) {
  if (log) *log << '[' << stage << "] " << message << '\n';
}

std::string seconds(double s) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f s", s);
  return buf;
}

std::string exact(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<Index>> component_groups(const Topology& topology) {
  std::vector<std::vector<Index>> groups;
  for (Index c = 0; c < topology.num_components(); ++c) groups.push_back(topology.component_nodes(c));
  return groups;
}

std::string reduction_key(const Topology& topology, const GridRepresentation& rep, const InjectionBounds& bounds,
                          const Options& options, const RedundancyOptions& reduction) {
  std::ostringstream s;
  s << "nodes";
  for (const auto& n : topology.node_ids) s << ',' << n;
  s << "\nlines";
  for (Index l = 0; l < topology.num_lines(); ++l) {
    s << ',' << topology.line_ids[static_cast<std::size_t>(l)] << ':' << topology.line_from[static_cast<std::size_t>(l)]
      << '-' << topology.line_to[static_cast<std::size_t>(l)] << ':' << exact(topology.susceptance[l]) << ':'
      << exact(topology.capacity[l]);
  }
  s << "\nslack";
  for (Index n : topology.slack) s << ',' << n;
  s << "\nscenarios";
  for (const auto& id : rep.scenario_ids) s << ',' << id;
  s << "\nbounds";
  for (Index i = 0; i < bounds.lower.size(); ++i) s << ',' << exact(bounds.lower[i]) << ':' << exact(bounds.upper[i]);
  s << "\noptions," << options.contingency.enabled << ',' << exact(options.contingency.sensitivity_threshold) << ','
    << exact(reduction.tolerance) << "\nrows," << rep.size();
  return hex64(fnv1a(s.str()));
}

// Essential rows from a cache file, or nullopt when absent or stale.
std::optional<std::vector<Index>> read_cached_rows(const fs::path& path, const std::string& key, Index rows) {
  if (!fs::exists(path)) return std::nullopt;
  try {
    const auto j = json::parse(read_text(path));
    if (j.at("key").get<std::string>() != key || j.at("rows").get<Index>() != rows) return std::nullopt;
    auto keep = j.at("essential").get<std::vector<Index>>();
    for (std::size_t i = 0; i < keep.size(); ++i) {
      if (keep[i] < 0 || keep[i] >= rows || (i > 0 && keep[i] <= keep[i - 1])) return std::nullopt;
    }
    return keep;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

void write_cached_rows(const fs::path& path, const std::string& key, Index rows, const std::vector<Index>& keep) {
  fs::create_directories(path.parent_path());
  json j;
  j["key"] = key;
  j["rows"] = rows;
  j["essential"] = keep;
  write_text(path, j.dump() + "\n");
}

std::vector<std::string> list_files(const fs::path& dir) {
  std::vector<std::string> files;
  if (!fs::exists(dir)) return files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), dir).generic_string());
  }
  return files;
}

void write_manifest(RunManifest& m, const fs::path& out_dir, Index grid_rows, Index unreduced_rows) {
  auto files = list_files(out_dir);
  files.push_back("manifest.json");
  std::sort(files.begin(), files.end());
  files.erase(std::unique(files.begin(), files.end()), files.end());
  m.files = files;
  json j;
  j["success"] = m.success;
  if (!m.success) {
    j["failed_stage"] = m.failed_stage;
    j["error"] = m.error;
  }
  j["options_hash"] = m.options_hash;
  j["dataset"] = m.dataset_path;
  j["output_dir"] = m.output_dir;
  j["stages"] = m.stages;
  json t = json::object();
  for (const auto& s : m.timings) t[s.stage] = s.seconds;
  j["timings"] = t;
  j["cache"] = m.cache;
  j["grid_rows"] = grid_rows;
  j["unreduced_rows"] = unreduced_rows;
  j["warnings"] = m.warnings;
  j["files"] = m.files;
  write_text(out_dir / "manifest.json", j.dump(2) + "\n");
}

template <typename E>
[[noreturn]] void rethrow_in_stage(const std::string& stage, const E& e) {
  throw E(stage + ": " + e.what());
}

// Runs fn as stage `name`; on failure records it and rethrows the same error
// type with the stage prefixed. on_fail runs before the rethrow.
class StageRunner {
 public:
  StageRunner(RunManifest& manifest, std::ostream* log, std::function<void()> on_fail)
      : manifest_(manifest), log_(log), on_fail_(std::move(on_fail)) {}

  template <typename F>
  void operator()(const std::string& name, F&& fn) {
    log_line(log_, name, "start");
    const auto t0 = std::chrono::steady_clock::now();
    try {
      fn();
    } catch (const DataError& e) {
      fail(name, e);
    } catch (const SolveError& e) {
      fail(name, e);
    } catch (const InternalError& e) {
      fail(name, e);
    } catch (const std::exception& e) {
      fail(name, InternalError(e.what()));
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    manifest_.stages.push_back(name);
    manifest_.timings.push_back({name, s});
    log_line(log_, name, "done in " + seconds(s));
  }

 private:
  template <typename E>
  [[noreturn]] void fail(const std::string& name, const E& e) {
    log_line(log_, name, std::string("error: ") + e.what());
    manifest_.success = false;
    manifest_.failed_stage = name;
    manifest_.error = e.what();
    on_fail_();
    rethrow_in_stage(name, e);
  }

  RunManifest& manifest_;
  std::ostream* log_;
  std::function<void()> on_fail_;
};

void append(std::vector<std::string>& to, const std::vector<std::string>& from, const std::string& prefix = "") {
  for (const auto& w : from) to.push_back(prefix + w);
}

std::string count_text(const std::optional<std::size_t>& n) { return n ? std::to_string(*n) : "n/a"; }

void write_overloads(const fs::path& path, const RunReport& r) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "stage,scenario,line,timestep,flow,capacity,overload\n";
  auto rows = [&](const char* stage, const std::vector<Overload>& list) {
    for (const auto& o : list) {
      out << stage << ',' << csv::escape(o.scenario) << ',' << csv::escape(o.line) << ',' << o.timestep << ','
          << csv::format_number(o.flow) << ',' << csv::format_number(o.capacity) << ','
          << csv::format_number(o.overload) << '\n';
    }
  };
  rows("market", r.market_overloads);
  rows("redispatch", r.redispatch_overloads);
}

std::size_t count_scenario(const std::vector<Overload>& list, bool basecase) {
  return static_cast<std::size_t>(std::count_if(list.begin(), list.end(), [&](const Overload& o) {
    return (o.scenario == "basecase") == basecase;
  }));
}

Options read_options(const fs::path& options_path) {
  if (!fs::exists(options_path)) throw DataError("startup: options file not found: " + options_path.string());
  try {
    return load_options(options_path);
  } catch (const DataError& e) {
    throw DataError(std::string("startup: ") + e.what());
  }
}

Dataset load_checked(const fs::path& dataset_path, std::vector<std::string>& warnings) {
  auto ds = load_any_dataset(dataset_path, &warnings);
  ds.require_valid();
  return ds;
}

}  // namespace

std::uint64_t fnv1a(const std::string& data, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

Dataset load_any_dataset(const fs::path& path, std::vector<std::string>* warnings) {
  if (!fs::exists(path)) throw DataError("dataset not found: " + path.string());
  Dataset ds;
  if (path.extension() == ".m") {
    auto imported = import_matpower_case(path);
    if (warnings) append(*warnings, imported.warnings);
    ds = std::move(imported.dataset);
  } else {
    ds = load_dataset(path);
  }
  if (warnings) {
    for (const auto& f : ds.validation.findings) {
      if (f.severity == Severity::warning) warnings->push_back(f.to_string());
    }
  }
  return ds;
}

GridBuild build_grid(const Dataset& dataset, const Options& options, const fs::path& cache_dir, bool keep_full,
                     std::ostream* log) {
  GridBuild g;
  g.network = build_network(dataset);
  const auto& topo = g.network.topology;
  g.contingencies = enumerate_contingencies(topo, g.network.ptdf, options.contingency);
  append(g.warnings, g.contingencies.warnings);
  if (options.contingency.enabled) {
    g.analysis = g.contingencies;
  } else {
    auto n1 = options.contingency;
    n1.enabled = true;
    g.analysis = enumerate_contingencies(topo, g.network.ptdf, n1);
  }
  g.security = build_security_constraints(g.network.ptdf, g.contingencies, topo);
  log_line(log, "grid", std::to_string(topo.num_nodes()) + " nodes, " + std::to_string(topo.num_lines()) + " lines, " +
                            std::to_string(g.contingencies.scenarios.size()) + " scenarios, " +
                            std::to_string(g.security.size()) + " rows");
  if (keep_full) g.full = g.security;
  if (!options.redundancy_removal || g.security.size() == 0) return g;

  const auto bounds = injection_bounds(dataset, topo);
  const RedundancyOptions reduction;
  g.cache_key = reduction_key(topo, g.security, bounds, options, reduction);
  const Index rows = g.security.size();
  const auto path = cache_dir / ("reduction_" + g.cache_key + ".json");
  if (!cache_dir.empty()) {
    if (auto keep = read_cached_rows(path, g.cache_key, rows)) {
      keep_rows(g.security, *keep);
      g.security.provenance = g.cache_key;
      g.cache = "hit";
      log_line(log, "grid", "cached reduction " + path.filename().string() + ": " + std::to_string(keep->size()) +
                                " of " + std::to_string(rows) + " rows");
      return g;
    }
  }
  const auto t0 = std::chrono::steady_clock::now();
  EssentialSet<double> result;
  try {
    result = reduce_representation(g.security, bounds.lower, bounds.upper, component_groups(topo), reduction);
  } catch (const DataError& e) {
    // No injection within the bounds meets every row, so none is redundant.
    g.warnings.push_back(std::string("reduction skipped, all rows kept: ") + e.what());
    log_line(log, "grid", g.warnings.back());
    return g;
  }
  g.security.provenance = g.cache_key;
  append(g.warnings, result.warnings);
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  log_line(log, "grid", "reduced " + std::to_string(rows) + " to " + std::to_string(result.indices.size()) + " rows in " + seconds(s));
  const auto& st = result.stats;
  log_line(log, "grid",
           "presolve " + std::to_string(st.zero_rows + st.duplicates + st.box_redundant) + " rows in " +
               seconds(st.presolve_seconds) + ", rays " + std::to_string(st.ray_essential) + " essential in " +
               seconds(st.ray_seconds) + ", " + std::to_string(st.dominated) + " dominated, LP tests " + std::to_string(st.lp_tested) + " rows, " +
               std::to_string(st.lp_solves) + " solves in " + seconds(st.lp_seconds));
  if (!cache_dir.empty()) {
    write_cached_rows(path, g.cache_key, rows, result.indices);
    g.cache = "miss";
  }
  return g;
}

void zonal_injection_bounds(const Dataset& dataset, const Topology& topology, Eigen::VectorXd& lower,
                            Eigen::VectorXd& upper) {
  const auto nodal = injection_bounds(dataset, topology);
  lower = Eigen::VectorXd::Zero(static_cast<Index>(dataset.zones.size()));
  upper = lower;
  for (Index n = 0; n < topology.num_nodes(); ++n) {
    const auto& node = dataset.nodes[dataset.node_index(topology.node_ids[static_cast<std::size_t>(n)])];
    const auto z = static_cast<Index>(dataset.zone_index(node.zone));
    lower[z] += nodal.lower[n];
    upper[z] += nodal.upper[n];
  }
}

FbParameters build_fb_parameters(const Dataset& dataset, const Options& options, const GridBuild& grid,
                                  DispatchResult* basecase, FbParameters* unreduced) {
  auto config = MarketConfig::from_options(options, dataset);
  config.type = MarketType::nodal;
  auto base = run_market(dataset, grid.network, &grid.security, config);
  const auto& rows = grid.full ? *grid.full : grid.security;
  auto fb = compute_fb_parameters(dataset, rows, options.gsk_strategy, base, options.min_ram);
  if (unreduced) *unreduced = fb;
  if (options.redundancy_removal && fb.num_rows() > 0) {
    Eigen::VectorXd lower, upper;
    zonal_injection_bounds(dataset, grid.network.topology, lower, upper);
    Eigen::VectorXd lo(static_cast<Index>(fb.zone_ids.size())), hi(lo.size());
    for (std::size_t z = 0; z < fb.zone_ids.size(); ++z) {
      const auto ix = static_cast<Index>(dataset.zone_index(fb.zone_ids[z]));
      lo[static_cast<Index>(z)] = lower[ix];
      hi[static_cast<Index>(z)] = upper[ix];
    }
    reduce_fb_parameters(fb, lo, hi);
  }
  if (basecase) *basecase = std::move(base);
  return fb;
}

std::string format_report(const RunReport& r) {
  std::ostringstream s;
  s << "Number of N-0 Overloads (market): " << count_text(r.n0_market) << '\n';
  s << "Number of N-1 Overloads (market): " << count_text(r.n1_market) << '\n';
  s << "Number of N-0 Overloads (redispatch): " << count_text(r.n0_redispatch) << '\n';
  s << "Number of N-1 Overloads (redispatch): " << count_text(r.n1_redispatch) << '\n';
  s << "Total Redispatch in MWh: " << (r.redispatch_mwh ? csv::format_number(*r.redispatch_mwh) : "n/a") << '\n';
  return s.str();
}

std::vector<std::string> write_report(const RunReport& r, const fs::path& out_dir) {
  write_text(out_dir / "report.txt", format_report(r));
  auto count = [](const std::optional<std::size_t>& n) -> json { return n ? json(*n) : json(nullptr); };
  json j;
  j["market"] = {{"Number of N-0 Overloads", count(r.n0_market)}, {"Number of N-1 Overloads", count(r.n1_market)}};
  j["redispatch"] = {{"Number of N-0 Overloads", count(r.n0_redispatch)},
                     {"Number of N-1 Overloads", count(r.n1_redispatch)}};
  j["Total Redispatch in MWh"] = r.redispatch_mwh ? json(*r.redispatch_mwh) : json(nullptr);
  write_text(out_dir / "report.json", j.dump(2) + "\n");
  write_overloads(out_dir / "overloads.csv", r);
  return {"report.txt", "report.json", "overloads.csv"};
}

std::vector<std::string> emit_geo_data(const Dataset& dataset, const DispatchResult& market,
                                       const DispatchResult* redispatch, const fs::path& out_dir,
                                       std::vector<std::string>& warnings) {
  for (const auto& n : dataset.nodes) {
    if (!n.lat || !n.lon) {
      warnings.push_back("geo: node " + n.id + " has no coordinates; geo files skipped");
      return {};
    }
  }
  // Average price of the balance unit a node belongs to.
  auto unit_of = [&](const Node& n) -> Index {
    for (const auto& id : {n.id, n.zone}) {
      auto it = std::find(market.balance_units.begin(), market.balance_units.end(), id);
      if (it != market.balance_units.end()) return it - market.balance_units.begin();
    }
    return market.balance_units.size() == 1 ? 0 : -1;
  };
  std::vector<double> net(dataset.nodes.size(), 0.0);
  if (redispatch) {
    for (std::size_t p = 0; p < market.plant_ids.size(); ++p) {
      const auto n = dataset.node_index(dataset.plants[*dataset.find_plant(market.plant_ids[p])].node);
      net[n] += (redispatch->g.row(static_cast<Index>(p)) - market.g.row(static_cast<Index>(p))).sum();
    }
  }
  const DispatchResult& flows = redispatch ? *redispatch : market;

  json features = json::array();
  std::ofstream nodes(out_dir / "geo_nodes.csv", std::ios::binary);
  nodes << "node,lat,lon,price,net_redispatch\n";
  for (std::size_t i = 0; i < dataset.nodes.size(); ++i) {
    const auto& n = dataset.nodes[i];
    const Index u = unit_of(n);
    const bool priced = u >= 0 && market.prices.cols() > 0;
    const double price = priced ? market.prices.row(u).mean() : 0.0;
    nodes << csv::escape(n.id) << ',' << csv::format_number(*n.lat) << ',' << csv::format_number(*n.lon) << ','
          << (priced ? csv::format_number(price) : "") << ',' << csv::format_number(net[i]) << '\n';
    features.push_back({{"type", "Feature"},
                        {"geometry", {{"type", "Point"}, {"coordinates", {*n.lon, *n.lat}}}},
                        {"properties",
                         {{"node", n.id}, {"price", priced ? json(price) : json(nullptr)}, {"net_redispatch", net[i]}}}});
  }
  std::ofstream lines(out_dir / "geo_lines.csv", std::ios::binary);
  lines << "line,from,to,avg_loading_fraction\n";
  for (std::size_t l = 0; l < dataset.lines.size(); ++l) {
    const auto& line = dataset.lines[l];
    std::optional<double> loading;
    if (line.capacity <= 0.0) {
      warnings.push_back("geo: line " + line.id + " has zero capacity; loading fraction left empty");
    } else if (flows.has_injections) {
      auto it = std::find(flows.line_ids.begin(), flows.line_ids.end(), line.id);
      if (it != flows.line_ids.end()) {
        loading = flows.flows.row(it - flows.line_ids.begin()).cwiseAbs().mean() / line.capacity;
      }
    }
    lines << csv::escape(line.id) << ',' << csv::escape(line.from) << ',' << csv::escape(line.to) << ','
          << (loading ? csv::format_number(*loading) : "") << '\n';
    const auto& a = dataset.nodes[dataset.node_index(line.from)];
    const auto& b = dataset.nodes[dataset.node_index(line.to)];
    features.push_back(
        {{"type", "Feature"},
         {"geometry", {{"type", "LineString"}, {"coordinates", {{*a.lon, *a.lat}, {*b.lon, *b.lat}}}}},
         {"properties",
          {{"line", line.id}, {"from", line.from}, {"to", line.to},
           {"avg_loading_fraction", loading ? json(*loading) : json(nullptr)}}}});
  }
  write_text(out_dir / "geo.geojson", json{{"type", "FeatureCollection"}, {"features", features}}.dump() + "\n");
  return {"geo_nodes.csv", "geo_lines.csv", "geo.geojson"};
}

PipelineResult run_pipeline(const fs::path& dataset_path, const fs::path& options_path, const fs::path& out_dir,
                            const PipelineOptions& run) {
  PipelineResult res;
  res.options = read_options(options_path);
  const auto& options = res.options;
  auto& m = res.manifest;
  m.options_hash = hex64(fnv1a(options_to_json(options)));
  m.dataset_path = dataset_path.string();
  m.output_dir = out_dir.string();
  m.cache = "off";
  append(m.warnings, options.warnings, "options: ");
  fs::create_directories(out_dir);
  const fs::path cache_dir = run.use_cache ? (run.cache_dir.empty() ? out_dir / "cache" : run.cache_dir) : fs::path();

  StageRunner stage(m, run.log, [&] { write_manifest(m, out_dir, res.grid_rows, res.unreduced_rows); });
  Dataset ds;
  std::optional<GridBuild> grid;
  const bool nodal_rows = options.type == MarketType::nodal || options.type == MarketType::zonal_fbmc ||
                          options.redispatch.include;

  stage("load", [&] {
    ds = load_checked(dataset_path, m.warnings);
    const auto [a, b] = options.horizon(ds);
    log_line(run.log, "load",
             std::to_string(ds.nodes.size()) + " nodes, " + std::to_string(ds.lines.size()) + " lines, " +
                 std::to_string(ds.plants.size()) + " plants, horizon [" + std::to_string(a) + ", " +
                 std::to_string(b) + ")");
  });

  stage("grid", [&] {
    Options grid_options = options;
    if (!nodal_rows) grid_options.redundancy_removal = false;
    grid = build_grid(ds, grid_options, cache_dir, options.type == MarketType::zonal_fbmc, run.log);
    append(m.warnings, grid->warnings, "grid: ");
    m.cache = grid->cache;
    res.grid_rows = grid->security.size();
    res.unreduced_rows = grid->security.reduced ? grid->security.unreduced_rows : grid->security.size();
  });

  if (options.type == MarketType::zonal_fbmc) {
    stage("fbmc", [&] {
      const auto dir = out_dir / "fbmc";
      fs::create_directories(dir);
      DispatchResult base;
      FbParameters unreduced;
      res.fb = build_fb_parameters(ds, options, *grid, &base, &unreduced);
      append(m.warnings, base.warnings, "fbmc basecase: ");
      append(m.warnings, res.fb->warnings, "fbmc: ");
      write_results(base, dir / "basecase");
      write_fb_parameters(*res.fb, dir / "fb_parameters.csv");
      const double box = plotting_box(ds);
      // Slices leave the net-position bounds the FB rows were reduced over,
      // so they are drawn from the unreduced rows.
      const auto& zones = unreduced.zone_ids;
      for (std::size_t i = 0; i < zones.size(); ++i) {
        for (std::size_t j = i + 1; j < zones.size(); ++j) {
          const auto poly = project_domain(unreduced, unreduced.t_start, zones[i], zones[j], {}, box);
          const auto stem = "domain_" + zones[i] + "_" + zones[j] + "_t" + std::to_string(unreduced.t_start);
          write_domain_csv(poly, dir / (stem + ".csv"));
          write_domain_svg(poly, box, dir / (stem + ".svg"));
          if (poly.empty()) m.warnings.push_back("fbmc: empty domain " + stem + ": " + poly.diagnostic);
        }
      }
      log_line(run.log, "fbmc", std::to_string(res.fb->num_rows()) + " FB rows");
    });
  }

  const auto config = MarketConfig::from_options(options, ds);
  stage("market", [&] {
    const GridRepresentation* rows = options.type == MarketType::nodal ? &grid->security : nullptr;
    const FbParameters* fb = res.fb ? &*res.fb : nullptr;
    res.market = run_market(ds, grid->network, rows, config, fb);
    append(m.warnings, res.market->warnings, "market: ");
    write_results(*res.market, out_dir / "market");
    log_line(run.log, "market", "objective " + csv::format_number(res.market->objective));
  });

  if (options.redispatch.include) {
    stage("redispatch", [&] {
      res.redispatch = run_redispatch(ds, grid->network, grid->security, *res.market, config);
      append(m.warnings, res.redispatch->warnings, "redispatch: ");
      write_results(*res.redispatch, out_dir / "redispatch");
      log_line(run.log, "redispatch", "objective " + csv::format_number(res.redispatch->objective));
    });
  }

  stage("report", [&] {
    auto& r = res.report;
    const auto& net = grid->network;
    if (res.market->has_injections) {
      r.market_overloads = overloaded_lines_n0(*res.market, net);
      const auto n1 = overloaded_lines_n1(*res.market, net, grid->analysis);
      r.market_overloads.insert(r.market_overloads.end(), n1.begin(), n1.end());
      r.n0_market = count_scenario(r.market_overloads, true);
      r.n1_market = count_scenario(r.market_overloads, false);
    } else {
      m.warnings.push_back("report: market result has no nodal injections; market overloads not counted");
    }
    if (res.redispatch) {
      r.redispatch_overloads = overloaded_lines_n0(*res.redispatch, net);
      const auto n1 = overloaded_lines_n1(*res.redispatch, net, grid->analysis);
      r.redispatch_overloads.insert(r.redispatch_overloads.end(), n1.begin(), n1.end());
      r.n0_redispatch = count_scenario(r.redispatch_overloads, true);
      r.n1_redispatch = count_scenario(r.redispatch_overloads, false);
      r.redispatch_mwh = redispatch_quantity(*res.market, *res.redispatch);
    }
    write_report(r, out_dir);
    emit_geo_data(ds, *res.market, res.redispatch ? &*res.redispatch : nullptr, out_dir, m.warnings);
    if (run.log) {
      std::istringstream lines(format_report(r));
      for (std::string line; std::getline(lines, line);) log_line(run.log, "report", line);
    }
  });

  m.success = true;
  write_manifest(m, out_dir, res.grid_rows, res.unreduced_rows);
  return res;
}

GridBuild run_reduce(const fs::path& dataset_path, const fs::path& options_path, const fs::path& out_dir,
                     const PipelineOptions& run) {
  auto options = read_options(options_path);
  options.redundancy_removal = true;
  fs::create_directories(out_dir);
  std::vector<std::string> warnings;
  const auto ds = load_checked(dataset_path, warnings);
  const fs::path cache_dir = run.use_cache ? (run.cache_dir.empty() ? out_dir / "cache" : run.cache_dir) : fs::path();
  auto g = build_grid(ds, options, cache_dir, false, run.log);
  const auto& rep = g.security;
  std::ofstream out(out_dir / "reduced_cbcos.csv", std::ios::binary);
  out << "row,cbco_id,rhs\n";
  for (Index i = 0; i < rep.size(); ++i) {
    out << (rep.reduced ? rep.essential[static_cast<std::size_t>(i)] : i) << ',' << csv::escape(rep.row_id(i)) << ','
        << csv::format_number(rep.rhs[i]) << '\n';
  }
  const Index total = rep.reduced ? rep.unreduced_rows : rep.size();
  json j;
  j["rows"] = total;
  j["essential"] = rep.size();
  j["removed_fraction"] = total > 0 ? 1.0 - static_cast<double>(rep.size()) / static_cast<double>(total) : 0.0;
  j["cache"] = g.cache;
  j["cache_key"] = g.cache_key;
  append(warnings, g.warnings);
  j["warnings"] = warnings;
  write_text(out_dir / "reduction.json", j.dump(2) + "\n");
  return g;
}

DomainPolygon run_domain(const fs::path& dataset_path, const fs::path& options_path, const fs::path& out_dir,
                         const std::string& zone_x, const std::string& zone_y, int t, const PipelineOptions& run) {
  const auto options = read_options(options_path);
  fs::create_directories(out_dir);
  std::vector<std::string> warnings;
  const auto ds = load_checked(dataset_path, warnings);
  for (const auto& z : {zone_x, zone_y}) {
    if (!ds.find_zone(z)) throw DataError("domain: unknown zone " + z);
  }
  if (zone_x == zone_y) throw DataError("domain: the two zones must differ");
  const auto [a, b] = options.horizon(ds);
  if (t < a || t >= b) {
    throw DataError("domain: timestep " + std::to_string(t) + " outside the model horizon [" + std::to_string(a) +
                    ", " + std::to_string(b) + ")");
  }
  const fs::path cache_dir = run.use_cache ? (run.cache_dir.empty() ? out_dir / "cache" : run.cache_dir) : fs::path();
  const auto g = build_grid(ds, options, cache_dir, true, run.log);
  Options unreduced = options;
  unreduced.redundancy_removal = false;
  const auto fb = build_fb_parameters(ds, unreduced, g);
  const double box = plotting_box(ds);
  auto poly = project_domain(fb, t, zone_x, zone_y, {}, box);
  const auto stem = "domain_" + zone_x + "_" + zone_y + "_t" + std::to_string(t);
  write_domain_csv(poly, out_dir / (stem + ".csv"));
  write_domain_svg(poly, box, out_dir / (stem + ".svg"));
  return poly;
}

}  // namespace gridclear
