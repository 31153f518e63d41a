#include <doctest.h>

#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "fixtures.hpp"
#include "gridclear/pipeline.hpp"

using namespace gridclear;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

fs::path write_options(const fs::path& dir, const std::string& text) {
  const auto path = dir / "options.json";
  std::ofstream(path) << text;
  return path;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines_of(const fs::path& path) {
  std::istringstream in(slurp(path));
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::vector<std::string> files_under(const fs::path& dir) {
  std::vector<std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), dir).generic_string());
  }
  std::sort(files.begin(), files.end());
  return files;
}

fs::path case_path(const std::string& name) {
  return name.size() > 2 && name.substr(name.size() - 2) == ".m" ? fixture::data("cases/" + name) : fixture::data(name);
}

int cli(const std::string& args) {
  const auto cmd = std::string(GRIDCLEAR_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const char* kCopperRedispatch = R"({"type": "copper_plate", "redispatch": {"include": true}})";

}  // namespace

TEST_CASE("fnv1a: reference vectors") {
  CHECK(hex64(fnv1a("")) == "cbf29ce484222325");
  CHECK(hex64(fnv1a("a")) == "af63dc4c8601ec8c");
  CHECK(hex64(fnv1a("foobar")) == "85944171f73967e8");
}

TEST_CASE("run_pipeline: two-node copper plate with redispatch") {
  const auto dir = fixture::scratch_dir("pipe_cp");
  const auto out = dir / "out";
  const auto res = run_pipeline(fixture::data("two_node"), write_options(dir, kCopperRedispatch), out);

  CHECK(res.manifest.success);
  CHECK(res.manifest.stages == std::vector<std::string>{"load", "grid", "market", "redispatch", "report"});
  REQUIRE(res.report.n0_market.has_value());
  CHECK(*res.report.n0_market == 1);
  CHECK(*res.report.n0_redispatch == 0);
  CHECK(*res.report.n1_redispatch == 0);
  CHECK(*res.report.redispatch_mwh == doctest::Approx(100.0).epsilon(1e-9));

  const auto report = json::parse(slurp(out / "report.json"));
  CHECK(report["market"]["Number of N-0 Overloads"] == 1);
  CHECK(report["redispatch"]["Number of N-0 Overloads"] == 0);
  CHECK(report["redispatch"]["Number of N-1 Overloads"] == 0);
  CHECK(std::abs(report["Total Redispatch in MWh"].get<double>() - 100.0) <= 1e-6);
  const auto text = slurp(out / "report.txt");
  CHECK(text.find("Number of N-0 Overloads (market): 1\n") != std::string::npos);
  CHECK(text.find("Number of N-0 Overloads (redispatch): 0\n") != std::string::npos);
  CHECK(text.find("Total Redispatch in MWh: 100\n") != std::string::npos);

  const auto overloads = lines_of(out / "overloads.csv");
  REQUIRE(overloads.size() == 2);
  CHECK(overloads[1] == "market,basecase,l1,0,100,50,50");

  // Post-redispatch flow 50 on a 50 MW line.
  const auto geo_lines = lines_of(out / "geo_lines.csv");
  REQUIRE(geo_lines.size() == 2);
  CHECK(geo_lines[1] == "l1,n1,n2,1");
  const auto geo_nodes = lines_of(out / "geo_nodes.csv");
  REQUIRE(geo_nodes.size() == 3);
  CHECK(geo_nodes[0] == "node,lat,lon,price,net_redispatch");
  CHECK(geo_nodes[1].substr(geo_nodes[1].rfind(',')) == ",-50");
  CHECK(geo_nodes[2].substr(geo_nodes[2].rfind(',')) == ",50");
  const auto geo = json::parse(slurp(out / "geo.geojson"));
  CHECK(geo["type"] == "FeatureCollection");
  CHECK(geo["features"].size() == 3);
}

TEST_CASE("run_pipeline: manifest lists exactly the files in the output directory") {
  const auto dir = fixture::scratch_dir("pipe_manifest");
  const auto out = dir / "out";
  run_pipeline(fixture::data("two_node"), write_options(dir, kCopperRedispatch), out);
  const auto manifest = json::parse(slurp(out / "manifest.json"));
  CHECK(manifest["files"].get<std::vector<std::string>>() == files_under(out));
  CHECK(manifest["success"] == true);
  CHECK(manifest["options_hash"].get<std::string>().size() == 16);
  CHECK(manifest["timings"].size() == 5);
}

TEST_CASE("run_pipeline: nodal run without redispatch") {
  const auto dir = fixture::scratch_dir("pipe_nodal");
  const auto res = run_pipeline(fixture::data("ring3"),
                                write_options(dir, R"({"type": "nodal", "contingency": {"enabled": true}})"), dir / "out");
  CHECK(res.manifest.stages == std::vector<std::string>{"load", "grid", "market", "report"});
  CHECK(res.report.market_overloads.empty());
  CHECK(*res.report.n0_market == 0);
  CHECK(*res.report.n1_market == 0);
  CHECK_FALSE(res.report.n0_redispatch.has_value());
  CHECK_FALSE(res.report.redispatch_mwh.has_value());
  CHECK_FALSE(fs::exists(dir / "out" / "redispatch"));
  CHECK(slurp(dir / "out" / "report.txt").find("Total Redispatch in MWh: n/a") != std::string::npos);
}

TEST_CASE("run_pipeline: missing options file is a startup error") {
  const auto dir = fixture::scratch_dir("pipe_noopt");
  CHECK_THROWS_AS(run_pipeline(fixture::data("two_node"), dir / "absent.json", dir / "out"), DataError);
  CHECK_FALSE(fs::exists(dir / "out"));
}

TEST_CASE("run_pipeline: stage failure keeps a manifest marking the failure") {
  const auto dir = fixture::scratch_dir("pipe_fail");
  const auto out = dir / "out";
  std::string message;
  try {
    run_pipeline(fixture::data("bad_reference"), write_options(dir, kCopperRedispatch), out);
  } catch (const DataError& e) {
    message = e.what();
  }
  CHECK(message.rfind("load: ", 0) == 0);
  const auto manifest = json::parse(slurp(out / "manifest.json"));
  CHECK(manifest["success"] == false);
  CHECK(manifest["failed_stage"] == "load");
  CHECK(manifest["stages"].empty());
  CHECK(manifest["files"].get<std::vector<std::string>>() == files_under(out));
}

TEST_CASE("run_pipeline: horizon outside the dataset fails in the load stage") {
  const auto dir = fixture::scratch_dir("pipe_horizon");
  const auto out = dir / "out";
  CHECK_THROWS_AS(run_pipeline(fixture::data("two_node"), write_options(dir, R"({"model_horizon": [0, 5]})"), out),
                  DataError);
  const auto manifest = json::parse(slurp(out / "manifest.json"));
  CHECK(manifest["success"] == false);
  CHECK(manifest["failed_stage"] == "load");
}

TEST_CASE("run_pipeline: rerun with a warm cache reproduces every CSV byte for byte") {
  const auto dir = fixture::scratch_dir("pipe_idem");
  const auto opts = write_options(
      dir, R"({"type": "nodal", "contingency": {"enabled": true}, "redispatch": {"include": true}})");
  const auto cache = dir / "cache";
  PipelineOptions run;
  run.cache_dir = cache;
  const auto first = run_pipeline(fixture::data("mixed"), opts, dir / "a", run);
  const auto second = run_pipeline(fixture::data("mixed"), opts, dir / "b", run);
  CHECK(first.manifest.cache == "miss");
  CHECK(second.manifest.cache == "hit");
  const auto files = files_under(dir / "a");
  CHECK(files == files_under(dir / "b"));
  int compared = 0;
  for (const auto& f : files) {
    if (f == "manifest.json") continue;
    CHECK_MESSAGE(slurp(dir / "a" / f) == slurp(dir / "b" / f), f);
    ++compared;
  }
  CHECK(compared > 10);
}

TEST_CASE("run_pipeline: cached and uncached reductions give the same objectives") {
  for (const std::string name : {"ring3", "mixed", "synth30.m"}) {
    CAPTURE(name);
    const auto dir = fixture::scratch_dir("pipe_cache");
    const auto opts = write_options(
        dir, R"({"type": "nodal", "contingency": {"enabled": true}, "redispatch": {"include": false}})");
    PipelineOptions cached;
    cached.cache_dir = dir / "cache";
    PipelineOptions uncached;
    uncached.use_cache = false;
    const auto miss = run_pipeline(case_path(name), opts, dir / "miss", cached);
    const auto hit = run_pipeline(case_path(name), opts, dir / "hit", cached);
    const auto off = run_pipeline(case_path(name), opts, dir / "off", uncached);
    CHECK(miss.manifest.cache == "miss");
    CHECK(hit.manifest.cache == "hit");
    CHECK(off.manifest.cache == "off");
    CHECK_FALSE(fs::exists(dir / "off" / "cache"));
    CHECK(hit.market->objective == doctest::Approx(off.market->objective).epsilon(1e-9));
    CHECK(std::abs(miss.market->objective - off.market->objective) <= 1e-6);
    CHECK(hit.grid_rows == off.grid_rows);
  }
}

TEST_CASE("run_pipeline: a stale cache file is ignored") {
  const auto dir = fixture::scratch_dir("pipe_stale");
  const auto opts = write_options(dir, R"({"type": "nodal", "contingency": {"enabled": true}})");
  PipelineOptions run;
  run.cache_dir = dir / "cache";
  const auto first = run_pipeline(fixture::data("ring3"), opts, dir / "a", run);
  const auto files = files_under(dir / "cache");
  REQUIRE(files.size() == 1);
  std::ofstream(dir / "cache" / files[0]) << R"({"key": "other", "rows": 1, "essential": [0]})";
  const auto second = run_pipeline(fixture::data("ring3"), opts, dir / "b", run);
  CHECK(second.manifest.cache == "miss");
  CHECK(second.market->objective == doctest::Approx(first.market->objective));
}

TEST_CASE("run_pipeline: zonal FBMC stages and exports") {
  const auto dir = fixture::scratch_dir("pipe_fbmc");
  const auto out = dir / "out";
  const auto res = run_pipeline(
      fixture::data("mixed"),
      write_options(dir, R"({"type": "zonal_fbmc", "gsk_strategy": "gmax", "redispatch": {"include": true}})"), out);
  CHECK(res.manifest.stages == std::vector<std::string>{"load", "grid", "fbmc", "market", "redispatch", "report"});
  REQUIRE(res.fb.has_value());
  CHECK(fs::exists(out / "fbmc" / "fb_parameters.csv"));
  CHECK(fs::exists(out / "fbmc" / "domain_west_east_t0.csv"));
  CHECK(fs::exists(out / "fbmc" / "domain_west_east_t0.svg"));
  CHECK(fs::exists(out / "fbmc" / "basecase" / "G.csv"));
  // Redispatch repairs every N-0 violation whenever no slack is active.
  if (res.redispatch->total_infeasibility() <= 1e-9) CHECK(*res.report.n0_redispatch == 0);
}

TEST_CASE("emit_geo_data: missing coordinates and zero-capacity lines") {
  std::vector<std::string> warnings;
  const auto dir = fixture::scratch_dir("geo");
  {
    const auto res = run_pipeline(case_path("synth30.m"), write_options(dir, R"({"type": "copper_plate"})"), dir / "m");
    CHECK_FALSE(fs::exists(dir / "m" / "geo_nodes.csv"));
    CHECK_FALSE(fs::exists(dir / "m" / "geo.geojson"));
    bool warned = false;
    for (const auto& w : res.manifest.warnings) warned |= w.find("no coordinates") != std::string::npos;
    CHECK(warned);
  }
  auto ds = load_dataset(fixture::data("two_node"));
  const auto net = build_network(ds);
  MarketConfig config;
  config.type = MarketType::copper_plate;
  const auto market = run_market(ds, net, nullptr, config);
  ds.lines[0].capacity = 0.0;
  const auto files = emit_geo_data(ds, market, nullptr, dir, warnings);
  CHECK(files.size() == 3);
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("zero capacity") != std::string::npos);
  CHECK(lines_of(dir / "geo_lines.csv")[1] == "l1,n1,n2,");
}

TEST_CASE("run_reduce and run_domain") {
  const auto dir = fixture::scratch_dir("pipe_sub");
  const auto opts = write_options(dir, R"({"type": "zonal_fbmc", "contingency": {"enabled": true}})");
  const auto g = run_reduce(fixture::data("ring3"), opts, dir / "reduce");
  CHECK(g.security.reduced);
  const auto summary = json::parse(slurp(dir / "reduce" / "reduction.json"));
  CHECK(summary["rows"] == g.security.unreduced_rows);
  CHECK(summary["essential"] == g.security.size());
  CHECK(lines_of(dir / "reduce" / "reduced_cbcos.csv").size() == static_cast<std::size_t>(g.security.size()) + 1);

  const auto poly = run_domain(fixture::data("mixed"), opts, dir / "domain", "west", "east", 0);
  CHECK_FALSE(poly.empty());
  CHECK(fs::exists(dir / "domain" / "domain_west_east_t0.csv"));
  CHECK(fs::exists(dir / "domain" / "domain_west_east_t0.svg"));
  CHECK_THROWS_AS(run_domain(fixture::data("mixed"), opts, dir / "domain", "west", "east", 9999), DataError);
  CHECK_THROWS_AS(run_domain(fixture::data("mixed"), opts, dir / "domain", "west", "nowhere", 0), DataError);
}

TEST_CASE("cli: subcommands and exit codes") {
  const auto dir = fixture::scratch_dir("cli");
  const auto opts = write_options(dir, kCopperRedispatch).string();
  const auto data = fixture::data("two_node").string();
  CHECK(cli("run -q --data " + data + " --options " + opts + " --out " + (dir / "run").string()) == 0);
  CHECK(fs::exists(dir / "run" / "manifest.json"));
  CHECK(cli("validate --data " + data) == 0);
  CHECK(cli("validate --data " + fixture::data("bad_reference").string()) == 1);
  CHECK(cli("run -q --data " + data + " --options " + (dir / "none.json").string() + " --out " +
            (dir / "x").string()) == 1);
  CHECK(cli("run --data " + data) == 1);
  CHECK(cli("reduce -q --data " + data + " --options " + opts + " --out " + (dir / "red").string()) == 0);
  CHECK(cli("domain -q --data " + fixture::data("mixed").string() + " --options " + opts + " --out " +
            (dir / "dom").string() + " --zones west,east --t 0") == 0);
  CHECK(cli("domain -q --data " + fixture::data("mixed").string() + " --options " + opts + " --out " +
            (dir / "dom").string() + " --zones west --t 0") == 1);
}

TEST_CASE("build_grid: N-1 rows that force curtailment still reduce soundly") {
  // Losing line 1-2 leaves bus 2's 80 MW load behind the 60 MW line 2-3.
  const auto ds = load_any_dataset(case_path("case4_two_area.m"));
  Options o;
  o.contingency.enabled = true;
  o.contingency.sensitivity_threshold = 0.0;
  const auto dir = fixture::scratch_dir("grid_curtail");
  const auto g = build_grid(ds, o, dir / "cache", true);
  CHECK(g.security.reduced);
  CHECK(g.cache == "miss");
  for (const auto& w : g.warnings) CHECK(w.find("all rows kept") == std::string::npos);
  REQUIRE(g.full.has_value());
  MarketConfig config;
  const auto reduced = run_market(ds, g.network, &g.security, config);
  const auto full = run_market(ds, g.network, &*g.full, config);
  CHECK(reduced.total_infeasibility() == doctest::Approx(0.0));
  CHECK(reduced.curtailment.sum() > 1.0);
  CHECK(reduced.objective == doctest::Approx(full.objective).epsilon(1e-9));
  CHECK(reduced.curtailment.sum() == doctest::Approx(full.curtailment.sum()).epsilon(1e-6));
}
