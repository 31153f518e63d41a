// gridclear command line: run, validate, reduce, domain.

#include <CLI11.hpp>

#include <iostream>

#include "gridclear/pipeline.hpp"

namespace {

using namespace gridclear;

int exit_code(const std::exception& e) {
  std::cerr << "error: " << e.what() << '\n';
  if (dynamic_cast<const DataError*>(&e)) return 1;
  if (dynamic_cast<const SolveError*>(&e)) return 2;
  return 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Electricity market clearing with N-1 grid constraints, FBMC and redispatch"};
  app.require_subcommand(1);

  std::string data, options, out, cache, zones;
  bool no_cache = false, quiet = false;
  int t = 0;

  auto common = [&](CLI::App* cmd, bool needs_out) {
    cmd->add_option("--data", data, "Dataset directory, .zip or Matpower .m case")->required();
    cmd->add_option("--options", options, "Options JSON file")->required();
    auto* o = cmd->add_option("--out", out, "Output directory");
    if (needs_out) o->required();
    cmd->add_option("--cache", cache, "Reduction cache directory (default <out>/cache)");
    cmd->add_flag("--no-cache", no_cache, "Do not read or write the reduction cache");
    cmd->add_flag("-q,--quiet", quiet, "No progress output on stderr");
  };

  auto* run = app.add_subcommand("run", "Run the full pipeline");
  common(run, true);
  auto* validate = app.add_subcommand("validate", "Validate a dataset");
  validate->add_option("--data", data, "Dataset directory, .zip or Matpower .m case")->required();
  auto* reduce = app.add_subcommand("reduce", "Build and reduce the grid representation only");
  common(reduce, true);
  auto* domain = app.add_subcommand("domain", "Export a 2D slice of the flow-based domain");
  common(domain, true);
  domain->add_option("--zones", zones, "Two zones, A,B")->required();
  domain->add_option("--t", t, "Timestep")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  PipelineOptions po;
  po.use_cache = !no_cache;
  po.cache_dir = cache;
  po.log = quiet ? nullptr : &std::cerr;

  try {
    if (*run) {
      const auto res = run_pipeline(data, options, out, po);
      std::cout << format_report(res.report);
    } else if (*validate) {
      std::vector<std::string> warnings;
      const auto ds = load_any_dataset(data, &warnings);
      for (const auto& f : ds.validation.findings) std::cout << f.to_string() << '\n';
      std::cout << ds.validation.errors() << " error(s), " << ds.validation.warnings() << " warning(s)\n";
      if (!ds.validation.valid()) return 1;
    } else if (*reduce) {
      const auto g = run_reduce(data, options, out, po);
      const auto total = g.security.reduced ? g.security.unreduced_rows : g.security.size();
      std::cout << "rows " << total << ", essential " << g.security.size() << ", cache " << g.cache << '\n';
    } else if (*domain) {
      const auto comma = zones.find(',');
      if (comma == std::string::npos) throw DataError("--zones expects A,B");
      const auto poly = run_domain(data, options, out, zones.substr(0, comma), zones.substr(comma + 1), t, po);
      if (poly.empty()) std::cout << "empty domain: " << poly.diagnostic << '\n';
      for (const auto& v : poly.vertices) std::cout << v.x() << ',' << v.y() << '\n';
    }
  } catch (const std::exception& e) {
    return exit_code(e);
  }
  return 0;
}
