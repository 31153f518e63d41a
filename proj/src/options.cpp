#include <cmath>
#include <fstream>
#include <json.hpp>
#include <map>
#include <set>
#include <sstream>

#include "gridclear/dataio.hpp"

namespace gridclear {

const char* to_string(MarketType t) {
  switch (t) {
    case MarketType::copper_plate: return "copper_plate";
    case MarketType::nodal: return "nodal";
    case MarketType::zonal_ntc: return "zonal_ntc";
    case MarketType::zonal_fbmc: return "zonal_fbmc";
  }
  return "?";
}

const char* to_string(GskStrategy s) {
  switch (s) {
    case GskStrategy::flat: return "flat";
    case GskStrategy::gmax: return "gmax";
    case GskStrategy::basecase: return "basecase";
  }
  return "?";
}

std::pair<int, int> Options::horizon(const Dataset& dataset) const {
  if (!model_horizon) return {0, dataset.timesteps};
  const auto [a, b] = *model_horizon;
  if (b > dataset.timesteps) {
    throw DataError("model_horizon [" + std::to_string(a) + ", " + std::to_string(b) + ") exceeds the dataset's " +
                    std::to_string(dataset.timesteps) + " timesteps");
  }
  return *model_horizon;
}

namespace {

using nlohmann::json;

class Reader {
 public:
  explicit Reader(std::vector<std::string>& warnings) : warnings_(warnings) {}

  // Warns about keys of `obj` not in `known`.
  void check_keys(const json& obj, const std::string& path, std::initializer_list<const char*> known) {
    std::set<std::string> k(known.begin(), known.end());
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      if (!k.count(it.key())) warnings_.push_back("unknown option " + path + "/" + it.key() + " ignored");
    }
  }

  static const json& object(const json& v, const std::string& path) {
    if (!v.is_object()) throw DataError("options " + path + ": expected an object");
    return v;
  }

  static double number(const json& v, const std::string& path) {
    if (!v.is_number()) throw DataError("options " + path + ": expected a number");
    return v.get<double>();
  }

  static double non_negative(const json& v, const std::string& path) {
    const double x = number(v, path);
    if (!(x >= 0.0) || !std::isfinite(x)) throw DataError("options " + path + ": must be finite and >= 0");
    return x;
  }

  static bool boolean(const json& v, const std::string& path) {
    if (!v.is_boolean()) throw DataError("options " + path + ": expected true or false");
    return v.get<bool>();
  }

  static std::string string(const json& v, const std::string& path) {
    if (!v.is_string()) throw DataError("options " + path + ": expected a string");
    return v.get<std::string>();
  }

  static int integer(const json& v, const std::string& path) {
    if (!v.is_number_integer()) throw DataError("options " + path + ": expected an integer");
    return v.get<int>();
  }

 private:
  std::vector<std::string>& warnings_;
};

MarketType parse_market_type(const std::string& s, const std::string& path) {
  static const std::map<std::string, MarketType> names = {
      {"copper_plate", MarketType::copper_plate}, {"dispatch", MarketType::copper_plate},
      {"nodal", MarketType::nodal},               {"opf", MarketType::nodal},
      {"zonal_ntc", MarketType::zonal_ntc},       {"ntc", MarketType::zonal_ntc},
      {"zonal_fbmc", MarketType::zonal_fbmc},     {"fbmc", MarketType::zonal_fbmc},
  };
  auto it = names.find(s);
  if (it == names.end()) throw DataError("options " + path + ": unknown market type '" + s + "'");
  return it->second;
}

GskStrategy parse_gsk(const std::string& s, const std::string& path) {
  if (s == "flat") return GskStrategy::flat;
  if (s == "gmax") return GskStrategy::gmax;
  if (s == "basecase") return GskStrategy::basecase;
  throw DataError("options " + path + ": unknown gsk strategy '" + s + "'");
}

void apply(const json& root, const std::string& base, Options& o, Reader& r) {
  r.check_keys(root, base,
               {"type", "model_horizon", "redispatch", "contingency", "gsk_strategy", "min_ram", "curtailment_cost",
                "infeasibility_penalty", "redundancy_removal", "optimization"});
  if (root.contains("type")) o.type = parse_market_type(Reader::string(root["type"], base + "/type"), base + "/type");
  if (root.contains("model_horizon")) {
    const auto path = base + "/model_horizon";
    const auto& h = root["model_horizon"];
    if (!h.is_array() || h.size() != 2) throw DataError("options " + path + ": expected [t_start, t_end]");
    const int a = Reader::integer(h[0], path + "/0");
    const int b = Reader::integer(h[1], path + "/1");
    if (a < 0) throw DataError("options " + path + ": t_start must be >= 0");
    if (a >= b) throw DataError("options " + path + ": empty horizon, t_start must be < t_end");
    o.model_horizon = std::make_pair(a, b);
  }
  if (root.contains("redispatch")) {
    const auto path = base + "/redispatch";
    const auto& rd = Reader::object(root["redispatch"], path);
    r.check_keys(rd, path, {"include", "cost"});
    if (rd.contains("include")) o.redispatch.include = Reader::boolean(rd["include"], path + "/include");
    if (rd.contains("cost")) o.redispatch.cost = Reader::non_negative(rd["cost"], path + "/cost");
  }
  if (root.contains("contingency")) {
    const auto path = base + "/contingency";
    const auto& c = Reader::object(root["contingency"], path);
    r.check_keys(c, path, {"enabled", "sensitivity_threshold", "groups"});
    if (c.contains("enabled")) o.contingency.enabled = Reader::boolean(c["enabled"], path + "/enabled");
    if (c.contains("sensitivity_threshold")) {
      o.contingency.sensitivity_threshold = Reader::non_negative(c["sensitivity_threshold"], path + "/sensitivity_threshold");
    }
    if (c.contains("groups")) {
      const auto gpath = path + "/groups";
      if (!c["groups"].is_array()) throw DataError("options " + gpath + ": expected a list of line-id lists");
      o.contingency.groups.clear();
      for (std::size_t i = 0; i < c["groups"].size(); ++i) {
        const auto& g = c["groups"][i];
        const auto ipath = gpath + "/" + std::to_string(i);
        if (!g.is_array() || g.empty()) throw DataError("options " + ipath + ": expected a non-empty list of line ids");
        std::vector<std::string> ids;
        for (std::size_t j = 0; j < g.size(); ++j) ids.push_back(Reader::string(g[j], ipath + "/" + std::to_string(j)));
        o.contingency.groups.push_back(std::move(ids));
      }
    }
  }
  if (root.contains("gsk_strategy")) {
    o.gsk_strategy = parse_gsk(Reader::string(root["gsk_strategy"], base + "/gsk_strategy"), base + "/gsk_strategy");
  }
  if (root.contains("min_ram")) {
    o.min_ram = Reader::non_negative(root["min_ram"], base + "/min_ram");
    if (o.min_ram > 1.0) throw DataError("options " + base + "/min_ram: must lie in [0, 1]");
  }
  if (root.contains("curtailment_cost")) o.curtailment_cost = Reader::non_negative(root["curtailment_cost"], base + "/curtailment_cost");
  if (root.contains("infeasibility_penalty")) {
    o.infeasibility_penalty = Reader::non_negative(root["infeasibility_penalty"], base + "/infeasibility_penalty");
  }
  if (root.contains("redundancy_removal")) {
    o.redundancy_removal = Reader::boolean(root["redundancy_removal"], base + "/redundancy_removal");
  }
}

}  // namespace

Options parse_options(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("options: invalid JSON: ") + e.what());
  }
  Options o;
  Reader r(o.warnings);
  Reader::object(root, "/");
  apply(root, "", o, r);
  // Settings may also sit under an "optimization" block; those win.
  if (root.contains("optimization")) apply(Reader::object(root["optimization"], "/optimization"), "/optimization", o, r);
  return o;
}

Options load_options(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open options file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_options(ss.str());
}

std::string options_to_json(const Options& o) {
  json j;
  j["type"] = to_string(o.type);
  if (o.model_horizon) j["model_horizon"] = {o.model_horizon->first, o.model_horizon->second};
  else j["model_horizon"] = nullptr;
  j["redispatch"] = {{"include", o.redispatch.include}, {"cost", o.redispatch.cost}};
  j["contingency"] = {{"enabled", o.contingency.enabled},
                      {"sensitivity_threshold", o.contingency.sensitivity_threshold},
                      {"groups", o.contingency.groups}};
  j["gsk_strategy"] = to_string(o.gsk_strategy);
  j["min_ram"] = o.min_ram;
  j["curtailment_cost"] = o.curtailment_cost;
  j["infeasibility_penalty"] = o.infeasibility_penalty;
  j["redundancy_removal"] = o.redundancy_removal;
  return j.dump();
}

}  // namespace gridclear
