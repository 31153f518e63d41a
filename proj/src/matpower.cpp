#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "gridclear/dataio.hpp"

namespace gridclear {
namespace {

// Column positions of the Matpower case format (0-based).
constexpr std::size_t kBusId = 0, kBusType = 1, kBusPd = 2, kBusArea = 6;
constexpr std::size_t kBrFrom = 0, kBrTo = 1, kBrX = 3, kBrRateA = 5, kBrStatus = 10;
constexpr std::size_t kGenBus = 0, kGenStatus = 7, kGenPmax = 8;
constexpr std::size_t kCostModel = 0, kCostN = 3, kCostData = 4;

using Matrix = std::vector<std::vector<double>>;

std::string strip_comments(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  bool comment = false;
  for (char c : text) {
    if (c == '\n') comment = false;
    else if (c == '%') comment = true;
    if (!comment) out.push_back(c);
  }
  return out;
}

double parse_token(const std::string& tok, const std::string& section) {
  std::string lower = tok;
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "inf" || lower == "+inf") return std::numeric_limits<double>::infinity();
  if (lower == "-inf") return -std::numeric_limits<double>::infinity();
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str() || *end != '\0') throw DataError("matpower: bad number '" + tok + "' in mpc." + section);
  return v;
}

// Body of `mpc.<name> = [ ... ];` as rows of numbers; nullopt when absent.
std::optional<Matrix> read_matrix(const std::string& text, const std::string& name) {
  const std::string key = "mpc." + name;
  std::size_t pos = 0;
  while ((pos = text.find(key, pos)) != std::string::npos) {
    std::size_t p = pos + key.size();
    while (p < text.size() && std::isspace(static_cast<unsigned char>(text[p]))) ++p;
    if (p < text.size() && text[p] == '=') break;
    pos = p;
  }
  if (pos == std::string::npos) return std::nullopt;
  const auto open = text.find('[', pos);
  const auto close = text.find(']', open);
  if (open == std::string::npos || close == std::string::npos) throw DataError("matpower: unterminated mpc." + name);

  Matrix rows;
  std::vector<double> row;
  std::string tok;
  auto flush_tok = [&] {
    if (!tok.empty()) row.push_back(parse_token(tok, name));
    tok.clear();
  };
  auto flush_row = [&] {
    flush_tok();
    if (!row.empty()) rows.push_back(std::move(row));
    row.clear();
  };
  for (std::size_t i = open + 1; i < close; ++i) {
    const char c = text[i];
    if (c == ';' || c == '\n') flush_row();
    else if (c == ',' || std::isspace(static_cast<unsigned char>(c))) flush_tok();
    else if (c == '.' && i + 2 < close && text[i + 1] == '.' && text[i + 2] == '.') i += 2;  // line continuation
    else tok.push_back(c);
  }
  flush_row();
  return rows;
}

void require_columns(const Matrix& m, std::size_t n, const std::string& name) {
  for (std::size_t r = 0; r < m.size(); ++r) {
    if (m[r].size() < n) {
      throw DataError("matpower: mpc." + name + " row " + std::to_string(r + 1) + " has " +
                      std::to_string(m[r].size()) + " columns, need at least " + std::to_string(n));
    }
  }
}

std::string id_of(double v) {
  std::ostringstream ss;
  ss << static_cast<long long>(v);
  return ss.str();
}

// Linear marginal cost of one gencost row; rejects anything not linear.
double linear_cost(const std::vector<double>& row, std::size_t gen) {
  const std::string where = "matpower: gencost row " + std::to_string(gen + 1);
  if (row.size() < kCostData) throw DataError(where + " is too short");
  const int model = static_cast<int>(row[kCostModel]);
  const auto n = static_cast<std::size_t>(row[kCostN]);
  if (row.size() < kCostData + (model == 1 ? 2 * n : n)) throw DataError(where + " is too short");
  const double* c = row.data() + kCostData;
  if (model == 2) {
    // Coefficients are stored highest order first.
    for (std::size_t k = 0; k + 2 < n; ++k) {
      if (c[k] != 0.0) throw DataError(where + ": nonlinear (polynomial degree " + std::to_string(n - 1 - k) + ") cost not supported");
    }
    return n >= 2 ? c[n - 2] : 0.0;
  }
  if (model == 1) {
    if (n < 2) throw DataError(where + ": piecewise cost needs at least two points");
    const double slope = (c[3] - c[1]) / (c[2] - c[0]);
    for (std::size_t k = 2; k < n; ++k) {
      const double s = (c[2 * k + 1] - c[2 * k - 1]) / (c[2 * k] - c[2 * k - 2]);
      if (std::abs(s - slope) > 1e-9 * (1.0 + std::abs(slope))) {
        throw DataError(where + ": nonlinear piecewise cost not supported");
      }
    }
    return slope;
  }
  throw DataError(where + ": unknown cost model " + std::to_string(model));
}

}  // namespace

MatpowerImport parse_matpower_case(const std::string& raw, int timesteps) {
  if (timesteps < 1) throw DataError("matpower: timesteps must be positive");
  const std::string text = strip_comments(raw);
  const auto bus = read_matrix(text, "bus");
  const auto branch = read_matrix(text, "branch");
  const auto gen = read_matrix(text, "gen");
  const auto gencost = read_matrix(text, "gencost");
  if (!bus || bus->empty()) throw DataError("matpower: missing mpc.bus");
  if (!branch) throw DataError("matpower: missing mpc.branch");
  if (!gen) throw DataError("matpower: missing mpc.gen");
  if (!gencost) throw DataError("matpower: missing mpc.gencost");
  require_columns(*bus, kBusArea + 1, "bus");
  require_columns(*branch, kBrStatus + 1, "branch");
  require_columns(*gen, kGenPmax + 1, "gen");
  if (gencost->size() < gen->size()) throw DataError("matpower: mpc.gencost has fewer rows than mpc.gen");

  MatpowerImport out;
  Dataset& ds = out.dataset;
  ds.timesteps = timesteps;

  std::set<long long> areas;
  for (const auto& b : *bus) areas.insert(static_cast<long long>(b[kBusArea]));
  auto zone_of = [&](double area) { return areas.size() > 1 ? "area" + id_of(area) : std::string("system"); };
  if (areas.size() > 1) {
    for (auto a : areas) ds.zones.push_back({"area" + std::to_string(a)});
  } else {
    ds.zones.push_back({"system"});
  }

  for (const auto& b : *bus) {
    Node n;
    n.id = id_of(b[kBusId]);
    n.zone = zone_of(b[kBusArea]);
    n.slack = static_cast<int>(b[kBusType]) == 3;
    ds.nodes.push_back(std::move(n));
  }
  ds.demand = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(bus->size()), timesteps);
  double total_load = 0.0;
  for (std::size_t i = 0; i < bus->size(); ++i) {
    ds.demand.row(static_cast<Eigen::Index>(i)).setConstant((*bus)[i][kBusPd]);
    total_load += std::max(0.0, (*bus)[i][kBusPd]);
  }

  double total_pmax = 0.0;
  for (std::size_t g = 0; g < gen->size(); ++g) {
    const auto& row = (*gen)[g];
    const double mc = linear_cost((*gencost)[g], g);
    if (row[kGenStatus] <= 0) continue;
    if (row[kGenPmax] < 0.0) {
      out.warnings.push_back("gen " + std::to_string(g + 1) + ": negative Pmax, skipped");
      continue;
    }
    Plant p;
    p.id = "g" + std::to_string(g + 1);
    p.node = id_of(row[kGenBus]);
    p.mc_el = mc;
    p.g_max = row[kGenPmax];
    total_pmax += p.g_max;
    ds.plants.push_back(std::move(p));
  }

  // rateA = 0 means unlimited in Matpower; use a bound no dispatch can reach.
  const double unlimited = 10.0 * (total_pmax + total_load) + 1.0;
  for (std::size_t k = 0; k < branch->size(); ++k) {
    const auto& row = (*branch)[k];
    if (row[kBrStatus] <= 0) continue;
    Line l;
    l.id = "l" + std::to_string(k + 1);
    l.from = id_of(row[kBrFrom]);
    l.to = id_of(row[kBrTo]);
    l.reactance = row[kBrX];
    l.capacity = row[kBrRateA];
    if (l.capacity <= 0.0) {
      out.warnings.push_back("branch " + std::to_string(k + 1) + ": rateA = 0, capacity set to " +
                             std::to_string(unlimited) + " MW (unlimited)");
      l.capacity = unlimited;
    }
    ds.lines.push_back(std::move(l));
  }

  // Matpower carries no exchange data. Each connected area pair gets an
  // NTC equal to the summed ratings of its tie lines, the physical limit
  // of any zonal exchange.
  std::map<std::string, std::string> zone_of_node;
  for (const auto& n : ds.nodes) zone_of_node[n.id] = n.zone;
  std::map<std::pair<std::string, std::string>, double> ties;
  for (const auto& l : ds.lines) {
    auto a = zone_of_node.find(l.from);
    auto b = zone_of_node.find(l.to);
    if (a == zone_of_node.end() || b == zone_of_node.end() || a->second == b->second) continue;
    ties[{a->second, b->second}] += l.capacity;
    ties[{b->second, a->second}] += l.capacity;
  }
  for (const auto& [pair, cap] : ties) ds.ntcs.push_back({pair.first, pair.second, cap});

  ds.reindex();
  for (const auto& l : ds.lines) {
    if (!ds.find_node(l.from) || !ds.find_node(l.to)) throw DataError("matpower: branch " + l.id + " references an unknown bus");
  }
  for (const auto& p : ds.plants) {
    if (!ds.find_node(p.node)) throw DataError("matpower: generator " + p.id + " references an unknown bus");
  }
  ds.validation = validate_dataset(ds);
  return out;
}

MatpowerImport import_matpower_case(const std::filesystem::path& path, int timesteps) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open case file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_matpower_case(ss.str(), timesteps);
}

}  // namespace gridclear
