#include "gridclear/market.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "csv.hpp"
#include "gridclear/fbmc.hpp"

namespace gridclear {

namespace {

using Terms = std::vector<std::pair<Index, double>>;

constexpr double kReportTolerance = 1e-6;
// Above this many grid rows the LP starts without them and adds violated
// ones in rounds (same optimum, far smaller bases).
constexpr Index kLazyNetworkRows = 400;

std::string at(const std::string& name, int t) { return name + "[" + std::to_string(t) + "]"; }

std::vector<std::vector<Index>> absent(std::size_t n, int timesteps) {
  return std::vector<std::vector<Index>>(n, std::vector<Index>(static_cast<std::size_t>(timesteps), -1));
}

class Builder {
 public:
  Builder(const Dataset& ds, const Network& net, const MarketConfig& cfg, Stage stage)
      : ds_(ds), net_(net), cfg_(cfg), T_(cfg.timesteps()) {
    pr_.type = cfg.type;
    pr_.stage = stage;
    pr_.t_start = cfg.t_start;
    pr_.timesteps = T_;
    const auto np = ds.plants.size();
    pr_.g = absent(np, T_);
    pr_.h = absent(np, T_);
    pr_.charge = absent(np, T_);
    pr_.discharge = absent(np, T_);
    pr_.level = absent(np, T_);
    pr_.delta_up = absent(np, T_);
    pr_.delta_down = absent(np, T_);
    pr_.curtailment = absent(ds.nodes.size(), T_);
    pr_.injection = absent(ds.nodes.size(), T_);
    pr_.net_position = absent(ds.zones.size(), T_);
  }

  int t_abs(int k) const { return cfg_.t_start + k; }

  void plants(const DispatchResult* market) {
    auto& lp = pr_.lp;
    for (std::size_t p = 0; p < ds_.plants.size(); ++p) {
      const auto& pl = ds_.plants[p];
      if (pl.is_storage()) {
        const double eta = pl.eta.value_or(1.0);
        for (int k = 0; k < T_; ++k) {
          const auto tt = static_cast<std::size_t>(k);
          double lo_ch = 0.0, up_ch = pl.g_max, lo_dis = 0.0, up_dis = pl.g_max;
          if (market) {
            lo_ch = up_ch = market->charge(static_cast<Index>(p), k);
            lo_dis = up_dis = market->discharge(static_cast<Index>(p), k);
          }
          pr_.charge[p][tt] = lp.add_variable(at("CH_" + pl.id, t_abs(k)), lo_ch, up_ch);
          pr_.discharge[p][tt] = lp.add_variable(at("DIS_" + pl.id, t_abs(k)), lo_dis, up_dis, pl.mc_el);
          pr_.level[p][tt] = lp.add_variable(at("L_" + pl.id, t_abs(k)), 0.0, pl.storage_capacity);
          Terms terms{{pr_.level[p][tt], 1.0}, {pr_.charge[p][tt], -eta}, {pr_.discharge[p][tt], 1.0}};
          double rhs = 0.0;
          if (k == 0) rhs = 0.5 * pl.storage_capacity;
          else terms.emplace_back(pr_.level[p][tt - 1], -1.0);
          lp.add_constraint(at("level_" + pl.id, t_abs(k)), std::move(terms), Sense::equal, rhs);
          ++pr_.storage_rows;
        }
        lp.add_constraint("level_end_" + pl.id, {{pr_.level[p][static_cast<std::size_t>(T_ - 1)], 1.0}}, Sense::equal,
                          0.5 * pl.storage_capacity);
        ++pr_.storage_rows;
        continue;
      }
      for (int k = 0; k < T_; ++k) {
        const auto tt = static_cast<std::size_t>(k);
        if (pl.has_heat_output()) {
          // Heat-only plants carry their marginal cost on heat; CHP on power.
          pr_.h[p][tt] = lp.add_variable(at("H_" + pl.id, t_abs(k)), 0.0, pl.h_max, pl.is_heat_only() ? pl.mc_el : 0.0);
        }
        if (!pl.has_electric_output()) continue;
        const double cap = ds_.availability_factor(pl, t_abs(k)) * pl.g_max;
        const Index g = lp.add_variable(at("G_" + pl.id, t_abs(k)), 0.0, cap, pl.mc_el);
        pr_.g[p][tt] = g;
        if (pl.is_chp()) {
          lp.add_constraint(at("chp_" + pl.id, t_abs(k)), {{g, 1.0}, {pr_.h[p][tt], -*pl.chp_ratio}}, Sense::equal, 0.0);
        }
        if (market) {
          const Index up = lp.add_variable(at("DUP_" + pl.id, t_abs(k)), 0.0, kInfinity, cfg_.redispatch_cost);
          const Index dn = lp.add_variable(at("DDN_" + pl.id, t_abs(k)), 0.0, kInfinity, cfg_.redispatch_cost);
          pr_.delta_up[p][tt] = up;
          pr_.delta_down[p][tt] = dn;
          lp.add_constraint(at("rd_" + pl.id, t_abs(k)), {{g, 1.0}, {up, -1.0}, {dn, 1.0}}, Sense::equal,
                            market->g(static_cast<Index>(p), k));
        }
      }
    }
  }

  void heat() {
    auto& lp = pr_.lp;
    pr_.heat_areas = ds_.heat_areas();
    pr_.heat_shortfall = absent(pr_.heat_areas.size(), T_);
    for (std::size_t a = 0; a < pr_.heat_areas.size(); ++a) {
      const auto& area = pr_.heat_areas[a];
      for (int k = 0; k < T_; ++k) {
        const auto tt = static_cast<std::size_t>(k);
        const Index s = lp.add_variable(at("HSHORT_" + area, t_abs(k)), 0.0, kInfinity, cfg_.infeasibility_penalty);
        pr_.heat_shortfall[a][tt] = s;
        Terms terms{{s, 1.0}};
        for (std::size_t p = 0; p < ds_.plants.size(); ++p) {
          if (pr_.h[p][tt] >= 0 && ds_.plants[p].heat_area == area) terms.emplace_back(pr_.h[p][tt], 1.0);
        }
        lp.add_constraint(at("heat_" + area, t_abs(k)), std::move(terms), Sense::equal, ds_.heat_demand_at(area, t_abs(k)));
      }
    }
  }

  void curtailment() {
    for (std::size_t n = 0; n < ds_.nodes.size(); ++n) {
      for (int k = 0; k < T_; ++k) {
        const double d = std::max(0.0, ds_.node_demand(n, t_abs(k)));
        pr_.curtailment[n][static_cast<std::size_t>(k)] =
            pr_.lp.add_variable(at("CURT_" + ds_.nodes[n].id, t_abs(k)), 0.0, d, cfg_.curtailment_cost);
      }
    }
  }

  // Balance units and their rows: supply terms of the member nodes plus
  // infeasibility slacks; `extra` adds the unit's exchange terms.
  template <typename Extra>
  void balances(const std::vector<std::pair<std::string, std::vector<std::size_t>>>& units, Extra&& extra) {
    auto& lp = pr_.lp;
    std::vector<std::size_t> unit_of_plant(ds_.plants.size());
    std::vector<std::size_t> unit_of_node(ds_.nodes.size());
    for (std::size_t u = 0; u < units.size(); ++u) {
      for (auto n : units[u].second) unit_of_node[n] = u;
    }
    for (std::size_t p = 0; p < ds_.plants.size(); ++p) {
      unit_of_plant[p] = unit_of_node[ds_.node_index(ds_.plants[p].node)];
    }
    pr_.infeasibility_up = absent(units.size(), T_);
    pr_.infeasibility_down = absent(units.size(), T_);
    pr_.balance_rows = absent(units.size(), T_);
    for (std::size_t u = 0; u < units.size(); ++u) {
      pr_.balance_units.push_back(units[u].first);
      pr_.balance_nodes.push_back(units[u].second);
      for (int k = 0; k < T_; ++k) {
        const auto tt = static_cast<std::size_t>(k);
        const Index up = lp.add_variable(at("INF_UP_" + units[u].first, t_abs(k)), 0.0, kInfinity, cfg_.infeasibility_penalty);
        const Index dn = lp.add_variable(at("INF_DN_" + units[u].first, t_abs(k)), 0.0, kInfinity, cfg_.infeasibility_penalty);
        pr_.infeasibility_up[u][tt] = up;
        pr_.infeasibility_down[u][tt] = dn;
        Terms terms{{up, 1.0}, {dn, -1.0}};
        double demand = 0.0;
        for (auto n : units[u].second) {
          demand += ds_.node_demand(n, t_abs(k));
          terms.emplace_back(pr_.curtailment[n][tt], 1.0);
        }
        for (std::size_t p = 0; p < ds_.plants.size(); ++p) {
          if (unit_of_plant[p] != u) continue;
          if (pr_.g[p][tt] >= 0) terms.emplace_back(pr_.g[p][tt], 1.0);
          if (pr_.discharge[p][tt] >= 0) terms.emplace_back(pr_.discharge[p][tt], 1.0);
          if (pr_.charge[p][tt] >= 0) terms.emplace_back(pr_.charge[p][tt], -1.0);
        }
        extra(u, k, terms);
        pr_.balance_rows[u][tt] = lp.add_constraint(at("balance_" + units[u].first, t_abs(k)), std::move(terms),
                                                    Sense::equal, demand);
      }
    }
  }

  void nodal(const GridRepresentation& grid, const DispatchResult* market) {
    auto& lp = pr_.lp;
    const auto nn = ds_.nodes.size();
    for (std::size_t n = 0; n < nn; ++n) {
      for (int k = 0; k < T_; ++k) {
        pr_.injection[n][static_cast<std::size_t>(k)] =
            lp.add_variable(at("INJ_" + ds_.nodes[n].id, t_abs(k)), -kInfinity, kInfinity);
      }
    }
    std::vector<std::pair<std::string, std::vector<std::size_t>>> units;
    for (std::size_t n = 0; n < nn; ++n) units.push_back({ds_.nodes[n].id, {n}});
    balances(units, [&](std::size_t u, int k, Terms& terms) {
      terms.emplace_back(pr_.injection[u][static_cast<std::size_t>(k)], -1.0);
    });
    const auto& topo = net_.topology;
    for (Index c = 0; c < topo.num_components(); ++c) {
      const auto members = topo.component_nodes(c);
      for (int k = 0; k < T_; ++k) {
        Terms terms;
        for (auto n : members) terms.emplace_back(pr_.injection[static_cast<std::size_t>(n)][static_cast<std::size_t>(k)], 1.0);
        lp.add_constraint(at("slack_balance_" + topo.node_ids[static_cast<std::size_t>(topo.slack[static_cast<std::size_t>(c)])], t_abs(k)),
                          std::move(terms), Sense::equal, 0.0);
      }
    }
    if (market && market->type != MarketType::copper_plate && market->type != MarketType::nodal) {
      // Fixed zonal balances; a nodal market's balances are implied by the
      // nodal schedule, a copper plate has none beyond the system balance.
      pr_.zone_deviation_up = absent(ds_.zones.size(), T_);
      pr_.zone_deviation_down = absent(ds_.zones.size(), T_);
      for (std::size_t z = 0; z < ds_.zones.size(); ++z) {
        for (int k = 0; k < T_; ++k) {
          Terms terms;
          for (std::size_t n = 0; n < nn; ++n) {
            if (ds_.nodes[n].zone == ds_.zones[z].id) terms.emplace_back(pr_.injection[n][static_cast<std::size_t>(k)], 1.0);
          }
          if (terms.empty()) continue;
          const auto tt = static_cast<std::size_t>(k);
          const Index up = lp.add_variable(at("NPDEV_UP_" + ds_.zones[z].id, t_abs(k)), 0.0, kInfinity, cfg_.infeasibility_penalty);
          const Index dn = lp.add_variable(at("NPDEV_DN_" + ds_.zones[z].id, t_abs(k)), 0.0, kInfinity, cfg_.infeasibility_penalty);
          pr_.zone_deviation_up[z][tt] = up;
          pr_.zone_deviation_down[z][tt] = dn;
          terms.emplace_back(up, -1.0);
          terms.emplace_back(dn, 1.0);
          lp.add_constraint(at("np_fix_" + ds_.zones[z].id, t_abs(k)), std::move(terms), Sense::equal,
                            market->net_positions(static_cast<Index>(z), k));
        }
      }
    }
    for (Index r = 0; r < grid.size(); ++r) {
      Terms base;
      for (Index n = 0; n < grid.rows.cols(); ++n) {
        const double v = grid.rows(r, n);
        if (std::abs(v) > 1e-12) base.emplace_back(n, v);
      }
      if (base.empty() && grid.rhs[r] >= 0.0) continue;
      for (int k = 0; k < T_; ++k) {
        Terms terms;
        for (const auto& [n, v] : base) terms.emplace_back(pr_.injection[static_cast<std::size_t>(n)][static_cast<std::size_t>(k)], v);
        pr_.network_row_indices.push_back(
            lp.add_constraint(at("cbco_" + grid.row_id(r), t_abs(k)), std::move(terms), Sense::less_equal, grid.rhs[r]));
        ++pr_.network_rows;
      }
    }
  }

  std::vector<std::pair<std::string, std::vector<std::size_t>>> zone_units() const {
    std::vector<std::pair<std::string, std::vector<std::size_t>>> units;
    for (const auto& z : ds_.zones) units.push_back({z.id, {}});
    for (std::size_t n = 0; n < ds_.nodes.size(); ++n) units[ds_.zone_index(ds_.nodes[n].zone)].second.push_back(n);
    return units;
  }

  void copper_plate() {
    std::vector<std::size_t> all(ds_.nodes.size());
    for (std::size_t n = 0; n < all.size(); ++n) all[n] = n;
    balances({{"system", all}}, [](std::size_t, int, Terms&) {});
  }

  void zonal_ntc() {
    auto& lp = pr_.lp;
    for (const auto& ntc : ds_.ntcs) {
      const auto from = ds_.zone_index(ntc.from_zone);
      const auto to = ds_.zone_index(ntc.to_zone);
      if (from == to || ntc.capacity <= 0.0) continue;
      DispatchProblem::Exchange ex{from, to, {}};
      for (int k = 0; k < T_; ++k) {
        ex.vars.push_back(lp.add_variable(at("EX_" + ntc.from_zone + "_" + ntc.to_zone, t_abs(k)), 0.0, ntc.capacity));
      }
      pr_.exchanges.push_back(std::move(ex));
    }
    balances(zone_units(), [&](std::size_t u, int k, Terms& terms) {
      for (const auto& ex : pr_.exchanges) {
        const Index v = ex.vars[static_cast<std::size_t>(k)];
        if (ex.from == u) terms.emplace_back(v, -1.0);
        if (ex.to == u) terms.emplace_back(v, 1.0);
      }
    });
  }

  void zonal_fbmc(const FbParameters& fb) {
    auto& lp = pr_.lp;
    if (fb.t_start != cfg_.t_start || fb.timesteps != T_) {
      throw InternalError("FB parameters cover a different horizon than the market");
    }
    std::vector<Index> fb_col(ds_.zones.size(), -1);
    for (std::size_t z = 0; z < ds_.zones.size(); ++z) {
      auto it = std::find(fb.zone_ids.begin(), fb.zone_ids.end(), ds_.zones[z].id);
      if (it == fb.zone_ids.end()) throw InternalError("FB parameters lack zone '" + ds_.zones[z].id + "'");
      fb_col[z] = it - fb.zone_ids.begin();
    }
    for (std::size_t z = 0; z < ds_.zones.size(); ++z) {
      for (int k = 0; k < T_; ++k) {
        pr_.net_position[z][static_cast<std::size_t>(k)] =
            lp.add_variable(at("NP_" + ds_.zones[z].id, t_abs(k)), -kInfinity, kInfinity);
      }
    }
    balances(zone_units(), [&](std::size_t u, int k, Terms& terms) {
      terms.emplace_back(pr_.net_position[u][static_cast<std::size_t>(k)], -1.0);
    });
    for (int k = 0; k < T_; ++k) {
      const auto tt = static_cast<std::size_t>(k);
      Terms sum;
      for (std::size_t z = 0; z < ds_.zones.size(); ++z) sum.emplace_back(pr_.net_position[z][tt], 1.0);
      lp.add_constraint(at("np_sum", t_abs(k)), std::move(sum), Sense::equal, 0.0);
      const auto& zptdf = fb.zonal_ptdf[tt];
      for (Index r = 0; r < fb.num_rows(); ++r) {
        Terms terms;
        for (std::size_t z = 0; z < ds_.zones.size(); ++z) {
          const double v = zptdf(r, fb_col[z]);
          if (std::abs(v) > 1e-12) terms.emplace_back(pr_.net_position[z][tt], v);
        }
        if (terms.empty() && fb.ram(r, k) >= 0.0) continue;
        pr_.network_row_indices.push_back(lp.add_constraint(at("fb_" + fb.cbco_ids[static_cast<std::size_t>(r)], t_abs(k)),
                                                            std::move(terms), Sense::less_equal, fb.ram(r, k)));
        ++pr_.network_rows;
      }
    }
  }

  DispatchProblem take() { return std::move(pr_); }

 private:
  const Dataset& ds_;
  const Network& net_;
  const MarketConfig& cfg_;
  int T_;
  DispatchProblem pr_;
};

void check_horizon(const Dataset& ds, const MarketConfig& cfg) {
  if (cfg.t_start < 0 || cfg.t_end > ds.timesteps || cfg.t_start >= cfg.t_end) {
    throw DataError("market horizon [" + std::to_string(cfg.t_start) + ", " + std::to_string(cfg.t_end) +
                    ") is empty or outside the dataset's " + std::to_string(ds.timesteps) + " timesteps");
  }
}

void check_nodal_grid(const Dataset& ds, const GridRepresentation* grid) {
  if (!grid) throw InternalError("nodal dispatch needs a nodal grid representation");
  if (grid->space != GridRepresentation::Space::nodal) throw InternalError("grid representation is not nodal");
  if (grid->rows.cols() != static_cast<Index>(ds.nodes.size())) {
    throw InternalError("grid representation has " + std::to_string(grid->rows.cols()) + " columns for " +
                        std::to_string(ds.nodes.size()) + " nodes");
  }
}

double value(const LpSolution& sol, Index j) { return j < 0 ? 0.0 : sol.primal[j]; }

Eigen::MatrixXd table(const LpSolution& sol, const std::vector<std::vector<Index>>& vars, int T) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Index>(vars.size()), T);
  for (std::size_t i = 0; i < vars.size(); ++i) {
    for (int k = 0; k < T; ++k) m(static_cast<Index>(i), k) = value(sol, vars[i][static_cast<std::size_t>(k)]);
  }
  return m;
}

DispatchResult extract(const Dataset& ds, const Network& net, const DispatchProblem& pr, const LpSolution& sol,
                       const MarketConfig& cfg) {
  const int T = pr.timesteps;
  DispatchResult r;
  r.stage = pr.stage;
  r.type = pr.type;
  r.t_start = pr.t_start;
  r.timesteps = T;
  for (const auto& p : ds.plants) r.plant_ids.push_back(p.id);
  for (const auto& n : ds.nodes) r.node_ids.push_back(n.id);
  for (const auto& z : ds.zones) r.zone_ids.push_back(z.id);
  for (const auto& l : ds.lines) r.line_ids.push_back(l.id);

  r.g = table(sol, pr.g, T);
  r.h = table(sol, pr.h, T);
  r.charge = table(sol, pr.charge, T);
  r.discharge = table(sol, pr.discharge, T);
  r.level = table(sol, pr.level, T);
  r.curtailment = table(sol, pr.curtailment, T);
  r.balance_units = pr.balance_units;
  const Eigen::MatrixXd up = table(sol, pr.infeasibility_up, T);
  const Eigen::MatrixXd dn = table(sol, pr.infeasibility_down, T);
  r.infeasibility = up - dn;
  r.infeasibility_abs = up + dn;
  r.prices.resize(static_cast<Index>(pr.balance_rows.size()), T);
  for (std::size_t u = 0; u < pr.balance_rows.size(); ++u) {
    for (int k = 0; k < T; ++k) r.prices(static_cast<Index>(u), k) = sol.duals[pr.balance_rows[u][static_cast<std::size_t>(k)]];
  }
  r.heat_areas = pr.heat_areas;
  r.heat_shortfall = table(sol, pr.heat_shortfall, T);
  if (pr.stage == Stage::redispatch) {
    r.delta_up = table(sol, pr.delta_up, T);
    r.delta_down = table(sol, pr.delta_down, T);
    r.zone_deviation = Eigen::MatrixXd::Zero(static_cast<Index>(ds.zones.size()), T);
    if (!pr.zone_deviation_up.empty()) r.zone_deviation = table(sol, pr.zone_deviation_up, T) - table(sol, pr.zone_deviation_down, T);
  }

  // Costs from the schedules, itemized like the objective.
  for (std::size_t p = 0; p < ds.plants.size(); ++p) {
    const auto& pl = ds.plants[p];
    const auto pi = static_cast<Index>(p);
    for (int k = 0; k < T; ++k) {
      r.costs.generation += pl.mc_el * (r.g(pi, k) + r.discharge(pi, k));
      if (pl.is_heat_only()) r.costs.heat += pl.mc_el * r.h(pi, k);
      if (pr.stage == Stage::redispatch) r.costs.redispatch += cfg.redispatch_cost * (r.delta_up(pi, k) + r.delta_down(pi, k));
    }
  }
  r.costs.curtailment = cfg.curtailment_cost * r.curtailment.sum();
  r.costs.infeasibility = cfg.infeasibility_penalty * r.total_infeasibility();
  r.objective = sol.objective;

  const std::string stage = to_string(pr.stage);
  const double inf = r.infeasibility_abs.sum();
  if (inf > kReportTolerance) {
    r.warnings.push_back("WARNING " + stage + ": infeasibility slack active, " + csv::format_number(inf) +
                         " MWh of unserved balance");
  }
  if (r.zone_deviation.size() > 0 && r.zone_deviation.cwiseAbs().sum() > kReportTolerance) {
    r.warnings.push_back("WARNING " + stage + ": zonal balances deviate from the market by " +
                         csv::format_number(r.zone_deviation.cwiseAbs().sum()) + " MWh");
  }
  if (r.heat_shortfall.sum() > kReportTolerance) {
    r.warnings.push_back("WARNING " + stage + ": heat demand not met, shortfall " +
                         csv::format_number(r.heat_shortfall.sum()) + " MWh");
  }
  if (r.curtailment.sum() > kReportTolerance) {
    r.warnings.push_back(stage + ": load curtailment of " + csv::format_number(r.curtailment.sum()) + " MWh");
  }

  // Nodal injections from the schedules. Unit-level slacks of a zonal or
  // copper-plate balance cannot be placed on nodes.
  const auto nn = static_cast<Index>(ds.nodes.size());
  r.injections = Eigen::MatrixXd::Zero(nn, T);
  for (Index n = 0; n < nn; ++n) {
    for (int k = 0; k < T; ++k) r.injections(n, k) = r.curtailment(n, k) - ds.node_demand(static_cast<std::size_t>(n), pr.t_start + k);
  }
  for (std::size_t p = 0; p < ds.plants.size(); ++p) {
    const auto n = static_cast<Index>(ds.node_index(ds.plants[p].node));
    const auto pi = static_cast<Index>(p);
    for (int k = 0; k < T; ++k) r.injections(n, k) += r.g(pi, k) + r.discharge(pi, k) - r.charge(pi, k);
  }
  const bool nodal_units = pr.type == MarketType::nodal || pr.stage == Stage::redispatch;
  r.has_injections = true;
  if (nodal_units) {
    for (std::size_t u = 0; u < pr.balance_nodes.size(); ++u) {
      r.injections.row(static_cast<Index>(pr.balance_nodes[u].front())) += r.infeasibility.row(static_cast<Index>(u));
    }
  } else if (inf > kReportTolerance) {
    r.has_injections = false;
    r.warnings.push_back(stage + ": nodal injections unavailable while a zonal infeasibility slack is active");
  }
  r.flows = Eigen::MatrixXd::Zero(net.topology.num_lines(), T);
  if (r.has_injections) {
    try {
      for (int k = 0; k < T; ++k) r.flows.col(k) = compute_flows(net.ptdf, r.injections.col(k));
    } catch (const DataError& e) {
      r.has_injections = false;
      r.warnings.push_back(stage + ": nodal injections do not balance per network component (" + e.what() + ")");
    }
  }
  if (!r.has_injections) r.flows.resize(0, T);

  r.net_positions = Eigen::MatrixXd::Zero(static_cast<Index>(ds.zones.size()), T);
  if (pr.type == MarketType::zonal_ntc && pr.stage == Stage::market) {
    for (const auto& ex : pr.exchanges) {
      for (int k = 0; k < T; ++k) {
        const double v = sol.primal[ex.vars[static_cast<std::size_t>(k)]];
        r.net_positions(static_cast<Index>(ex.from), k) += v;
        r.net_positions(static_cast<Index>(ex.to), k) -= v;
      }
    }
  } else if (pr.type == MarketType::zonal_fbmc && pr.stage == Stage::market) {
    r.net_positions = table(sol, pr.net_position, T);
  } else {
    for (Index n = 0; n < nn; ++n) {
      r.net_positions.row(static_cast<Index>(ds.zone_index(ds.nodes[static_cast<std::size_t>(n)].zone))) +=
          r.injections.row(n);
    }
  }
  return r;
}

DispatchResult solve_dispatch(const Dataset& ds, const Network& net, const DispatchProblem& pr, const MarketConfig& cfg) {
  const auto sol = pr.network_rows > kLazyNetworkRows ? solve_lp_lazy(pr.lp, pr.network_row_indices) : solve_lp(pr.lp);
  if (!sol.optimal()) {
    throw SolveError(std::string(to_string(pr.stage)) + " LP (" + to_string(pr.type) + ", " +
                     std::to_string(pr.lp.num_variables()) + " variables, " + std::to_string(pr.lp.num_constraints()) +
                     " rows): " + to_string(sol.status));
  }
  return extract(ds, net, pr, sol, cfg);
}

std::string timestep_col(const DispatchResult& r, int k) { return std::to_string(r.t_start + k); }

void write_matrix(const std::filesystem::path& path, const std::string& header, const DispatchResult& r,
                  const std::vector<std::string>& ids, const std::vector<const Eigen::MatrixXd*>& cols,
                  const std::vector<bool>* keep = nullptr) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << header << '\n';
  for (int k = 0; k < r.timesteps; ++k) {
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (keep && !(*keep)[i]) continue;
      out << timestep_col(r, k) << ',' << csv::escape(ids[i]);
      for (const auto* m : cols) out << ',' << csv::format_number((*m)(static_cast<Index>(i), k));
      out << '\n';
    }
  }
}

}  // namespace

Network build_network(const Dataset& dataset) {
  Network net;
  net.topology = build_topology(dataset);
  net.ptdf = compute_ptdf(net.topology);
  return net;
}

const char* to_string(Stage s) { return s == Stage::market ? "market" : "redispatch"; }

MarketConfig MarketConfig::from_options(const Options& options, const Dataset& dataset) {
  MarketConfig c;
  c.type = options.type;
  std::tie(c.t_start, c.t_end) = options.horizon(dataset);
  c.curtailment_cost = options.curtailment_cost;
  c.infeasibility_penalty = options.infeasibility_penalty;
  c.redispatch_cost = options.redispatch.cost;
  return c;
}

double DispatchResult::total_infeasibility() const {
  return infeasibility_abs.sum() + heat_shortfall.sum() + zone_deviation.cwiseAbs().sum();
}

DispatchProblem build_dispatch(const Dataset& dataset, const Network& network, const GridRepresentation* grid,
                               const MarketConfig& config, const FbParameters* fb) {
  dataset.require_valid();
  check_horizon(dataset, config);
  if (config.type == MarketType::nodal) check_nodal_grid(dataset, grid);
  else if (grid) throw InternalError(std::string("a ") + to_string(config.type) + " market takes no nodal grid representation");
  if (config.type == MarketType::zonal_fbmc && !fb) throw InternalError("zonal_fbmc needs FB parameters");
  if (config.type != MarketType::zonal_fbmc && fb) throw InternalError("FB parameters given to a non-FBMC market");

  Builder b(dataset, network, config, Stage::market);
  b.plants(nullptr);
  b.heat();
  b.curtailment();
  switch (config.type) {
    case MarketType::copper_plate: b.copper_plate(); break;
    case MarketType::nodal: b.nodal(*grid, nullptr); break;
    case MarketType::zonal_ntc: b.zonal_ntc(); break;
    case MarketType::zonal_fbmc: b.zonal_fbmc(*fb); break;
  }
  return b.take();
}

DispatchResult run_market(const Dataset& dataset, const Network& network, const GridRepresentation* grid,
                          const MarketConfig& config, const FbParameters* fb) {
  const auto pr = build_dispatch(dataset, network, grid, config, fb);
  return solve_dispatch(dataset, network, pr, config);
}

DispatchResult run_redispatch(const Dataset& dataset, const Network& network, const GridRepresentation& grid,
                              const DispatchResult& market, const MarketConfig& config) {
  dataset.require_valid();
  check_horizon(dataset, config);
  check_nodal_grid(dataset, &grid);
  if (market.stage != Stage::market) throw InternalError("redispatch expects a market-stage result");
  if (market.t_start != config.t_start || market.timesteps != config.timesteps() ||
      market.g.rows() != static_cast<Index>(dataset.plants.size())) {
    throw InternalError("market result does not match the redispatch horizon or plant set");
  }
  MarketConfig cfg = config;
  cfg.type = market.type;
  Builder b(dataset, network, cfg, Stage::redispatch);
  b.plants(&market);
  b.heat();
  b.curtailment();
  b.nodal(grid, &market);
  auto pr = b.take();
  return solve_dispatch(dataset, network, pr, cfg);
}

namespace {

void require_injections(const DispatchResult& r) {
  if (!r.has_injections) {
    throw DataError(std::string(to_string(r.type)) + " " + to_string(r.stage) +
                    " result has no nodal injections; run the redispatch stage for overload analysis");
  }
}

}  // namespace

std::vector<Overload> overloaded_lines_n0(const DispatchResult& result, const Network& network) {
  require_injections(result);
  std::vector<Overload> out;
  const auto& topo = network.topology;
  for (int k = 0; k < result.timesteps; ++k) {
    for (Index l = 0; l < topo.num_lines(); ++l) {
      const double f = result.flows(l, k);
      const double cap = topo.capacity[l];
      if (std::abs(f) > cap + kReportTolerance) {
        out.push_back({topo.line_ids[static_cast<std::size_t>(l)], "basecase", result.t_start + k, f, cap, std::abs(f) - cap});
      }
    }
  }
  return out;
}

std::vector<Overload> overloaded_lines_n1(const DispatchResult& result, const Network& network,
                                          const ContingencySet& contingencies) {
  require_injections(result);
  std::vector<Overload> out;
  const auto& topo = network.topology;
  for (int k = 0; k < result.timesteps; ++k) {
    for (const auto& sc : contingencies.scenarios) {
      const Eigen::VectorXd f = post_contingency_flows(network.ptdf, sc, result.injections.col(k));
      for (Index l = 0; l < topo.num_lines(); ++l) {
        if (std::find(sc.outaged.begin(), sc.outaged.end(), l) != sc.outaged.end()) continue;
        const double cap = topo.capacity[l];
        if (std::abs(f[l]) > cap + kReportTolerance) {
          out.push_back({topo.line_ids[static_cast<std::size_t>(l)], sc.id, result.t_start + k, f[l], cap,
                         std::abs(f[l]) - cap});
        }
      }
    }
  }
  return out;
}

double redispatch_quantity(const DispatchResult& market, const DispatchResult& redispatch) {
  if (market.plant_ids != redispatch.plant_ids || market.t_start != redispatch.t_start ||
      market.timesteps != redispatch.timesteps || market.g.rows() != redispatch.g.rows() ||
      market.g.cols() != redispatch.g.cols()) {
    throw DataError("redispatch quantity needs results over the same plants and horizon");
  }
  // Differences at solver tolerance are not redispatch.
  double total = 0.0;
  for (Index p = 0; p < market.g.rows(); ++p) {
    for (Index t = 0; t < market.g.cols(); ++t) {
      const double d = std::abs(redispatch.g(p, t) - market.g(p, t));
      if (d > 1e-9 * (1.0 + std::abs(market.g(p, t)))) total += d;
    }
  }
  return total;
}

std::vector<std::string> write_results(const DispatchResult& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::string> files;
  auto emit = [&](const std::string& name) {
    files.push_back(name);
    return dir / name;
  };
  const auto np = r.plant_ids.size();
  std::vector<bool> gen(np), heat(np), store(np);
  for (std::size_t p = 0; p < np; ++p) {
    const auto pi = static_cast<Index>(p);
    store[p] = r.level.row(pi).any() || r.charge.row(pi).any() || r.discharge.row(pi).any();
    heat[p] = r.h.row(pi).any();
    gen[p] = !store[p];
  }
  write_matrix(emit("G.csv"), "timestep,plant,G", r, r.plant_ids, {&r.g}, &gen);
  write_matrix(emit("H.csv"), "timestep,plant,H", r, r.plant_ids, {&r.h}, &heat);
  write_matrix(emit("storage.csv"), "timestep,plant,charge,discharge,level", r, r.plant_ids,
               {&r.charge, &r.discharge, &r.level}, &store);
  write_matrix(emit("curtailment.csv"), "timestep,node,curtailment", r, r.node_ids, {&r.curtailment});
  {
    std::ofstream out(emit("flows_n0.csv"), std::ios::binary);
    out << "timestep,line,flow\n";
    if (r.has_injections) {
      for (int k = 0; k < r.timesteps; ++k) {
        for (std::size_t l = 0; l < r.line_ids.size(); ++l) {
          out << timestep_col(r, k) << ',' << csv::escape(r.line_ids[l]) << ','
              << csv::format_number(r.flows(static_cast<Index>(l), k)) << '\n';
        }
      }
    }
  }
  write_matrix(emit("net_positions.csv"), "timestep,zone,net_position", r, r.zone_ids, {&r.net_positions});
  write_matrix(emit("prices.csv"), "timestep,unit,price", r, r.balance_units, {&r.prices});
  if (r.stage == Stage::redispatch) {
    write_matrix(emit("redispatch.csv"), "timestep,plant,delta_up,delta_down", r, r.plant_ids,
                 {&r.delta_up, &r.delta_down}, &gen);
  }
  nlohmann::ordered_json j;
  j["stage"] = to_string(r.stage);
  j["type"] = to_string(r.type);
  j["objective"] = r.objective;
  j["generation"] = r.costs.generation;
  j["heat"] = r.costs.heat;
  j["curtailment"] = r.costs.curtailment;
  j["infeasibility"] = r.costs.infeasibility;
  j["redispatch"] = r.costs.redispatch;
  j["warnings"] = r.warnings;
  std::ofstream(emit("objective.json"), std::ios::binary) << j.dump(2) << '\n';
  return files;
}

}  // namespace gridclear
