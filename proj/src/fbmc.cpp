#include "gridclear/fbmc.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "csv.hpp"
#include "gridclear/redundancy.hpp"

namespace gridclear {

namespace {

constexpr double kVertexTolerance = 1e-6;

std::vector<std::vector<std::size_t>> zone_members(const Dataset& ds) {
  std::vector<std::vector<std::size_t>> members(ds.zones.size());
  for (std::size_t n = 0; n < ds.nodes.size(); ++n) members[ds.zone_index(ds.nodes[n].zone)].push_back(n);
  for (std::size_t z = 0; z < members.size(); ++z) {
    if (members[z].empty()) throw DataError("zone '" + ds.zones[z].id + "' has no nodes; cannot build its GSK");
  }
  return members;
}

}  // namespace

Gsk compute_gsk(const Dataset& ds, const DispatchResult* basecase, GskStrategy strategy, int timestep) {
  ds.require_valid();
  const auto members = zone_members(ds);
  Gsk gsk;
  gsk.strategy = strategy;
  for (const auto& z : ds.zones) gsk.zone_ids.push_back(z.id);
  const auto nn = static_cast<Index>(ds.nodes.size());

  Eigen::VectorXd weight = Eigen::VectorXd::Zero(nn);
  switch (strategy) {
    case GskStrategy::flat: weight.setOnes(); break;
    case GskStrategy::gmax:
      // Dispatchable capacity: plants with electric output and no
      // availability profile.
      for (const auto& p : ds.plants) {
        if (p.has_electric_output() && !p.availability) weight[static_cast<Index>(ds.node_index(p.node))] += p.g_max;
      }
      break;
    case GskStrategy::basecase:
      if (!basecase) throw InternalError("basecase GSK needs a base-case result");
      if (timestep < 0 || timestep >= basecase->timesteps) throw InternalError("GSK timestep outside the base case");
      for (std::size_t p = 0; p < ds.plants.size(); ++p) {
        const auto pi = static_cast<Index>(p);
        weight[static_cast<Index>(ds.node_index(ds.plants[p].node))] +=
            basecase->g(pi, timestep) + basecase->discharge(pi, timestep);
      }
      break;
  }
  gsk.matrix = Eigen::MatrixXd::Zero(nn, static_cast<Index>(ds.zones.size()));
  for (std::size_t z = 0; z < members.size(); ++z) {
    double total = 0.0;
    for (auto n : members[z]) total += std::max(0.0, weight[static_cast<Index>(n)]);
    const bool flat = !(total > 1e-12);
    if (flat && strategy != GskStrategy::flat) {
      gsk.warnings.push_back("zone '" + ds.zones[z].id + "' has zero " + to_string(strategy) +
                             " weight; using a flat GSK");
    }
    for (auto n : members[z]) {
      gsk.matrix(static_cast<Index>(n), static_cast<Index>(z)) =
          flat ? 1.0 / static_cast<double>(members[z].size()) : std::max(0.0, weight[static_cast<Index>(n)]) / total;
    }
  }
  return gsk;
}

FbParameters compute_fb_parameters(const Dataset& ds, const GridRepresentation& security, GskStrategy strategy,
                                   const DispatchResult& basecase, double min_ram) {
  ds.require_valid();
  const auto nn = static_cast<Index>(ds.nodes.size());
  if (security.space != GridRepresentation::Space::nodal || security.rows.cols() != nn) {
    throw InternalError("FB parameters need a nodal grid representation over the dataset's nodes");
  }
  if (!basecase.has_injections || basecase.injections.rows() != nn) {
    throw DataError("FB parameters need a base case with nodal injections");
  }
  if (basecase.t_start < 0 || basecase.t_start + basecase.timesteps > ds.timesteps) {
    throw DataError("base case horizon lies outside the dataset");
  }
  if (!(min_ram >= 0.0 && min_ram <= 1.0)) throw DataError("min_ram must lie in [0, 1]");

  FbParameters fb;
  for (const auto& z : ds.zones) fb.zone_ids.push_back(z.id);
  for (Index r = 0; r < security.size(); ++r) fb.cbco_ids.push_back(security.row_id(r));
  fb.capacity = security.rhs;
  fb.t_start = basecase.t_start;
  fb.timesteps = basecase.timesteps;
  const Index m = security.size();
  const auto nz = static_cast<Index>(ds.zones.size());
  fb.f_ref.resize(m, fb.timesteps);
  fb.ram.resize(m, fb.timesteps);
  fb.np_base = Eigen::MatrixXd::Zero(nz, fb.timesteps);

  Gsk gsk;
  if (strategy != GskStrategy::basecase) {
    gsk = compute_gsk(ds, nullptr, strategy);
    fb.warnings.insert(fb.warnings.end(), gsk.warnings.begin(), gsk.warnings.end());
  }
  for (int k = 0; k < fb.timesteps; ++k) {
    if (strategy == GskStrategy::basecase) {
      gsk = compute_gsk(ds, &basecase, strategy, k);
      for (const auto& w : gsk.warnings) fb.warnings.push_back("timestep " + std::to_string(fb.t_start + k) + ": " + w);
    }
    const Eigen::VectorXd inj = basecase.injections.col(k);
    for (Index n = 0; n < nn; ++n) {
      fb.np_base(static_cast<Index>(ds.zone_index(ds.nodes[static_cast<std::size_t>(n)].zone)), k) += inj[n];
    }
    fb.zonal_ptdf.push_back(security.rows * gsk.matrix);
    const auto& z = fb.zonal_ptdf.back();
    fb.f_ref.col(k) = security.rows * inj;
    int floored = 0;
    for (Index r = 0; r < m; ++r) {
      const double ram = fb.capacity[r] - fb.f_ref(r, k) + z.row(r).dot(fb.np_base.col(k));
      const double floor = min_ram * fb.capacity[r];
      if (ram < floor) {
        fb.ram(r, k) = floor;
        ++floored;
      } else {
        fb.ram(r, k) = ram;
      }
    }
    fb.floored.push_back(floored);
    if (floored > 0) {
      fb.warnings.push_back("timestep " + std::to_string(fb.t_start + k) + ": " + std::to_string(floored) +
                            " FB rows floored at min_ram");
    }
  }
  return fb;
}

Index reduce_fb_parameters(FbParameters& fb, const Eigen::VectorXd& np_lower, const Eigen::VectorXd& np_upper) {
  const Index m = fb.num_rows();
  const auto nz = static_cast<Index>(fb.zone_ids.size());
  if (np_lower.size() != nz || np_upper.size() != nz) throw InternalError("reduce_fb_parameters: bound size mismatch");
  std::vector<Index> all(static_cast<std::size_t>(nz));
  std::iota(all.begin(), all.end(), Index{0});
  std::vector<bool> keep(static_cast<std::size_t>(m), false);
  for (int k = 0; k < fb.timesteps; ++k) {
    const auto p = Polytope<double>::make(fb.zonal_ptdf[static_cast<std::size_t>(k)], fb.ram.col(k), np_lower, np_upper, {all});
    for (auto i : reduce(p).indices) keep[static_cast<std::size_t>(i)] = true;
  }
  std::vector<Index> rows;
  for (Index r = 0; r < m; ++r) {
    if (keep[static_cast<std::size_t>(r)]) rows.push_back(r);
  }
  const auto n = static_cast<Index>(rows.size());
  FbParameters out = fb;
  out.cbco_ids.clear();
  out.capacity.resize(n);
  out.f_ref.resize(n, fb.timesteps);
  out.ram.resize(n, fb.timesteps);
  for (Index j = 0; j < n; ++j) {
    const Index r = rows[static_cast<std::size_t>(j)];
    out.cbco_ids.push_back(fb.cbco_ids[static_cast<std::size_t>(r)]);
    out.capacity[j] = fb.capacity[r];
    out.f_ref.row(j) = fb.f_ref.row(r);
    out.ram.row(j) = fb.ram.row(r);
  }
  for (int k = 0; k < fb.timesteps; ++k) {
    Eigen::MatrixXd z(n, nz);
    for (Index j = 0; j < n; ++j) z.row(j) = fb.zonal_ptdf[static_cast<std::size_t>(k)].row(rows[static_cast<std::size_t>(j)]);
    out.zonal_ptdf[static_cast<std::size_t>(k)] = std::move(z);
  }
  fb = std::move(out);
  return m - n;
}

namespace {

using Poly2 = std::vector<Eigen::Vector2d>;

Poly2 box_polygon(double box) {
  return {{-box, -box}, {box, -box}, {box, box}, {-box, box}};
}

// Sutherland-Hodgman clip of a convex polygon by a.x <= b.
Poly2 clip(const Poly2& poly, const Eigen::Vector2d& a, double b) {
  Poly2 out;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const auto& p = poly[i];
    const auto& q = poly[(i + 1) % poly.size()];
    const double fp = a.dot(p) - b;
    const double fq = a.dot(q) - b;
    if (fp <= 0.0) out.push_back(p);
    if ((fp < 0.0 && fq > 0.0) || (fp > 0.0 && fq < 0.0)) out.push_back(p + (fp / (fp - fq)) * (q - p));
  }
  return out;
}

std::string infeasible_pair(const Eigen::MatrixX2d& a, const Eigen::VectorXd& b, const std::vector<std::string>& ids,
                            double box) {
  const auto base = box_polygon(box);
  const Index m = a.rows();
  for (Index i = 0; i < m; ++i) {
    if (clip(base, a.row(i).transpose(), b[i]).empty()) return "constraint " + ids[static_cast<std::size_t>(i)] + " alone is infeasible";
  }
  for (Index i = 0; i < m; ++i) {
    const auto pi = clip(base, a.row(i).transpose(), b[i]);
    for (Index j = i + 1; j < m; ++j) {
      if (clip(pi, a.row(j).transpose(), b[j]).empty()) {
        return "infeasible pair: " + ids[static_cast<std::size_t>(i)] + " and " + ids[static_cast<std::size_t>(j)];
      }
    }
  }
  return "domain is empty; no single pair of constraints conflicts on its own";
}

std::string xml_escape(const std::string& text) {
  std::string out;
  for (char ch : text) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(ch);
    }
  }
  return out;
}

bool satisfies(const Eigen::MatrixX2d& a, const Eigen::VectorXd& b, const Eigen::Vector2d& v, double box) {
  for (Index i = 0; i < a.rows(); ++i) {
    if (a.row(i).dot(v) > b[i] + kVertexTolerance * (1.0 + std::abs(b[i]))) return false;
  }
  return v.cwiseAbs().maxCoeff() <= box * (1.0 + 1e-12) + kVertexTolerance;
}

}  // namespace

DomainPolygon halfspace_polygon(const Eigen::MatrixX2d& a, const Eigen::VectorXd& b, const std::vector<std::string>& ids,
                                double box) {
  if (a.rows() != b.size() || ids.size() != static_cast<std::size_t>(b.size())) {
    throw InternalError("halfspace_polygon: row count mismatch");
  }
  if (!(box > 0.0)) throw DataError("plotting box must be positive");
  DomainPolygon poly;

  // Zero rows either hold everywhere or empty the domain.
  std::vector<Index> keep;
  for (Index i = 0; i < a.rows(); ++i) {
    if (a.row(i).norm() > 1e-12) keep.push_back(i);
    else if (b[i] < -kVertexTolerance) {
      poly.diagnostic = "constraint " + ids[static_cast<std::size_t>(i)] + " alone is infeasible";
      return poly;
    }
  }
  Eigen::MatrixXd ak(static_cast<Index>(keep.size()), 2);
  Eigen::VectorXd bk(static_cast<Index>(keep.size()));
  for (std::size_t r = 0; r < keep.size(); ++r) {
    ak.row(static_cast<Index>(r)) = a.row(keep[r]);
    bk[static_cast<Index>(r)] = b[keep[r]];
  }

  // Without rows the domain is the whole box.
  std::vector<Index> essential;
  if (!keep.empty()) {
    try {
      const auto p = Polytope<double>::make(ak, bk, Eigen::VectorXd::Constant(2, -box), Eigen::VectorXd::Constant(2, box));
      for (auto i : reduce(p).indices) essential.push_back(keep[static_cast<std::size_t>(i)]);
    } catch (const DataError&) {
      poly.diagnostic = infeasible_pair(a, b, ids, box);
      return poly;
    }
  }

  // Candidate edges: essential halfspaces plus the four box sides.
  std::vector<Eigen::Vector2d> na;
  std::vector<double> nb;
  for (auto i : essential) {
    na.push_back(a.row(i).transpose());
    nb.push_back(b[i]);
  }
  for (int s = 0; s < 2; ++s) {
    for (double sign : {1.0, -1.0}) {
      Eigen::Vector2d e = Eigen::Vector2d::Zero();
      e[s] = sign;
      na.push_back(e);
      nb.push_back(box);
    }
  }
  std::vector<Eigen::Vector2d> verts;
  for (std::size_t i = 0; i < na.size(); ++i) {
    for (std::size_t j = i + 1; j < na.size(); ++j) {
      Eigen::Matrix2d m;
      m.row(0) = na[i].transpose();
      m.row(1) = na[j].transpose();
      const double det = m.determinant();
      if (std::abs(det) < 1e-12 * na[i].norm() * na[j].norm()) continue;
      const Eigen::Vector2d v = m.inverse() * Eigen::Vector2d(nb[i], nb[j]);
      if (!satisfies(a, b, v, box)) continue;
      const double merge = 1e-9 * std::max(1.0, v.cwiseAbs().maxCoeff());
      if (std::none_of(verts.begin(), verts.end(), [&](const Eigen::Vector2d& w) { return (w - v).cwiseAbs().maxCoeff() <= merge; })) {
        verts.push_back(v);
      }
    }
  }
  if (verts.empty()) {
    poly.diagnostic = infeasible_pair(a, b, ids, box);
    return poly;
  }
  Eigen::Vector2d c = Eigen::Vector2d::Zero();
  for (const auto& v : verts) c += v;
  c /= static_cast<double>(verts.size());
  std::sort(verts.begin(), verts.end(), [&](const Eigen::Vector2d& p, const Eigen::Vector2d& q) {
    return std::atan2(p.y() - c.y(), p.x() - c.x()) < std::atan2(q.y() - c.y(), q.x() - c.x());
  });
  poly.vertices = verts;

  for (auto i : essential) {
    int on = 0;
    for (const auto& v : verts) {
      if (std::abs(a.row(i).dot(v) - b[i]) <= kVertexTolerance * (1.0 + std::abs(b[i]))) ++on;
    }
    if (on >= 2 || (on == 1 && verts.size() == 1)) poly.constraint_ids.push_back(ids[static_cast<std::size_t>(i)]);
  }
  for (const auto& v : verts) {
    if (v.cwiseAbs().maxCoeff() >= box * (1.0 - 1e-12) - kVertexTolerance) poly.clipped = true;
  }
  return poly;
}

DomainPolygon project_domain(const FbParameters& fb, int timestep, const std::string& zone_x, const std::string& zone_y,
                             const std::map<std::string, double>& fixed_np, double box) {
  if (zone_x == zone_y) throw DataError("domain axes must be two different zones");
  auto col = [&](const std::string& z) {
    auto it = std::find(fb.zone_ids.begin(), fb.zone_ids.end(), z);
    if (it == fb.zone_ids.end()) throw DataError("unknown zone '" + z + "'");
    return static_cast<Index>(it - fb.zone_ids.begin());
  };
  const Index cx = col(zone_x), cy = col(zone_y);
  const int k = timestep - fb.t_start;
  if (k < 0 || k >= fb.timesteps) {
    throw DataError("timestep " + std::to_string(timestep) + " lies outside the FB horizon [" +
                    std::to_string(fb.t_start) + ", " + std::to_string(fb.t_start + fb.timesteps) + ")");
  }
  for (const auto& [z, v] : fixed_np) col(z);
  Eigen::VectorXd np = fb.np_base.col(k);
  for (const auto& [z, v] : fixed_np) np[col(z)] = v;
  np[cx] = np[cy] = 0.0;

  const auto& zp = fb.zonal_ptdf[static_cast<std::size_t>(k)];
  Eigen::MatrixX2d a(fb.num_rows(), 2);
  a.col(0) = zp.col(cx);
  a.col(1) = zp.col(cy);
  const Eigen::VectorXd b = fb.ram.col(k) - zp * np;
  auto poly = halfspace_polygon(a, b, fb.cbco_ids, box);
  poly.zone_x = zone_x;
  poly.zone_y = zone_y;
  poly.timestep = timestep;
  return poly;
}

double plotting_box(const Dataset& ds) {
  double total = 0.0;
  for (std::size_t n = 0; n < ds.nodes.size(); ++n) total += ds.demand_peak(n);
  return total > 0.0 ? total : 1.0;
}

void write_fb_parameters(const FbParameters& fb, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "timestep,cbco_id";
  for (const auto& z : fb.zone_ids) out << ',' << csv::escape(z);
  out << ",ram\n";
  for (int k = 0; k < fb.timesteps; ++k) {
    const auto& zp = fb.zonal_ptdf[static_cast<std::size_t>(k)];
    for (Index r = 0; r < fb.num_rows(); ++r) {
      out << fb.t_start + k << ',' << csv::escape(fb.cbco_ids[static_cast<std::size_t>(r)]);
      for (Index z = 0; z < zp.cols(); ++z) out << ',' << csv::format_number(zp(r, z));
      out << ',' << csv::format_number(fb.ram(r, k)) << '\n';
    }
  }
}

void write_domain_csv(const DomainPolygon& polygon, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "vertex," << csv::escape(polygon.zone_x) << ',' << csv::escape(polygon.zone_y) << '\n';
  for (std::size_t i = 0; i < polygon.vertices.size(); ++i) {
    out << i << ',' << csv::format_number(polygon.vertices[i].x()) << ',' << csv::format_number(polygon.vertices[i].y())
        << '\n';
  }
}

void write_domain_svg(const DomainPolygon& polygon, double box, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  const double size = 400.0, margin = 40.0;
  const double scale = size / (2.0 * box);
  auto px = [&](double x) { return margin + (x + box) * scale; };
  auto py = [&](double y) { return margin + (box - y) * scale; };
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size + 2 * margin << "\" height=\"" << size + 2 * margin
    << "\">\n";
  s << "<rect x=\"" << margin << "\" y=\"" << margin << "\" width=\"" << size << "\" height=\"" << size
    << "\" fill=\"none\" stroke=\"#999\"/>\n";
  s << "<line x1=\"" << px(-box) << "\" y1=\"" << py(0) << "\" x2=\"" << px(box) << "\" y2=\"" << py(0)
    << "\" stroke=\"#ccc\"/>\n";
  s << "<line x1=\"" << px(0) << "\" y1=\"" << py(-box) << "\" x2=\"" << px(0) << "\" y2=\"" << py(box)
    << "\" stroke=\"#ccc\"/>\n";
  if (!polygon.empty()) {
    s << "<polygon fill=\"#4a90d9\" fill-opacity=\"0.4\" stroke=\"#1f4e79\" points=\"";
    for (std::size_t i = 0; i < polygon.vertices.size(); ++i) {
      s << (i ? " " : "") << px(polygon.vertices[i].x()) << ',' << py(polygon.vertices[i].y());
    }
    s << "\"/>\n";
  } else {
    s << "<text x=\"" << margin + 10 << "\" y=\"" << margin + 20 << "\">empty domain</text>\n";
  }
  s << "<text x=\"" << margin + size / 2 << "\" y=\"" << size + 1.7 * margin << "\" text-anchor=\"middle\">NP "
    << xml_escape(polygon.zone_x) << " (MW)</text>\n";
  s << "<text x=\"12\" y=\"" << margin + size / 2 << "\" transform=\"rotate(-90 12 " << margin + size / 2
    << ")\" text-anchor=\"middle\">NP " << xml_escape(polygon.zone_y) << " (MW)</text>\n";
  s << "</svg>\n";
  out << s.str();
}

}  // namespace gridclear
