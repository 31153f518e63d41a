#include "gridclear/redundancy.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include "csv.hpp"
#include "gridclear/grid.hpp"

namespace gridclear {

void write_reduction_csv(const std::string& path, const Polytope<double>& p, const EssentialSet<double>& e) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  std::vector<bool> essential(static_cast<std::size_t>(p.num_rows()), false);
  for (auto i : e.indices) essential[static_cast<std::size_t>(i)] = true;
  out << "row,b,essential";
  for (Eigen::Index j = 0; j < p.dim(); ++j) out << ",a" << j;
  out << '\n';
  for (Eigen::Index i = 0; i < p.num_rows(); ++i) {
    out << i << ',' << csv::format_number(p.b[i]) << ',' << (essential[static_cast<std::size_t>(i)] ? 1 : 0);
    for (Eigen::Index j = 0; j < p.dim(); ++j) out << ',' << csv::format_number(p.a(i, j));
    out << '\n';
  }
  if (!out) throw DataError("cannot write " + path);
}

StoredReduction read_reduction_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  const auto table = csv::parse(ss.str(), path);
  if (table.header.size() < 4 || table.header[0] != "row" || table.header[1] != "b" || table.header[2] != "essential") {
    throw DataError(path + ": not a reduction dump");
  }
  const auto m = static_cast<Eigen::Index>(table.rows.size());
  const auto d = static_cast<Eigen::Index>(table.header.size() - 3);
  StoredReduction out;
  out.polytope.a.resize(m, d);
  out.polytope.b.resize(m);
  out.polytope.lower = Eigen::VectorXd::Constant(d, -std::numeric_limits<double>::infinity());
  out.polytope.upper = Eigen::VectorXd::Constant(d, std::numeric_limits<double>::infinity());
  auto number = [&](std::size_t r, std::size_t c) {
    const auto& f = table.rows[r][c];
    char* end = nullptr;
    const double v = std::strtod(f.c_str(), &end);
    if (f.empty() || *end != '\0') {
      throw DataError(path + " row " + std::to_string(table.line_numbers[r]) + ": bad number '" + f + "'");
    }
    return v;
  };
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    if (table.rows[r].size() != table.header.size()) {
      throw DataError(path + " row " + std::to_string(table.line_numbers[r]) + ": wrong number of fields");
    }
    const auto i = static_cast<Eigen::Index>(r);
    out.polytope.b[i] = number(r, 1);
    if (number(r, 2) != 0.0) out.essential.push_back(i);
    for (Eigen::Index j = 0; j < d; ++j) out.polytope.a(i, j) = number(r, static_cast<std::size_t>(j + 3));
  }
  return out;
}

void keep_rows(GridRepresentation& rep, const std::vector<Eigen::Index>& keep) {
  if (rep.reduced) throw InternalError("keep_rows: representation is already reduced");
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(keep.size()), rep.rows.cols());
  Eigen::VectorXd rhs(static_cast<Eigen::Index>(keep.size()));
  std::vector<CbcoConstraint> cbcos;
  for (std::size_t k = 0; k < keep.size(); ++k) {
    if (keep[k] < 0 || keep[k] >= rep.size()) throw InternalError("keep_rows: row index out of range");
    rows.row(static_cast<Eigen::Index>(k)) = rep.rows.row(keep[k]);
    rhs[static_cast<Eigen::Index>(k)] = rep.rhs[keep[k]];
    cbcos.push_back(rep.cbcos[static_cast<std::size_t>(keep[k])]);
  }
  rep.unreduced_rows = rep.size();
  rep.rows = std::move(rows);
  rep.rhs = std::move(rhs);
  rep.cbcos = std::move(cbcos);
  rep.essential = keep;
  rep.reduced = true;
}

EssentialSet<double> reduce_representation(GridRepresentation& rep, const Eigen::VectorXd& lower,
                                           const Eigen::VectorXd& upper,
                                           const std::vector<std::vector<Eigen::Index>>& balance,
                                           const RedundancyOptions& options) {
  if (rep.reduced) throw InternalError("reduce_representation: already reduced");
  auto poly = Polytope<double>::make(rep.rows, rep.rhs, lower, upper, balance);
  RedundancyOptions opt = options;
  if (opt.order.empty()) {
    // Rows of one line under different outages are close to parallel.
    opt.order.resize(rep.cbcos.size());
    std::iota(opt.order.begin(), opt.order.end(), Eigen::Index{0});
    std::stable_sort(opt.order.begin(), opt.order.end(), [&](Eigen::Index x, Eigen::Index y) {
      const auto& a = rep.cbcos[static_cast<std::size_t>(x)];
      const auto& b = rep.cbcos[static_cast<std::size_t>(y)];
      if (a.line != b.line) return a.line < b.line;
      return a.direction > b.direction;
    });
  }
  auto result = reduce(poly, opt);
  keep_rows(rep, result.indices);
  return result;
}

}  // namespace gridclear
