#include "helab/grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace helab {

const char* to_string(AxisRule r) {
  switch (r) {
    case AxisRule::Periodic: return "periodic";
    case AxisRule::Twisted: return "twisted";
    case AxisRule::Dirichlet: return "dirichlet";
  }
  return "?";
}

AxisRule axis_rule_from_string(const std::string& s) {
  if (s == "periodic") return AxisRule::Periodic;
  if (s == "twisted") return AxisRule::Twisted;
  if (s == "dirichlet") return AxisRule::Dirichlet;
  throw InvalidInputError("unknown axis rule: " + s);
}

Grid::Grid(std::vector<Axis> axes, std::vector<ComplexPair> pairs, double reduced_volume)
    : axes_(std::move(axes)), pairs_(std::move(pairs)), reduced_volume_(reduced_volume) {
  strides_.assign(axes_.size(), 1);
  nsites_ = 1;
  for (int k = dim() - 1; k >= 0; --k) {
    strides_[static_cast<size_t>(k)] = nsites_;
    nsites_ *= axes_[static_cast<size_t>(k)].points;
  }
  validate();
}

void Grid::validate() const {
  if (axes_.empty()) throw InvalidGeometryError("grid needs at least one axis");
  for (const auto& a : axes_) {
    if (!(a.length > 0)) throw InvalidGeometryError("axis " + a.name + ": nonpositive length");
    int min_pts = a.rule == AxisRule::Dirichlet ? 3 : 4;
    if (a.points < min_pts)
      throw InvalidGeometryError("axis " + a.name + ": needs at least " + std::to_string(min_pts) +
                                 " points, got " + std::to_string(a.points));
  }
  if (!(reduced_volume_ > 0)) throw InvalidGeometryError("nonpositive reduced volume");
  for (const auto& p : pairs_) {
    for (int k : {p.re_axis, p.im_axis})
      if (k >= dim()) throw InvalidGeometryError("complex pair " + p.name + ": axis out of range");
    if (p.re_axis < 0 && p.im_axis < 0)
      throw InvalidGeometryError("complex pair " + p.name + ": both directions reduced");
  }
}

long Grid::index(const std::vector<int>& mi) const {
  long idx = 0;
  for (int k = 0; k < dim(); ++k) idx += strides_[static_cast<size_t>(k)] * mi[static_cast<size_t>(k)];
  return idx;
}

std::vector<int> Grid::multi_index(long idx) const {
  std::vector<int> mi(static_cast<size_t>(dim()));
  for (int k = 0; k < dim(); ++k) mi[static_cast<size_t>(k)] = coord_index(idx, k);
  return mi;
}

double Grid::site_weight(long idx) const {
  double w = reduced_volume_;
  for (int k = 0; k < dim(); ++k) {
    const Axis& a = axis(k);
    w *= a.spacing();
    if (a.rule == AxisRule::Dirichlet) {
      int i = coord_index(idx, k);
      if (i == 0 || i == a.points - 1) w *= 0.5;
    }
  }
  return w;
}

double Grid::total_volume() const {
  double v = reduced_volume_;
  for (const auto& a : axes_) v *= a.length;
  return v;
}

bool Grid::is_dirichlet_boundary(long idx) const {
  for (int k = 0; k < dim(); ++k) {
    const Axis& a = axis(k);
    if (a.rule != AxisRule::Dirichlet) continue;
    int i = coord_index(idx, k);
    if (i == 0 || i == a.points - 1) return true;
  }
  return false;
}

int Grid::axis_of_name(const std::string& name) const {
  for (int k = 0; k < dim(); ++k)
    if (axes_[static_cast<size_t>(k)].name == name) return k;
  throw InvalidInputError("no axis named " + name);
}

long SiteMask::count() const {
  long n = 0;
  for (uint8_t b : in) n += b;
  return n;
}

namespace {

void classify_mask(const Grid& g, SiteMask& m) {
  m.boundary.clear();
  m.interior.clear();
  for (long idx = 0; idx < g.nsites(); ++idx) {
    if (!m.contains(idx)) continue;
    bool bdry = g.is_dirichlet_boundary(idx);
    for (int k = 0; !bdry && k < g.dim(); ++k) {
      const Axis& a = g.axis(k);
      if (a.wraps()) continue;  // mask edges only matter along non-wrapping axes
      int i = g.coord_index(idx, k);
      if (i > 0 && !m.contains(idx - g.stride(k))) bdry = true;
      if (i < a.points - 1 && !m.contains(idx + g.stride(k))) bdry = true;
    }
    (bdry ? m.boundary : m.interior).push_back(idx);
  }
}

}  // namespace

SiteMask full_mask(const Grid& g) {
  SiteMask m;
  m.grid = &g;
  m.in.assign(static_cast<size_t>(g.nsites()), 1);
  classify_mask(g, m);
  return m;
}

SiteMask sublevel_mask(const Grid& g, const ScalarField& rho, double level) {
  SiteMask m;
  m.grid = &g;
  m.in.assign(static_cast<size_t>(g.nsites()), 0);
  for (long idx = 0; idx < g.nsites(); ++idx)
    if (rho[idx] <= level + 1e-12) m.in[static_cast<size_t>(idx)] = 1;
  classify_mask(g, m);
  return m;
}

ExhaustionFamily build_exhaustion(const Grid& g, const ScalarField& rho, std::vector<double> levels) {
  if (levels.size() < 1) throw InvalidInputError("exhaustion needs at least one level");
  for (size_t i = 1; i < levels.size(); ++i)
    if (!(levels[i] > levels[i - 1])) throw InvalidInputError("exhaustion levels must increase");
  ExhaustionFamily fam;
  fam.grid = &g;
  fam.rho = rho;
  fam.levels = levels;
  double rho_max = *std::max_element(rho.v.begin(), rho.v.end());
  if (levels.back() < rho_max - 1e-12)
    throw InvalidInputError("exhaustion levels do not cover the grid");
  for (double a : levels) {
    SiteMask m = sublevel_mask(g, rho, a);
    if (m.boundary.empty()) throw InvalidGeometryError("exhaustion level has empty boundary");
    if (m.count() == 0) throw InvalidGeometryError("exhaustion level has empty mask");
    fam.masks.push_back(std::move(m));
  }
  // nesting
  for (size_t i = 1; i < fam.masks.size(); ++i)
    for (long idx = 0; idx < g.nsites(); ++idx)
      if (fam.masks[i - 1].contains(idx) && !fam.masks[i].contains(idx))
        throw InvalidGeometryError("exhaustion masks not nested");
  return fam;
}

ScalarField coordinate_abs_field(const Grid& g, int axis) {
  ScalarField f(g);
  for (long idx = 0; idx < g.nsites(); ++idx) f[idx] = std::fabs(g.coord(idx, axis));
  return f;
}

Grid build_monopole_domain(double torus_period, double cylinder_halfwidth,
                           std::array<int, 3> resolution) {
  if (!(torus_period > 0)) throw InvalidGeometryError("torus period must be positive");
  if (!(cylinder_halfwidth > 0)) throw InvalidGeometryError("cylinder halfwidth must be positive");
  for (int n : resolution)
    if (n < 4) throw InvalidGeometryError("monopole domain needs at least 4 points per axis");
  // centering the twisted chart at 0 halves the dynamic range of the
  // exponential end metrics expressed in the holomorphic frame
  std::vector<Axis> axes = {
      {"b", torus_period, resolution[0], AxisRule::Twisted, -0.5 * torus_period},
      {"s", 2.0 * cylinder_halfwidth, resolution[1], AxisRule::Dirichlet, -cylinder_halfwidth},
      {"theta", 2.0 * M_PI, resolution[2], AxisRule::Periodic, 0.0},
  };
  // z = a + i b with the a-circle reduced by S^1-invariance; zeta = s + i theta.
  std::vector<ComplexPair> pairs = {{"z", -1, 0}, {"zeta", 1, 2}};
  return Grid(std::move(axes), std::move(pairs), torus_period);
}

Grid make_periodic_grid(std::vector<Axis> axes, std::vector<ComplexPair> pairs,
                        double reduced_volume) {
  for (auto& a : axes)
    if (a.rule == AxisRule::Dirichlet)
      throw InvalidGeometryError("make_periodic_grid: axis " + a.name + " is Dirichlet");
  return Grid(std::move(axes), std::move(pairs), reduced_volume);
}

ScalarField laplacian(const ScalarField& f, const Grid& g) {
  ScalarField out(g, 0.0);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (long idx = 0; idx < g.nsites(); ++idx) {
    if (g.is_dirichlet_boundary(idx)) {
      out[idx] = nan;
      continue;
    }
    double acc = 0.0;
    for (int k = 0; k < g.dim(); ++k) {
      const Axis& a = g.axis(k);
      const double h2 = a.spacing() * a.spacing();
      const int i = g.coord_index(idx, k);
      const long st = g.stride(k);
      long up = idx + st, dn = idx - st;
      if (a.wraps()) {
        if (i == a.points - 1) up = idx - static_cast<long>(a.points - 1) * st;
        if (i == 0) dn = idx + static_cast<long>(a.points - 1) * st;
      }
      acc += (f[up] - 2.0 * f[idx] + f[dn]) / h2;
    }
    out[idx] = -0.5 * acc;
  }
  return out;
}

double integrate(const ScalarField& f, const Grid& g, const SiteMask& mask) {
  double acc = 0.0;
  for (long idx = 0; idx < g.nsites(); ++idx)
    if (mask.contains(idx)) acc += f[idx] * g.site_weight(idx);
  return acc;
}

double integrate(const ScalarField& f, const Grid& g) {
  double acc = 0.0;
  for (long idx = 0; idx < g.nsites(); ++idx) acc += f[idx] * g.site_weight(idx);
  return acc;
}

}  // namespace helab
