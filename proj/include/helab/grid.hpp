#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "helab/errors.hpp"

namespace helab {

enum class AxisRule { Periodic, Twisted, Dirichlet };

const char* to_string(AxisRule r);
AxisRule axis_rule_from_string(const std::string& s);

struct Axis {
  std::string name;
  double length = 0.0;
  int points = 0;
  AxisRule rule = AxisRule::Periodic;
  double origin = 0.0;

  // Periodic/twisted axes tile [origin, origin+length); Dirichlet axes include
  // both endpoints, so the spacing divides by points-1.
  double spacing() const {
    return rule == AxisRule::Dirichlet ? length / (points - 1) : length / points;
  }
  double coord(int i) const { return origin + i * spacing(); }
  bool wraps() const { return rule != AxisRule::Dirichlet; }
};

// A complex coordinate pairs a real and an imaginary grid axis. Either slot
// may be absent (index -1): such a direction is "reduced" by invariance,
// fields are constant along it and it only contributes a volume factor
// (recorded in Grid::reduced_volume).
struct ComplexPair {
  std::string name;
  int re_axis = -1;
  int im_axis = -1;
};

// Flat discretized base domain. Site storage is row-major with the last axis
// fastest. All differential operators use the normalization
//   Delta = -2 sum_k d_{z_k} d_{zbar_k} = -(1/2) sum_real_axes d^2,
// i.e. half the Euclidean Laplacian.
class Grid {
 public:
  Grid() = default;
  Grid(std::vector<Axis> axes, std::vector<ComplexPair> pairs, double reduced_volume = 1.0);

  const std::vector<Axis>& axes() const { return axes_; }
  const Axis& axis(int k) const { return axes_[static_cast<size_t>(k)]; }
  const std::vector<ComplexPair>& pairs() const { return pairs_; }
  int dim() const { return static_cast<int>(axes_.size()); }
  int complex_dim() const { return static_cast<int>(pairs_.size()); }
  long nsites() const { return nsites_; }
  double reduced_volume() const { return reduced_volume_; }

  long stride(int k) const { return strides_[static_cast<size_t>(k)]; }
  long index(const std::vector<int>& mi) const;
  std::vector<int> multi_index(long idx) const;
  int coord_index(long idx, int k) const {
    return static_cast<int>((idx / strides_[static_cast<size_t>(k)]) % axes_[static_cast<size_t>(k)].points);
  }
  double coord(long idx, int k) const { return axis(k).coord(coord_index(idx, k)); }

  // Quadrature weight of a site: product of spacings, halved at Dirichlet
  // endpoints (trapezoid), times the lengths of reduced directions.
  double site_weight(long idx) const;
  double total_volume() const;

  bool is_dirichlet_boundary(long idx) const;
  int axis_of_name(const std::string& name) const;

  void validate() const;

 private:
  std::vector<Axis> axes_;
  std::vector<ComplexPair> pairs_;
  double reduced_volume_ = 1.0;
  std::vector<long> strides_;
  long nsites_ = 0;
};

// Scalar fields are plain per-site arrays of real values.
struct ScalarField {
  const Grid* grid = nullptr;
  std::vector<double> v;

  ScalarField() = default;
  explicit ScalarField(const Grid& g, double fill = 0.0)
      : grid(&g), v(static_cast<size_t>(g.nsites()), fill) {}
  double& operator[](long i) { return v[static_cast<size_t>(i)]; }
  double operator[](long i) const { return v[static_cast<size_t>(i)]; }
};

// Site subset with its discrete boundary: masked sites that either touch an
// unmasked site along a non-wrapping direction or lie on the grid's Dirichlet
// boundary. Interior = mask minus boundary.
struct SiteMask {
  const Grid* grid = nullptr;
  std::vector<uint8_t> in;
  std::vector<long> boundary;
  std::vector<long> interior;

  bool contains(long idx) const { return in[static_cast<size_t>(idx)] != 0; }
  long count() const;
};

SiteMask full_mask(const Grid& g);
// Sublevel mask {rho <= level}; boundary per the rule above.
SiteMask sublevel_mask(const Grid& g, const ScalarField& rho, double level);

struct ExhaustionFamily {
  const Grid* grid = nullptr;
  ScalarField rho;
  std::vector<double> levels;
  std::vector<SiteMask> masks;
};

// Nested sublevel sets of rho with the stated levels. Levels must be strictly
// increasing, masks nested with union covering the grid, and every mask must
// have a nonempty boundary.
ExhaustionFamily build_exhaustion(const Grid& g, const ScalarField& rho, std::vector<double> levels);

// Coordinate exhaustion function rho = |coordinate of axis k|.
ScalarField coordinate_abs_field(const Grid& g, int axis);

// ----- builders ------------------------------------------------------------

// Monopole cylinder T_z x C*_w in coordinates (b = Im z, s = log|w|,
// theta = arg w). The metric dz dzbar + |w|^{-2} dw dwbar is flat in these
// coordinates. The Re z direction is reduced by S^1-invariance and enters as a
// unit volume factor; b is the twisted axis that carries transition matrices.
Grid build_monopole_domain(double torus_period, double cylinder_halfwidth,
                           std::array<int, 3> resolution);

Grid make_periodic_grid(std::vector<Axis> axes, std::vector<ComplexPair> pairs,
                        double reduced_volume = 1.0);

// ----- scalar operators -----------------------------------------------------

// Delta f = -(1/2) sum_k D2_k f on sites where the full stencil exists.
// Twisted axes wrap scalars plainly. Dirichlet boundary sites get NaN.
ScalarField laplacian(const ScalarField& f, const Grid& g);

// Sum of f times site weights over the mask (empty mask -> 0).
double integrate(const ScalarField& f, const Grid& g, const SiteMask& mask);
double integrate(const ScalarField& f, const Grid& g);

}  // namespace helab
