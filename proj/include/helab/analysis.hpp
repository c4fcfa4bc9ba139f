#pragma once

#include <vector>

#include "helab/grid.hpp"

namespace helab {

enum class WeightKind { DoublyPeriodic, SpatiallyPeriodic, Custom };

// Strictly positive integrable weight over the grid.
//   DoublyPeriodic   : (1 + |w|^2)^{-delta-1} with |w| = e^s on the cylinder axis
//   SpatiallyPeriodic: e^{-delta |t|} for |t| >= 1, matched even quadratic inside
struct WeightField {
  ScalarField values;
  WeightKind kind = WeightKind::Custom;
  double delta = 0;
};

// The 1d profile of the spatially periodic weight.
double phi_line(double t, double delta);

// axis < 0 picks the axis named "s".
WeightField weight_field(WeightKind kind, double delta, const Grid& g, int axis = -1);

// ----- sup estimate (weighted mean-value inequality) ---------------------------

struct SupEstimateReport {
  double sup_f = 0;
  double integral_f_phi = 0;
  double fitted_C = 0;  // sup f / (1 + integral)
  bool precondition_ok = true;
  double max_violation = 0;  // positive part of Delta f - B phi over the interior
};

// Measures the constant in sup f <= C (1 + int f phi) for f >= 0 with
// Delta f <= B phi. The subsolution inequality is verified discretely with
// truncation slack; a violation flags the report instead of throwing.
SupEstimateReport sup_estimate_verify(const ScalarField& f, const WeightField& phi, double B,
                                      const Grid& g, double slack = -1);

// ----- Ahlfors-type radial decay -----------------------------------------------

struct AhlforsReport {
  double epsilon = 0;  // fitted decay rate; +inf for identically zero input
  bool precondition_ok = true;
  double max_violation = 0;
  int fit_points = 0;
};

// Radial profile g(r) on [R, Rmax] with Delta g <= -C0 g (Delta the negative
// n-dimensional radial Laplacian). Fits log g against r over the outer half.
AhlforsReport ahlfors_decay_check(const std::vector<double>& r, const std::vector<double>& g,
                                  double C0, int ndim, double slack = -1);

// ----- line estimate on R -------------------------------------------------------

struct LineEstimateConstants {
  double C0 = 0;
  double C1 = 0;
};
// Constants valid for the continuum inequality sup g <= C0 B + C1 int phi g,
// derived from the convexity argument: C0 = 2 max_{|t|<=2} psi + e^{-delta}/delta^2
// with psi the second antiderivative of phi, and C1 = e^{2 delta} / 2.
LineEstimateConstants line_estimate_constants(double delta);

struct LineEstimateReport {
  double sup_g = 0;
  double rhs = 0;
  double margin = 0;
  LineEstimateConstants constants;
  bool precondition_ok = true;
  double max_violation = 0;
  bool satisfied = false;
};

LineEstimateReport line_estimate_check(const std::vector<double>& t, const std::vector<double>& g,
                                       double delta, double B, double slack = -1);

// Weighted-Jacobi relaxation for Delta f = rhs with f = 0 on Dirichlet
// boundary sites. Returns the final residual sup-norm.
double poisson_relax(ScalarField& f, const ScalarField& rhs, const Grid& g, long max_iters,
                     double tol);

}  // namespace helab
