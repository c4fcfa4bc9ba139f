#include "helab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace helab {

double phi_line(double t, double delta) {
  double a = std::fabs(t);
  if (a >= 1.0) return std::exp(-delta * a);
  // even quadratic matching value and slope at |t| = 1
  double e = std::exp(-delta);
  return e * (1.0 + 0.5 * delta - 0.5 * delta * a * a);
}

WeightField weight_field(WeightKind kind, double delta, const Grid& g, int axis) {
  if (!(delta > 0)) throw InvalidParameterError("weight_field: delta must be positive");
  if (axis < 0) axis = g.axis_of_name("s");
  WeightField w;
  w.kind = kind;
  w.delta = delta;
  w.values = ScalarField(g);
  for (long idx = 0; idx < g.nsites(); ++idx) {
    double c = g.coord(idx, axis);
    double v = 0;
    switch (kind) {
      case WeightKind::DoublyPeriodic:
        v = std::pow(1.0 + std::exp(2.0 * c), -delta - 1.0);
        break;
      case WeightKind::SpatiallyPeriodic:
        v = phi_line(c, delta);
        break;
      case WeightKind::Custom:
        throw InvalidParameterError("weight_field: custom weights are built directly");
    }
    if (!(v > 0)) throw PositivityError("weight_field: nonpositive value");
    w.values[idx] = v;
  }
  return w;
}

SupEstimateReport sup_estimate_verify(const ScalarField& f, const WeightField& phi, double B,
                                      const Grid& g, double slack) {
  SupEstimateReport rep;
  for (double v : f.v)
    if (v < -1e-14) throw InvalidInputError("sup_estimate_verify: f has negative values");
  rep.sup_f = *std::max_element(f.v.begin(), f.v.end());
  if (slack < 0) slack = 1e-6 * (1.0 + rep.sup_f) * (1.0 + std::fabs(B));

  ScalarField lap = laplacian(f, g);
  for (long idx = 0; idx < g.nsites(); ++idx) {
    if (std::isnan(lap[idx])) continue;
    double excess = lap[idx] - B * phi.values[idx];
    if (excess > rep.max_violation) rep.max_violation = excess;
  }
  rep.precondition_ok = rep.max_violation <= slack;

  ScalarField prod(g);
  for (long idx = 0; idx < g.nsites(); ++idx) prod[idx] = f[idx] * phi.values[idx];
  rep.integral_f_phi = integrate(prod, g);
  rep.fitted_C = rep.sup_f / (1.0 + rep.integral_f_phi);
  return rep;
}

AhlforsReport ahlforsReportZero() {
  AhlforsReport rep;
  rep.epsilon = std::numeric_limits<double>::infinity();
  rep.fit_points = 0;
  return rep;
}

AhlforsReport ahlfors_decay_check(const std::vector<double>& r, const std::vector<double>& g,
                                  double C0, int ndim, double slack) {
  if (r.size() != g.size() || r.size() < 5)
    throw InvalidInputError("ahlfors_decay_check: need matching samples, at least 5");
  for (double v : g)
    if (v < -1e-14) throw InvalidInputError("ahlfors_decay_check: g has negative values");
  double gmax = *std::max_element(g.begin(), g.end());
  if (gmax <= 0) return ahlforsReportZero();

  const double h = r[1] - r[0];
  if (slack < 0) slack = 10.0 * h * h * (1.0 + C0) * gmax;

  AhlforsReport rep;
  for (size_t i = 1; i + 1 < r.size(); ++i) {
    double gpp = (g[i + 1] - 2.0 * g[i] + g[i - 1]) / (h * h);
    double gp = (g[i + 1] - g[i - 1]) / (2.0 * h);
    double lap = -(gpp + (ndim - 1) / r[i] * gp);
    double excess = lap - (-C0 * g[i]);
    if (excess > rep.max_violation) rep.max_violation = excess;
  }
  rep.precondition_ok = rep.max_violation <= slack;

  // least-squares slope of log g over the outer half
  size_t lo = r.size() / 2;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (size_t i = lo; i < r.size(); ++i) {
    if (g[i] <= 1e-300) continue;
    double x = r[i], y = std::log(g[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++n;
  }
  rep.fit_points = n;
  if (n < 3) return ahlforsReportZero();
  double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  rep.epsilon = -slope;
  return rep;
}

namespace {

// psi(t) = int_0^t int_0^s phi ds; evaluated by composite Simpson on [0, t].
double psi_of(double t, double delta) {
  const int n = 400;  // even
  double h = t / n;
  // inner antiderivative P(s) = int_0^s phi
  auto P = [&](double s) {
    const int m = 200;
    double hh = s / m;
    double acc = phi_line(0, delta) + phi_line(s, delta);
    for (int i = 1; i < m; ++i) acc += (i % 2 ? 4.0 : 2.0) * phi_line(i * hh, delta);
    return acc * hh / 3.0;
  };
  double acc = P(0) + P(t);
  for (int i = 1; i < n; ++i) acc += (i % 2 ? 4.0 : 2.0) * P(i * h);
  return acc * h / 3.0;
}

}  // namespace

LineEstimateConstants line_estimate_constants(double delta) {
  LineEstimateConstants c;
  double psi2 = psi_of(2.0, delta);
  c.C0 = 2.0 * psi2 + std::exp(-delta) / (delta * delta);
  c.C1 = std::exp(2.0 * delta) / 2.0;
  return c;
}

LineEstimateReport line_estimate_check(const std::vector<double>& t, const std::vector<double>& g,
                                       double delta, double B, double slack) {
  if (t.size() != g.size() || t.size() < 5)
    throw InvalidInputError("line_estimate_check: need matching samples, at least 5");
  for (double v : g)
    if (v < -1e-14) throw InvalidInputError("line_estimate_check: g has negative values");

  LineEstimateReport rep;
  rep.constants = line_estimate_constants(delta);
  rep.sup_g = *std::max_element(g.begin(), g.end());
  const double h = t[1] - t[0];
  if (slack < 0) slack = 10.0 * h * h * (1.0 + B) * (1.0 + rep.sup_g);

  for (size_t i = 1; i + 1 < t.size(); ++i) {
    double lap = -(g[i + 1] - 2.0 * g[i] + g[i - 1]) / (h * h);
    double excess = lap - B * phi_line(t[i], delta);
    if (excess > rep.max_violation) rep.max_violation = excess;
  }
  rep.precondition_ok = rep.max_violation <= slack;

  double integral = 0;  // trapezoid
  for (size_t i = 0; i < t.size(); ++i) {
    double w = (i == 0 || i + 1 == t.size()) ? 0.5 * h : h;
    integral += w * g[i] * phi_line(t[i], delta);
  }
  rep.rhs = rep.constants.C0 * B + rep.constants.C1 * integral;
  rep.margin = rep.rhs - rep.sup_g;
  rep.satisfied = rep.margin >= -1e-12;
  return rep;
}

double poisson_relax(ScalarField& f, const ScalarField& rhs, const Grid& g, long max_iters,
                     double tol) {
  double tau = 0;
  for (const auto& a : g.axes()) tau += 1.0 / (a.spacing() * a.spacing());
  tau = 0.9 / tau;
  double res_sup = 0;
  for (long it = 0; it < max_iters; ++it) {
    ScalarField lap = laplacian(f, g);
    res_sup = 0;
    for (long idx = 0; idx < g.nsites(); ++idx) {
      if (std::isnan(lap[idx])) continue;  // Dirichlet boundary stays 0
      double r = rhs[idx] - lap[idx];
      f[idx] += tau * r;
      res_sup = std::max(res_sup, std::fabs(r));
    }
    if (res_sup < tol) break;
  }
  return res_sup;
}

}  // namespace helab
