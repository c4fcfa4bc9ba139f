#include "helab/models.hpp"

#include <algorithm>
#include <cmath>

namespace helab {

double smoothstep5(double u) {
  u = std::clamp(u, 0.0, 1.0);
  return u * u * u * (10.0 + u * (-15.0 + 6.0 * u));
}

Rank1Monopole rank1_monopole(Cplx alpha, const Grid& g) {
  if (std::abs(alpha) == 0.0) throw InvalidParameterError("rank1_monopole: alpha must be nonzero");
  int b_axis = g.axis_of_name("b");
  if (g.axis(b_axis).rule != AxisRule::Twisted)
    throw InvalidGeometryError("rank1_monopole: b axis must be twisted");
  Rank1Monopole out;
  out.spec = std::make_unique<BundleSpec>(g, 1);
  MatrixField T(g, 1);
  for (long idx = 0; idx < g.nsites(); ++idx) *T.ptr(idx) = alpha;
  out.spec->set_twist(b_axis, std::move(T));
  MatrixField H(g, 1);
  const double period = g.axis(b_axis).length;
  const double la = std::log(std::abs(alpha));
  for (long idx = 0; idx < g.nsites(); ++idx) {
    double b = g.coord(idx, b_axis);
    *H.ptr(idx) = std::exp(2.0 * b / period * la);
  }
  out.metric = MetricField(*out.spec, std::move(H));
  return out;
}

void Rank2ExampleParams::validate() const {
  ObstructionResult obs = eigen_subbundle_obstruction(a);
  if (!obs.multivalued)
    throw InvalidParameterError(
        "rank2 example: a must satisfy a^2 (a^2 - 1) != 0 (monodromy eigenvalues single-valued "
        "otherwise)");
  if (!(S > 0)) throw InvalidParameterError("rank2 example: S must be positive");
  double s1 = band_lo(), s2 = band_hi();
  if (!(0 < s1 && s1 < s2 && s2 < S))
    throw InvalidParameterError("rank2 example: need 0 < S1 < S2 < S");
  double bound = std::abs(4.0 * a * a - 2.0) * std::exp(-2.0 * s1) + std::exp(-4.0 * s1);
  if (!(bound < 0.5))
    throw InvalidParameterError("rank2 example: branch-safety bound fails at S1");
  for (int n : resolution)
    if (n < 4) throw InvalidParameterError("rank2 example: resolution must be at least 4");
}

std::unique_ptr<BundleSpec> rank2_bundle(Cplx a, const Grid& g) {
  ObstructionResult obs = eigen_subbundle_obstruction(a);
  if (!obs.multivalued) throw InvalidParameterError("rank2_bundle: inadmissible a");
  int b_axis = g.axis_of_name("b");
  int s_axis = g.axis_of_name("s");
  int t_axis = g.axis_of_name("theta");
  auto spec = std::make_unique<BundleSpec>(g, 2);
  MatrixField T(g, 2);
  for (long idx = 0; idx < g.nsites(); ++idx) {
    Cplx w = std::exp(Cplx(g.coord(idx, s_axis), g.coord(idx, t_axis)));
    Cplx* p = T.ptr(idx);
    p[0] = w;        // (0,0)
    p[1] = a;        // (1,0)
    p[2] = a;        // (0,1)
    p[3] = 1.0 / w;  // (1,1)
  }
  spec->set_twist(b_axis, std::move(T));
  return spec;
}

EndRoots end_roots(Cplx a, Cplx w, EndSide side) {
  Cplx x = side == EndSide::Infinity ? 1.0 / w : w;
  Cplx rad_tail = (4.0 * a * a - 2.0) * x * x + x * x * x * x;
  if (std::abs(rad_tail) >= 0.95)
    throw BranchError("end_roots: outside the branch-safe end region");
  EndRoots out;
  out.delta = std::sqrt(1.0 + rad_tail);
  Cplx c = 1.0 - a * a;
  if (side == EndSide::Infinity) {
    out.r1 = 0.5 * w * (1.0 + x * x + out.delta);  // beta_1 ~ w
    out.r2 = c / out.r1;
  } else {
    out.r1 = 0.5 / w * (1.0 + x * x + out.delta);  // gamma_1 ~ 1/w
    out.r2 = c / out.r1;
  }
  return out;
}

Mat end_frames(Cplx a, Cplx w, EndSide side) {
  EndRoots rt = end_roots(a, w, side);
  Mat P(2, 2);
  P(0, 0) = a;
  P(1, 0) = rt.r1 - w;
  P(0, 1) = a;
  P(1, 1) = rt.r2 - w;
  return P;
}

namespace {

struct SiteGeom {
  double b, s, theta, period, b_origin;
  Cplx w;
};

Mat end_metric_e_frame(Cplx a, double c_end, const SiteGeom& sg, EndSide side) {
  EndRoots rt = end_roots(a, sg.w, side);
  Mat P(2, 2);
  P(0, 0) = a;
  P(1, 0) = rt.r1 - sg.w;
  P(0, 1) = a;
  P(1, 1) = rt.r2 - sg.w;
  double twoB = 2.0 * sg.b / sg.period;
  double aw = std::abs(sg.w);
  double d1, d2;
  if (side == EndSide::Infinity) {
    double extra = std::norm(a * sg.w * rt.delta);
    d1 = std::pow(aw, c_end) * std::pow(std::abs(rt.r1), twoB) * extra;
    d2 = std::pow(aw, -c_end) * std::pow(std::abs(rt.r2), twoB);
  } else {
    double extra = std::norm(a / sg.w * rt.delta);
    d1 = std::pow(aw, -c_end) * std::pow(std::abs(rt.r1), twoB) * extra;
    d2 = std::pow(aw, c_end) * std::pow(std::abs(rt.r2), twoB);
  }
  Mat Pi = P.inverse();
  Mat D = Mat::Zero(2, 2);
  D(0, 0) = d1;
  D(1, 1) = d2;
  return Pi.adjoint() * D * Pi;
}

Mat interior_metric(const SiteGeom& sg, const Mat& T) {
  double chi = smoothstep5((sg.b - sg.b_origin) / sg.period);
  Mat TtT = T.adjoint() * T;
  return (1.0 - chi) * Mat::Identity(2, 2) + chi * TtT;
}

// log-geodesic H_A exp(chi log(H_A^{-1} H_B)) through the Hermitian picture
Mat log_geodesic(const Mat& A, const Mat& B, double chi) {
  Mat W = herm_sqrt(hermitize(A));
  Mat Wi = W.inverse();
  Mat rel = hermitize(Mat(Wi * hermitize(B) * Wi));
  Eigen::SelfAdjointEigenSolver<Mat> es(rel);
  Vec d(2);
  for (int i = 0; i < 2; ++i) {
    double lam = es.eigenvalues()(i);
    if (lam <= 0) throw PositivityError("log_geodesic: relative spectrum not positive");
    d(i) = std::pow(lam, chi);
  }
  Mat mid = es.eigenvectors() * d.asDiagonal() * es.eigenvectors().adjoint();
  return W * mid * W;
}

}  // namespace

MetricField rank2_initial_metric(const Rank2ExampleParams& p, const BundleSpec& spec) {
  p.validate();
  const Grid& g = spec.grid();
  const int b_axis = g.axis_of_name("b");
  const int s_axis = g.axis_of_name("s");
  const int t_axis = g.axis_of_name("theta");
  const double S1 = p.band_lo(), S2 = p.band_hi();
  const AxisTwist& tw = spec.twist(b_axis);
  const double det_base = std::norm(1.0 - p.a * p.a);  // |1-a^2|^2

  MatrixField H(g, 2);
  for (long idx = 0; idx < g.nsites(); ++idx) {
    SiteGeom sg;
    sg.b = g.coord(idx, b_axis);
    sg.s = g.coord(idx, s_axis);
    sg.theta = g.coord(idx, t_axis);
    sg.period = g.axis(b_axis).length;
    sg.b_origin = g.axis(b_axis).origin;
    sg.w = std::exp(Cplx(sg.s, sg.theta));
    const double as = std::fabs(sg.s);
    EndSide side = sg.s >= 0 ? EndSide::Infinity : EndSide::Zero;
    double c_end = sg.s >= 0 ? p.cinf : p.c0;

    Mat val(2, 2);
    if (as >= S2) {
      val = end_metric_e_frame(p.a, c_end, sg, side);
    } else if (as <= S1) {
      val = interior_metric(sg, tw.T.get(idx));
    } else {
      Mat A = interior_metric(sg, tw.T.get(idx));
      Mat B = end_metric_e_frame(p.a, c_end, sg, side);
      double chi = smoothstep5((as - S1) / (S2 - S1));
      val = log_geodesic(A, B, chi);
    }
    // determinant projection onto the flat det-line metric |1-a^2|^{2 b / P}
    double target = std::pow(det_base, sg.b / sg.period);
    double det = std::real(val(0, 0) * val(1, 1) - val(0, 1) * val(1, 0));
    if (!(det > 0)) throw PositivityError("rank2_initial_metric: determinant not positive");
    val *= std::sqrt(target / det);
    H.set(idx, hermitize(val));
  }
  return MetricField(spec, std::move(H));
}

EndoField dominant_eigenline_projector(const MetricField& H, Cplx a) {
  const Grid& g = H.grid();
  const int s_axis = g.axis_of_name("s");
  const int t_axis = g.axis_of_name("theta");
  EndoField pi = EndoField::zero(*H.spec);
  for (long idx = 0; idx < g.nsites(); ++idx) {
    Cplx w = std::exp(Cplx(g.coord(idx, s_axis), g.coord(idx, t_axis)));
    auto [r1, r2] = monodromy_roots(a, w);
    Cplx dom = std::abs(r1) >= std::abs(r2) ? r1 : r2;
    Vec v(2);
    v(0) = a;
    v(1) = dom - w;
    Mat h = hermitize(H.m.get(idx));
    Cplx denom = (v.adjoint() * h * v)(0, 0);
    Mat proj = (v * (v.adjoint() * h)) / denom;
    pi.m.set(idx, proj);
  }
  return pi;
}

EndoField rank2_perturbation(const Rank2ExampleParams& p, const BundleSpec& spec,
                             const MetricField& H0, const SiteMask& mask, uint64_t seed,
                             double sup_amplitude) {
  Rank2ExampleParams q = p;
  q.c0 += 0.7;
  q.cinf -= 0.4;
  MetricField H0q = rank2_initial_metric(q, spec);
  EndoField dir = metric_log(H0, H0q);  // trace-free: both dets equal the flat det-line

  ScalarField f = random_window_field(spec.grid(), mask, seed, 4);
  EndoField s = EndoField::zero(spec);
  const int rr = spec.rank() * spec.rank();
  for (long idx = 0; idx < spec.grid().nsites(); ++idx) {
    const Cplx* src = dir.m.ptr(idx);
    Cplx* dst = s.m.ptr(idx);
    for (int j = 0; j < rr; ++j) dst[j] = f[idx] * src[j];
  }
  ScalarField n = endo_norm(s, H0);
  double sup = 0;
  for (long idx = 0; idx < spec.grid().nsites(); ++idx) sup = std::max(sup, n[idx]);
  if (sup <= 0) throw InvalidInputError("rank2_perturbation: degenerate direction");
  double scale = sup_amplitude / sup;
  for (auto& z : s.m.raw()) z *= scale;
  return s;
}

Rank2PipelineResult run_rank2_pipeline(const Rank2ExampleParams& p,
                                       const Rank2PipelineOptions& opt) {
  p.validate();
  Rank2PipelineResult out;
  out.grid = std::make_unique<Grid>(
      build_monopole_domain(p.torus_period, p.S, p.resolution));
  out.spec = rank2_bundle(p.a, *out.grid);
  out.obstruction = eigen_subbundle_obstruction(p.a);
  out.bundle_validation = out.spec->validate();
  out.initial_metric = rank2_initial_metric(p, *out.spec);

  SiteMask mask = full_mask(*out.grid);
  out.l2_before = curvature_l2_invariant(out.initial_metric, mask);

  auto [H, rep] = dirichlet_solve(out.initial_metric, mask, opt.flow);
  out.limit_metric = std::move(H);
  out.flow_report = std::move(rep);
  out.residual_reduction =
      out.flow_report.initial_res_sup / std::max(out.flow_report.final_res_sup, 1e-300);
  out.diagnostics = flow_diagnostics(out.flow_report);
  out.l2_after = curvature_l2_invariant(out.limit_metric, mask);

  if (opt.run_exhaustion) {
    std::vector<double> levels = opt.exhaustion_levels;
    if (levels.empty()) levels = {0.6 * p.S, 0.8 * p.S, p.S};
    ScalarField rho = coordinate_abs_field(*out.grid, out.grid->axis_of_name("s"));
    ExhaustionFamily fam = build_exhaustion(*out.grid, rho, levels);
    out.exhaustion = exhaustion_solve(out.initial_metric, fam, opt.flow);
    out.has_exhaustion = true;
  }
  if (opt.run_uniqueness) {
    EndoField pert = rank2_perturbation(p, *out.spec, out.initial_metric, mask, opt.seed,
                                        opt.perturbation_amplitude);
    UniquenessResult uq = uniqueness_probe(out.initial_metric, pert, mask, opt.flow);
    out.uniqueness_distance = uq.distance;
    out.has_uniqueness = true;
  }
  return out;
}

}  // namespace helab
