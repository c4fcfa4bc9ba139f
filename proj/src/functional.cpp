#include "helab/functional.hpp"

#include <cmath>

namespace helab {

double donaldson_kernel(double x) {
  if (std::fabs(x) < 1e-4)
    return 0.5 + x / 6.0 + x * x / 24.0 + x * x * x / 120.0;
  return (std::expm1(x) - x) / (x * x);
}


namespace {

// Work data for the spectral weighting of dbar-energies: per-site
// eigensystem of an H-self-adjoint field.
struct SiteSpec {
  Mat W, Wi, Q;
  Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, 4, 1> lam;
};

void site_spectrum(const Mat& H, const Mat& b, SiteSpec& sp) {
  sp.W = herm_sqrt(hermitize(H));
  sp.Wi = sp.W.inverse();
  Eigen::SelfAdjointEigenSolver<Mat> es(hermitize(Mat(sp.W * b * sp.Wi)));
  sp.Q = es.eigenvectors();
  sp.lam = es.eigenvalues();
}

// < K(s) u, u >_{h-tilde} at one site: u mapped to the orthonormal eigenbasis
// of s, entries weighted by kernel(lam_p - lam_q).
double weighted_pairing(const SiteSpec& sp, const Mat& u,
                        const std::function<double(double)>& kernel) {
  Mat ut = sp.Q.adjoint() * sp.W * u * sp.Wi * sp.Q;
  const int r = static_cast<int>(ut.rows());
  double acc = 0;
  for (int p = 0; p < r; ++p)
    for (int q = 0; q < r; ++q) acc += kernel(sp.lam(p) - sp.lam(q)) * std::norm(ut(p, q));
  return acc;
}

// Im < K(s) x, y >_{h-tilde} for the cross term of the complex pairs.
double weighted_cross(const SiteSpec& sp, const Mat& x, const Mat& y,
                      const std::function<double(double)>& kernel) {
  Mat xt = sp.Q.adjoint() * sp.W * x * sp.Wi * sp.Q;
  Mat yt = sp.Q.adjoint() * sp.W * y * sp.Wi * sp.Q;
  const int r = static_cast<int>(xt.rows());
  Cplx acc(0, 0);
  for (int p = 0; p < r; ++p)
    for (int q = 0; q < r; ++q) acc += kernel(sp.lam(p) - sp.lam(q)) * xt(p, q) * std::conj(yt(p, q));
  return acc.imag();
}

// Spectral dbar-energy  2 sum_alpha int < K(s)(dbar_alpha e), dbar_alpha e >:
// axis terms are sums over staggered links (dual, by exact summation by
// parts, to the compact second differences inside Lambda F), the cross terms
// of each complex pair are evaluated at sites from averaged link derivatives.
// K is a one-variable kernel in lam_p - lam_q; K = 1/2-shifted psi gives the
// Donaldson gradient term, K = 1 the |dbar e|^2 energy.
double spectral_dbar_energy(const EndoField& s_base, const EndoField& e, const MetricField& H1,
                            const SiteMask& mask, const std::function<double(double)>& kernel) {
  const Grid& g = H1.grid();
  const int r = H1.rank();
  const int rr = r * r;
  const int dim = g.dim();

  PaddedField ep(g, r, 2);
  ep.fill(e.m, e.spec, Transport::Endo);

  // per-site eigensystems (cached; links touch two sites each)
  std::vector<SiteSpec> specs(static_cast<size_t>(g.nsites()));
  for (long idx = 0; idx < g.nsites(); ++idx)
    site_spectrum(H1.m.get(idx), s_base.m.get(idx), specs[static_cast<size_t>(idx)]);

  std::vector<char> in_mask(static_cast<size_t>(g.nsites()), 0);
  for (long idx = 0; idx < g.nsites(); ++idx)
    if (mask.contains(idx)) in_mask[static_cast<size_t>(idx)] = 1;

  double axis_total = 0;
  // per-axis link sums
  for (int k = 0; k < dim; ++k) {
    bool used = false;
    for (const auto& pr : g.pairs()) used = used || pr.re_axis == k || pr.im_axis == k;
    if (!used) continue;
    const Axis& ax = g.axis(k);
    const double invh = 1.0 / ax.spacing();
    const long st_pad = ep.pstride(k);
    const long st = g.stride(k);
    std::vector<int> mi(static_cast<size_t>(dim), 0);
    Mat u(r, r);
    for (long idx = 0; idx < g.nsites(); ++idx) {
      // link from this site upward along k (wrap axes reach through the halo)
      int i = g.coord_index(idx, k);
      bool has_up = ax.wraps() || i + 1 < ax.points;
      long up_idx = -1;
      if (has_up) up_idx = ax.wraps() && i + 1 == ax.points ? idx - static_cast<long>(i) * st : idx + st;
      if (has_up && in_mask[static_cast<size_t>(idx)] && in_mask[static_cast<size_t>(up_idx)]) {
        long p = ep.pindex(mi);
        const Cplx* lo = ep.ptr(p);
        const Cplx* hi = ep.ptr(p + st_pad);
        for (int j = 0; j < rr; ++j) u.data()[j] = (hi[j] - lo[j]) * invh;
        double w = 0.5 * (g.site_weight(idx) + g.site_weight(up_idx));
        // a link that crosses a twisted seam is expressed in the lower chart;
        // transport it before pairing against the upper site's data
        Mat u_up = u;
        if (ax.rule == AxisRule::Twisted && i + 1 == ax.points && e.spec->has_twist(k)) {
          const AxisTwist& tw = e.spec->twist(k);
          u_up = tw.T.get(up_idx) * u * tw.Tinv.get(up_idx);
        }
        double val = 0.5 * (weighted_pairing(specs[static_cast<size_t>(idx)], u, kernel) +
                            weighted_pairing(specs[static_cast<size_t>(up_idx)], u_up, kernel));
        axis_total += w * val;
      }
      for (int q = dim - 1; q >= 0; --q) {
        if (++mi[static_cast<size_t>(q)] < g.axis(q).points) break;
        mi[static_cast<size_t>(q)] = 0;
      }
    }
  }

  // cross terms: for each pair with both axes present, at interior sites
  double cross_total = 0;
  for (const auto& pr : g.pairs()) {
    if (pr.re_axis < 0 || pr.im_axis < 0) continue;
    const int kr = pr.re_axis, ki = pr.im_axis;
    const double ihr = 1.0 / g.axis(kr).spacing();
    const double ihi = 1.0 / g.axis(ki).spacing();
    const long sr = ep.pstride(kr), si = ep.pstride(ki);
    std::vector<int> mi(static_cast<size_t>(dim), 0);
    Mat X(r, r), Y(r, r);
    for (long idx = 0; idx < g.nsites(); ++idx) {
      bool ok = in_mask[static_cast<size_t>(idx)] && !g.is_dirichlet_boundary(idx);
      if (ok) {
        long p = ep.pindex(mi);
        const Cplx* c = ep.ptr(p);
        const Cplx* up_r = ep.ptr(p + sr);
        const Cplx* dn_r = ep.ptr(p - sr);
        const Cplx* up_i = ep.ptr(p + si);
        const Cplx* dn_i = ep.ptr(p - si);
        (void)c;
        for (int j = 0; j < rr; ++j) {
          X.data()[j] = (up_r[j] - dn_r[j]) * (0.5 * ihr);
          Y.data()[j] = (up_i[j] - dn_i[j]) * (0.5 * ihi);
        }
        cross_total += g.site_weight(idx) *
                       weighted_cross(specs[static_cast<size_t>(idx)], X, Y, kernel);
      }
      for (int q = dim - 1; q >= 0; --q) {
        if (++mi[static_cast<size_t>(q)] < g.axis(q).points) break;
        mi[static_cast<size_t>(q)] = 0;
      }
    }
  }

  return 0.5 * axis_total + cross_total;
}

}  // namespace

FunctionalValue donaldson_M(const MetricField& H1, const MetricField& H2, const SiteMask& mask) {
  if (H1.spec != H2.spec) throw ShapeError("donaldson_M: bundle mismatch");
  const Grid& g = H1.grid();
  const int r = H1.rank();

  EndoField s = metric_log(H1, H2);
  ScalarField s_norm = endo_norm(s, H1);

  FunctionalValue out;
  for (long idx : mask.boundary) out.boundary_mismatch = std::max(out.boundary_mismatch, s_norm[idx]);
  out.boundary_flagged = out.boundary_mismatch > 1e-8;

  // degree term: Re i int Tr(s Lambda F(h1))
  EndoField lf = lambda_F(H1);
  double deg = 0;
  for (long idx : mask.interior) {
    Mat prod = s.m.get(idx) * lf.m.get(idx);
    deg += std::real(Cplx(0, 1) * prod.trace()) * g.site_weight(idx);
  }
  out.degree_term = deg;

  // gradient term: dbar-energy weighted by psi(lambda_p - lambda_q) in the
  // eigenbasis of s; this ordering is what makes d^2/dt^2 M(h, h e^{ts})
  // equal the curvature pairing, and the link-based axis sums are the exact
  // summation-by-parts duals of the staggered Lambda F.
  out.gradient_term =
      spectral_dbar_energy(s, s, H1, mask, [](double x) { return donaldson_kernel(x); });
  (void)r;
  out.total = out.degree_term + out.gradient_term;
  return out;
}

DegreeValue degree(const MetricField& H, const SiteMask& mask) {
  const Grid& g = H.grid();
  EndoField lf = lambda_F(H);
  Cplx acc(0, 0);
  for (long idx : mask.interior) acc += lf.m.get(idx).trace() * g.site_weight(idx);
  acc *= Cplx(0, 1);
  return DegreeValue{acc.real(), acc.imag()};
}

double slope(double deg, int rank) {
  if (rank <= 0) throw InvalidInputError("slope: rank must be positive");
  return deg / rank;
}

SubDegreeValue chern_weil_subdegree(const MetricField& H, const EndoField& pi,
                                    const SiteMask& mask) {
  const Grid& g = H.grid();
  const int r = H.rank();
  SubDegreeValue out;

  // projector algebra to 1e-6 at every site
  for (long idx = 0; idx < g.nsites(); ++idx) {
    Mat p = pi.m.get(idx);
    Mat h = hermitize(H.m.get(idx));
    Mat idem = p * p - p;
    Mat selfadj = p - Mat(h.inverse() * p.adjoint() * h);
    double defect = std::max(frob_norm(idem), frob_norm(selfadj));
    out.projector_defect = std::max(out.projector_defect, defect);
  }
  if (out.projector_defect > 1e-6)
    throw ProjectorError("chern_weil_subdegree: candidate is not an orthogonal projector");

  // seam smoothness of the candidate (equivariance under the wrap rule);
  // extrapolation-based, so the tolerance is truncation-aware
  {
    double h2 = 0;
    for (int k = 0; k < g.dim(); ++k) h2 = std::max(h2, g.axis(k).spacing());
    h2 *= h2;
    out.wrap_defect = endo_wrap_defect(pi);
    if (out.wrap_defect > std::max(1e-6, 100.0 * h2))
      throw ProjectorError("chern_weil_subdegree: candidate violates the wrap rule");
  }

  EndoField lf = lambda_F(H);
  Cplx first(0, 0);
  for (long idx : mask.interior)
    first += (pi.m.get(idx) * lf.m.get(idx)).trace() * g.site_weight(idx);
  out.projector_term = (Cplx(0, 1) * first).real();

  EndoField zero_base = EndoField::zero(*pi.spec);
  out.dbar_term = spectral_dbar_energy(zero_base, pi, H, mask, [](double) { return 1.0; });
  out.value = out.projector_term - out.dbar_term;
  (void)r;
  return out;
}

CurvatureL2Value curvature_l2_invariant(const MetricField& H, const SiteMask& mask) {
  const Grid& g = H.grid();
  if (g.complex_dim() != 2)
    throw DimensionError("curvature_l2_invariant: needs two complex dimensions");
  const int r = H.rank();
  FormField11 F = curvature(H);
  Cplx acc(0, 0);
  for (long idx : mask.interior) {
    Mat f00 = F.at(0, 0).get(idx);
    Mat f01 = F.at(0, 1).get(idx);
    Mat f10 = F.at(1, 0).get(idx);
    Mat f11 = F.at(1, 1).get(idx);
    // remove the form-valued trace part
    for (Mat* f : {&f00, &f01, &f10, &f11}) {
      Cplx tr = f->trace() / static_cast<double>(r);
      for (int j = 0; j < r; ++j) (*f)(j, j) -= tr;
    }
    // Tr(F^perp wedge F^perp) = 2 [Tr(F00 F11) - Tr(F01 F10)] dzbar0^dz0^... ;
    // against dvol this picks up the factor -8 (orientation (i/2)^2).
    Cplx top = (f00 * f11).trace() - (f01 * f10).trace();
    acc += -8.0 * top * g.site_weight(idx);
  }
  return CurvatureL2Value{acc.real(), acc.imag()};
}

}  // namespace helab
