#include "helab/bundle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace helab {

BundleSpec::BundleSpec(const Grid& g, int rank) : grid_(&g), rank_(rank) {
  if (rank < 1 || rank > 4) throw InvalidParameterError("bundle rank out of range [1,4]");
}

void BundleSpec::set_twist(int axis, MatrixField T) {
  if (grid_->axis(axis).rule != AxisRule::Twisted)
    throw InvalidGeometryError("twist attached to non-twisted axis");
  if (T.rank() != rank_) throw ShapeError("twist rank mismatch");
  AxisTwist tw;
  tw.Tinv = MatrixField(*grid_, rank_);
  tw.detT.assign(static_cast<size_t>(grid_->nsites()), Cplx(0, 0));
  for (long idx = 0; idx < grid_->nsites(); ++idx) {
    Mat t = T.get(idx);
    Cplx det = t.determinant();
    if (std::abs(det) < 1e-14) throw PositivityError("singular transition matrix");
    tw.Tinv.set(idx, t.inverse());
    tw.detT[static_cast<size_t>(idx)] = det;
  }
  tw.T = std::move(T);
  twists_[axis] = std::move(tw);
}

const AxisTwist& BundleSpec::twist(int axis) const {
  auto it = twists_.find(axis);
  if (it == twists_.end()) throw InvalidInputError("no twist on axis");
  return it->second;
}

BundleSpec::Validation BundleSpec::validate() const {
  Validation v;
  v.min_abs_det = std::numeric_limits<double>::infinity();
  for (const auto& [axis, tw] : twists_) {
    (void)axis;
    for (long idx = 0; idx < grid_->nsites(); ++idx) {
      Mat t = tw.T.get(idx);
      Eigen::JacobiSVD<Mat> svd(t);
      double smax = svd.singularValues()(0);
      double smin = svd.singularValues()(svd.singularValues().size() - 1);
      v.min_abs_det = std::min(v.min_abs_det, std::abs(tw.detT[static_cast<size_t>(idx)]));
      v.max_condition = std::max(v.max_condition, smax / smin);
      Mat loop = t * tw.Tinv.get(idx) - Mat::Identity(rank_, rank_);
      v.max_loop_defect = std::max(v.max_loop_defect, frob_norm(loop));
    }
  }
  return v;
}

double MetricField::hermiticity_defect() const {
  double d = 0;
  for (long idx = 0; idx < m.nsites(); ++idx) {
    Mat h = m.get(idx);
    d = std::max(d, frob_norm(Mat(h - h.adjoint())));
  }
  return d;
}

double MetricField::min_eigenvalue() const {
  double mn = std::numeric_limits<double>::infinity();
  for (long idx = 0; idx < m.nsites(); ++idx) {
    Eigen::SelfAdjointEigenSolver<Mat> es(hermitize(m.get(idx)));
    mn = std::min(mn, es.eigenvalues()(0));
  }
  return mn;
}

double MetricField::max_condition() const {
  double mx = 0;
  for (long idx = 0; idx < m.nsites(); ++idx) {
    Eigen::SelfAdjointEigenSolver<Mat> es(hermitize(m.get(idx)));
    double lo = es.eigenvalues()(0), hi = es.eigenvalues()(es.eigenvalues().size() - 1);
    if (lo <= 0) return std::numeric_limits<double>::infinity();
    mx = std::max(mx, hi / lo);
  }
  return mx;
}

double MetricField::wrap_compatibility_defect() const {
  const Grid& g = spec->grid();
  double defect = 0;
  for (int k = 0; k < g.dim(); ++k) {
    if (g.axis(k).rule != AxisRule::Twisted || !spec->has_twist(k)) continue;
    const AxisTwist& tw = spec->twist(k);
    const int n = g.axis(k).points;
    const long st = g.stride(k);
    for (long idx = 0; idx < g.nsites(); ++idx) {
      if (g.coord_index(idx, k) != n - 1) continue;
      // cubic extrapolation of the cover field to index n vs transported slice 0
      Mat f1 = m.get(idx), f2 = m.get(idx - st), f3 = m.get(idx - 2 * st), f4 = m.get(idx - 3 * st);
      Mat ext = 4.0 * f1 - 6.0 * f2 + 4.0 * f3 - f4;
      long base = idx - static_cast<long>(n - 1) * st;
      Mat t = tw.T.get(base);
      Mat wrapped = t.adjoint() * m.get(base) * t;
      defect = std::max(defect, frob_norm(Mat(ext - wrapped)) / std::max(1.0, frob_norm(wrapped)));
    }
  }
  return defect;
}

FormField11::FormField11(const BundleSpec& s) : spec(&s) {
  int n = s.grid().complex_dim();
  comp.assign(static_cast<size_t>(n) * n, MatrixField());
  for (auto& c : comp) c = MatrixField(s.grid(), s.rank());
}

// ----- padded derivative helpers ---------------------------------------------

namespace {

// First derivative along axis k of padded field P, written into D on the box
// extended by `extent` on wrapping axes. One-sided second-order stencils at
// Dirichlet edges, centered elsewhere (halo supplies wrap neighbors).
void diff_axis(const Grid& g, const PaddedField& P, int k, int extent, PaddedField& D) {
  const int r = P.rank();
  const int rr = r * r;
  const Axis& ax = g.axis(k);
  const double inv2h = 1.0 / (2.0 * ax.spacing());
  const long st = P.pstride(k);

  std::vector<int> lo(static_cast<size_t>(g.dim()), 0), hi(static_cast<size_t>(g.dim()), 0);
  for (int q = 0; q < g.dim(); ++q) {
    int e = g.axis(q).wraps() ? extent : 0;
    lo[static_cast<size_t>(q)] = -e;
    hi[static_cast<size_t>(q)] = g.axis(q).points + e;
  }
  std::vector<int> mi = lo;
  while (true) {
    long p = P.pindex(mi);
    long dpi = D.pindex(mi);
    const Cplx* c = P.ptr(p);
    Cplx* out = D.ptr(dpi);
    int i = mi[static_cast<size_t>(k)];
    if (ax.rule == AxisRule::Dirichlet && i == 0) {
      const Cplx* f1 = P.ptr(p + st);
      const Cplx* f2 = P.ptr(p + 2 * st);
      for (int j = 0; j < rr; ++j) out[j] = (-3.0 * c[j] + 4.0 * f1[j] - f2[j]) * inv2h;
    } else if (ax.rule == AxisRule::Dirichlet && i == ax.points - 1) {
      const Cplx* f1 = P.ptr(p - st);
      const Cplx* f2 = P.ptr(p - 2 * st);
      for (int j = 0; j < rr; ++j) out[j] = (3.0 * c[j] - 4.0 * f1[j] + f2[j]) * inv2h;
    } else {
      const Cplx* up = P.ptr(p + st);
      const Cplx* dn = P.ptr(p - st);
      for (int j = 0; j < rr; ++j) out[j] = (up[j] - dn[j]) * inv2h;
    }
    int q = g.dim() - 1;
    for (; q >= 0; --q) {
      if (++mi[static_cast<size_t>(q)] < hi[static_cast<size_t>(q)]) break;
      mi[static_cast<size_t>(q)] = lo[static_cast<size_t>(q)];
    }
    if (q < 0) break;
  }
}

void mat_mul(int r, const Cplx* a, const Cplx* b, Cplx* out) {
  for (int j = 0; j < r; ++j)
    for (int i = 0; i < r; ++i) {
      Cplx acc(0, 0);
      for (int l = 0; l < r; ++l) acc += b[j * r + l] * a[l * r + i];
      out[j * r + i] = acc;
    }
}

void small_inverse(int r, const Cplx* a, Cplx* out) {
  if (r == 1) {
    out[0] = 1.0 / a[0];
    return;
  }
  if (r == 2) {
    Cplx det = a[0] * a[3] - a[2] * a[1];
    Cplx id = 1.0 / det;
    out[0] = a[3] * id;
    out[1] = -a[1] * id;
    out[2] = -a[2] * id;
    out[3] = a[0] * id;
    return;
  }
  Mat m(r, r);
  for (int j = 0; j < r * r; ++j) m.data()[j] = a[j];
  Mat mi = m.inverse();
  for (int j = 0; j < r * r; ++j) out[j] = mi.data()[j];
}

}  // namespace

// Shared curvature engine. Builds staggered log-links
//   L_k[x] = log(H(x)^{-1} H(x+e_k)) / h_k
// (stored at the lower site). Same-axis contributions to F_{a,bbar} are the
// compact staggered differences (L_k[x] - L_k[x-e_k]) / h_k, cross-axis ones
// centered differences of the site-averaged links. Exact on exponential
// families, second-order, and the highest lattice mode keeps full damping.
namespace detail {

namespace {

// principal log of a matrix with positive spectrum (similar to a Hermitian
// positive matrix); closed form for r <= 2, series-free Hermitian route else
void matrix_log_positive(int r, const Cplx* m, Cplx* out) {
  if (r == 1) {
    out[0] = std::log(m[0]);
    return;
  }
  if (r == 2) {
    Cplx tr = m[0] + m[3];
    Cplx det = m[0] * m[3] - m[2] * m[1];
    Cplx disc = std::sqrt(tr * tr - 4.0 * det);
    if (std::real(disc * tr) < 0) disc = -disc;  // avoid cancellation in tr + disc
    Cplx l1 = 0.5 * (tr + disc);
    Cplx l2 = (std::abs(l1) > 0) ? det / l1 : 0.5 * (tr - disc);
    if (!(std::real(l1) > 0) || !(std::real(l2) > 0))
      throw PositivityError("matrix_log_positive: spectrum escaped the positive axis");
    Cplx c1 = (std::abs(l1 - l2) < 1e-8 * std::abs(l1)) ? 2.0 / (l1 + l2)
                                                        : (std::log(l1) - std::log(l2)) / (l1 - l2);
    Cplx c0 = std::log(l1) - c1 * l1;
    out[0] = c0 + c1 * m[0];
    out[1] = c1 * m[1];
    out[2] = c1 * m[2];
    out[3] = c0 + c1 * m[3];
    return;
  }
  Mat mm(r, r);
  for (int j = 0; j < r * r; ++j) mm.data()[j] = m[j];
  Eigen::ComplexEigenSolver<Mat> es(mm);
  Vec d(r);
  for (int i = 0; i < r; ++i) {
    Cplx lam = es.eigenvalues()(i);
    if (!(lam.real() > 0)) throw PositivityError("matrix_log_positive: nonpositive spectrum");
    d(i) = std::log(lam);
  }
  Mat lg = es.eigenvectors() * d.asDiagonal() * es.eigenvectors().inverse();
  for (int j = 0; j < r * r; ++j) out[j] = lg.data()[j];
}

// iterate a box extended by e on wrapping axes
template <class F>
void for_box(const Grid& g, int extent, F&& fn) {
  const int d = g.dim();
  std::vector<int> lo(static_cast<size_t>(d)), hi(static_cast<size_t>(d));
  for (int q = 0; q < d; ++q) {
    int e = g.axis(q).wraps() ? extent : 0;
    lo[static_cast<size_t>(q)] = -e;
    hi[static_cast<size_t>(q)] = g.axis(q).points + e;
  }
  std::vector<int> mi = lo;
  while (true) {
    fn(mi);
    int q = d - 1;
    for (; q >= 0; --q) {
      if (++mi[static_cast<size_t>(q)] < hi[static_cast<size_t>(q)]) break;
      mi[static_cast<size_t>(q)] = lo[static_cast<size_t>(q)];
    }
    if (q < 0) return;
  }
}

}  // namespace

void curvature_compute(const MetricField& H, bool diag_only, FormField11& out,
                       CurvatureScratch& ws) {
  const Grid& g = H.grid();
  const int r = H.rank();
  const int rr = r * r;
  const int npair = g.complex_dim();
  const int dim = g.dim();

  if (!ws.ready) {
    ws.Hp = PaddedField(g, r, 2);
    ws.L = std::vector<PaddedField>(static_cast<size_t>(dim));
    ws.Aavg = std::vector<PaddedField>(static_cast<size_t>(dim));
    for (auto& f : ws.L) f = PaddedField(g, r, 2);
    for (auto& f : ws.Aavg) f = PaddedField(g, r, 2);
    ws.tmp = PaddedField(g, r, 2);
    ws.ready = true;
  }
  for (const auto& pr : g.pairs())
    for (int k : {pr.re_axis, pr.im_axis})
      if (k >= 0 && !g.axis(k).wraps() && g.axis(k).points < 4)
        throw InvalidGeometryError("curvature: Dirichlet axes need at least 4 points");
  ws.Hp.fill(H.m, H.spec, Transport::Metric);

  // which axes are needed at all
  std::vector<char> axis_used(static_cast<size_t>(dim), 0);
  for (const auto& pr : g.pairs()) {
    if (pr.re_axis >= 0) axis_used[static_cast<size_t>(pr.re_axis)] = 1;
    if (pr.im_axis >= 0) axis_used[static_cast<size_t>(pr.im_axis)] = 1;
  }

  // links L_k[x] for x such that both ends are in the padded box; wrapping
  // axes get links on [-2, n+1), the Dirichlet axis on [0, n-1)
  Cplx mbuf[16], lbuf[16], hin[16];
  for (int k = 0; k < dim; ++k) {
    if (!axis_used[static_cast<size_t>(k)]) continue;
    const double invh = 1.0 / g.axis(k).spacing();
    const long st = ws.Hp.pstride(k);
    PaddedField& Lk = ws.L[static_cast<size_t>(k)];
    for_box(g, 2, [&](const std::vector<int>& mi) {
      int i = mi[static_cast<size_t>(k)];
      const Axis& a = g.axis(k);
      // the +e_k end must exist in the padded box
      if (a.wraps()) {
        if (i + 1 >= a.points + 2) return;
      } else {
        if (i + 1 >= a.points) return;
      }
      long p = ws.Hp.pindex(mi);
      small_inverse(r, ws.Hp.ptr(p), hin);
      mat_mul(r, hin, ws.Hp.ptr(p + st), mbuf);
      matrix_log_positive(r, mbuf, lbuf);
      Cplx* dst = Lk.ptr(Lk.pindex(mi));
      for (int j = 0; j < rr; ++j) dst[j] = lbuf[j] * invh;
    });
  }

  // site-centered averages (needed for cross-axis derivatives); Dirichlet
  // edges use one-sided quadratic evaluation from the first three links
  for (int k = 0; k < dim; ++k) {
    if (!axis_used[static_cast<size_t>(k)]) continue;
    const Axis& a = g.axis(k);
    const long st = ws.L[static_cast<size_t>(k)].pstride(k);
    PaddedField& Lk = ws.L[static_cast<size_t>(k)];
    PaddedField& Ak = ws.Aavg[static_cast<size_t>(k)];
    for_box(g, 1, [&](const std::vector<int>& mi) {
      int i = mi[static_cast<size_t>(k)];
      long p = Lk.pindex(mi);
      Cplx* dst = Ak.ptr(p);
      if (!a.wraps() && i == 0) {
        const Cplx* l0 = Lk.ptr(p);
        const Cplx* l1 = Lk.ptr(p + st);
        const Cplx* l2 = Lk.ptr(p + 2 * st);
        for (int j = 0; j < rr; ++j)
          dst[j] = (15.0 * l0[j] - 10.0 * l1[j] + 3.0 * l2[j]) / 8.0;
      } else if (!a.wraps() && i == a.points - 1) {
        const Cplx* l0 = Lk.ptr(p - st);
        const Cplx* l1 = Lk.ptr(p - 2 * st);
        const Cplx* l2 = Lk.ptr(p - 3 * st);
        for (int j = 0; j < rr; ++j)
          dst[j] = (15.0 * l0[j] - 10.0 * l1[j] + 3.0 * l2[j]) / 8.0;
      } else {
        const Cplx* lo = Lk.ptr(p - st);
        const Cplx* hi = Lk.ptr(p);
        for (int j = 0; j < rr; ++j) dst[j] = 0.5 * (lo[j] + hi[j]);
      }
    });
  }

  // derivative d_x A_y at a fundamental site: staggered compact for x == y,
  // centered difference of the averages otherwise
  auto add_component = [&](MatrixField& dest, int x_axis, int y_axis, Cplx coef) {
    const Axis& ax = g.axis(x_axis);
    const double invh = 1.0 / ax.spacing();
    PaddedField& Ly = ws.L[static_cast<size_t>(y_axis)];
    PaddedField& Ay = ws.Aavg[static_cast<size_t>(y_axis)];
    const long stx = Ly.pstride(x_axis);
    std::vector<int> mi(static_cast<size_t>(dim), 0);
    for (long idx = 0; idx < g.nsites(); ++idx) {
      Cplx* dst = dest.ptr(idx);
      long p = Ly.pindex(mi);
      int i = mi[static_cast<size_t>(x_axis)];
      if (x_axis == y_axis) {
        if (!ax.wraps() && i == 0) {
          const Cplx* l0 = Ly.ptr(p);
          const Cplx* l1 = Ly.ptr(p + stx);
          const Cplx* l2 = Ly.ptr(p + 2 * stx);
          for (int j = 0; j < rr; ++j)
            dst[j] += coef * (-2.0 * l0[j] + 3.0 * l1[j] - l2[j]) * invh;
        } else if (!ax.wraps() && i == ax.points - 1) {
          const Cplx* l0 = Ly.ptr(p - stx);
          const Cplx* l1 = Ly.ptr(p - 2 * stx);
          const Cplx* l2 = Ly.ptr(p - 3 * stx);
          for (int j = 0; j < rr; ++j)
            dst[j] += coef * (2.0 * l0[j] - 3.0 * l1[j] + l2[j]) * invh;
        } else {
          const Cplx* lo = Ly.ptr(p - stx);
          const Cplx* hi = Ly.ptr(p);
          for (int j = 0; j < rr; ++j) dst[j] += coef * (hi[j] - lo[j]) * invh;
        }
      } else {
        if (!ax.wraps() && i == 0) {
          const Cplx* f0 = Ay.ptr(p);
          const Cplx* f1 = Ay.ptr(p + stx);
          const Cplx* f2 = Ay.ptr(p + 2 * stx);
          for (int j = 0; j < rr; ++j)
            dst[j] += coef * (-3.0 * f0[j] + 4.0 * f1[j] - f2[j]) * (0.5 * invh);
        } else if (!ax.wraps() && i == ax.points - 1) {
          const Cplx* f0 = Ay.ptr(p);
          const Cplx* f1 = Ay.ptr(p - stx);
          const Cplx* f2 = Ay.ptr(p - 2 * stx);
          for (int j = 0; j < rr; ++j)
            dst[j] += coef * (3.0 * f0[j] - 4.0 * f1[j] + f2[j]) * (0.5 * invh);
        } else {
          const Cplx* up = Ay.ptr(p + stx);
          const Cplx* dn = Ay.ptr(p - stx);
          for (int j = 0; j < rr; ++j) dst[j] += coef * (up[j] - dn[j]) * (0.5 * invh);
        }
      }
      for (int q = dim - 1; q >= 0; --q) {
        if (++mi[static_cast<size_t>(q)] < g.axis(q).points) break;
        mi[static_cast<size_t>(q)] = 0;
      }
    }
  };

  // F_{a,bbar} = 0.25 [ d_r A_p + d_s A_q + i (d_s A_p - d_r A_q) ]
  // with alpha = (p, q), beta = (r, s); absent axes drop their terms.
  for (int a = 0; a < npair; ++a) {
    for (int b = 0; b < npair; ++b) {
      if (diag_only && a != b) continue;
      const ComplexPair& pa = g.pairs()[static_cast<size_t>(a)];
      const ComplexPair& pb = g.pairs()[static_cast<size_t>(b)];
      MatrixField& Fab = out.at(a, b);
      std::fill(Fab.raw().begin(), Fab.raw().end(), Cplx(0, 0));
      const int p = pa.re_axis, q = pa.im_axis;
      const int rx = pb.re_axis, sx = pb.im_axis;
      if (rx >= 0 && p >= 0) add_component(Fab, rx, p, Cplx(0.25, 0));
      if (sx >= 0 && q >= 0) add_component(Fab, sx, q, Cplx(0.25, 0));
      if (sx >= 0 && p >= 0) add_component(Fab, sx, p, Cplx(0, 0.25));
      if (rx >= 0 && q >= 0) add_component(Fab, rx, q, Cplx(0, -0.25));
    }
  }
}

}  // namespace detail

FormField11 curvature(const MetricField& H) {
  FormField11 F(*H.spec);
  detail::CurvatureScratch ws;
  detail::curvature_compute(H, false, F, ws);
  return F;
}

EndoField lambda_contract(const FormField11& F) {
  const BundleSpec& spec = *F.spec;
  const Grid& g = spec.grid();
  const int n = g.complex_dim();
  const int rr = spec.rank() * spec.rank();
  EndoField out = EndoField::zero(spec);
  for (int k = 0; k < n; ++k) {
    const MatrixField& Fkk = F.at(k, k);
    if (Fkk.raw().empty()) throw ShapeError("lambda_contract: missing diagonal component");
    for (long idx = 0; idx < g.nsites(); ++idx) {
      const Cplx* src = Fkk.ptr(idx);
      Cplx* dst = out.m.ptr(idx);
      for (int j = 0; j < rr; ++j) dst[j] += Cplx(0, 2.0) * src[j];
    }
  }
  return out;
}

EndoField lambda_F(const MetricField& H) {
  FormField11 F(*H.spec);
  detail::CurvatureScratch ws;
  detail::curvature_compute(H, true, F, ws);
  return lambda_contract(F);
}

void lambda_F_into(const MetricField& H, FormField11& F, EndoField& out,
                   detail::CurvatureScratch& ws) {
  detail::curvature_compute(H, true, F, ws);
  const Grid& g = H.grid();
  const int n = g.complex_dim();
  const int rr = H.rank() * H.rank();
  std::fill(out.m.raw().begin(), out.m.raw().end(), Cplx(0, 0));
  for (int k = 0; k < n; ++k) {
    const MatrixField& Fkk = F.at(k, k);
    for (long idx = 0; idx < g.nsites(); ++idx) {
      const Cplx* src = Fkk.ptr(idx);
      Cplx* dst = out.m.ptr(idx);
      for (int j = 0; j < rr; ++j) dst[j] += Cplx(0, 2.0) * src[j];
    }
  }
}

EndoField trace_free(const EndoField& e) {
  const int r = e.rank();
  EndoField out = e;
  for (long idx = 0; idx < e.m.nsites(); ++idx) {
    Cplx* p = out.m.ptr(idx);
    Cplx tr(0, 0);
    for (int j = 0; j < r; ++j) tr += p[j * r + j];
    tr /= static_cast<double>(r);
    for (int j = 0; j < r; ++j) p[j * r + j] -= tr;
  }
  return out;
}

ResidualNorms he_residual(const MetricField& H, const SiteMask& mask) {
  EndoField res = trace_free(lambda_F(H));
  ScalarField nrm = endo_norm(res, H);
  ResidualNorms out;
  double l2 = 0;
  for (long idx : mask.interior) {
    out.sup = std::max(out.sup, nrm[idx]);
    l2 += nrm[idx] * nrm[idx] * H.grid().site_weight(idx);
  }
  out.l2 = std::sqrt(l2);
  return out;
}

ResidualNorms he_residual(const MetricField& H) { return he_residual(H, full_mask(H.grid())); }

// ----- logs and calculus -------------------------------------------------------

namespace {

struct SiteEig {
  Mat W, Wi, Q;
  Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, 4, 1> lam;
};

// Similar-Hermitian eigensystem of an H0-self-adjoint endomorphism:
// X = W b W^{-1} with W = H0^{1/2} is Hermitian; returns its defect.
double site_eig(const Mat& H0, const Mat& b, SiteEig& se) {
  se.W = herm_sqrt(hermitize(H0));
  se.Wi = se.W.inverse();
  Mat X = se.W * b * se.Wi;
  double defect = frob_norm(Mat(X - X.adjoint())) / std::max(1.0, frob_norm(X));
  Eigen::SelfAdjointEigenSolver<Mat> es(hermitize(X));
  se.Q = es.eigenvectors();
  se.lam = es.eigenvalues();
  return defect;
}

}  // namespace

EndoField metric_log(const MetricField& H0, const MetricField& H1) {
  if (H0.spec != H1.spec) throw ShapeError("metric_log: bundle mismatch");
  const Grid& g = H0.grid();
  const int r = H0.rank();
  EndoField s = EndoField::zero(*H0.spec);
  for (long idx = 0; idx < g.nsites(); ++idx) {
    Mat h0 = hermitize(H0.m.get(idx));
    Mat h1 = hermitize(H1.m.get(idx));
    Mat w = herm_sqrt(h0);
    Mat wi = w.inverse();
    Mat btil = hermitize(Mat(wi * h1 * wi));
    Eigen::SelfAdjointEigenSolver<Mat> es(btil);
    Vec d(r);
    for (int i = 0; i < r; ++i) {
      double lam = es.eigenvalues()(i);
      if (lam <= 0) throw PositivityError("metric_log: nonpositive relative spectrum");
      d(i) = std::log(lam);
    }
    Mat logb = es.eigenvectors() * d.asDiagonal() * es.eigenvectors().adjoint();
    s.m.set(idx, Mat(wi * logb * w));
  }
  return s;
}

double self_adjointness_defect(const EndoField& b, const MetricField& H0) {
  double d = 0;
  SiteEig se;
  for (long idx = 0; idx < b.m.nsites(); ++idx)
    d = std::max(d, site_eig(H0.m.get(idx), b.m.get(idx), se));
  return d;
}

EndoField functional_calculus(const EndoField& b, const std::function<double(double)>& f,
                              const MetricField& H0) {
  const int r = b.rank();
  EndoField out = EndoField::zero(*b.spec);
  SiteEig se;
  for (long idx = 0; idx < b.m.nsites(); ++idx) {
    double defect = site_eig(H0.m.get(idx), b.m.get(idx), se);
    if (defect > 1e-8) throw SymmetryError("functional_calculus: b is not self-adjoint");
    Vec d(r);
    for (int i = 0; i < r; ++i) d(i) = f(se.lam(i));
    Mat fb = se.Q * d.asDiagonal() * se.Q.adjoint();
    out.m.set(idx, Mat(se.Wi * fb * se.W));
  }
  return out;
}

EndoField endo_calculus(const EndoField& b, const std::function<double(double, double)>& Phi,
                        const EndoField& target, const MetricField& H0) {
  const int r = b.rank();
  EndoField out = EndoField::zero(*b.spec);
  SiteEig se;
  for (long idx = 0; idx < b.m.nsites(); ++idx) {
    double defect = site_eig(H0.m.get(idx), b.m.get(idx), se);
    if (defect > 1e-8) throw SymmetryError("endo_calculus: b is not self-adjoint");
    Mat u = target.m.get(idx);
    Mat ut = se.Q.adjoint() * se.W * u * se.Wi * se.Q;
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < r; ++j) ut(i, j) *= Phi(se.lam(i), se.lam(j));
    out.m.set(idx, Mat(se.Wi * se.Q * ut * se.Q.adjoint() * se.W));
  }
  return out;
}

// ----- norms --------------------------------------------------------------------

ScalarField endo_norm(const EndoField& e, const MetricField& H) {
  const Grid& g = e.grid();
  ScalarField out(g);
  for (long idx = 0; idx < g.nsites(); ++idx) {
    Mat h = H.m.get(idx);
    Mat x = e.m.get(idx);
    Mat adj = h.inverse() * x.adjoint() * h;
    double n2 = std::real((x * adj).trace());
    out[idx] = std::sqrt(std::max(0.0, n2));
  }
  return out;
}

ScalarField form_norm_sq(const FormField11& F, const MetricField& H) {
  const Grid& g = F.grid();
  const int n = F.npairs();
  ScalarField out(g);
  for (long idx = 0; idx < g.nsites(); ++idx) {
    Mat h = H.m.get(idx);
    Mat hinv = h.inverse();
    double acc = 0;
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        const MatrixField& c = F.at(a, b);
        if (c.raw().empty()) continue;
        Mat x = c.get(idx);
        acc += 4.0 * std::real((x * Mat(hinv * x.adjoint() * h)).trace());
      }
    out[idx] = acc;
  }
  return out;
}

MutualBounds mutual_boundedness(const MetricField& H0, const MetricField& H1) {
  MutualBounds out;
  const Grid& g = H0.grid();
  const int r = H0.rank();
  for (long idx = 0; idx < g.nsites(); ++idx) {
    Mat h0 = hermitize(H0.m.get(idx));
    Mat h1 = hermitize(H1.m.get(idx));
    Mat wi = herm_inv_sqrt(h0);
    Eigen::SelfAdjointEigenSolver<Mat> es(hermitize(Mat(wi * h1 * wi)));
    double s2 = 0, b2 = 0, bi2 = 0;
    for (int i = 0; i < r; ++i) {
      double lam = es.eigenvalues()(i);
      if (lam <= 0) throw PositivityError("mutual_boundedness: nonpositive relative spectrum");
      double ls = std::log(lam);
      s2 += ls * ls;
      b2 += lam * lam;
      bi2 += 1.0 / (lam * lam);
    }
    out.sup_s = std::max(out.sup_s, std::sqrt(s2));
    out.sup_b = std::max(out.sup_b, std::sqrt(b2));
    out.sup_binv = std::max(out.sup_binv, std::sqrt(bi2));
  }
  return out;
}

double endo_wrap_defect(const EndoField& e) {
  const Grid& g = e.spec->grid();
  double defect = 0;
  for (int k = 0; k < g.dim(); ++k) {
    if (g.axis(k).rule != AxisRule::Twisted || !e.spec->has_twist(k)) continue;
    const AxisTwist& tw = e.spec->twist(k);
    const int n = g.axis(k).points;
    const long st = g.stride(k);
    for (long idx = 0; idx < g.nsites(); ++idx) {
      if (g.coord_index(idx, k) != n - 1) continue;
      Mat f1 = e.m.get(idx), f2 = e.m.get(idx - st), f3 = e.m.get(idx - 2 * st),
          f4 = e.m.get(idx - 3 * st);
      Mat ext = 4.0 * f1 - 6.0 * f2 + 4.0 * f3 - f4;
      long base = idx - static_cast<long>(n - 1) * st;
      Mat wrapped = tw.Tinv.get(base) * e.m.get(base) * tw.T.get(base);
      defect = std::max(defect, frob_norm(Mat(ext - wrapped)) / std::max(1.0, frob_norm(wrapped)));
    }
  }
  return defect;
}

MetricField scaled_metric(const MetricField& H, double c) {
  if (!(c > 0)) throw PositivityError("scaled_metric: scale must be positive");
  MetricField out = H;
  for (auto& z : out.m.raw()) z *= c;
  return out;
}

MetricField metric_exp(const MetricField& H0, const EndoField& s) {
  const Grid& g = H0.grid();
  const int r = H0.rank();
  MetricField out = H0;
  for (long idx = 0; idx < g.nsites(); ++idx) {
    Mat h0 = hermitize(H0.m.get(idx));
    Mat w = herm_sqrt(h0);
    Mat wi = w.inverse();
    Mat x = hermitize(Mat(w * s.m.get(idx) * wi));
    Eigen::SelfAdjointEigenSolver<Mat> es(x);
    Vec d(r);
    for (int i = 0; i < r; ++i) d(i) = std::exp(es.eigenvalues()(i));
    Mat ex = es.eigenvectors() * d.asDiagonal() * es.eigenvectors().adjoint();
    out.m.set(idx, Mat(w * ex * w));
  }
  return out;
}

std::vector<MatrixField> dbar_endo(const EndoField& e) {
  const Grid& g = e.grid();
  const int npair = g.complex_dim();
  const int r = e.rank();
  const int rr = r * r;
  PaddedField ep(g, r, 2);
  ep.fill(e.m, e.spec, Transport::Endo);
  PaddedField d(g, r, 2);
  std::vector<MatrixField> out(static_cast<size_t>(npair));
  for (int a = 0; a < npair; ++a) {
    const ComplexPair& pr = g.pairs()[static_cast<size_t>(a)];
    out[static_cast<size_t>(a)] = MatrixField(g, r);
    MatrixField& res = out[static_cast<size_t>(a)];
    for (int part = 0; part < 2; ++part) {
      int k = part == 0 ? pr.re_axis : pr.im_axis;
      if (k < 0) continue;
      Cplx coef = part == 0 ? Cplx(0.5, 0) : Cplx(0, 0.5);
      diff_axis(g, ep, k, 0, d);
      std::vector<int> mi(static_cast<size_t>(g.dim()), 0);
      for (long idx = 0; idx < g.nsites(); ++idx) {
        const Cplx* src = d.ptr(d.pindex(mi));
        Cplx* dst = res.ptr(idx);
        for (int j = 0; j < rr; ++j) dst[j] += coef * src[j];
        for (int q = g.dim() - 1; q >= 0; --q) {
          if (++mi[static_cast<size_t>(q)] < g.axis(q).points) break;
          mi[static_cast<size_t>(q)] = 0;
        }
      }
    }
  }
  return out;
}

}  // namespace helab
