#include "helab/flow.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace helab {

double auto_time_step(const Grid& g) {
  double hmin = std::numeric_limits<double>::infinity();
  for (const auto& a : g.axes()) hmin = std::min(hmin, a.spacing());
  return 0.2 * hmin * hmin / (2.0 * g.complex_dim());
}

double cfl_limit(const Grid& g, double safety) {
  double s = 0;
  for (const auto& a : g.axes()) s += 1.0 / (a.spacing() * a.spacing());
  return safety / s;
}

namespace {

// H <- H exp(-i dt lam^perp) at one site, raw column-major storage.
void apply_generator_r2(Cplx* h, const Cplx* lam, double dt) {
  Cplx tr = 0.5 * (lam[0] + lam[3]);
  Cplx g00 = Cplx(0, -dt) * (lam[0] - tr);
  Cplx g10 = Cplx(0, -dt) * lam[1];
  Cplx g01 = Cplx(0, -dt) * lam[2];
  Cplx mu2 = g00 * g00 + g01 * g10;
  Cplx mu = std::sqrt(mu2);
  Cplx ch, shc;
  if (std::abs(mu) < 1e-8) {
    ch = 1.0 + mu2 * 0.5 + mu2 * mu2 / 24.0;
    shc = 1.0 + mu2 / 6.0 + mu2 * mu2 / 120.0;
  } else {
    ch = std::cosh(mu);
    shc = std::sinh(mu) / mu;
  }
  Cplx e00 = ch + shc * g00, e10 = shc * g10, e01 = shc * g01, e11 = ch - shc * g00;
  Cplx h00 = h[0], h10 = h[1], h01 = h[2], h11 = h[3];
  h[0] = h00 * e00 + h01 * e10;
  h[1] = h10 * e00 + h11 * e10;
  h[2] = h00 * e01 + h01 * e11;
  h[3] = h10 * e01 + h11 * e11;
}

void apply_generator_generic(int r, Cplx* h, const Cplx* lam, double dt) {
  Mat L(r, r);
  for (int j = 0; j < r * r; ++j) L.data()[j] = lam[j];
  Cplx tr = L.trace() / static_cast<double>(r);
  for (int j = 0; j < r; ++j) L(j, j) -= tr;
  Mat G = Cplx(0, -dt) * L;
  Mat E = expm_tracefree(G);
  Mat H(r, r);
  for (int j = 0; j < r * r; ++j) H.data()[j] = h[j];
  Mat out = H * E;
  for (int j = 0; j < r * r; ++j) h[j] = out.data()[j];
}

void project_det_r2(Cplx* h, const Cplx* ref) {
  double det = std::real(h[0] * h[3] - h[2] * h[1]);
  double dref = std::real(ref[0] * ref[3] - ref[2] * ref[1]);
  if (!(det > 0) || !(dref > 0)) throw BlowUpError("determinant lost positivity");
  double c = std::sqrt(dref / det);
  for (int j = 0; j < 4; ++j) h[j] *= c;
}

void project_det_generic(int r, Cplx* h, const Cplx* ref) {
  Mat H(r, r), R(r, r);
  for (int j = 0; j < r * r; ++j) {
    H.data()[j] = h[j];
    R.data()[j] = ref[j];
  }
  double det = H.determinant().real();
  double dref = R.determinant().real();
  if (!(det > 0) || !(dref > 0)) throw BlowUpError("determinant lost positivity");
  double c = std::pow(dref / det, 1.0 / r);
  for (int j = 0; j < r * r; ++j) h[j] *= c;
}

void update_sites(MetricField& H, const EndoField& lam, double dt, const std::vector<long>& sites,
                  const MetricField* det_ref) {
  const int r = H.rank();
  for (long idx : sites) {
    // the trace-free generator vanishes identically in rank 1; only the
    // determinant projection acts there
    if (r == 2)
      apply_generator_r2(H.m.ptr(idx), lam.m.ptr(idx), dt);
    else if (r > 2)
      apply_generator_generic(r, H.m.ptr(idx), lam.m.ptr(idx), dt);
    if (det_ref) {
      if (r == 1) {
        double det = std::real(*H.m.ptr(idx));
        double dref = std::real(*det_ref->m.ptr(idx));
        if (!(det > 0) || !(dref > 0)) throw BlowUpError("determinant lost positivity");
        *H.m.ptr(idx) *= dref / det;
      } else if (r == 2) {
        project_det_r2(H.m.ptr(idx), det_ref->m.ptr(idx));
      } else {
        project_det_generic(r, H.m.ptr(idx), det_ref->m.ptr(idx));
      }
    }
  }
}

void ensure_workspace(FlowWorkspace& ws, const MetricField& H) {
  if (ws.ready) return;
  ws.F = FormField11(*H.spec);
  ws.lam = EndoField::zero(*H.spec);
  ws.pred = H;
  ws.ready = true;
}

// residual norms from an already computed Lambda F field
ResidualNorms residual_from_lam(const EndoField& lam, const MetricField& H, const SiteMask& mask) {
  const Grid& g = H.grid();
  const int r = H.rank();
  ResidualNorms out;
  double l2 = 0;
  for (long idx : mask.interior) {
    Mat e = lam.m.get(idx);
    Cplx tr = e.trace() / static_cast<double>(r);
    for (int j = 0; j < r; ++j) e(j, j) -= tr;
    Mat h = hermitize(H.m.get(idx));
    Mat adj = h.inverse() * e.adjoint() * h;
    double n2 = std::max(0.0, std::real((e * adj).trace()));
    out.sup = std::max(out.sup, std::sqrt(n2));
    l2 += n2 * g.site_weight(idx);
  }
  out.l2 = std::sqrt(l2);
  return out;
}

}  // namespace

void heat_step(MetricField& H, double dt, FlowScheme scheme, const SiteMask& mask,
               FlowWorkspace& ws, const MetricField* det_ref) {
  ensure_workspace(ws, H);
  if (H.rank() == 1) {
    if (det_ref) update_sites(H, ws.lam, dt, mask.interior, det_ref);
    return;
  }
  lambda_F_into(H, ws.F, ws.lam, ws.curv);
  if (scheme == FlowScheme::ExplicitEuler) {
    update_sites(H, ws.lam, dt, mask.interior, det_ref);
    return;
  }
  // Heun: average the generator between the state and the Euler predictor
  ws.pred.m.raw() = H.m.raw();
  ws.pred.spec = H.spec;
  update_sites(ws.pred, ws.lam, dt, mask.interior, nullptr);
  EndoField k1 = ws.lam;
  lambda_F_into(ws.pred, ws.F, ws.lam, ws.curv);
  const size_t n = k1.m.raw().size();
  for (size_t j = 0; j < n; ++j) ws.lam.m.raw()[j] = 0.5 * (ws.lam.m.raw()[j] + k1.m.raw()[j]);
  update_sites(H, ws.lam, dt, mask.interior, det_ref);
}

namespace {

double det_drift_max(const MetricField& H, const MetricField& ref, const SiteMask& mask) {
  double d = 0;
  const int r = H.rank();
  for (long idx : mask.interior) {
    double det, dref;
    if (r == 1) {
      det = std::real(*H.m.ptr(idx));
      dref = std::real(*ref.m.ptr(idx));
    } else if (r == 2) {
      const Cplx* p = H.m.ptr(idx);
      const Cplx* q = ref.m.ptr(idx);
      det = std::real(p[0] * p[3] - p[2] * p[1]);
      dref = std::real(q[0] * q[3] - q[2] * q[1]);
    } else {
      det = H.m.get(idx).determinant().real();
      dref = ref.m.get(idx).determinant().real();
    }
    d = std::max(d, std::fabs(det / dref - 1.0));
  }
  return d;
}

// sup_sites of F(b) = Tr b + Tr b^{-1} - 2r and of |s| = |log b|, b = H0^{-1} H
void b_statistics(const MetricField& H0, const MetricField& H, const SiteMask& mask, double& F_sup,
                  double& s_sup) {
  const int r = H0.rank();
  F_sup = 0;
  s_sup = 0;
  for (long idx : mask.interior) {
    Mat h0 = hermitize(H0.m.get(idx));
    Mat wi = herm_inv_sqrt(h0);
    Eigen::SelfAdjointEigenSolver<Mat> es(hermitize(Mat(wi * hermitize(H.m.get(idx)) * wi)));
    double f = -2.0 * r, s2 = 0;
    for (int i = 0; i < r; ++i) {
      double lam = es.eigenvalues()(i);
      if (lam <= 0) throw BlowUpError("relative spectrum lost positivity");
      f += lam + 1.0 / lam;
      double ls = std::log(lam);
      s2 += ls * ls;
    }
    F_sup = std::max(F_sup, f);
    s_sup = std::max(s_sup, std::sqrt(s2));
  }
}

}  // namespace

std::pair<MetricField, FlowReport> dirichlet_solve(const MetricField& H0, const SiteMask& mask,
                                                   const FlowConfig& cfg,
                                                   const MetricField* det_ref) {
  if (mask.boundary.empty()) throw InvalidGeometryError("dirichlet_solve: mask has empty boundary");
  const Grid& g = H0.grid();
  const MetricField& ref = det_ref ? *det_ref : H0;
  const double dt = cfg.dt > 0 ? cfg.dt : auto_time_step(g);
  auto t_start = std::chrono::steady_clock::now();

  MetricField H = H0;
  FlowWorkspace ws;
  FlowReport rep;

  if (cfg.det_projection) {
    ensure_workspace(ws, H);
    update_sites(H, ws.lam, 0.0, mask.interior, &ref);
  }

  auto record = [&](long step) {
    ResidualNorms res = he_residual(H, mask);
    rep.times.push_back(step * dt);
    rep.res_sup.push_back(res.sup);
    rep.res_l2.push_back(res.l2);
    FunctionalValue M = donaldson_M(H0, H, mask);
    rep.M_h0.push_back(M.total);
    rep.det_drift.push_back(det_drift_max(H, ref, mask));
    double F_sup, s_sup;
    b_statistics(H0, H, mask, F_sup, s_sup);
    rep.F_sup.push_back(F_sup);
    rep.s_sup.push_back(s_sup);
    return res;
  };

  ResidualNorms res0 = record(0);
  rep.initial_res_sup = res0.sup;
  rep.final_res_sup = res0.sup;
  if (res0.sup < cfg.residual_tol) {
    rep.converged = true;
    auto t_end = std::chrono::steady_clock::now();
    rep.wall_seconds = std::chrono::duration<double>(t_end - t_start).count();
    return {std::move(H), std::move(rep)};
  }

  bool confirming = false;
  int confirmed = 0;
  for (long step = 1; step <= cfg.max_steps; ++step) {
    heat_step(H, dt, cfg.scheme, mask, ws, cfg.det_projection ? &ref : nullptr);
    rep.steps = step;
    if (confirming) {
      ResidualNorms res = he_residual(H, mask);
      rep.final_res_sup = res.sup;
      if (res.sup >= cfg.residual_tol) {
        confirming = false;
      } else if (++confirmed >= cfg.confirm_steps) {
        record(step);
        rep.converged = true;
        break;
      }
      if (step % cfg.record_every == 0) record(step);
      continue;
    }
    if (step % cfg.record_every == 0 || step == cfg.max_steps) {
      ResidualNorms res = record(step);
      rep.final_res_sup = res.sup;
      if (!std::isfinite(res.sup)) throw BlowUpError("residual diverged");
      if (res.sup < cfg.residual_tol) {
        confirming = true;
        confirmed = 0;
      }
    }
  }
  rep.no_stationary = !rep.converged;
  auto t_end = std::chrono::steady_clock::now();
  rep.wall_seconds = std::chrono::duration<double>(t_end - t_start).count();
  return {std::move(H), std::move(rep)};
}

ExhaustionResult exhaustion_solve(const MetricField& H0, const ExhaustionFamily& family,
                                  const FlowConfig& cfg) {
  if (family.masks.size() < 2) throw InvalidInputError("exhaustion_solve: needs at least 2 levels");
  ExhaustionResult out;
  for (const SiteMask& mask : family.masks) {
    auto [H, rep] = dirichlet_solve(H0, mask, cfg);
    out.metrics.push_back(std::move(H));
    out.reports.push_back(std::move(rep));
  }
  // C0 monitor per level
  for (size_t i = 0; i < family.masks.size(); ++i) {
    EndoField s = metric_log(H0, out.metrics[i]);
    ScalarField n = endo_norm(s, H0);
    double sup = 0;
    for (long idx = 0; idx < family.grid->nsites(); ++idx)
      if (family.masks[i].contains(idx)) sup = std::max(sup, n[idx]);
    out.sup_s.push_back(sup);
  }
  // consecutive differences over the smallest mask
  for (size_t i = 0; i + 1 < out.metrics.size(); ++i) {
    EndoField d = metric_log(out.metrics[i], out.metrics[i + 1]);
    ScalarField n = endo_norm(d, out.metrics[i]);
    double sup = 0;
    for (long idx = 0; idx < family.grid->nsites(); ++idx)
      if (family.masks[0].contains(idx)) sup = std::max(sup, n[idx]);
    out.consecutive_diff.push_back(sup);
  }
  return out;
}

FlowDiagnostics flow_diagnostics(const FlowReport& rep) {
  if (rep.times.size() < 4)
    throw InsufficientDataError("flow_diagnostics: need at least 4 recorded snapshots");
  FlowDiagnostics out;
  for (size_t k = 0; k + 1 < rep.times.size(); ++k) {
    double dtk = rep.times[k + 1] - rep.times[k];
    if (dtk <= 0) continue;
    double lhs = (rep.M_h0[k + 1] - rep.M_h0[k]) / dtk;
    double i0 = rep.res_l2[k] * rep.res_l2[k];
    double i1 = rep.res_l2[k + 1] * rep.res_l2[k + 1];
    double rhs = -0.5 * (i0 + i1);
    double denom = std::max(std::fabs(rhs), 1e-300);
    out.energy_identity_rel_err.push_back(std::fabs(lhs - rhs) / denom);
  }
  // small-time exponent of F(b_t): log-log fit over the first decade
  double t1 = 0;
  for (size_t k = 0; k < rep.times.size(); ++k)
    if (rep.times[k] > 0) {
      t1 = rep.times[k];
      break;
    }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (size_t k = 0; k < rep.times.size(); ++k) {
    double t = rep.times[k], F = rep.F_sup[k];
    if (t <= 0 || t > 10.0 * t1) continue;
    if (F <= 1e-12) continue;
    double x = std::log(t), y = std::log(F);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++n;
  }
  out.F_fit_points = n;
  out.F_loglog_slope = n >= 2 ? (n * sxy - sx * sy) / (n * sxx - sx * sx) : 0.0;

  double dt0 = rep.times[1] - rep.times[0];
  double secant = (rep.M_h0[1] - rep.M_h0[0]) / dt0;
  double i0 = rep.res_l2[0] * rep.res_l2[0];
  out.secant0_ratio = i0 > 0 ? secant / (-i0) : 1.0;
  return out;
}

UniquenessResult uniqueness_probe(const MetricField& H0, const EndoField& s_pert,
                                  const SiteMask& mask, const FlowConfig& cfg) {
  const Grid& g = H0.grid();
  const int r = H0.rank();
  ScalarField n = endo_norm(s_pert, H0);
  double scale = 0;
  for (long idx = 0; idx < g.nsites(); ++idx) scale = std::max(scale, n[idx]);
  for (long idx : mask.boundary)
    if (n[idx] > 1e-12 * (1.0 + scale))
      throw InvalidInputError("uniqueness_probe: perturbation does not vanish on the boundary");
  if (r >= 2) {
    for (long idx = 0; idx < g.nsites(); ++idx) {
      Cplx tr = s_pert.m.get(idx).trace();
      if (std::abs(tr) > 1e-10 * (1.0 + scale))
        throw InvalidInputError("uniqueness_probe: perturbation is not trace-free");
    }
  }

  UniquenessResult out;
  auto [lim1, rep1] = dirichlet_solve(H0, mask, cfg, &H0);
  MetricField H0p = metric_exp(H0, s_pert);
  auto [lim2, rep2] = dirichlet_solve(H0p, mask, cfg, &H0);
  out.report_base = std::move(rep1);
  out.report_perturbed = std::move(rep2);

  EndoField d = metric_log(lim1, lim2);
  ScalarField dn = endo_norm(d, lim1);
  for (long idx = 0; idx < g.nsites(); ++idx)
    if (mask.contains(idx)) out.distance = std::max(out.distance, dn[idx]);
  return out;
}

ScalarField random_window_field(const Grid& g, const SiteMask& mask, uint64_t seed, int modes) {
  // splitmix64; avoids distribution differences across standard libraries
  auto next = [state = seed]() mutable {
    state += 0x9e3779b97f4a7c15ull;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  };
  auto uni = [&]() { return static_cast<double>(next() >> 11) * 0x1.0p-53; };

  // window along the first Dirichlet axis: sin^2 over the mask extent
  int dir_axis = -1;
  for (int k = 0; k < g.dim(); ++k)
    if (g.axis(k).rule == AxisRule::Dirichlet) {
      dir_axis = k;
      break;
    }
  double smin = 0, smax = 0;
  if (dir_axis >= 0) {
    smin = std::numeric_limits<double>::infinity();
    smax = -smin;
    for (long idx = 0; idx < g.nsites(); ++idx)
      if (mask.contains(idx)) {
        double c = g.coord(idx, dir_axis);
        smin = std::min(smin, c);
        smax = std::max(smax, c);
      }
  }

  struct Mode {
    std::vector<int> k;
    std::vector<double> phase;
    double amp;
  };
  std::vector<Mode> ms;
  for (int m = 0; m < modes; ++m) {
    Mode mo;
    for (int ax = 0; ax < g.dim(); ++ax) {
      mo.k.push_back(1 + static_cast<int>(uni() * 2.0));  // 1 or 2
      mo.phase.push_back(2.0 * M_PI * uni());
    }
    mo.amp = 2.0 * uni() - 1.0;
    ms.push_back(mo);
  }

  ScalarField f(g);
  for (long idx = 0; idx < g.nsites(); ++idx) {
    if (!mask.contains(idx)) continue;
    double acc = 0;
    for (const Mode& mo : ms) {
      double v = mo.amp;
      for (int ax = 0; ax < g.dim(); ++ax) {
        const Axis& a = g.axis(ax);
        double x = g.coord(idx, ax);
        if (a.rule == AxisRule::Dirichlet) {
          double u = (x - a.origin) / a.length;
          v *= std::sin(M_PI * mo.k[static_cast<size_t>(ax)] * u);
        } else {
          v *= std::cos(2.0 * M_PI * mo.k[static_cast<size_t>(ax)] * x / a.length +
                        mo.phase[static_cast<size_t>(ax)]);
        }
      }
      acc += v;
    }
    if (dir_axis >= 0 && smax > smin) {
      double u = (g.coord(idx, dir_axis) - smin) / (smax - smin);
      double w = std::sin(M_PI * u);
      acc *= w * w;
    }
    f[idx] = acc;
  }
  return f;
}

}  // namespace helab
