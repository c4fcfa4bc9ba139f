#include "helab/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "helab/analysis.hpp"
#include "helab/io.hpp"
#include "helab/models.hpp"

namespace helab {

namespace {

namespace fs = std::filesystem;

// --config JSON defaults; explicit flags win. CLI11 reads defaults before
// parsing, so we pre-load the file into each option's default value.
Json load_config_file(int argc, const char* const* argv) {
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--config") {
      std::ifstream in(argv[i + 1]);
      if (!in) throw IoError(std::string("cannot read config file ") + argv[i + 1]);
      return Json::parse(in);
    }
  }
  return Json::object();
}

template <typename T>
void config_default(const Json& cfg, const std::string& key, T& value) {
  if (cfg.contains(key)) value = cfg.at(key).get<T>();
}

FlowScheme scheme_from_string(const std::string& s) {
  if (s == "explicit-euler") return FlowScheme::ExplicitEuler;
  if (s == "heun") return FlowScheme::Heun;
  throw InvalidInputError("unknown scheme: " + s);
}

Json resolved_flow_config(const FlowConfig& c, const std::string& scheme) {
  return Json{{"dt", c.dt},
              {"max_steps", c.max_steps},
              {"residual_tol", c.residual_tol},
              {"scheme", scheme},
              {"det_projection", c.det_projection},
              {"record_every", c.record_every}};
}

struct CommonOut {
  std::string out_dir = ".";
  bool emit_timing = false;
};

void add_common(CLI::App* app, CommonOut& c) {
  app->add_option("--out", c.out_dir, "Output directory for report.json / series.csv");
  app->add_flag("--emit-timing", c.emit_timing,
                "Include wall-clock times in report.json (breaks byte determinism)");
  std::string dummy;
  app->add_option("--config", dummy, "JSON file with option defaults (flags win)");
}

void finish_report(const CommonOut& c, Json& report, const FlowReport* series) {
  fs::create_directories(c.out_dir);
  report["version"] = kVersion;
  write_report((fs::path(c.out_dir) / "report.json").string(), report);
  if (series) write_series_csv((fs::path(c.out_dir) / "series.csv").string(), *series);
}

int cmd_example_rank1(const Json& cfg, CLI::App* app, CommonOut& common, double& alpha_re,
                      double& alpha_im, double& S, int& res) {
  (void)cfg;
  (void)app;
  Grid g = build_monopole_domain(1.0, S, {res, res, res});
  Rank1Monopole model = rank1_monopole(Cplx(alpha_re, alpha_im), g);
  SiteMask mask = full_mask(g);

  FormField11 F = curvature(model.metric);
  double f_sup = 0;
  for (int a = 0; a < F.npairs(); ++a)
    for (int b = 0; b < F.npairs(); ++b)
      for (long idx : mask.interior) f_sup = std::max(f_sup, frob_norm(F.at(a, b).get(idx)));
  DegreeValue deg = degree(model.metric, mask);
  ResidualNorms res_n = he_residual(model.metric, mask);

  Json report;
  report["command"] = "example rank1";
  report["config"] = Json{{"alpha_re", alpha_re}, {"alpha_im", alpha_im}, {"S", S}, {"res", res}};
  report["curvature_sup"] = f_sup;
  report["degree"] = deg.degree;
  report["degree_imag"] = deg.imag_part;
  report["he_residual_final"] = res_n.sup;
  finish_report(common, report, nullptr);
  return 0;
}

struct Rank2Args {
  double a_re = 0.5, a_im = 0.0, c0 = 0.0, cinf = 0.0, S = 3.0, S1 = -1, S2 = -1;
  int res = 16;
  double dt = -1, tol = 1e-5;
  long steps = 20000;
  int record_every = 25;
  std::string scheme = "explicit-euler";
  bool exhaustion = false, uniqueness = false;
  std::vector<double> levels;
  uint64_t seed = 1;
};

int cmd_example_rank2(const Rank2Args& a, CommonOut& common) {
  Rank2ExampleParams p;
  p.a = Cplx(a.a_re, a.a_im);
  p.c0 = a.c0;
  p.cinf = a.cinf;
  p.S = a.S;
  p.S1 = a.S1;
  p.S2 = a.S2;
  p.resolution = {a.res, a.res, a.res};

  Rank2PipelineOptions opt;
  opt.flow.dt = a.dt;
  opt.flow.max_steps = a.steps;
  opt.flow.residual_tol = a.tol;
  opt.flow.scheme = scheme_from_string(a.scheme);
  opt.flow.record_every = a.record_every;
  opt.run_exhaustion = a.exhaustion;
  opt.run_uniqueness = a.uniqueness;
  opt.exhaustion_levels = a.levels;
  opt.seed = a.seed;

  Rank2PipelineResult r = run_rank2_pipeline(p, opt);

  Json report;
  report["command"] = "example rank2";
  report["config"] =
      Json{{"a_re", a.a_re}, {"a_im", a.a_im},       {"c0", a.c0},
           {"cinf", a.cinf}, {"S", a.S},             {"S1", p.band_lo()},
           {"S2", p.band_hi()}, {"res", a.res},      {"seed", a.seed},
           {"flow", resolved_flow_config(opt.flow, a.scheme)}};
  report["stability"] = Json{{"source", "monodromy"},
                             {"multivalued", r.obstruction.multivalued},
                             {"min_root_separation", r.obstruction.min_root_separation},
                             {"verdict", r.obstruction.multivalued ? "stable" : "not-stable"}};
  report["bundle"] = Json{{"min_abs_det_T", r.bundle_validation.min_abs_det},
                          {"max_condition_T", r.bundle_validation.max_condition},
                          {"max_loop_defect", r.bundle_validation.max_loop_defect}};
  report["flow"] = flow_report_to_json(r.flow_report, common.emit_timing);
  report["residual_reduction"] = r.residual_reduction;
  report["l2_invariant_before"] = r.l2_before.value;
  report["l2_invariant_after"] = r.l2_after.value;
  if (!r.diagnostics.energy_identity_rel_err.empty()) {
    double worst = 0;
    for (double e : r.diagnostics.energy_identity_rel_err) worst = std::max(worst, e);
    report["energy_identity_worst_rel_err"] = worst;
  }
  report["F_loglog_slope"] = r.diagnostics.F_loglog_slope;
  if (r.has_exhaustion) {
    report["exhaustion"] = Json{{"sup_s", r.exhaustion.sup_s},
                                {"consecutive_diff", r.exhaustion.consecutive_diff}};
  }
  if (r.has_uniqueness) report["uniqueness_distance"] = r.uniqueness_distance;
  finish_report(common, report, &r.flow_report);
  return (r.flow_report.no_stationary) ? 2 : 0;
}

int cmd_flow(const std::string& input, double dt, long steps, double tol,
             const std::string& scheme, int record_every, CommonOut& common) {
  FieldContainer c = load_metric(input);
  FlowConfig cfg;
  cfg.dt = dt;
  cfg.max_steps = steps;
  cfg.residual_tol = tol;
  cfg.scheme = scheme_from_string(scheme);
  cfg.record_every = record_every;
  SiteMask mask = full_mask(*c.grid);
  auto [H, rep] = dirichlet_solve(c.metric, mask, cfg);

  Json report;
  report["command"] = "flow";
  report["config"] = Json{{"input", input}, {"flow", resolved_flow_config(cfg, scheme)}};
  report["flow"] = flow_report_to_json(rep, common.emit_timing);
  finish_report(common, report, &rep);
  save_metric((fs::path(common.out_dir) / "final_field.json").string(), H);
  return rep.no_stationary ? 2 : 0;
}

int cmd_degree(const std::string& input, CommonOut& common) {
  FieldContainer c = load_metric(input);
  SiteMask mask = full_mask(*c.grid);
  DegreeValue d = degree(c.metric, mask);
  Json report;
  report["command"] = "degree";
  report["config"] = Json{{"input", input}};
  report["degree"] = d.degree;
  report["degree_imag"] = d.imag_part;
  report["slope"] = slope(d.degree, c.metric.rank());
  finish_report(common, report, nullptr);
  return 0;
}

int cmd_functional(const std::string& h1_path, const std::string& h2_path, CommonOut& common) {
  FieldContainer c1 = load_metric(h1_path);
  FieldContainer c2 = load_metric(h2_path);
  if (c1.metric.m.raw().size() != c2.metric.m.raw().size())
    throw InvalidInputError("functional: metrics live on different grids");
  MetricField h2(*c1.spec, c2.metric.m);
  SiteMask mask = full_mask(*c1.grid);
  FunctionalValue M = donaldson_M(c1.metric, h2, mask);
  Json report;
  report["command"] = "functional";
  report["config"] = Json{{"h1", h1_path}, {"h2", h2_path}};
  report["M"] = M.total;
  report["degree_term"] = M.degree_term;
  report["gradient_term"] = M.gradient_term;
  report["boundary_mismatch"] = M.boundary_mismatch;
  report["boundary_flagged"] = M.boundary_flagged;
  finish_report(common, report, nullptr);
  return 0;
}

int cmd_stability(double a_re, double a_im, int samples, uint64_t seed, CommonOut& common) {
  Cplx a(a_re, a_im);
  ObstructionResult obs = eigen_subbundle_obstruction(a);
  // root identity residuals over random w
  auto next = [state = seed]() mutable {
    state += 0x9e3779b97f4a7c15ull;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  };
  auto uni = [&]() { return static_cast<double>(next() >> 11) * 0x1.0p-53; };
  double worst_vieta = 0;
  for (int i = 0; i < samples; ++i) {
    double mod = 0.2 + 3.0 * uni();
    double arg = 2.0 * M_PI * uni();
    Cplx w = std::polar(mod, arg);
    auto [b1, b2] = monodromy_roots(a, w);
    worst_vieta = std::max(worst_vieta, std::abs(b1 * b2 - (1.0 - a * a)));
    worst_vieta = std::max(worst_vieta, std::abs(b1 + b2 - (w + 1.0 / w)));
  }
  Json report;
  report["command"] = "stability";
  report["config"] = Json{{"a_re", a_re}, {"a_im", a_im}, {"samples", samples}, {"seed", seed}};
  Json roots = Json::array();
  for (const Cplx& z : obs.discriminant_roots) roots.push_back(Json{z.real(), z.imag()});
  report["stability"] = Json{{"source", "monodromy"},
                             {"multivalued", obs.multivalued},
                             {"discriminant_roots", roots},
                             {"min_root_separation", obs.min_root_separation},
                             {"worst_vieta_residual", worst_vieta},
                             {"verdict", obs.multivalued ? "stable" : "not-stable"}};
  finish_report(common, report, nullptr);
  return 0;
}

int cmd_verify_assumption(const std::string& kind_s, double delta, std::vector<double> Bs,
                          double S, int res, CommonOut& common) {
  WeightKind kind;
  if (kind_s == "doubly-periodic")
    kind = WeightKind::DoublyPeriodic;
  else if (kind_s == "spatially-periodic")
    kind = WeightKind::SpatiallyPeriodic;
  else
    throw InvalidInputError("verify-assumption: unknown weight kind " + kind_s);
  if (Bs.empty()) Bs = {1.0, 2.0, 4.0};

  Grid g = build_monopole_domain(1.0, S, {res, res, res});
  WeightField phi = weight_field(kind, delta, g);

  Json fits = Json::array();
  double prev = -1;
  bool monotone = true;
  for (double B : Bs) {
    ScalarField rhs(g);
    for (long idx = 0; idx < g.nsites(); ++idx) rhs[idx] = B * phi.values[idx];
    ScalarField f(g);
    double rres = poisson_relax(f, rhs, g, 200000, 1e-10 * B);
    SupEstimateReport rep = sup_estimate_verify(f, phi, B, g);
    fits.push_back(Json{{"B", B},
                        {"sup_f", rep.sup_f},
                        {"integral_f_phi", rep.integral_f_phi},
                        {"fitted_C", rep.fitted_C},
                        {"precondition_ok", rep.precondition_ok},
                        {"relax_residual", rres}});
    if (prev >= 0 && rep.fitted_C < prev - 1e-12) monotone = false;
    prev = rep.fitted_C;
  }
  Json report;
  report["command"] = "verify-assumption";
  report["config"] =
      Json{{"kind", kind_s}, {"delta", delta}, {"B", Bs}, {"S", S}, {"res", res}};
  report["fits"] = fits;
  report["fitted_C_monotone_in_B"] = monotone;
  finish_report(common, report, nullptr);
  return 0;
}

}  // namespace

int parse_and_dispatch(int argc, const char* const* argv) {
  CLI::App app{"Hermitian-Einstein heat flow laboratory on doubly periodic monopole domains"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  Json cfg;
  try {
    cfg = load_config_file(argc, argv);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  CommonOut common;

  // example
  CLI::App* example = app.add_subcommand("example", "Built-in monopole constructions");
  example->require_subcommand(1);

  CLI::App* rank1 = example->add_subcommand("rank1", "Flat monopole line bundle");
  double alpha_re = 2.0, alpha_im = 0.0, r1_S = 3.0;
  int r1_res = 16;
  config_default(cfg, "alpha_re", alpha_re);
  config_default(cfg, "alpha_im", alpha_im);
  rank1->add_option("--alpha", alpha_re, "Transition scalar (real part)");
  rank1->add_option("--alpha-im", alpha_im, "Transition scalar (imaginary part)");
  rank1->add_option("--S", r1_S, "Cylinder halfwidth");
  rank1->add_option("--res", r1_res, "Points per axis");
  add_common(rank1, common);

  CLI::App* rank2 = example->add_subcommand("rank2", "Rank-2 doubly periodic monopole family");
  Rank2Args r2;
  config_default(cfg, "a", r2.a_re);
  config_default(cfg, "a_im", r2.a_im);
  config_default(cfg, "c0", r2.c0);
  config_default(cfg, "cinf", r2.cinf);
  config_default(cfg, "S", r2.S);
  config_default(cfg, "res", r2.res);
  rank2->add_option("--a", r2.a_re, "Gluing parameter a (real part)");
  rank2->add_option("--a-im", r2.a_im, "Gluing parameter a (imaginary part)");
  rank2->add_option("--c0", r2.c0, "End weight at w -> 0");
  rank2->add_option("--cinf", r2.cinf, "End weight at w -> infinity");
  rank2->add_option("--S", r2.S, "Cylinder halfwidth");
  rank2->add_option("--S1", r2.S1, "Inner gluing radius (default S/3)");
  rank2->add_option("--S2", r2.S2, "Outer gluing radius (default 2S/3)");
  rank2->add_option("--res", r2.res, "Points per axis");
  rank2->add_option("--dt", r2.dt, "Time step (<=0 selects auto)");
  rank2->add_option("--steps", r2.steps, "Maximum steps");
  rank2->add_option("--tol", r2.tol, "Residual tolerance (sup norm)");
  rank2->add_option("--scheme", r2.scheme, "explicit-euler | heun");
  rank2->add_option("--record-every", r2.record_every, "Recording cadence");
  rank2->add_flag("--exhaustion", r2.exhaustion, "Run the exhaustion sequence");
  rank2->add_flag("--uniqueness", r2.uniqueness, "Run the uniqueness probe");
  rank2->add_option("--levels", r2.levels, "Exhaustion levels in |s|");
  rank2->add_option("--seed", r2.seed, "Seed for randomized pieces");
  add_common(rank2, common);

  // flow
  CLI::App* flow = app.add_subcommand("flow", "Heat flow on a stored metric field");
  std::string flow_input;
  double flow_dt = -1, flow_tol = 1e-6;
  long flow_steps = 20000;
  int flow_record = 25;
  std::string flow_scheme = "explicit-euler";
  flow->add_option("--input", flow_input, "Field container")->required();
  flow->add_option("--dt", flow_dt, "Time step (<=0 selects auto)");
  flow->add_option("--steps", flow_steps, "Maximum steps");
  flow->add_option("--tol", flow_tol, "Residual tolerance");
  flow->add_option("--scheme", flow_scheme, "explicit-euler | heun");
  flow->add_option("--record-every", flow_record, "Recording cadence");
  add_common(flow, common);

  // degree
  CLI::App* deg = app.add_subcommand("degree", "Chern-Weil degree of a stored metric");
  std::string deg_input;
  deg->add_option("--input", deg_input, "Field container")->required();
  add_common(deg, common);

  // functional
  CLI::App* fun = app.add_subcommand("functional", "Donaldson functional between two metrics");
  std::string fun_h1, fun_h2;
  fun->add_option("--h1", fun_h1, "Base metric container")->required();
  fun->add_option("--h2", fun_h2, "Second metric container")->required();
  add_common(fun, common);

  // stability
  CLI::App* stab = app.add_subcommand("stability", "Monodromy stability obstruction");
  double st_a = 0.5, st_a_im = 0.0;
  int st_samples = 1000;
  uint64_t st_seed = 1;
  stab->add_option("--a", st_a, "Gluing parameter a (real part)");
  stab->add_option("--a-im", st_a_im, "Gluing parameter a (imaginary part)");
  stab->add_option("--samples", st_samples, "Random w samples for root identities");
  stab->add_option("--seed", st_seed, "Seed");
  add_common(stab, common);

  // verify-assumption
  CLI::App* verify = app.add_subcommand("verify-assumption", "Weighted sup-estimate suite");
  std::string va_kind = "spatially-periodic";
  double va_delta = 1.0, va_S = 3.0;
  int va_res = 16;
  std::vector<double> va_B;
  verify->add_option("--kind", va_kind, "doubly-periodic | spatially-periodic");
  verify->add_option("--delta", va_delta, "Weight decay parameter");
  verify->add_option("--B", va_B, "Subsolution bounds to test");
  verify->add_option("--S", va_S, "Cylinder halfwidth");
  verify->add_option("--res", va_res, "Points per axis");
  add_common(verify, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (rank1->parsed()) return cmd_example_rank1(cfg, rank1, common, alpha_re, alpha_im, r1_S, r1_res);
    if (rank2->parsed()) return cmd_example_rank2(r2, common);
    if (flow->parsed())
      return cmd_flow(flow_input, flow_dt, flow_steps, flow_tol, flow_scheme, flow_record, common);
    if (deg->parsed()) return cmd_degree(deg_input, common);
    if (fun->parsed()) return cmd_functional(fun_h1, fun_h2, common);
    if (stab->parsed()) return cmd_stability(st_a, st_a_im, st_samples, st_seed, common);
    if (verify->parsed())
      return cmd_verify_assumption(va_kind, va_delta, va_B, va_S, va_res, common);
  } catch (const BlowUpError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace helab
