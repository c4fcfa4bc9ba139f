#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "helab/bundle.hpp"
#include "helab/functional.hpp"

namespace helab {

enum class FlowScheme { ExplicitEuler, Heun };

struct FlowConfig {
  double dt = -1.0;  // <= 0 selects the auto step 0.2 h_min^2 / (2 n)
  long max_steps = 20000;
  double residual_tol = 1e-6;
  FlowScheme scheme = FlowScheme::ExplicitEuler;
  bool det_projection = true;
  int record_every = 10;
  int confirm_steps = 100;  // stationarity watch after hitting the tolerance
};

double auto_time_step(const Grid& g);
// Largest stable explicit step for the linearized flow, times the safety
// factor (the auto step above is ~19x below this on anisotropic grids).
double cfl_limit(const Grid& g, double safety = 0.8);

struct FlowReport {
  std::vector<double> times;
  std::vector<double> res_sup;
  std::vector<double> res_l2;
  std::vector<double> M_h0;       // Donaldson functional against the initial metric
  std::vector<double> det_drift;  // max relative drift of det against the reference
  std::vector<double> F_sup;      // sup over sites of Tr b + Tr b^{-1} - 2r
  std::vector<double> s_sup;      // sup |log(H0^{-1} H_t)|
  long steps = 0;
  bool converged = false;
  bool no_stationary = false;
  double wall_seconds = 0;
  double initial_res_sup = 0;
  double final_res_sup = 0;
};

struct FlowWorkspace {
  FormField11 F;
  EndoField lam;
  detail::CurvatureScratch curv;
  MetricField pred;
  bool ready = false;
};

// One step of H' = H exp(-dt i Lambda F(H)^perp) on the mask interior;
// boundary and collar sites are left untouched. The generator is trace-free,
// so det is preserved up to roundoff; with det_projection the determinant is
// reset against ref each step.
void heat_step(MetricField& H, double dt, FlowScheme scheme, const SiteMask& mask,
               FlowWorkspace& ws, const MetricField* det_ref = nullptr);

// Runs the heat flow until the sup residual falls below residual_tol (then
// holds for confirm_steps) or max_steps is exhausted. Boundary sites are
// bit-identical to H0 throughout. Non-convergence is a flag, not an error.
std::pair<MetricField, FlowReport> dirichlet_solve(const MetricField& H0, const SiteMask& mask,
                                                   const FlowConfig& cfg,
                                                   const MetricField* det_ref = nullptr);

struct ExhaustionResult {
  std::vector<MetricField> metrics;
  std::vector<FlowReport> reports;
  std::vector<double> sup_s;             // per level, over that level's mask
  std::vector<double> consecutive_diff;  // sup over the smallest mask, levels i vs i+1
};

ExhaustionResult exhaustion_solve(const MetricField& H0, const ExhaustionFamily& family,
                                  const FlowConfig& cfg);

struct FlowDiagnostics {
  std::vector<double> energy_identity_rel_err;  // per recorded interval
  double F_loglog_slope = 0;                    // small-time exponent of F(b_t)
  int F_fit_points = 0;
  double secant0_ratio = 0;  // (M(t1)-M(0))/t1 over -int |Lambda F(h0)^perp|^2
};

// Post-processing of a recorded trajectory: dM/dt against -int |Lambda F|^2
// per interval, small-time F(b_t) exponent, and the t -> 0 secant.
FlowDiagnostics flow_diagnostics(const FlowReport& rep);

struct UniquenessResult {
  double distance = 0;
  FlowReport report_base;
  FlowReport report_perturbed;
};

// Flows H0 and H0 e^{s_pert} with identical boundary data and determinant
// reference; returns sup |metric_log| between the two limits. The
// perturbation must vanish on the mask boundary and (rank >= 2) be trace-free.
UniquenessResult uniqueness_probe(const MetricField& H0, const EndoField& s_pert,
                                  const SiteMask& mask, const FlowConfig& cfg);

// Band-limited real scalar field vanishing outside the mask interior; the
// building block for perturbations and random test metrics. Deterministic in
// the seed across platforms.
ScalarField random_window_field(const Grid& g, const SiteMask& mask, uint64_t seed, int modes);

}  // namespace helab
