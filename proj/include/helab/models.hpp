#pragma once

#include <array>
#include <memory>

#include "helab/flow.hpp"
#include "helab/stability.hpp"

namespace helab {

// ----- rank-1 flat monopole line bundles ---------------------------------------

struct Rank1Monopole {
  std::unique_ptr<BundleSpec> spec;
  MetricField metric;
};

// Line bundle with twisted-axis transition alpha and metric |alpha|^{2 b / P}
// (P the torus period); unitary flat, curvature zero.
Rank1Monopole rank1_monopole(Cplx alpha, const Grid& g);

// ----- rank-2 doubly periodic monopole family ----------------------------------

struct Rank2ExampleParams {
  Cplx a;                   // admissible iff a^2 (a^2 - 1) != 0
  double c0 = 0, cinf = 0;  // end weights
  double S = 3;             // cylinder halfwidth
  double S1 = -1, S2 = -1;  // gluing band in |s|; defaults S/3, 2S/3
  std::array<int, 3> resolution = {16, 17, 16};
  double torus_period = 1.0;

  double band_lo() const { return S1 > 0 ? S1 : S / 3.0; }
  double band_hi() const { return S2 > 0 ? S2 : 2.0 * S / 3.0; }
  void validate() const;
};

// Transition [[w, a], [a, 1/w]] on the b-axis, w = e^{s + i theta};
// det transition 1 - a^2.
std::unique_ptr<BundleSpec> rank2_bundle(Cplx a, const Grid& g);

enum class EndSide { Zero, Infinity };

struct EndRoots {
  Cplx r1, r2;    // beta_i (infinity side) or gamma_i (zero side)
  Cplx delta;     // branch of the square root, -> 1 at the end
};
// Branch-safe evaluation of the root pair on the given end; throws BranchError
// outside the safe region.
EndRoots end_roots(Cplx a, Cplx w, EndSide side);

// Columns are the end frame vectors (a, r_i - w) in the (e1, e2) basis.
Mat end_frames(Cplx a, Cplx w, EndSide side);

// The glued initial metric: exact flat end metrics for |s| >= S2, an
// equivariant interior metric for |s| <= S1, log-geodesic interpolation with a
// quintic cutoff in between, then determinant projection onto the flat
// det-line metric |1-a^2|^{2 Im z}.
MetricField rank2_initial_metric(const Rank2ExampleParams& p, const BundleSpec& spec);

// Orthogonal projector field onto the dominant-root eigenline of the
// transition matrix; the natural (necessarily discontinuous somewhere)
// extension of the end subbundles, used by the stability scan.
EndoField dominant_eigenline_projector(const MetricField& H, Cplx a);

// Equivariant trace-free perturbation direction: windowed log-difference of
// two members of the initial-metric family.
EndoField rank2_perturbation(const Rank2ExampleParams& p, const BundleSpec& spec,
                             const MetricField& H0, const SiteMask& mask, uint64_t seed,
                             double sup_amplitude);

// ----- consolidated pipeline -----------------------------------------------------

struct Rank2PipelineOptions {
  FlowConfig flow;
  bool run_exhaustion = false;
  bool run_uniqueness = false;
  std::vector<double> exhaustion_levels;  // empty: {0.6 S, 0.8 S, S}
  double perturbation_amplitude = 0.3;
  uint64_t seed = 1;
};

struct Rank2PipelineResult {
  std::unique_ptr<Grid> grid;
  std::unique_ptr<BundleSpec> spec;
  MetricField initial_metric;
  MetricField limit_metric;
  ObstructionResult obstruction;
  BundleSpec::Validation bundle_validation;
  FlowReport flow_report;
  FlowDiagnostics diagnostics;
  CurvatureL2Value l2_before, l2_after;
  double residual_reduction = 0;
  bool has_exhaustion = false;
  ExhaustionResult exhaustion;
  bool has_uniqueness = false;
  double uniqueness_distance = 0;
};

Rank2PipelineResult run_rank2_pipeline(const Rank2ExampleParams& p,
                                       const Rank2PipelineOptions& opt);

// quintic smoothstep 6u^5 - 15u^4 + 10u^3 clamped to [0,1]
double smoothstep5(double u);

}  // namespace helab
