#pragma once

#include "helab/bundle.hpp"

namespace helab {

// psi(x) = (e^x - x - 1) / x^2, the spectral kernel of the Donaldson
// functional's gradient term; series expansion near 0 avoids cancellation.
double donaldson_kernel(double x);

struct FunctionalValue {
  double total = 0;
  double degree_term = 0;
  double gradient_term = 0;
  double boundary_mismatch = 0;
  bool boundary_flagged = false;
};

// Donaldson functional
//   M(h1,h2) = Re i int Tr(s Lambda F(h1)) + int < Psi(s)(dbar s), dbar s >_h1
// with h2 = h1 e^s. The two metrics must agree on the mask boundary; a
// mismatch beyond 1e-8 flags the result (the value is still returned).
FunctionalValue donaldson_M(const MetricField& H1, const MetricField& H2, const SiteMask& mask);

struct DegreeValue {
  double degree = 0;
  double imag_part = 0;  // consistency diagnostic, should be ~0
};

// deg(E,h) = i int Tr Lambda F(h) over the mask interior.
DegreeValue degree(const MetricField& H, const SiteMask& mask);
double slope(double deg, int rank);

struct SubDegreeValue {
  double value = 0;
  double projector_term = 0;  // i int Tr(pi Lambda F)
  double dbar_term = 0;       // int |dbar pi|^2  (enters with minus sign)
  double projector_defect = 0;
  double wrap_defect = 0;
};

// Chern-Weil degree of the subbundle cut out by an h-orthogonal projector
// field: i int Tr(pi Lambda F(h)) - int |dbar pi|^2_{h,g}.
SubDegreeValue chern_weil_subdegree(const MetricField& H, const EndoField& pi, const SiteMask& mask);

struct CurvatureL2Value {
  double value = 0;
  double imag_part = 0;
};

// int Tr((F(h)^perp)^2) against the volume form; requires two complex
// dimensions. Equal for h0 and the flowed limit up to truncation effects.
CurvatureL2Value curvature_l2_invariant(const MetricField& H, const SiteMask& mask);

}  // namespace helab
