#pragma once

#include <complex>
#include <string>
#include <vector>

#include "helab/bundle.hpp"
#include "helab/functional.hpp"

namespace helab {

enum class Verdict { Stable, SemistableBoundary, Destabilized };
const char* to_string(Verdict v);

struct StabilityVerdict {
  double sub_slope = 0;
  double total_slope = 0;
  double margin = 0;
  Verdict verdict = Verdict::SemistableBoundary;
  std::string source;  // "chern-weil" or "monodromy"
};

// Strict slope comparison with a numeric margin (discrete degrees carry
// O(h^2) noise).
StabilityVerdict slope_compare(double sub_deg, int sub_rank, double total_deg, int total_rank,
                               double margin);

// Roots of T^2 - (w + 1/w) T + (1 - a^2); beta1 is the root closer to w
// (matching the large-|w| branch beta1 ~ w).
std::pair<Cplx, Cplx> monodromy_roots(Cplx a, Cplx w);

struct ObstructionResult {
  bool multivalued = false;
  std::vector<Cplx> discriminant_roots;  // zeros of w^4 + (4a^2-2) w^2 + 1
  double min_root_separation = 0;
};

// Single-valuedness obstruction for the monodromy eigenvalues: all roots of
// the discriminant quartic are simple iff a^2 (a^2 - 1) != 0, and then no
// proper equivariant holomorphic subbundle exists.
ObstructionResult eigen_subbundle_obstruction(Cplx a);

// Chern-Weil verdicts for a list of projector candidates against the total
// slope. Per-candidate failures are collected, not fatal.
struct ScanEntry {
  StabilityVerdict verdict;
  SubDegreeValue subdegree;
  bool failed = false;
  std::string error;
};
std::vector<ScanEntry> chern_weil_stability_scan(const MetricField& H,
                                                 const std::vector<EndoField>& candidates,
                                                 const SiteMask& mask, double margin);

}  // namespace helab
