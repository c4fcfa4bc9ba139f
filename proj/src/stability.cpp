#include "helab/stability.hpp"

#include <algorithm>
#include <cmath>

namespace helab {

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::Stable: return "stable";
    case Verdict::SemistableBoundary: return "semistable-boundary";
    case Verdict::Destabilized: return "destabilized";
  }
  return "?";
}

StabilityVerdict slope_compare(double sub_deg, int sub_rank, double total_deg, int total_rank,
                               double margin) {
  if (sub_rank <= 0 || sub_rank >= total_rank)
    throw InvalidInputError("slope_compare: need 0 < sub rank < total rank");
  StabilityVerdict v;
  v.sub_slope = sub_deg / sub_rank;
  v.total_slope = total_deg / total_rank;
  v.margin = margin;
  v.source = "chern-weil";
  double gap = v.total_slope - v.sub_slope;
  if (gap > margin)
    v.verdict = Verdict::Stable;
  else if (gap < -margin)
    v.verdict = Verdict::Destabilized;
  else
    v.verdict = Verdict::SemistableBoundary;
  return v;
}

std::pair<Cplx, Cplx> monodromy_roots(Cplx a, Cplx w) {
  if (std::abs(w) == 0.0) throw InvalidInputError("monodromy_roots: w must be nonzero");
  Cplx q = w + 1.0 / w;
  Cplx c = 1.0 - a * a;
  Cplx d = std::sqrt(q * q - 4.0 * c);
  // pick the non-cancelling branch, then recover the other root by Vieta
  Cplx r1 = (std::abs(q + d) >= std::abs(q - d)) ? 0.5 * (q + d) : 0.5 * (q - d);
  Cplx r2 = (std::abs(r1) > 0) ? c / r1 : 0.5 * (q - d);
  if (std::abs(r1 - w) <= std::abs(r2 - w)) return {r1, r2};
  return {r2, r1};
}

ObstructionResult eigen_subbundle_obstruction(Cplx a) {
  ObstructionResult out;
  // companion matrix of w^4 + (4a^2 - 2) w^2 + 1
  Eigen::Matrix<Cplx, 4, 4> comp = Eigen::Matrix<Cplx, 4, 4>::Zero();
  comp(1, 0) = 1;
  comp(2, 1) = 1;
  comp(3, 2) = 1;
  comp(0, 3) = -1.0;                    // -constant coefficient
  comp(2, 3) = -(4.0 * a * a - 2.0);    // -w^2 coefficient
  Eigen::ComplexEigenSolver<Eigen::Matrix<Cplx, 4, 4>> es(comp);
  for (int i = 0; i < 4; ++i) out.discriminant_roots.push_back(es.eigenvalues()(i));
  double sep = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j)
      sep = std::min(sep, std::abs(out.discriminant_roots[static_cast<size_t>(i)] -
                                   out.discriminant_roots[static_cast<size_t>(j)]));
  out.min_root_separation = sep;
  out.multivalued = sep > 1e-6;
  return out;
}

std::vector<ScanEntry> chern_weil_stability_scan(const MetricField& H,
                                                 const std::vector<EndoField>& candidates,
                                                 const SiteMask& mask, double margin) {
  std::vector<ScanEntry> out;
  DegreeValue total = degree(H, mask);
  const int r = H.rank();
  for (const EndoField& pi : candidates) {
    ScanEntry e;
    try {
      e.subdegree = chern_weil_subdegree(H, pi, mask);
      // candidate rank from the average trace (projector spectrum is {0,1})
      double tr_avg = 0;
      for (long idx : mask.interior) tr_avg += std::real(pi.m.get(idx).trace());
      tr_avg /= static_cast<double>(mask.interior.size());
      int sub_rank = std::clamp(static_cast<int>(std::lround(tr_avg)), 1, r - 1);
      e.verdict = slope_compare(e.subdegree.value, sub_rank, total.degree, r, margin);
    } catch (const Error& err) {
      e.failed = true;
      e.error = err.what();
    }
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace helab
