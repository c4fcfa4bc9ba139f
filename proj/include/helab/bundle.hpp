#pragma once

#include <functional>
#include <map>
#include <vector>

#include "helab/field.hpp"
#include "helab/grid.hpp"

namespace helab {

// Transition data attached to one twisted axis. T is stored over the whole
// grid but is constant along its own axis; crossing the seam upward maps
// frames by (e_1..e_r) -> (e_1..e_r) T, so metric matrices pick up T^dagger
// (.) T and endomorphisms T^{-1} (.) T.
struct AxisTwist {
  MatrixField T;
  MatrixField Tinv;
  std::vector<Cplx> detT;
};

// Equivariant bundle data over a grid: rank plus a transition matrix field per
// twisted axis.
class BundleSpec {
 public:
  BundleSpec() = default;
  BundleSpec(const Grid& g, int rank);

  const Grid& grid() const { return *grid_; }
  int rank() const { return rank_; }

  void set_twist(int axis, MatrixField T);
  bool has_twist(int axis) const { return twists_.count(axis) > 0; }
  const AxisTwist& twist(int axis) const;

  struct Validation {
    double min_abs_det = 0;
    double max_condition = 0;
    double max_loop_defect = 0;  // up-then-down seam crossing vs identity
  };
  Validation validate() const;

 private:
  const Grid* grid_ = nullptr;
  int rank_ = 0;
  std::map<int, AxisTwist> twists_;
};

// Per-site positive-definite Hermitian matrix of the metric h in the
// holomorphic frame, with h(u,v) = v^dagger H u.
struct MetricField {
  const BundleSpec* spec = nullptr;
  MatrixField m;

  MetricField() = default;
  MetricField(const BundleSpec& s, MatrixField f) : spec(&s), m(std::move(f)) {}
  static MetricField identity(const BundleSpec& s) {
    return MetricField(s, MatrixField::identity(s.grid(), s.rank()));
  }
  const Grid& grid() const { return spec->grid(); }
  int rank() const { return spec->rank(); }

  double hermiticity_defect() const;
  double min_eigenvalue() const;
  double max_condition() const;
  // Defect of the twisted-seam continuation against one-sided extrapolation
  // from inside; O(h^3) for fields that are smooth sections of the bundle.
  double wrap_compatibility_defect() const;
};

struct EndoField {
  const BundleSpec* spec = nullptr;
  MatrixField m;

  EndoField() = default;
  EndoField(const BundleSpec& s, MatrixField f) : spec(&s), m(std::move(f)) {}
  static EndoField zero(const BundleSpec& s) {
    return EndoField(s, MatrixField(s.grid(), s.rank()));
  }
  const Grid& grid() const { return spec->grid(); }
  int rank() const { return spec->rank(); }
};

// (1,1)-form with End(E) values. Component (a,b) stores the coefficient of
//   dzbar_b ^ dz_a
// so that curvature components are plainly F_{a,bbar} = d_bbar(H^{-1} d_a H).
// With this ordering the contraction normalized by Lambda((i/2) dz^dzbar) = 1
// reads Lambda F = 2i sum_k F_{k,kbar}. (Equivalently, -2i times the
// components taken in dz_a ^ dzbar_b order.)
struct FormField11 {
  const BundleSpec* spec = nullptr;
  std::vector<MatrixField> comp;  // comp[a * n + b], n = complex_dim

  FormField11() = default;
  explicit FormField11(const BundleSpec& s);
  const Grid& grid() const { return spec->grid(); }
  int npairs() const { return spec->grid().complex_dim(); }
  MatrixField& at(int a, int b) { return comp[static_cast<size_t>(a * npairs() + b)]; }
  const MatrixField& at(int a, int b) const { return comp[static_cast<size_t>(a * npairs() + b)]; }
};

// ----- derivatives -----------------------------------------------------------

// (0,1)-derivative components of an endomorphism field: out[a] = d_{zbar_a} e.
// Uses the equivariant halo; one-sided 2nd-order stencils at Dirichlet edges.
std::vector<MatrixField> dbar_endo(const EndoField& e);

// ----- curvature and contraction ----------------------------------------------

// Chern curvature F_{a,bbar} = d_bbar(H^{-1} d_a H) built from staggered
// log-links L_k = log(H(x)^{-1} H(x+e_k)) / h_k: same-axis derivatives are
// compact staggered differences (exact on exponential families and free of
// odd-even decoupling), cross-axis ones centered differences of the link
// averages. Reduced directions contribute through the surviving half of the
// complex derivative (e.g. d_z = -(i/2) d_b when Re z is reduced).
FormField11 curvature(const MetricField& H);

EndoField lambda_contract(const FormField11& F);
EndoField lambda_F(const MetricField& H);
EndoField trace_free(const EndoField& e);

namespace detail {
// Reusable buffers for repeated curvature evaluations (heat flow hot path).
struct CurvatureScratch {
  PaddedField Hp, tmp;
  std::vector<PaddedField> L;     // log-link fields, one per axis
  std::vector<PaddedField> Aavg;  // site-centered averages of L
  bool ready = false;
};
void curvature_compute(const MetricField& H, bool diag_only, FormField11& out,
                       CurvatureScratch& ws);
}  // namespace detail

// Workspace variant: writes the diagonal curvature components into F and
// Lambda F into out without reallocating.
void lambda_F_into(const MetricField& H, FormField11& F, EndoField& out,
                   detail::CurvatureScratch& ws);

struct ResidualNorms {
  double sup = 0;
  double l2 = 0;
};
// Norms of the trace-free part of Lambda F(H) over the mask interior.
ResidualNorms he_residual(const MetricField& H, const SiteMask& mask);
ResidualNorms he_residual(const MetricField& H);

// ----- logarithms and functional calculus -------------------------------------

// s with H1 = H0 exp(s), self-adjoint w.r.t. both; Tr s = log det(H0^{-1} H1).
EndoField metric_log(const MetricField& H0, const MetricField& H1);

// f applied to the eigenvalues of an H0-self-adjoint b.
EndoField functional_calculus(const EndoField& b, const std::function<double(double)>& f,
                              const MetricField& H0);

// Two-variable calculus: in the H0-orthonormal eigenbasis of b, the (i,j)
// entry of target is scaled by Phi(lambda_i, lambda_j).
EndoField endo_calculus(const EndoField& b, const std::function<double(double, double)>& Phi,
                        const EndoField& target, const MetricField& H0);

// Verifies b is H0-self-adjoint to tol (throws SymmetryError otherwise) and
// returns the per-site similar Hermitian matrix machinery used by the
// calculus ops.
double self_adjointness_defect(const EndoField& b, const MetricField& H0);

// ----- norms -------------------------------------------------------------------

// Pointwise |e|_h with |e|^2 = Tr(e e^{dagger_h}), e^{dagger_h} = H^{-1} e^dagger H.
ScalarField endo_norm(const EndoField& e, const MetricField& H);
// Form-index weights: each (0,1) or (1,0) index contributes a factor 2 to the
// squared norm, a (1,1) index pair a factor 4 (orthonormal complex co-frames
// of the flat metric).
ScalarField form_norm_sq(const FormField11& F, const MetricField& H);

struct MutualBounds {
  double sup_s = 0;
  double sup_b = 0;
  double sup_binv = 0;
};
MutualBounds mutual_boundedness(const MetricField& H0, const MetricField& H1);

// Extrapolation-based seam smoothness defect for endomorphism fields
// (O(h^3) for smooth equivariant sections).
double endo_wrap_defect(const EndoField& e);

// Scaled copy H -> c H (c > 0) and H0 exp(s) assembly.
MetricField scaled_metric(const MetricField& H, double c);
MetricField metric_exp(const MetricField& H0, const EndoField& s);

}  // namespace helab
