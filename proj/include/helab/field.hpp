#pragma once

#include <complex>
#include <vector>

#include <Eigen/Dense>

#include "helab/grid.hpp"

namespace helab {

using Cplx = std::complex<double>;
// Per-site matrices are small (rank <= 4); fixed-capacity avoids heap churn.
using Mat = Eigen::Matrix<Cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, 4, 4>;
using Vec = Eigen::Matrix<Cplx, Eigen::Dynamic, 1, Eigen::ColMajor, 4, 1>;

// Per-site r x r complex matrix field, column-major within a site.
class MatrixField {
 public:
  MatrixField() = default;
  MatrixField(const Grid& g, int rank);
  static MatrixField identity(const Grid& g, int rank);

  const Grid& grid() const { return *grid_; }
  int rank() const { return rank_; }
  long nsites() const { return grid_->nsites(); }

  Mat get(long idx) const;
  void set(long idx, const Mat& m);
  Cplx* ptr(long idx) { return data_.data() + static_cast<size_t>(idx) * rank_ * rank_; }
  const Cplx* ptr(long idx) const { return data_.data() + static_cast<size_t>(idx) * rank_ * rank_; }
  std::vector<Cplx>& raw() { return data_; }
  const std::vector<Cplx>& raw() const { return data_; }

 private:
  const Grid* grid_ = nullptr;
  int rank_ = 0;
  std::vector<Cplx> data_;
};

// How a field transforms when a stencil crosses the seam of a twisted axis.
//   ScalarLike : plain copy              (scalars, curvature-form scalars)
//   Metric     : H  ->  T^dagger H T     (metric matrices)
//   Endo       : e  ->  T^{-1} e T       (endomorphisms, incl. form components)
enum class Transport { ScalarLike, Metric, Endo };

class BundleSpec;  // defined in bundle.hpp

// Matrix field sampled on an index box extended by a halo on wrapping axes.
// Halo values are the smooth cover continuation: plain copies on periodic
// axes, transition-transported values on twisted axes. Dirichlet axes get no
// halo; derivative code falls back to one-sided stencils there.
class PaddedField {
 public:
  PaddedField() = default;
  // Allocates storage; fill() populates fundamental + halo values.
  PaddedField(const Grid& g, int rank, int halo);

  void fill(const MatrixField& f, const BundleSpec* spec, Transport tr);

  const Grid& grid() const { return *grid_; }
  int rank() const { return rank_; }
  int halo() const { return halo_; }
  int halo_of(int axis) const { return halo_per_axis_[static_cast<size_t>(axis)]; }
  long pstride(int axis) const { return pstrides_[static_cast<size_t>(axis)]; }

  // Padded linear index from fundamental-domain coordinates (may be out of
  // range by up to the axis halo).
  long pindex(const std::vector<int>& mi) const;
  Cplx* ptr(long pidx) { return data_.data() + static_cast<size_t>(pidx) * rank_ * rank_; }
  const Cplx* ptr(long pidx) const { return data_.data() + static_cast<size_t>(pidx) * rank_ * rank_; }
  Mat get(long pidx) const;
  void set(long pidx, const Mat& m);
  std::vector<Cplx>& raw() { return data_; }
  const std::vector<Cplx>& raw() const { return data_; }

 private:
  void apply_crossing(Transport tr, const struct AxisTwist* tw, const std::vector<int>& src_mi,
                      int direction, const Cplx* src, Cplx* dst);

  const Grid* grid_ = nullptr;
  int rank_ = 0;
  int halo_ = 0;
  std::vector<int> halo_per_axis_;
  std::vector<int> pdims_;
  std::vector<long> pstrides_;
  std::vector<Cplx> data_;
};

// ----- small-matrix helpers --------------------------------------------------

// Hermitian part (A + A^dagger)/2.
Mat hermitize(const Mat& a);
// Principal square root / inverse square root of a Hermitian positive matrix.
Mat herm_sqrt(const Mat& a);
Mat herm_inv_sqrt(const Mat& a);
// f applied to a Hermitian matrix through its eigendecomposition.
Mat herm_apply(const Mat& a, double (*f)(double));
// exp(M) for trace-free M (Cayley-Hamilton closed form for r=2).
Mat expm_tracefree(const Mat& m);

double frob_norm(const Mat& m);

}  // namespace helab
