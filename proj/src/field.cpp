#include "helab/field.hpp"

#include "helab/bundle.hpp"

namespace helab {

MatrixField::MatrixField(const Grid& g, int rank)
    : grid_(&g), rank_(rank), data_(static_cast<size_t>(g.nsites()) * rank * rank, Cplx(0, 0)) {
  if (rank < 1 || rank > 4) throw ShapeError("matrix field rank out of range [1,4]");
}

MatrixField MatrixField::identity(const Grid& g, int rank) {
  MatrixField f(g, rank);
  for (long idx = 0; idx < g.nsites(); ++idx)
    for (int j = 0; j < rank; ++j) f.ptr(idx)[j * rank + j] = Cplx(1, 0);
  return f;
}

Mat MatrixField::get(long idx) const {
  Mat m(rank_, rank_);
  const Cplx* p = ptr(idx);
  for (int j = 0; j < rank_ * rank_; ++j) m.data()[j] = p[j];
  return m;
}

void MatrixField::set(long idx, const Mat& m) {
  Cplx* p = ptr(idx);
  for (int j = 0; j < rank_ * rank_; ++j) p[j] = m.data()[j];
}

PaddedField::PaddedField(const Grid& g, int rank, int halo)
    : grid_(&g), rank_(rank), halo_(halo) {
  const int d = g.dim();
  halo_per_axis_.resize(static_cast<size_t>(d));
  pdims_.resize(static_cast<size_t>(d));
  pstrides_.assign(static_cast<size_t>(d), 1);
  long n = 1;
  for (int k = d - 1; k >= 0; --k) {
    int h = g.axis(k).wraps() ? halo : 0;
    halo_per_axis_[static_cast<size_t>(k)] = h;
    pdims_[static_cast<size_t>(k)] = g.axis(k).points + 2 * h;
    pstrides_[static_cast<size_t>(k)] = n;
    n *= pdims_[static_cast<size_t>(k)];
  }
  data_.assign(static_cast<size_t>(n) * rank * rank, Cplx(0, 0));
}

long PaddedField::pindex(const std::vector<int>& mi) const {
  long idx = 0;
  for (int k = 0; k < grid_->dim(); ++k)
    idx += pstrides_[static_cast<size_t>(k)] *
           (mi[static_cast<size_t>(k)] + halo_per_axis_[static_cast<size_t>(k)]);
  return idx;
}

Mat PaddedField::get(long pidx) const {
  Mat m(rank_, rank_);
  const Cplx* p = ptr(pidx);
  for (int j = 0; j < rank_ * rank_; ++j) m.data()[j] = p[j];
  return m;
}

void PaddedField::set(long pidx, const Mat& m) {
  Cplx* p = ptr(pidx);
  for (int j = 0; j < rank_ * rank_; ++j) p[j] = m.data()[j];
}

namespace {

void sandwich(int r, const Cplx* a, const Cplx* x, const Cplx* b, Cplx* out) {
  // out = a * x * b, column-major r x r
  Cplx tmp[16];
  for (int j = 0; j < r; ++j)
    for (int i = 0; i < r; ++i) {
      Cplx acc(0, 0);
      for (int k = 0; k < r; ++k) acc += x[j * r + k] * a[k * r + i];
      tmp[j * r + i] = acc;
    }
  for (int j = 0; j < r; ++j)
    for (int i = 0; i < r; ++i) {
      Cplx acc(0, 0);
      for (int k = 0; k < r; ++k) acc += b[j * r + k] * tmp[k * r + i];
      out[j * r + i] = acc;
    }
}

void adjoint_of(int r, const Cplx* a, Cplx* out) {
  for (int j = 0; j < r; ++j)
    for (int i = 0; i < r; ++i) out[j * r + i] = std::conj(a[i * r + j]);
}

}  // namespace

void PaddedField::fill(const MatrixField& f, const BundleSpec* spec, Transport tr) {
  const Grid& g = *grid_;
  const int r = rank_;
  const int rr = r * r;
  if (f.rank() != r) throw ShapeError("padded fill: rank mismatch");

  // fundamental region
  std::vector<int> mi(static_cast<size_t>(g.dim()), 0);
  for (long idx = 0; idx < g.nsites(); ++idx) {
    long p = pindex(mi);
    const Cplx* src = f.ptr(idx);
    Cplx* dst = ptr(p);
    for (int j = 0; j < rr; ++j) dst[j] = src[j];
    for (int k = g.dim() - 1; k >= 0; --k) {
      if (++mi[static_cast<size_t>(k)] < g.axis(k).points) break;
      mi[static_cast<size_t>(k)] = 0;
    }
  }

  // halos, axis by axis; later axes may copy earlier-axis halo corners, so
  // expand the filled box progressively.
  std::vector<int> lo(static_cast<size_t>(g.dim()), 0), hi(static_cast<size_t>(g.dim()), 0);
  for (int k = 0; k < g.dim(); ++k) hi[static_cast<size_t>(k)] = g.axis(k).points;

  for (int k = 0; k < g.dim(); ++k) {
    const Axis& a = g.axis(k);
    const int h = halo_per_axis_[static_cast<size_t>(k)];
    if (h == 0) continue;
    const bool twisted = a.rule == AxisRule::Twisted;
    const AxisTwist* tw = twisted && spec ? &spec->twist(k) : nullptr;
    if (twisted && tr != Transport::ScalarLike && tw == nullptr)
      throw ShapeError("padded fill: twisted axis without bundle twist data");

    // iterate over the already-filled box in the other axes
    std::vector<int> cur = lo;
    bool done = false;
    while (!done) {
      if (cur[static_cast<size_t>(k)] == lo[static_cast<size_t>(k)]) {  // do each cross-section once
        std::vector<int> src_mi = cur, dst_mi = cur;
        for (int j = 1; j <= h; ++j) {
          // upper halo: cover index n-1+j  <-  fundamental j-1, one crossing up
          src_mi[static_cast<size_t>(k)] = j - 1;
          dst_mi[static_cast<size_t>(k)] = a.points - 1 + j;
          // clamp source into fundamental range along k only; other axes may
          // reference halo values already filled for earlier axes
          long sp = pindex(src_mi), dp = pindex(dst_mi);
          apply_crossing(tr, tw, src_mi, +1, ptr(sp), ptr(dp));
          // lower halo: cover index -j  <-  fundamental n-j, one crossing down
          src_mi[static_cast<size_t>(k)] = a.points - j;
          dst_mi[static_cast<size_t>(k)] = -j;
          sp = pindex(src_mi);
          dp = pindex(dst_mi);
          apply_crossing(tr, tw, src_mi, -1, ptr(sp), ptr(dp));
        }
      }
      // odometer over all axes except k, within [lo, hi)
      done = true;
      for (int q = g.dim() - 1; q >= 0; --q) {
        if (q == k) continue;
        if (++cur[static_cast<size_t>(q)] < hi[static_cast<size_t>(q)]) {
          done = false;
          break;
        }
        cur[static_cast<size_t>(q)] = lo[static_cast<size_t>(q)];
      }
    }
    lo[static_cast<size_t>(k)] -= h;
    hi[static_cast<size_t>(k)] += h;
  }
}

void PaddedField::apply_crossing(Transport tr, const AxisTwist* tw, const std::vector<int>& src_mi,
                                 int direction, const Cplx* src, Cplx* dst) {
  const int r = rank_;
  const int rr = r * r;
  if (tr == Transport::ScalarLike || tw == nullptr) {
    for (int j = 0; j < rr; ++j) dst[j] = src[j];
    return;
  }
  // twist matrices are constant along their own axis; read them at the source
  // site's cross-section
  std::vector<int> tmi = src_mi;
  for (size_t q = 0; q < tmi.size(); ++q) {
    int n = grid_->axis(static_cast<int>(q)).points;
    tmi[q] = ((tmi[q] % n) + n) % n;
  }
  long tidx = grid_->index(tmi);
  const Cplx* T = tw->T.ptr(tidx);
  const Cplx* Ti = tw->Tinv.ptr(tidx);
  Cplx Th[16], Tih[16];
  adjoint_of(r, T, Th);
  adjoint_of(r, Ti, Tih);
  if (tr == Transport::Metric) {
    // up: T^dagger H T ; down: T^{-dagger} H T^{-1}
    if (direction > 0)
      sandwich(r, Th, src, T, dst);
    else
      sandwich(r, Tih, src, Ti, dst);
  } else {
    // endo,  up: T^{-1} e T ; down: T e T^{-1}
    if (direction > 0)
      sandwich(r, Ti, src, T, dst);
    else
      sandwich(r, T, src, Ti, dst);
  }
}

Mat hermitize(const Mat& a) { return 0.5 * (a + a.adjoint().eval()); }

Mat herm_sqrt(const Mat& a) {
  Eigen::SelfAdjointEigenSolver<Mat> es(a);
  Vec d = es.eigenvalues().cast<Cplx>();
  for (int i = 0; i < d.size(); ++i) {
    double x = d(i).real();
    if (x <= 0) throw PositivityError("herm_sqrt: nonpositive eigenvalue");
    d(i) = std::sqrt(x);
  }
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().adjoint();
}

Mat herm_inv_sqrt(const Mat& a) {
  Eigen::SelfAdjointEigenSolver<Mat> es(a);
  Vec d = es.eigenvalues().cast<Cplx>();
  for (int i = 0; i < d.size(); ++i) {
    double x = d(i).real();
    if (x <= 0) throw PositivityError("herm_inv_sqrt: nonpositive eigenvalue");
    d(i) = 1.0 / std::sqrt(x);
  }
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().adjoint();
}

Mat herm_apply(const Mat& a, double (*f)(double)) {
  Eigen::SelfAdjointEigenSolver<Mat> es(a);
  Vec d = es.eigenvalues().cast<Cplx>();
  for (int i = 0; i < d.size(); ++i) d(i) = f(d(i).real());
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().adjoint();
}

Mat expm_tracefree(const Mat& m) {
  const int r = static_cast<int>(m.rows());
  if (r == 1) return Mat::Identity(1, 1) * std::exp(m(0, 0));
  if (r == 2) {
    // Cayley-Hamilton: M^2 = -det(M) I for trace-free M
    Cplx mu2 = -(m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0));
    Cplx mu = std::sqrt(mu2);
    Cplx ch, shc;
    if (std::abs(mu) < 1e-8) {
      ch = 1.0 + mu2 / 2.0 + mu2 * mu2 / 24.0;
      shc = 1.0 + mu2 / 6.0 + mu2 * mu2 / 120.0;
    } else {
      ch = std::cosh(mu);
      shc = std::sinh(mu) / mu;
    }
    Mat out(2, 2);
    out(0, 0) = ch + shc * m(0, 0);
    out(0, 1) = shc * m(0, 1);
    out(1, 0) = shc * m(1, 0);
    out(1, 1) = ch + shc * m(1, 1);
    return out;
  }
  // generic fallback for r in {3,4}: plain series; flow generators are small
  Mat x = Mat::Identity(r, r);
  Mat term = Mat::Identity(r, r);
  for (int k = 1; k <= 16; ++k) {
    term = (term * m / static_cast<double>(k)).eval();
    x += term;
  }
  return x;
}

double frob_norm(const Mat& m) { return m.norm(); }

}  // namespace helab
