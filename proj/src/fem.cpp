// SPDX-License-Identifier: Apache-2.0
#include "thz/fem.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace thz {

void Material::validate() const {
  if (eps_omega <= 0.0) throw std::invalid_argument("Material: eps_omega must be > 0");
  if (eps_Omega < eps_omega)
    throw std::invalid_argument("Material: eps_Omega must be >= eps_omega");
  if (gamma0 < 0.0) throw std::invalid_argument("Material: gamma0 must be >= 0");
  if (nu_t <= 0.0) throw std::invalid_argument("Material: nu_t must be > 0");
}

int DomainSpec::chi2_sign(double x) const {
  if (poling_period <= 0.0 || n_periods < 1) return 0;
  const double s = (x - x_left) / poling_period;
  if (s < 0.0 || s >= static_cast<double>(n_periods)) return 0;
  const int period = static_cast<int>(std::floor(s));
  return (period % 2 == 0) ? 1 : -1;
}

void DomainSpec::validate() const {
  if (x_right <= x_left) throw std::invalid_argument("DomainSpec: empty domain");
  if (pml_width < 0.0) throw std::invalid_argument("DomainSpec: negative pml_width");
  if (n_periods > 0 && poling_period > 0.0 &&
      x_right - x_left < n_periods * poling_period - 1e-12 * poling_period)
    throw std::invalid_argument("DomainSpec: crystal does not fit in the domain");
}

int CubicFeSpace::first_pml_elem() const {
  for (int e = 0; e < n_elem(); ++e)
    if (mesh.kinds[e] == ElemKind::pml) return e;
  return n_elem();
}

Vec CubicFeSpace::interpolate(const std::function<double(double)>& f) const {
  Vec v(n_dof());
  for (int i = 0; i < n_dof(); ++i) v[i] = f(dof_x[i]);
  return v;
}

int CubicFeSpace::nearest_dof(double x) const {
  int best = 0;
  double d = std::abs(dof_x[0] - x);
  for (int i = 1; i < n_dof(); ++i) {
    const double di = std::abs(dof_x[i] - x);
    if (di < d) {
      d = di;
      best = i;
    }
  }
  return best;
}

std::pair<Mesh1D, CubicFeSpace> build_domain(const DomainSpec& spec, int n_elem_physical,
                                             int n_elem_pml) {
  spec.validate();
  if (n_elem_physical < 1) throw std::invalid_argument("build_domain: need >= 1 physical element");
  if (n_elem_pml < 0) throw std::invalid_argument("build_domain: negative PML element count");
  if (spec.pml_width > 0.0 && n_elem_pml == 0)
    throw std::invalid_argument("build_domain: pml_width > 0 requires PML elements");
  if (spec.pml_width == 0.0) n_elem_pml = 0;

  Mesh1D mesh;
  const int ne = n_elem_physical + n_elem_pml;
  mesh.vertices.resize(ne + 1);
  mesh.kinds.resize(ne);
  const double hp = (spec.x_right - spec.x_left) / n_elem_physical;
  for (int e = 0; e <= n_elem_physical; ++e) mesh.vertices[e] = spec.x_left + e * hp;
  if (n_elem_pml > 0) {
    const double hm = spec.pml_width / n_elem_pml;
    for (int e = 1; e <= n_elem_pml; ++e)
      mesh.vertices[n_elem_physical + e] = spec.x_right + e * hm;
  }
  for (int e = 0; e < ne; ++e)
    mesh.kinds[e] = (e < n_elem_physical) ? ElemKind::physical : ElemKind::pml;

  CubicFeSpace space;
  space.mesh = mesh;
  space.dof_x.resize(3 * ne + 1);
  for (int e = 0; e < ne; ++e) {
    const double a = mesh.vertices[e], h = mesh.width(e);
    for (int l = 0; l < 4; ++l) space.dof_x[3 * e + l] = a + h * l / 3.0;
  }
  space.dof_x[3 * ne] = mesh.vertices[ne];
  space.dirichlet_dofs = {0, 3 * ne};
  return {mesh, space};
}

// equispaced cubic Lagrange on [0,1]
double lagrange3_value(int i, double x) {
  switch (i) {
    case 0: return -4.5 * (x - 1.0 / 3.0) * (x - 2.0 / 3.0) * (x - 1.0);
    case 1: return 13.5 * x * (x - 2.0 / 3.0) * (x - 1.0);
    case 2: return -13.5 * x * (x - 1.0 / 3.0) * (x - 1.0);
    case 3: return 4.5 * x * (x - 1.0 / 3.0) * (x - 2.0 / 3.0);
    default: throw std::out_of_range("lagrange3_value: index");
  }
}

double lagrange3_deriv(int i, double x) {
  switch (i) {
    case 0: return -4.5 * (3.0 * x * x - 4.0 * x + 11.0 / 9.0);
    case 1: return 13.5 * (3.0 * x * x - 10.0 / 3.0 * x + 2.0 / 3.0);
    case 2: return -13.5 * (3.0 * x * x - 8.0 / 3.0 * x + 1.0 / 3.0);
    case 3: return 4.5 * (3.0 * x * x - 2.0 * x + 2.0 / 9.0);
    default: throw std::out_of_range("lagrange3_deriv: index");
  }
}

const double GaussRule4::pts[4] = {0.5 - 0.8611363115940526 / 2.0, 0.5 - 0.3399810435848563 / 2.0,
                                   0.5 + 0.3399810435848563 / 2.0, 0.5 + 0.8611363115940526 / 2.0};
const double GaussRule4::wts[4] = {0.3478548451374538 / 2.0, 0.6521451548625461 / 2.0,
                                   0.6521451548625461 / 2.0, 0.3478548451374538 / 2.0};

BandMatrix::BandMatrix(int n, int kl, int ku) : n_(n), kl_(kl), ku_(ku) {
  ab_ = Mat::Zero(2 * kl + ku + 1, n);
  piv_.assign(n, 0);
}

double& BandMatrix::at(int i, int j) {
  if (i < 0 || i >= n_ || j < 0 || j >= n_ || i - j > kl_ || j - i > ku_)
    throw std::out_of_range("BandMatrix::at: (" + std::to_string(i) + "," + std::to_string(j) +
                            ") outside band");
  return ab_(kl_ + ku_ + i - j, j);
}

double BandMatrix::get(int i, int j) const {
  if (i - j > kl_ || j - i > ku_) return 0.0;
  return ab_(kl_ + ku_ + i - j, j);
}

Vec BandMatrix::multiply(const Vec& x) const {
  Vec y = Vec::Zero(n_);
  for (int j = 0; j < n_; ++j) {
    const int ilo = std::max(0, j - ku_), ihi = std::min(n_ - 1, j + kl_);
    for (int i = ilo; i <= ihi; ++i) y[i] += ab_(kl_ + ku_ + i - j, j) * x[j];
  }
  return y;
}

double BandMatrix::inf_norm() const {
  Vec row = Vec::Zero(n_);
  for (int j = 0; j < n_; ++j) {
    const int ilo = std::max(0, j - ku_), ihi = std::min(n_ - 1, j + kl_);
    for (int i = ilo; i <= ihi; ++i) row[i] += std::abs(ab_(kl_ + ku_ + i - j, j));
  }
  return row.maxCoeff();
}

Mat BandMatrix::dense() const {
  Mat A = Mat::Zero(n_, n_);
  for (int j = 0; j < n_; ++j) {
    const int ilo = std::max(0, j - ku_), ihi = std::min(n_ - 1, j + kl_);
    for (int i = ilo; i <= ihi; ++i) A(i, j) = ab_(kl_ + ku_ + i - j, j);
  }
  return A;
}

void BandMatrix::eliminate_dirichlet(int dof, double value, Vec& rhs) {
  if (factored_) throw std::logic_error("eliminate_dirichlet: matrix already factored");
  const int ilo = std::max(0, dof - ku_), ihi = std::min(n_ - 1, dof + kl_);
  for (int i = ilo; i <= ihi; ++i) {
    if (i == dof) continue;
    double& a = ab_(kl_ + ku_ + i - dof, dof);
    rhs[i] -= a * value;
    a = 0.0;
  }
  const int jlo = std::max(0, dof - kl_), jhi = std::min(n_ - 1, dof + ku_);
  for (int j = jlo; j <= jhi; ++j) {
    if (j == dof) continue;
    ab_(kl_ + ku_ + dof - j, j) = 0.0;
  }
  ab_(kl_ + ku_, dof) = 1.0;
  rhs[dof] = value;
}

void BandMatrix::factor() {
  if (factored_) return;
  // gbtrf-style elimination; fill can extend the upper band to kl_ + ku_.
  const int kv = kl_ + ku_;
  for (int j = 0; j < n_; ++j) {
    const int pmax = std::min(kl_, n_ - 1 - j);
    int ip = 0;
    double amax = std::abs(ab_(kv, j));
    for (int i = 1; i <= pmax; ++i) {
      const double a = std::abs(ab_(kv + i, j));
      if (a > amax) {
        amax = a;
        ip = i;
      }
    }
    piv_[j] = j + ip;
    if (amax == 0.0 || !std::isfinite(amax))
      throw std::runtime_error("band_solve: singular pivot at index " + std::to_string(j));
    if (ip != 0) {
      const int jhi = std::min(n_ - 1, j + kv);
      for (int col = j; col <= jhi; ++col)
        std::swap(ab_(kv + j - col, col), ab_(kv + j + ip - col, col));
    }
    const double pivot = ab_(kv, j);
    for (int i = 1; i <= pmax; ++i) {
      const double m = ab_(kv + i, j) / pivot;
      ab_(kv + i, j) = m;
      const int jhi = std::min(n_ - 1, j + kv);
      for (int col = j + 1; col <= jhi; ++col)
        ab_(kv + j + i - col, col) -= m * ab_(kv + j - col, col);
    }
  }
  factored_ = true;
}

Vec BandMatrix::solve(const Vec& b) const {
  if (!factored_) throw std::logic_error("BandMatrix::solve: factor() first");
  if (b.size() != n_) throw std::invalid_argument("BandMatrix::solve: size mismatch");
  const int kv = kl_ + ku_;
  Vec x = b;
  for (int j = 0; j < n_; ++j) {
    if (piv_[j] != j) std::swap(x[j], x[piv_[j]]);
    const int imax = std::min(n_ - 1, j + kl_);
    for (int i = j + 1; i <= imax; ++i) x[i] -= ab_(kv + i - j, j) * x[j];
  }
  for (int j = n_ - 1; j >= 0; --j) {
    x[j] /= ab_(kv, j);
    const int ilo = std::max(0, j - kv);
    for (int i = ilo; i < j; ++i) x[i] -= ab_(kv + i - j, j) * x[j];
  }
  return x;
}

BandMatrix BandMatrix::clone_unfactored() const {
  if (factored_) throw std::logic_error("clone_unfactored: already factored");
  return *this;
}

Vec band_solve(BandMatrix A, const Vec& b) {
  A.factor();
  return A.solve(b);
}

namespace {

template <bool di, bool dj>
BandMatrix assemble_bilinear(const CubicFeSpace& space, const CoeffFn& c) {
  BandMatrix A(space.n_dof(), 3, 3);
  for (int e = 0; e < space.n_elem(); ++e) {
    const double a = space.mesh.vertices[e], h = space.mesh.width(e);
    if (!(h > 0.0) || !std::isfinite(h))
      throw std::invalid_argument("assemble: nonpositive element width");
    double loc[4][4] = {};
    for (int q = 0; q < 4; ++q) {
      const double xh = GaussRule4::pts[q];
      const double x = a + h * xh;
      const double cv = c(x);
      if (!std::isfinite(cv)) throw std::invalid_argument("assemble: non-finite coefficient");
      double vi[4], vj[4];
      for (int l = 0; l < 4; ++l) {
        vi[l] = di ? lagrange3_deriv(l, xh) / h : lagrange3_value(l, xh);
        vj[l] = dj ? lagrange3_deriv(l, xh) / h : lagrange3_value(l, xh);
      }
      const double w = GaussRule4::wts[q] * h * cv;
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) loc[i][j] += w * vi[i] * vj[j];
    }
    const int d0 = space.dof0(e);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) A.add(d0 + i, d0 + j, loc[i][j]);
  }
  return A;
}

}  // namespace

BandMatrix assemble_mass(const CubicFeSpace& space, const CoeffFn& c) {
  return assemble_bilinear<false, false>(space, c);
}

BandMatrix assemble_stiffness(const CubicFeSpace& space, const CoeffFn& c) {
  return assemble_bilinear<true, true>(space, c);
}

BandMatrix assemble_deriv(const CubicFeSpace& space, const CoeffFn& c) {
  return assemble_bilinear<false, true>(space, c);
}

AssembledOperators assemble_matrices(const CubicFeSpace& space, const CoeffFn& c) {
  return {assemble_mass(space, c), assemble_stiffness(space, c)};
}

}  // namespace thz
