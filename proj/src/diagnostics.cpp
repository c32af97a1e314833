// SPDX-License-Identifier: Apache-2.0
#include "thz/diagnostics.hpp"

#include <cmath>
#include <fstream>

#include "thz/adtensor.hpp"

namespace thz {

std::complex<double> lorentz_permittivity(double nu, const Material& mat) {
  const double nt2 = mat.nu_t2();
  const std::complex<double> den(nt2 - nu * nu, mat.gamma0 * nu);
  return mat.eps_omega + (mat.eps_Omega - mat.eps_omega) * nt2 / den;
}

namespace {

std::vector<std::complex<double>> value_dft(const TrajectorySeries& trace, int* n_out) {
  trace.validate();
  const int n = trace.n_steps();  // DFT over the first n samples
  std::vector<std::complex<double>> v(n);
  for (int i = 0; i < n; ++i) v[i] = trace.value[i];
  if (n > 1 && (n & (n - 1)) == 0)
    ad::fft_inplace(v, false);
  else
    v = ad::dft_direct(v, false);
  *n_out = n;
  return v;
}

}  // namespace

Spectrum spectrum_of(const TrajectorySeries& trace) {
  int n = 0;
  auto v = value_dft(trace, &n);
  Spectrum s;
  s.freq.resize(n);
  s.power.resize(n);
  s.amp = std::move(v);
  const double dnu = 1.0 / (n * trace.k);
  for (int j = 0; j < n; ++j) {
    s.freq[j] = j * dnu;
    s.power[j] = std::norm(s.amp[j]);
  }
  return s;
}

void spectrum_write_csv(const std::string& path, const Spectrum& s) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("spectrum_write_csv: cannot open " + path);
  f << "freq,re,im,power\n";
  f.precision(17);
  for (int j = 0; j < s.freq.size(); ++j)
    f << s.freq[j] << ',' << s.amp[j].real() << ',' << s.amp[j].imag() << ',' << s.power[j]
      << '\n';
}

IntensityResult intensity_fluence(const TrajectorySeries& trace, const Material& mat) {
  int n = 0;
  auto spec = value_dft(trace, &n);
  const double dnu = 1.0 / (n * trace.k);

  // sqrt(eps_r) on nonnegative bins, sign-continuous, Hermitian on the rest
  std::vector<std::complex<double>> root(n);
  std::complex<double> prev(1.0, 0.0);
  for (int j = 0; j <= n / 2; ++j) {
    std::complex<double> r = std::sqrt(lorentz_permittivity(j * dnu, mat));
    if ((r * std::conj(prev)).real() < 0.0) r = -r;
    root[j] = r;
    prev = r;
  }
  for (int j = n / 2 + 1; j < n; ++j) root[j] = std::conj(root[n - j]);

  for (int j = 0; j < n; ++j) spec[j] *= root[j];
  if (n > 1 && (n & (n - 1)) == 0)
    ad::fft_inplace(spec, true);
  else
    spec = ad::dft_direct(spec, true);

  IntensityResult out;
  out.intensity.resize(n);
  for (int i = 0; i < n; ++i) {
    const double e = spec[i].real() / n;
    out.intensity[i] = 0.5 * e * e;
  }
  double acc = 0.0;
  for (int i = 0; i + 1 < n; ++i) acc += 0.5 * (out.intensity[i] + out.intensity[i + 1]);
  out.fluence = (n > 1) ? acc / (n - 1) : out.intensity[0];
  return out;
}

double conversion_efficiency(const TrajectorySeries& trace, double f_lo, double f_hi) {
  if (f_hi <= f_lo) throw std::invalid_argument("conversion_efficiency: empty band");
  int n = 0;
  auto spec = value_dft(trace, &n);
  const double dnu = 1.0 / (n * trace.k);
  double total = 0.0, band = 0.0;
  bool any_bin = false;
  for (int j = 0; j < n; ++j) {
    const double p = std::norm(spec[j]);
    total += p;
    const double nu = std::min(j, n - j) * dnu;  // folded frequency
    if (nu >= f_lo && nu <= f_hi) {
      band += p;
      any_bin = true;
    }
  }
  if (!any_bin) throw std::invalid_argument("conversion_efficiency: band resolves no grid bins");
  if (total == 0.0) return 0.0;
  return band / total;
}

}  // namespace thz
