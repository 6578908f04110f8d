#include "collemit/spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <lapacke.h>

#include "collemit/error.hpp"

namespace collemit {

namespace {

lapack_complex_double* lapack_ptr(cdouble* p) {
  return reinterpret_cast<lapack_complex_double*>(p);
}

}  // namespace

Eigensystem decompose(const InteractionMatrix& a,
                      std::optional<std::uint64_t> seed) {
  const Eigen::Index n = a.n();
  if (!a.entries.allFinite())
    throw NumericalError("eigensolver: non-finite matrix entries", seed);

  Eigensystem sys;
  if (!a.interacting) {
    // Fully degenerate: pick the orthonormal basis whose first vector is the
    // uniform (bright) state, so one eigenvector carries all the FC weight.
    CMatrix seed_basis = CMatrix::Identity(n, n);
    seed_basis.col(0).setConstant(1.0 / std::sqrt(static_cast<double>(n)));
    Eigen::HouseholderQR<CMatrix> qr(seed_basis);
    sys.values = a.entries.diagonal();
    sys.right = qr.householderQ();
    sys.left = sys.right.adjoint();
    return sys;
  }
  sys.values.resize(n);
  sys.right.resize(n, n);
  CMatrix work = a.entries;  // zgeev overwrites its input
  const lapack_int info = LAPACKE_zgeev(
      LAPACK_COL_MAJOR, 'N', 'V', static_cast<lapack_int>(n),
      lapack_ptr(work.data()), static_cast<lapack_int>(n),
      lapack_ptr(sys.values.data()), nullptr, 1, lapack_ptr(sys.right.data()),
      static_cast<lapack_int>(n));
  if (info != 0)
    throw NumericalError("eigensolver: zgeev failed with info " +
                             std::to_string(info),
                         seed);
  sys.right.colwise().normalize();
  Eigen::PartialPivLU<CMatrix> lu(sys.right);
  sys.left = lu.inverse();
  if (!sys.left.allFinite() || !sys.values.allFinite())
    throw NumericalError("eigensolver: eigenvector matrix is singular", seed);
  return sys;
}

EigenSpectrum eigenspectrum(const Eigensystem& sys) {
  const Eigen::Index n = sys.values.size();
  EigenSpectrum out;
  out.shifts.resize(static_cast<std::size_t>(n));
  out.half_widths.resize(static_cast<std::size_t>(n));
  out.fc_weights.resize(static_cast<std::size_t>(n));
  const CVector overlaps =
      sys.right.colwise().sum().transpose() / std::sqrt(static_cast<double>(n));
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto i = static_cast<std::size_t>(k);
    out.shifts[i] = 0.5 * sys.values[k].imag();
    out.half_widths[i] = 0.5 * sys.values[k].real();
    out.fc_weights[i] = std::norm(overlaps[k]);
  }
  out.right_vectors = sys.right;
  return out;
}

EigenSpectrum eigenspectrum(const InteractionMatrix& a,
                            std::optional<std::uint64_t> seed) {
  return eigenspectrum(decompose(a, seed));
}

std::vector<double> excitation_spectrum(const EigenSpectrum& eig,
                                        std::span<const double> delta_grid) {
  std::vector<double> s(delta_grid.size(), 0.0);
  for (std::size_t k = 0; k < delta_grid.size(); ++k) {
    const double d = delta_grid[k];
    double acc = 0.0;
    for (std::size_t n = 0; n < eig.size(); ++n) {
      const double g2 = eig.half_widths[n] * eig.half_widths[n];
      const double x = d - eig.shifts[n];
      const double denom = x * x + g2;
      if (denom > 0.0) acc += eig.fc_weights[n] * g2 / denom;
    }
    s[k] = acc;
  }
  return s;
}

std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> v(n);
  if (n == 1) {
    v[0] = lo;
    return v;
  }
  for (std::size_t i = 0; i < n; ++i)
    v[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return v;
}

SpectrumStats spectrum_stats(std::span<const double> grid,
                             std::span<const double> values) {
  if (grid.size() != values.size() || grid.size() < 3)
    throw ConfigError("spectrum_stats: need matching grids of >= 3 points");
  const std::size_t n = values.size();
  const double vmax = *std::max_element(values.begin(), values.end());
  const double tie = vmax * (1.0 - 1e-9);

  // Contiguous runs of maximal values are one peak; more than one run is a tie.
  SpectrumStats st;
  std::size_t best = n;
  std::size_t runs = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (values[i] < tie) continue;
    if (i == 0 || values[i - 1] < tie) ++runs;
    if (best == n || std::abs(grid[i]) < std::abs(grid[best])) best = i;
  }
  st.ambiguous = runs > 1;

  st.peak_delta = grid[best];
  if (best > 0 && best + 1 < n) {
    const double y0 = values[best - 1], y1 = values[best], y2 = values[best + 1];
    const double denom = y0 - 2.0 * y1 + y2;
    if (denom < 0.0) {
      const double h = 0.5 * (grid[best + 1] - grid[best - 1]);
      const double offset = 0.5 * (y0 - y2) / denom;
      st.peak_delta = grid[best] + std::clamp(offset, -1.0, 1.0) * h;
    }
  }

  const double half = 0.5 * vmax;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  double left = nan, right = nan;
  for (std::size_t i = best; i > 0; --i) {
    if (values[i - 1] < half) {
      const double t = (half - values[i - 1]) / (values[i] - values[i - 1]);
      left = grid[i - 1] + t * (grid[i] - grid[i - 1]);
      break;
    }
  }
  for (std::size_t i = best; i + 1 < n; ++i) {
    if (values[i + 1] < half) {
      const double t = (values[i] - half) / (values[i] - values[i + 1]);
      right = grid[i] + t * (grid[i + 1] - grid[i]);
      break;
    }
  }
  st.fwhm = right - left;
  return st;
}

EigenHistogram::EigenHistogram(Axis delta, Axis gamma)
    : delta_(delta),
      gamma_(gamma),
      counts_(delta.bins * gamma.bins, 0.0),
      fc_counts_(delta.bins * gamma.bins, 0.0) {
  if (delta.bins == 0 || gamma.bins == 0 || !(delta.hi > delta.lo) ||
      !(gamma.hi > gamma.lo))
    throw ConfigError("histogram: invalid bin axes");
}

std::optional<std::size_t> EigenHistogram::bin_of(double delta,
                                                  double gamma) const {
  auto index = [](const Axis& ax, double x) -> std::optional<std::size_t> {
    if (!(x >= ax.lo) || !(x <= ax.hi)) return std::nullopt;
    const double u = (x - ax.lo) / (ax.hi - ax.lo) * static_cast<double>(ax.bins);
    return std::min(static_cast<std::size_t>(u), ax.bins - 1);
  };
  const auto d = index(delta_, delta);
  const auto g = index(gamma_, gamma);
  if (!d || !g) return std::nullopt;
  return *d * gamma_.bins + *g;
}

void EigenHistogram::accumulate(const EigenSpectrum& spectrum) {
  for (std::size_t n = 0; n < spectrum.size(); ++n) {
    ++total_;
    const auto bin = bin_of(spectrum.shifts[n], spectrum.half_widths[n]);
    if (!bin) {
      ++overflow_;
      fc_overflow_ += spectrum.fc_weights[n];
      continue;
    }
    counts_[*bin] += 1.0;
    fc_counts_[*bin] += spectrum.fc_weights[n];
  }
}

void EigenHistogram::merge(const EigenHistogram& other) {
  if (other.counts_.size() != counts_.size())
    throw ConfigError("histogram: merging incompatible binnings");
  for (std::size_t i = 0; i < counts_.size(); ++i) {
    counts_[i] += other.counts_[i];
    fc_counts_[i] += other.fc_counts_[i];
  }
  total_ += other.total_;
  overflow_ += other.overflow_;
  fc_overflow_ += other.fc_overflow_;
}

namespace {
std::vector<double> normalized(const std::vector<double>& v) {
  double sum = 0.0;
  for (double x : v) sum += x;
  std::vector<double> out(v.size(), 0.0);
  if (sum > 0.0)
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / sum;
  return out;
}
}  // namespace

std::vector<double> EigenHistogram::normalized_counts() const {
  return normalized(counts_);
}
std::vector<double> EigenHistogram::normalized_fc_counts() const {
  return normalized(fc_counts_);
}

}  // namespace collemit
