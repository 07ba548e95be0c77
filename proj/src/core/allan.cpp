#include "allan.hpp"

#include <cmath>
#include <complex>
#include <stdexcept>

#include "constants.hpp"

namespace nvlock {

std::vector<AllanPoint> allan_deviation(std::span<const double> series, double tau0_s,
                                        int points_per_decade) {
  if (series.size() < 8) throw std::invalid_argument("series too short for Allan deviation");
  const std::size_t n = series.size();
  std::vector<AllanPoint> out;
  const double m_max = static_cast<double>(n) / 3.0;
  double log_m = 0.0;
  std::size_t last_m = 0;
  while (true) {
    const auto m = static_cast<std::size_t>(std::floor(std::pow(10.0, log_m)));
    log_m += 1.0 / points_per_decade;
    if (m <= last_m) continue;
    if (static_cast<double>(m) > m_max) break;
    last_m = m;
    // overlapping estimator over block means
    double acc = 0.0;
    std::size_t cnt = 0;
    for (std::size_t k = 0; k + 2 * m <= n; ++k) {
      double y1 = 0.0, y2 = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        y1 += series[k + j];
        y2 += series[k + m + j];
      }
      const double d = (y2 - y1) / static_cast<double>(m);
      acc += d * d;
      ++cnt;
    }
    if (cnt == 0) break;
    out.push_back({static_cast<double>(m) * tau0_s, std::sqrt(acc / (2.0 * static_cast<double>(cnt)))});
  }
  return out;
}

std::vector<AsdPoint> amplitude_spectral_density(std::span<const double> series, double sample_rate_hz,
                                                 std::size_t segment_length) {
  const std::size_t n = series.size();
  std::size_t seg = segment_length;
  while (seg > n && seg > 64) seg /= 2;
  if (n < seg) throw std::invalid_argument("series too short for ASD");
  const std::size_t hop = seg / 2;

  std::vector<double> window(seg);
  double wss = 0.0;
  for (std::size_t i = 0; i < seg; ++i) {
    window[i] = 0.5 * (1.0 - std::cos(2.0 * kPi * static_cast<double>(i) / static_cast<double>(seg - 1)));
    wss += window[i] * window[i];
  }

  const std::size_t nbins = seg / 2;
  std::vector<double> psd(nbins, 0.0);
  std::size_t nseg = 0;
  for (std::size_t start = 0; start + seg <= n; start += hop) {
    // direct DFT per segment; segment counts are small enough here
    for (std::size_t k = 0; k < nbins; ++k) {
      std::complex<double> s{0.0, 0.0};
      const double w = -2.0 * kPi * static_cast<double>(k) / static_cast<double>(seg);
      for (std::size_t i = 0; i < seg; ++i) {
        const double ph = w * static_cast<double>(i);
        s += series[start + i] * window[i] * std::complex<double>(std::cos(ph), std::sin(ph));
      }
      psd[k] += std::norm(s) / (wss * sample_rate_hz) * 2.0;
    }
    ++nseg;
  }
  std::vector<AsdPoint> out;
  out.reserve(nbins - 1);
  for (std::size_t k = 1; k < nbins; ++k) {  // skip DC
    out.push_back({static_cast<double>(k) * sample_rate_hz / static_cast<double>(seg),
                   std::sqrt(psd[k] / static_cast<double>(nseg))});
  }
  return out;
}

double loglog_slope(std::span<const double> x, std::span<const double> y, double x_lo, double x_hi) {
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] < x_lo || x[i] > x_hi || y[i] <= 0.0) continue;
    const double lx = std::log10(x[i]);
    const double ly = std::log10(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++n;
  }
  if (n < 3) throw std::invalid_argument("too few points in fit range");
  const double dn = static_cast<double>(n);
  return (dn * sxy - sx * sy) / (dn * sxx - sx * sx);
}

double loglog_coefficient(std::span<const double> x, std::span<const double> y, double slope_fixed,
                          double x_lo, double x_hi) {
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] < x_lo || x[i] > x_hi || y[i] <= 0.0) continue;
    acc += std::log10(y[i]) - slope_fixed * std::log10(x[i]);
    ++n;
  }
  if (n == 0) throw std::invalid_argument("no points in fit range");
  return std::pow(10.0, acc / static_cast<double>(n));
}

}  // namespace nvlock
