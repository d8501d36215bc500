#pragma once

// Reference statistics: ANOVA sums of squares by fitting nested linear models
// to every observation (Gauss-Jordan on the normal equations), regression
// from raw sums, and distribution tails from Boost.Math.

#include <array>
#include <cmath>
#include <vector>

#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/students_t.hpp>

namespace oracle {

/// Residual sum of squares of y ~ X by least squares.
inline long double rss(const std::vector<std::vector<long double>>& X, const std::vector<long double>& y) {
  const std::size_t k = X[0].size();
  std::vector<std::vector<long double>> a(k, std::vector<long double>(k + 1, 0));
  for (std::size_t r = 0; r < X.size(); ++r) {
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = 0; j < k; ++j) a[i][j] += X[r][i] * X[r][j];
      a[i][k] += X[r][i] * y[r];
    }
  }
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < k; ++r) {
      if (std::fabs(a[r][c]) > std::fabs(a[piv][c])) piv = r;
    }
    std::swap(a[c], a[piv]);
    for (std::size_t r = 0; r < k; ++r) {
      if (r == c) continue;
      const long double f = a[r][c] / a[c][c];
      for (std::size_t j = c; j <= k; ++j) a[r][j] -= f * a[c][j];
    }
  }
  long double out = 0;
  for (std::size_t r = 0; r < X.size(); ++r) {
    long double fit = 0;
    for (std::size_t i = 0; i < k; ++i) fit += X[r][i] * a[i][k] / a[i][i];
    out += (y[r] - fit) * (y[r] - fit);
  }
  return out;
}

struct AnovaRow {
  double ss, f, p, eta;
};
struct Anova {
  AnovaRow author, style, interaction;
  double ss_error, df_error;
};

/// Type-II two-way ANOVA; cells ordered (A0,S0), (A0,S1), (A1,S0), (A1,S1).
inline Anova anova(const std::array<std::vector<double>, 4>& cells) {
  std::vector<std::vector<long double>> xa, xs, xas, xfull;
  std::vector<long double> y;
  for (int c = 0; c < 4; ++c) {
    const long double a = c >= 2 ? 1 : 0;
    const long double s = c % 2 == 1 ? 1 : 0;
    for (double v : cells[c]) {
      y.push_back(v);
      xa.push_back({1, a});
      xs.push_back({1, s});
      xas.push_back({1, a, s});
      xfull.push_back({1, a, s, a * s});
    }
  }
  const long double r_a = rss(xa, y), r_s = rss(xs, y), r_as = rss(xas, y), r_full = rss(xfull, y);
  const double df_e = static_cast<double>(y.size()) - 4;
  auto row = [&](long double ss) {
    const double f = static_cast<double>(ss / (r_full / df_e));
    const boost::math::fisher_f dist(1.0, df_e);
    return AnovaRow{static_cast<double>(ss), f, boost::math::cdf(boost::math::complement(dist, f)),
                    static_cast<double>(ss / (ss + r_full))};
  };
  return Anova{row(r_s - r_as), row(r_a - r_as), row(r_as - r_full), static_cast<double>(r_full), df_e};
}

struct Line {
  double slope, intercept, r2;
};

/// Least squares from raw sums; R^2 = 1 - SSE/SST.
inline Line regression(const std::vector<double>& x, const std::vector<double>& y) {
  long double n = x.size(), sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += static_cast<long double>(x[i]) * x[i];
    sxy += static_cast<long double>(x[i]) * y[i];
  }
  const long double b = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const long double a = (sy - b * sx) / n;
  long double sse = 0, sst = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const long double r = y[i] - (a + b * x[i]);
    const long double d = y[i] - sy / n;
    sse += r * r;
    sst += d * d;
  }
  return Line{static_cast<double>(b), static_cast<double>(a), sst == 0 ? 0.0 : static_cast<double>(1 - sse / sst)};
}

inline double t_two_sided(double t, double df) {
  const boost::math::students_t dist(df);
  return 2 * boost::math::cdf(boost::math::complement(dist, std::fabs(t)));
}

}  // namespace oracle
