#pragma once

#include <span>

namespace phishtrain::stats {

/// Regularized incomplete beta I_x(a, b), evaluated with the continued
/// fraction of the incomplete beta integral (modified Lentz) and the symmetry
/// I_x(a, b) = 1 - I_{1-x}(b, a) for x beyond the mean. Absolute error is
/// below 1e-13 for a, b in [0.5, 1e4].
double regularized_incomplete_beta(double a, double b, double x);

/// P(F > f) for an F distribution with (d1, d2) degrees of freedom.
double f_survival(double f, double d1, double d2);

/// Two-sided p-value of a Student t statistic.
double t_two_sided_p(double t, double df);

double mean(std::span<const double> xs);
/// Sample standard deviation (n - 1 denominator); 0 for fewer than 2 values.
double sample_sd(std::span<const double> xs);

struct WelchResult {
  double mean_difference = 0.0;  // mean(a) - mean(b)
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
};

/// Welch's unequal-variance two-sample t test. Needs >= 2 values per sample.
WelchResult welch_t_test(std::span<const double> a, std::span<const double> b);

}  // namespace phishtrain::stats
