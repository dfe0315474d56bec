#pragma once

#include <span>
#include <vector>

namespace modlab::stats {

double mean(std::span<const double> xs);
/// Sample standard deviation (n - 1 denominator); 0 for fewer than 2 samples.
double stddev(std::span<const double> xs);
double standard_error(std::span<const double> xs);
/// Linear-interpolated quantile, q in [0, 1].
double quantile(std::vector<double> xs, double q);
double median(std::vector<double> xs);
/// (mean |x|^m)^{1/m}: the empirical L^m(Omega) norm.
double lm_norm(std::span<const double> xs, double m);

struct LineFit {
    double slope;
    double intercept;
};
/// Least-squares line through (x, y).
LineFit fit_line(std::span<const double> x, std::span<const double> y);
/// Least-squares slope of log y against log x.
LineFit fit_loglog(std::span<const double> x, std::span<const double> y);

} // namespace modlab::stats
