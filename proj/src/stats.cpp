#include "modlab/stats.hpp"

#include "modlab/common.hpp"

#include <algorithm>
#include <cmath>

namespace modlab::stats {

double mean(std::span<const double> xs)
{
    if (xs.empty()) return 0.0;
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

double stddev(std::span<const double> xs)
{
    if (xs.size() < 2) return 0.0;
    const double mu = mean(xs);
    double s = 0.0;
    for (double x : xs) s += (x - mu) * (x - mu);
    return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

double standard_error(std::span<const double> xs)
{
    if (xs.size() < 2) return 0.0;
    return stddev(xs) / std::sqrt(static_cast<double>(xs.size()));
}

double quantile(std::vector<double> xs, double q)
{
    if (xs.empty()) throw InvalidArgument("quantile of an empty sample");
    std::sort(xs.begin(), xs.end());
    const double pos = q * static_cast<double>(xs.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, xs.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return xs[lo] + frac * (xs[hi] - xs[lo]);
}

double median(std::vector<double> xs) { return quantile(std::move(xs), 0.5); }

double lm_norm(std::span<const double> xs, double m)
{
    double s = 0.0;
    for (double x : xs) s += std::pow(std::abs(x), m);
    return std::pow(s / static_cast<double>(xs.size()), 1.0 / m);
}

LineFit fit_line(std::span<const double> x, std::span<const double> y)
{
    if (x.size() != y.size() || x.size() < 2) throw InsufficientPoints("line fit needs >= 2 points");
    const double mx = mean(x);
    const double my = mean(y);
    double sxy = 0.0;
    double sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    if (sxx == 0.0) throw InsufficientPoints("line fit with degenerate abscissae");
    const double slope = sxy / sxx;
    return {slope, my - slope * mx};
}

LineFit fit_loglog(std::span<const double> x, std::span<const double> y)
{
    std::vector<double> lx(x.size());
    std::vector<double> ly(y.size());
    for (std::size_t i = 0; i < x.size(); ++i) lx[i] = std::log(x[i]);
    for (std::size_t i = 0; i < y.size(); ++i) ly[i] = std::log(y[i]);
    return fit_line(lx, ly);
}

} // namespace modlab::stats
