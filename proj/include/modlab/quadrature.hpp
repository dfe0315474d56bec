#pragma once

#include "modlab/common.hpp"

#include <boost/math/quadrature/gauss.hpp>

#include <cmath>
#include <string>

namespace modlab::quad {

using Rule64 = boost::math::quadrature::gauss<double, 64>;

/// Fixed 64-point Gauss-Legendre rule on [a, b].
template <class F> double gauss64(F&& f, double a, double b)
{
    const double half = 0.5 * (b - a);
    const double mid = 0.5 * (a + b);
    const auto& x = Rule64::abscissa();
    const auto& w = Rule64::weights();
    // Boost stores the non-negative half of the symmetric rule; 64 is even so
    // there is no centre node.
    double sum = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) sum += w[i] * (f(mid - half * x[i]) + f(mid + half * x[i]));
    return sum * half;
}

namespace detail {
template <class F>
double bisect(F& f, double a, double b, double whole, double rel_tol, double abs_tol, int depth)
{
    const double mid = 0.5 * (a + b);
    const double left = gauss64(f, a, mid);
    const double right = gauss64(f, mid, b);
    const double refined = left + right;
    if (std::abs(refined - whole) <= std::max(abs_tol, rel_tol * std::abs(refined))) return refined;
    if (depth <= 0) {
        throw QuadratureFailure("adaptive Gauss-Legendre did not converge on [" + std::to_string(a) + ", " +
                                std::to_string(b) + "]");
    }
    return bisect(f, a, mid, left, rel_tol, 0.5 * abs_tol, depth - 1) +
           bisect(f, mid, b, right, rel_tol, 0.5 * abs_tol, depth - 1);
}
} // namespace detail

/// Adaptive Gauss-Legendre: a panel is accepted when the 64-point rule on
/// the panel and on its two halves agree to within
/// max(abs_tol, rel_tol * |estimate|). Throws QuadratureFailure when
/// max_depth bisections do not reach tolerance.
template <class F>
double adaptive(F&& f, double a, double b, double rel_tol = 1e-10, double abs_tol = 1e-14, int max_depth = 24)
{
    if (a == b) return 0.0;
    return detail::bisect(f, a, b, gauss64(f, a, b), rel_tol, abs_tol, max_depth);
}

} // namespace modlab::quad
