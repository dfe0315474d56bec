#include "modlab/mollifiers.hpp"

#include "modlab/quadrature.hpp"

#include <algorithm>
#include <cmath>

namespace modlab {

namespace {
double unit_profile(double r) { return r < 1.0 ? std::exp(-1.0 / (1.0 - r * r)) : 0.0; }

template <class G> double radial_integral(int d, G&& g)
{
    // g is a function of the unit radius on [0, 1]
    return sphere_area(d) *
           quad::adaptive([&](double r) { return g(r) * std::pow(r, d - 1); }, 0.0, 1.0, 1e-13, 1e-300);
}
} // namespace

Mollifier::Mollifier(int d, double support_radius) : d_(d), radius_(support_radius)
{
    if (d < 1 || d > 3) throw InvalidArgument("mollifier dimension must be 1..3");
    if (!(support_radius > 0.0)) throw InvalidArgument("mollifier support radius must be positive");
    inv_r2_ = 1.0 / (radius_ * radius_);
    const double unit_mass = radial_integral(d, unit_profile);
    norm_ = 1.0 / (unit_mass * std::pow(radius_, d));
}

double Mollifier::fourier(double q) const
{
    if (q == 0.0) return 1.0;
    const double R = radius_;
    const double scale = norm_ * std::pow(R, d_);
    switch (d_) {
    case 1:
        return scale * quad::adaptive([&](double r) { return 2.0 * unit_profile(r) * std::cos(q * R * r); }, 0.0,
                                      1.0, 1e-12, 1e-15);
    case 2:
        return scale * quad::adaptive(
                           [&](double r) {
                               return 2.0 * kPi * unit_profile(r) * std::cyl_bessel_j(0.0, q * R * r) * r;
                           },
                           0.0, 1.0, 1e-12, 1e-15);
    default:
        return scale * quad::adaptive(
                           [&](double r) {
                               const double s = q * R * r;
                               const double sinc = s < 1e-8 ? 1.0 : std::sin(s) / s;
                               return 4.0 * kPi * unit_profile(r) * sinc * r * r;
                           },
                           0.0, 1.0, 1e-12, 1e-15);
    }
}

double Mollifier::lp_norm(double p) const
{
    const double integral =
        radial_integral(d_, [&](double r) { return std::pow(norm_ * unit_profile(r), p); });
    return std::pow(integral * std::pow(radius_, d_), 1.0 / p);
}

void ModerateScaling::check(int d) const
{
    if (n_particles < 1) throw InvalidArgument("particle count must be >= 1");
    if (!(beta > 0.0 && beta < 1.0)) throw InvalidArgument("beta must lie in (0, 1)");
    if (!(m > 2.0) || !(p > 2.0)) throw InvalidExponents("moderate scaling requires m > 2 and p > 2");
    if (strict && beta > max_beta(m, d, p).beta_hypothesis) {
        throw InvalidArgument("beta exceeds 1/(4m(d+2)) in strict mode");
    }
}

double ModerateScaling::length_factor() const
{
    return std::pow(static_cast<double>(n_particles), -beta);
}

ScaledMollifier::ScaledMollifier(const Mollifier& base, const ModerateScaling& scaling) : base_(base)
{
    const double n = static_cast<double>(scaling.n_particles);
    scale_ = std::pow(n, scaling.beta);
    scale2_ = scale_ * scale_;
    amp_ = std::pow(scale_, base.dim());
    radius_ = base.support_radius() / scale_;
}

double eval_VN(const Mollifier& moll, const ModerateScaling& scaling, const Vec& x)
{
    return ScaledMollifier(moll, scaling)(x);
}

BetaBounds max_beta(double m, int d, double p)
{
    if (!(m > 2.0) || !(p > 2.0)) throw InvalidExponents("max_beta requires m > 2 and p > 2");
    if (d < 2) throw InvalidArgument("max_beta requires d >= 2");
    const double md = m * d;
    return {1.0 / (4.0 * m * (d + 2)),
            1.0 / (2.0 * md + 16.0 + 2.0 * md * std::max(1.0 - 2.0 / p, 2.0 / m))};
}

} // namespace modlab
