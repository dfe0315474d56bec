#include "modlab/kernels.hpp"

#include "modlab/quadrature.hpp"
#include "modlab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace modlab {

namespace {
template <class... Ts> struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts> Overloaded(Ts...) -> Overloaded<Ts...>;

// Non-harmonic kernels have no exact far field; their table reaches this many
// mollifier radii and K itself is used beyond (relative error O((eps/r)^2)).
constexpr double kNonHarmonicExtent = 32.0;
} // namespace

RepulsivePoisson repulsive_poisson(int d) { return RepulsivePoisson{d, 1.0 / sphere_area(d)}; }

int kernel_dim(const KernelKind& kind)
{
    return std::visit(Overloaded{[](const BiotSavart&) { return 2; },
                                 [](const RepulsivePoisson& k) { return k.d; },
                                 [](const RieszGradient& k) { return k.d; }},
                      kind);
}

std::string kernel_name(const KernelKind& kind)
{
    return std::visit(Overloaded{[](const BiotSavart&) { return std::string("biot_savart"); },
                                 [](const RepulsivePoisson&) { return std::string("repulsive_poisson"); },
                                 [](const RieszGradient&) { return std::string("riesz_gradient"); }},
                      kind);
}

void check_kernel(const KernelKind& kind)
{
    std::visit(Overloaded{[](const BiotSavart&) {},
                          [](const RepulsivePoisson& k) {
                              if (k.d < 2 || k.d > 3) throw InvalidArgument("repulsive Poisson needs d in {2, 3}");
                              if (!(k.c_d > 0.0)) throw InvalidArgument("repulsive Poisson needs C_d > 0");
                          },
                          [](const RieszGradient& k) {
                              if (k.d < 2 || k.d > 3) throw InvalidArgument("Riesz gradient needs d in {2, 3}");
                              if (!(k.s >= 0.0 && k.s <= k.d - 2.0)) {
                                  throw InvalidArgument("Riesz gradient needs 0 <= s <= d - 2");
                              }
                          }},
               kind);
}

bool is_harmonic(const KernelKind& kind)
{
    return std::visit(Overloaded{[](const BiotSavart&) { return true; },
                                 [](const RepulsivePoisson&) { return true; },
                                 [](const RieszGradient& k) { return k.s == k.d - 2.0; }},
                      kind);
}

void check_exponent(const KernelKind& kind, double p)
{
    if (!(p > 2.0)) throw InvalidExponents("p must exceed 2");
    std::visit(Overloaded{[](const BiotSavart&) {},
                          [p](const RepulsivePoisson& k) {
                              if (!(p > k.d)) throw InvalidExponents("p must exceed d for the repulsive Poisson kernel");
                          },
                          [p](const RieszGradient& k) {
                              if (!(p > k.s + 2.0)) throw InvalidExponents("p must exceed s + 2 for the Riesz kernel");
                          }},
               kind);
}

double radial_factor(const KernelKind& kind, double r)
{
    return std::visit(Overloaded{[r](const BiotSavart&) { return 1.0 / (2.0 * kPi * r * r); },
                                 [r](const RepulsivePoisson& k) { return k.c_d / std::pow(r, k.d); },
                                 [r](const RieszGradient& k) {
                                     return k.s > 0.0 ? k.s * std::pow(r, -k.s - 2.0) : 1.0 / (r * r);
                                 }},
                      kind);
}

bool is_rotational(const KernelKind& kind) { return std::holds_alternative<BiotSavart>(kind); }

Vec eval_kernel_unchecked(const KernelKind& kind, const Vec& x)
{
    const double g = radial_factor(kind, norm(x));
    if (is_rotational(kind)) return {-g * x[1], g * x[0], 0.0};
    return g * x;
}

Vec eval_kernel(const KernelKind& kind, std::span<const double> x)
{
    if (static_cast<int>(x.size()) != kernel_dim(kind)) {
        throw DimensionMismatch("point dimension " + std::to_string(x.size()) + " does not match kernel dimension " +
                                std::to_string(kernel_dim(kind)));
    }
    const Vec v = to_vec(x);
    if (norm2(v) == 0.0) throw ZeroPoint("kernel evaluated at the origin");
    return eval_kernel_unchecked(kind, v);
}

//---------------------------------------------------------------------------//
// RegularizedKernel
//---------------------------------------------------------------------------//
RegularizedKernel::RegularizedKernel(KernelKind kind, double epsilon, double rho_radius,
                                     std::vector<double> profile, double table_extent)
    : kind_(kind), epsilon_(epsilon), rho_radius_(rho_radius), profile_(std::move(profile)),
      extent_(table_extent)
{
    // profile_ holds resolution + 1 samples on [0, extent] plus 3 guard samples
    dr_ = extent_ / static_cast<double>(profile_.size() - 4);
}

double RegularizedKernel::radial_profile(double r) const
{
    if (r >= extent_) return radial_factor(kind_, r) * r;
    const double u = r / dr_;
    const auto k = static_cast<std::ptrdiff_t>(u);
    const double t = u - static_cast<double>(k);
    // h is odd in r, which supplies the sample left of the origin
    const double pm = k == 0 ? -profile_[1] : profile_[k - 1];
    const double p0 = profile_[k];
    const double p1 = profile_[k + 1];
    const double p2 = profile_[k + 2];
    // Catmull-Rom cubic through k-1 .. k+2
    return p0 + 0.5 * t * (p1 - pm + t * (2.0 * pm - 5.0 * p0 + 4.0 * p1 - p2 + t * (3.0 * (p0 - p1) + p2 - pm)));
}

Vec RegularizedKernel::operator()(const Vec& x) const
{
    const double r = norm(x);
    if (r == 0.0) return {0.0, 0.0, 0.0};
    const double s = radial_profile(r) / r;
    if (is_rotational(kind_)) return {-s * x[1], s * x[0], 0.0};
    return s * x;
}

double RegularizedKernel::sup_norm() const
{
    double m = 0.0;
    for (std::size_t i = 0; i + 3 < profile_.size(); ++i) m = std::max(m, std::abs(profile_[i]));
    return m;
}

void RegularizedKernel::write_csv(std::ostream& os) const
{
    const int d = dim();
    os << "# schema_version: 1\n";
    for (int i = 0; i < d; ++i) os << "x" << i + 1 << ',';
    for (int i = 0; i < d; ++i) os << 'K' << i + 1 << (i + 1 < d ? ',' : '\n');
    os.precision(17);
    for (std::size_t i = 0; i + 3 < profile_.size(); ++i) {
        const Vec x{static_cast<double>(i) * dr_, 0.0, 0.0};
        const Vec k = (*this)(x);
        for (int j = 0; j < d; ++j) os << x[j] << ',';
        for (int j = 0; j < d; ++j) os << k[j] << (j + 1 < d ? ',' : '\n');
    }
}

double regularized_profile_quadrature(const KernelKind& kind, const Mollifier& rho, double a)
{
    if (a == 0.0) return 0.0;
    const int d = kernel_dim(kind);
    const double rs = rho.support_radius();
    const double scale = std::abs(radial_factor(kind, rs) * rs);
    const double abs_tol = 1e-14 * scale;
    const double rho_peak = rho.from_r2(0.0);

    // Polar coordinates about the singularity y = 0 with the axis along x = a e_1.
    // K(y) projected on R(x)/|x| is g(r) r cos(theta) for every kind.
    auto inner = [&](double r) -> double {
        if (r == 0.0) return 0.0;
        const double c0 = (a * a + r * r - rs * rs) / (2.0 * a * r);
        if (c0 >= 1.0) return 0.0;
        const double lo = std::max(-1.0, c0);
        auto rho_at = [&](double c) { return rho.from_r2(std::max(0.0, a * a + r * r - 2.0 * a * r * c)); };
        const double g = radial_factor(kind, r);
        // the angular integral cancels to O(r/a) when the whole sphere lies in
        // the support, so tolerance is anchored to the integrand scale
        if (d == 2) {
            const double theta_max = std::acos(lo);
            const double ang = quad::adaptive([&](double th) { return std::cos(th) * rho_at(std::cos(th)); }, 0.0,
                                              theta_max, 1e-11, 1e-14 * rho_peak * theta_max);
            return 2.0 * ang * g * r * r;
        }
        const double ang =
            quad::adaptive([&](double c) { return c * rho_at(c); }, lo, 1.0, 1e-11, 1e-14 * rho_peak * (1.0 - lo));
        return 2.0 * kPi * ang * g * r * r * r;
    };

    const double r_lo = std::max(0.0, a - rs);
    const double r_hi = a + rs;
    if (r_lo == 0.0) {
        return quad::adaptive(inner, 0.0, a, 1e-10, abs_tol) + quad::adaptive(inner, a, r_hi, 1e-10, abs_tol);
    }
    return quad::adaptive(inner, r_lo, r_hi, 1e-10, abs_tol);
}

RegularizedKernel build_regularized(const KernelKind& kind, double epsilon, double rho_radius, int table_resolution)
{
    check_kernel(kind);
    if (!(epsilon > 0.0)) throw InvalidArgument("epsilon must be positive");
    if (table_resolution < 64) throw InvalidArgument("table resolution must be >= 64");
    const Mollifier rho(kernel_dim(kind), epsilon * rho_radius);
    const double support = rho.support_radius();
    const double extent = is_harmonic(kind) ? support : kNonHarmonicExtent * support;
    const double dr = extent / table_resolution;
    std::vector<double> profile(static_cast<std::size_t>(table_resolution) + 4);
    for (std::size_t i = 0; i < profile.size(); ++i) {
        const double r = static_cast<double>(i) * dr;
        profile[i] = (r >= support && is_harmonic(kind)) ? radial_factor(kind, r) * r
                                                         : regularized_profile_quadrature(kind, rho, r);
    }
    return RegularizedKernel(kind, epsilon, rho_radius, std::move(profile), extent);
}

SupNormReport sup_norm_bound_check(const KernelKind& kind, std::span<const double> epsilons, double p,
                                   int table_resolution)
{
    std::vector<double> eps(epsilons.begin(), epsilons.end());
    std::sort(eps.begin(), eps.end());
    eps.erase(std::unique(eps.begin(), eps.end()), eps.end());
    if (eps.size() < 4) throw InsufficientPoints("sup-norm fit needs at least 4 distinct epsilons");
    if (eps.back() > 0.5) throw InvalidArgument("sup-norm fit expects epsilons <= 0.5");
    check_exponent(kind, p);

    const int d = kernel_dim(kind);
    const double p_conj = p / (p - 1.0);
    SupNormReport rep;
    rep.epsilons = eps;
    rep.bound_exponent = -d / p_conj;
    rep.bound_constant = 0.0;
    for (double e : eps) {
        const double s = build_regularized(kind, e, 1.0, table_resolution).sup_norm();
        rep.sup_norms.push_back(s);
        rep.bound_constant = std::max(rep.bound_constant, s * std::pow(e, -rep.bound_exponent));
    }
    rep.fitted_exponent = stats::fit_loglog(rep.epsilons, rep.sup_norms).slope;
    rep.bound_satisfied = rep.fitted_exponent >= rep.bound_exponent;
    return rep;
}

} // namespace modlab
