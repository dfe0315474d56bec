#pragma once

#include "modlab/common.hpp"
#include "modlab/mollifiers.hpp"

#include <iosfwd>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace modlab {

/// 2D Biot-Savart law (1/2pi) x^perp / |x|^2.
struct BiotSavart {};

/// Repulsive Poisson kernel C_d x / |x|^d.
struct RepulsivePoisson {
    int d = 2;
    double c_d = 1.0 / (2.0 * kPi); ///< default 1/|S^{d-1}| makes div K the unit Dirac mass
};

/// Gradient of the Riesz potential V_s: s x |x|^{-s-2} (s > 0), x / |x|^2 (s = 0).
struct RieszGradient {
    int d = 3;
    double s = 0.0;
};

using KernelKind = std::variant<BiotSavart, RepulsivePoisson, RieszGradient>;

RepulsivePoisson repulsive_poisson(int d);

int kernel_dim(const KernelKind& kind);
std::string kernel_name(const KernelKind& kind);
/// Throws InvalidArgument when the kind violates its admissibility range.
void check_kernel(const KernelKind& kind);
/// True when K is componentwise harmonic away from the origin, which makes
/// the mollified kernel coincide with K outside the mollifier support.
bool is_harmonic(const KernelKind& kind);
/// Conditions on the integrability exponent p for which K is admissible:
/// p > 2, plus p > d (repulsive Poisson) or p > s + 2 (Riesz).
void check_exponent(const KernelKind& kind, double p);

/// Every supported kernel has the form K(x) = g(|x|) R(x) with R(x) = x
/// (gradient kinds) or x^perp (Biot-Savart); radial_factor returns g.
double radial_factor(const KernelKind& kind, double r);
bool is_rotational(const KernelKind& kind);

/// Closed-form K(x). Throws ZeroPoint at the origin and DimensionMismatch when
/// x.size() differs from the kernel dimension.
Vec eval_kernel(const KernelKind& kind, std::span<const double> x);
/// Unchecked variant for inner loops; x must be nonzero.
Vec eval_kernel_unchecked(const KernelKind& kind, const Vec& x);

/// K_eps = K * rho_eps tabulated along a ray. Rotation equivariance of K and
/// radiality of rho give K_eps(x) = h(|x|) R(x)/|x|, so a 1D profile h
/// determines the whole field.
class RegularizedKernel {
  public:
    RegularizedKernel(KernelKind kind, double epsilon, double rho_radius, std::vector<double> profile,
                      double table_extent);

    const KernelKind& kind() const { return kind_; }
    int dim() const { return kernel_dim(kind_); }
    double epsilon() const { return epsilon_; }
    double rho_radius() const { return rho_radius_; }
    /// Radius beyond which the table is not consulted.
    double table_extent() const { return extent_; }
    double cell_size() const { return dr_; }
    std::span<const double> profile() const { return profile_; }
    Mollifier rho() const { return Mollifier(dim(), epsilon_ * rho_radius_); }

    /// h(r): signed magnitude of K_eps along R(x)/|x| at radius r.
    double radial_profile(double r) const;
    Vec operator()(const Vec& x) const;
    /// Largest |K_eps| over the table.
    double sup_norm() const;

    /// CSV of the tabulated ray x = (r, 0, ...): x_1..x_d, K_1..K_d.
    void write_csv(std::ostream& os) const;

  private:
    KernelKind kind_;
    double epsilon_;
    double rho_radius_;
    std::vector<double> profile_;
    double extent_;
    double dr_;
};

/// Build K_eps by nested adaptive Gauss-Legendre quadrature in polar
/// coordinates centred on the singularity. Throws QuadratureFailure when the
/// scheme misses tolerance 1e-8.
RegularizedKernel build_regularized(const KernelKind& kind, double epsilon, double rho_radius = 1.0,
                                    int table_resolution = 256);

/// h(|x|) of K_eps at a single radius by direct quadrature (no table).
double regularized_profile_quadrature(const KernelKind& kind, const Mollifier& rho, double radius);

struct SupNormReport {
    std::vector<double> epsilons;
    std::vector<double> sup_norms;
    double fitted_exponent;
    double bound_exponent; ///< -d/p'
    double bound_constant; ///< smallest C with sup|K_eps| <= C eps^{-d/p'} on the tested range
    bool bound_satisfied;
};

SupNormReport sup_norm_bound_check(const KernelKind& kind, std::span<const double> epsilons, double p,
                                   int table_resolution = 256);

} // namespace modlab
