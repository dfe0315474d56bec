#pragma once

#include "modlab/common.hpp"

#include <span>

namespace modlab {

/// Standard radial bump c * exp(-1 / (1 - |x/R|^2)) on |x| < R, normalized
/// to unit mass in R^d. Serves both as the kernel mollifier rho and as the
/// interaction potential V.
class Mollifier {
  public:
    explicit Mollifier(int d, double support_radius = 1.0);

    int dim() const { return d_; }
    double support_radius() const { return radius_; }
    double normalization() const { return norm_; }

    /// V evaluated from the squared radius.
    double from_r2(double r2) const
    {
        const double q = r2 * inv_r2_;
        return q < 1.0 ? norm_ * std::exp(-1.0 / (1.0 - q)) : 0.0;
    }
    double operator()(const Vec& x) const { return from_r2(norm2(x)); }

    /// Fourier transform int V(x) exp(-i xi.x) dx at |xi| = q (real, radial).
    double fourier(double q) const;

    /// ||V||_{L^p} by radial quadrature.
    double lp_norm(double p) const;

  private:
    int d_;
    double radius_;
    double inv_r2_;
    double norm_;
};

/// Moderate-interaction scaling V^N(x) = N^{d beta} V(N^beta x).
struct ModerateScaling {
    double beta = 1.0 / 64.0;
    long long n_particles = 1;
    double m = 4.0; ///< moment / integrability order, > 2
    double p = 4.0; ///< integrability exponent, > 2
    bool strict = true;

    /// Throws InvalidArgument on a broken invariant; in strict mode beta must
    /// lie within the admissible range for (m, d).
    void check(int d) const;
    double length_factor() const; ///< N^{-beta}
};

/// V^N as a value type: the base bump plus the scaling it is evaluated under.
class ScaledMollifier {
  public:
    ScaledMollifier(const Mollifier& base, const ModerateScaling& scaling);

    const Mollifier& base() const { return base_; }
    double support_radius() const { return radius_; }
    double from_r2(double r2) const { return amp_ * base_.from_r2(r2 * scale2_); }
    double operator()(const Vec& x) const { return from_r2(norm2(x)); }
    double fourier(double q) const { return base_.fourier(q / scale_); }

  private:
    Mollifier base_;
    double scale_;  ///< N^beta
    double scale2_; ///< N^{2 beta}
    double amp_;    ///< N^{d beta}
    double radius_;
};

double eval_VN(const Mollifier& moll, const ModerateScaling& scaling, const Vec& x);

struct BetaBounds {
    double beta_hypothesis;
    double beta_extended;
};

/// Largest admissible interaction exponent: the standing bound 1/(4m(d+2))
/// and the sharper 1/(2md + 16 + 2md max(1 - 2/p, 2/m)).
BetaBounds max_beta(double m, int d, double p);

} // namespace modlab
