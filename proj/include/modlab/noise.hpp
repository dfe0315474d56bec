#pragma once

#include "modlab/common.hpp"
#include "modlab/rng.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace modlab {

/// Kraichnan-type environmental noise: a finite random-spectrum realization
/// of the divergence-free Gaussian field whose covariance is
///   Q_n(z) = int_{|k| >= 1} |k|^{-(d+alpha)} cos(e^n k.z) (I - k k^T/|k|^2) dk.
/// Each mode carries a wavevector (already multiplied by e^n), one unit
/// polarization orthogonal to it and a common weight.
class NoiseField {
  public:
    struct Mode {
        Vec k;
        Vec e;
    };

    NoiseField(int d, double alpha, double n_scale, std::vector<Mode> modes);

    int dim() const { return d_; }
    double alpha() const { return alpha_; }
    double n_scale() const { return n_scale_; }
    double nu() const { return nu_; }
    double weight() const { return weight_; }
    std::size_t mode_count() const { return modes_.size(); }
    const std::vector<Mode>& modes() const { return modes_; }

  private:
    int d_;
    double alpha_;
    double n_scale_;
    double nu_;
    double weight_;
    std::vector<Mode> modes_;
};

/// Brownian increments of one time step: xi multiplies the cosine channel,
/// eta the sine channel of each mode. Shared by every particle.
struct ModeIncrements {
    double dt = 0.0;
    std::vector<double> xi;
    std::vector<double> eta;
};

/// nu with Q(0) = 2 nu I: (1/2) ((d-1)/d) |S^{d-1}| / alpha.
double nu_theoretical(int d, double alpha);

/// Q_n(z) by analytic angular integration and Gauss-Legendre panels in the
/// radial variable. k_max = 0 picks the cutoff automatically (omitted tail
/// below 1e-10 of the Q(0) scale); an explicit k_max (in units of e^n)
/// throws TailTruncationError when its estimated tail exceeds 1e-8.
Mat covariance_quadrature(int d, double alpha, double n_scale, const Vec& z, double k_max = 0.0);

/// Q_n at |z| = r for many radii in one sweep. Q is isotropic:
/// Q(z) = par(r) zhat zhat^T + perp(r) (I - zhat zhat^T).
struct CovarianceProfile {
    std::vector<double> radius;
    std::vector<double> par;
    std::vector<double> perp;
};
CovarianceProfile covariance_profile(int d, double alpha, double n_scale, std::span<const double> radii);

/// Sample M modes: |k| by inverse CDF of the density prop. to
/// |k|^{-(d+alpha)} on |k| >= 1, uniform direction, uniform unit
/// polarization in k^perp. Weight |S^{d-1}| (d-1) / (alpha M) makes the
/// synthesized covariance unbiased for Q_n at every z.
NoiseField build_noise(int d, double alpha, double n_scale, int mode_count, std::uint64_t seed);

/// Exact covariance of the synthesized field for this mode set:
/// sum_j w e_j e_j^T cos(k_j.z). Its mean over mode draws is Q_n(z).
Mat synthesized_covariance(const NoiseField& noise, const Vec& z);

/// 2M independent N(0, dt) draws.
ModeIncrements sample_shared_increments(const NoiseField& noise, double dt, Rng& rng);

/// sum_j sqrt(w) e_j [cos(k_j.x) xi_j + sin(k_j.x) eta_j].
Vec velocity_increment(const NoiseField& noise, const ModeIncrements& incs, const Vec& x);

/// velocity_increment for a batch of points, written to out.
void velocity_increments(const NoiseField& noise, const ModeIncrements& incs, std::span<const Vec> x,
                         std::span<Vec> out, int threads = 1);

/// ||Q_n||_{L^r} over the ball of radius box_half_width, by composite
/// Simpson quadrature on `resolution` radial cells of the Frobenius norm.
/// Throws BoxTooSmall when max |Q| over the outer tenth of the radii
/// exceeds boundary_tol * |Q(0)|.
double qn_lr_norm(int d, double alpha, double n_scale, double r, double box_half_width, int resolution,
                  double boundary_tol = 1e-2);

/// Empirical E[u(z) u(0)^T] over independent noise realizations (fresh
/// modes and unit-time increments per replica) next to the quadrature
/// oracle. Replica r uses the streams (seed, NoiseModes, r) and
/// (seed, Increments, r).
struct CovarianceCheck {
    std::vector<Vec> z;
    std::vector<Mat> oracle;
    std::vector<Mat> mean;
    std::vector<Mat> standard_error;
};
CovarianceCheck covariance_monte_carlo(int d, double alpha, double n_scale, int mode_count, int replicas,
                                       std::span<const Vec> z, std::uint64_t seed, int threads = 1);

/// Long-format covariance comparison rows: z_1..z_d, Q_11..Q_dd (oracle),
/// Qhat_11..Qhat_dd (empirical).
void write_covariance_csv(std::ostream& os, int d, std::span<const Vec> z, std::span<const Mat> oracle,
                          std::span<const Mat> empirical);

} // namespace modlab
