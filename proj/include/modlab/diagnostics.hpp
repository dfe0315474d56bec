#pragma once

#include "modlab/fields.hpp"
#include "modlab/kernels.hpp"
#include "modlab/particles.hpp"
#include "modlab/pde.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace modlab {

/// [min(theta log N, -theta log zeta_N)]^{-p'/(2d)} with p' = p/(p-1).
/// Throws InvalidZeta unless 0 < zeta_N < 1.
double epsilon_schedule(long long n_particles, double zeta, double p, int d, double theta = 1.0);

//---------------------------------------------------------------------------//
// Convergence sweep
//---------------------------------------------------------------------------//
struct SweepConfig {
    /// Interaction kernel; empty runs the non-interacting system.
    std::optional<KernelKind> kernel = BiotSavart{};
    InitialDatum omega0 = InitialDatum::gaussian(2, 1.0);
    /// Shared by the particle deposit, the grid drift and the PDE references.
    GridSpec grid{2, 128, 8.0};
    double T = 0.5;
    double dt = 2e-3;
    /// Times at which distances are taken; empty means every 0.05.
    std::vector<double> snapshot_times;
    ModerateScaling scaling; ///< n_particles is set per row
    std::vector<long long> n_list{64, 256, 1024, 4096};
    int replicas = 16;

    bool noise = true;
    double alpha = 4.0;
    int mode_count = 512;
    bool coupled = true; ///< n_scale = log N; otherwise the fixed n_scale
    double n_scale = 0.0;

    bool scheduled_epsilon = true;
    double theta = 1.0;
    double epsilon = 0.5; ///< used when not scheduled
    double rho_radius = 1.0;
    /// zeta_N per entry of n_list; estimated when empty.
    std::vector<double> zeta;
    int zeta_replicas = 32;

    DriftEngine::Mode engine = DriftEngine::Mode::GridFFT;
    /// Also estimate the stochastic convolution for every replica.
    bool stochastic_convolution = false;

    std::uint64_t seed = 1;
    int threads = 1;

    void check() const;
    /// nu of the limit equation: the noise covariance fixes Q(0) = 2 nu I.
    double nu() const;
    std::vector<double> distance_times() const;
};

struct SweepRow {
    long long n_particles = 0;
    double beta = 0.0;
    double epsilon = 0.0;
    double zeta = 0.0;
    double n_scale = 0.0;
    int replicas = 0;
    /// Per replica: sup_t ||omega^N_t - omega^eps_t|| and sup_t ||omega^N_t - omega_t||.
    std::vector<double> dist_eps;
    std::vector<double> dist_exact;
    /// Per replica sup_t ||Z^N_t|| (stochastic convolution runs only).
    std::vector<double> z_sup;
    /// omega^N = heat - duhamel - Z held bit for bit in every replica.
    bool z_reconstruction_exact = true;
    /// Per replica running max of the empirical moment of order m(d+1).
    std::vector<double> moment_sup;
    double median_eps = 0.0, iqr_eps = 0.0, lm_eps = 0.0;
    double median_exact = 0.0, iqr_exact = 0.0, lm_exact = 0.0;
    double median_z = 0.0;
    double wall_seconds = 0.0;
    std::string error; ///< non-empty when the row failed
};

struct ConvergenceReport {
    std::vector<SweepRow> rows;
    /// Log-log slopes of the medians against N over the successful rows.
    double slope_eps = 0.0;
    double slope_exact = 0.0;
    /// -slope of median sup ||Z|| against N.
    double iota_fit = 0.0;
};

ConvergenceReport convergence_sweep(const SweepConfig& cfg);

/// One row per (N, replica).
void write_convergence_csv(std::ostream& os, const ConvergenceReport& r);
/// One row per N plus the fitted slopes as comments. Timings stay out of
/// the CSV so that reruns are byte-identical.
void write_convergence_summary_csv(std::ostream& os, const ConvergenceReport& r);

//---------------------------------------------------------------------------//
// Force covariance decay
//---------------------------------------------------------------------------//
struct CovDecayConfig {
    int d = 2;
    double alpha = 4.0;
    InitialDatum omega0 = InitialDatum::gaussian(2, 1.0);
    long long n_particles = 2; ///< particles 0 and 1 are the tagged pair
    double time = 0.5;
    double dt = 1e-2;
    int mode_count = 256;
    bool noise = true; ///< without noise the pair keeps its initial law
    double ell = 2.0;
    int replicas = 256;
    std::uint64_t seed = 1;
    int threads = 1;

    void check() const;
};

struct CovDecayRow {
    double n_scale;
    double mean;
    double standard_error;
    double median;
    std::vector<double> samples;
};

/// Monte Carlo E |Q_n(X^1_s - X^2_s)|^ell (Frobenius norm) for each noise
/// scale, with the pair driven by the shared noise at that scale.
std::vector<CovDecayRow> force_covariance_decay(const CovDecayConfig& cfg, std::span<const double> n_scales);

/// |Q_n(z)|^ell for many separations in one covariance sweep.
std::vector<double> covariance_moment(int d, double alpha, double n_scale, std::span<const Vec> z, double ell);

//---------------------------------------------------------------------------//
// Stochastic convolution
//---------------------------------------------------------------------------//
struct ZOptions {
    double p = 4.0;
    bool keep_fields = false;
    /// Repeat on every other snapshot and throw QuadratureTooCoarse when
    /// sup ||Z|| moves by more than 20%.
    bool check_density = false;
    int threads = 1;
};

/// (z1, z2) with z1 + z2 == c - omega exactly and (c - z1) - z2 == omega
/// bit for bit.
std::pair<double, double> split_difference(double c, double omega);

/// Z at one time as the unevaluated sum z1 + z2 (exact). With
/// c = heat - duhamel, omega = (c - z1) - z2 holds bit for bit.
struct ZSnapshot {
    GridField heat;    ///< e^{tA} omega^N_0
    GridField duhamel; ///< int_0^t div e^{(t-s)A} V^N * ((K_eps * omega^N_s) S^N_s) ds
    GridField z1;
    GridField z2;

    GridField z() const;
    GridField reconstruct() const;
};

struct StochasticConvolution {
    std::vector<double> times;
    std::vector<double> norms; ///< ||Z_t||_{L^1 cap L^p}
    double sup_norm = 0.0;
    bool reconstruction_exact = true;
    std::vector<ZSnapshot> fields; ///< kept on request
    std::vector<GridField> omega;  ///< kept on request
};

/// Z^N_t = e^{tA} omega^N_0 - int_0^t div e^{(t-s)A} V^N * ((K_eps * omega^N_s) S^N_s) ds - omega^N_t
/// with the Duhamel integral taken by the left-point rule over the
/// snapshots. nu = 0 drops the heat semigroup (noise-free system).
StochasticConvolution stochastic_convolution_estimate(std::span<const Snapshot> snaps, const GridDrift& drift,
                                                      double nu, const ZOptions& opt = {});

//---------------------------------------------------------------------------//
// Entropy and Mittag-Leffler
//---------------------------------------------------------------------------//
struct EntropyTrend {
    std::vector<double> values;
    double initial = 0.0;
    double max_excess = 0.0; ///< max_t H(t) - H(0)
    bool bounded = true;     ///< max_excess <= tolerance
    bool non_increasing = true;
};

EntropyTrend entropy_trend(std::span<const GridField> fields, double tolerance = 0.1);

/// e^{z^2} (1 + (2/sqrt(pi)) int_0^z e^{-t^2} dt), the integral by adaptive
/// Gauss-Legendre quadrature.
double mittag_leffler_half(double z);
/// E_{1/2}(z) <= 2 e^{z^2}.
bool mittag_leffler_bound_holds(double z);

} // namespace modlab
