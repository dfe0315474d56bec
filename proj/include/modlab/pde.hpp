#pragma once

#include "modlab/fields.hpp"
#include "modlab/kernels.hpp"
#include "modlab/spectral.hpp"

#include <memory>
#include <optional>
#include <vector>

namespace modlab {

/// How K * omega is formed on the grid: not at all (pure heat), with the
/// exact Fourier symbol of K, or with the symbol of K_eps = K * rho_eps.
struct KernelMode {
    enum class Type { Zero, ExactSpectral, Regularized };
    Type type = Type::ExactSpectral;
    KernelKind kind = BiotSavart{};
    double epsilon = 0.0;
    double rho_radius = 1.0;

    static KernelMode zero() { return {Type::Zero, BiotSavart{}, 0.0, 1.0}; }
    static KernelMode exact(const KernelKind& k) { return {Type::ExactSpectral, k, 0.0, 1.0}; }
    static KernelMode regularized(const KernelKind& k, double eps, double rho_radius = 1.0)
    {
        return {Type::Regularized, k, eps, rho_radius};
    }
};

struct PdeConfig {
    double nu = kPi / 8.0;
    KernelMode kernel;
    GridSpec grid;
    double dt = 1e-3;
    double T = 0.5;
    /// Requested snapshot times (rounded to the step grid); 0 and T are
    /// always stored. Empty means every step.
    std::vector<double> snapshot_times;
    /// sup |omega| guard; 0 selects 1e6 * sup |omega_0|.
    double blow_up_threshold = 0.0;
    bool dealias = true;

    void check() const;
};

/// Precomputed Fourier multipliers for one (grid, kernel, nu) triple.
class PdeOperator {
  public:
    PdeOperator(const GridSpec& grid, const KernelMode& kernel, double nu, bool dealias = true);

    const GridSpec& grid() const { return grid_; }
    const Spectral& spectral() const { return *fft_; }
    double nu() const { return nu_; }

    GridField heat(const GridField& f, double t) const;
    /// K * f as a d-component field (zero for the Zero kernel mode).
    GridField velocity(const GridField& f) const;
    /// Dealiased (K * f) f.
    GridField flux(const GridField& f) const;
    /// div e^{tau A} G for a d-component field G.
    GridField div_heat(const GridField& g, double tau) const;
    /// e^{dt A} (f - dt div((K * f) f)).
    GridField step(const GridField& f, double dt) const;

  private:
    std::vector<Spectral::Complex> velocity_hat(const std::vector<Spectral::Complex>& fh, int axis) const;

    GridSpec grid_;
    KernelMode kernel_;
    double nu_;
    bool dealias_;
    std::shared_ptr<Spectral> fft_;
    // velocity multiplier: u_a hat = i * sym_[a] * f hat
    std::vector<double> sym_[3];
};

/// Exact whole-space Fourier symbol of the radial part: K hat(xi) = i c(|xi|) R(xi),
/// returned as c(|xi|) with R(xi) = xi or xi^perp (see kernels.hpp).
double kernel_symbol_factor(const KernelKind& kind, double xi_norm);

GridField heat_propagate(const GridField& f, double t, double nu);
GridField velocity_from_vorticity(const GridField& f, const KernelMode& mode);
GridField step_mild(const GridField& f, double dt, const PdeConfig& cfg);

struct Trajectory {
    std::vector<double> times;
    std::vector<GridField> fields;
    bool blew_up = false;
    double failure_time = 0.0;
};

/// Exponential-Euler integration of the mild equation from omega0 to T.
/// A tripped blow-up guard stops the run and is recorded in the status
/// rather than thrown.
Trajectory solve(const GridField& omega0, const PdeConfig& cfg);

/// L^1 norm at the final time of
///   omega_T - e^{TA} omega_0 + int_0^T div e^{(T-s)A} ((K * omega_s) omega_s) ds
/// with the time integral taken by the trapezoid rule over the stored
/// snapshots.
double mild_residual(const Trajectory& traj, const PdeConfig& cfg);

} // namespace modlab
