#pragma once

#include "modlab/fields.hpp"
#include "modlab/kernels.hpp"
#include "modlab/mollifiers.hpp"
#include "modlab/noise.hpp"
#include "modlab/spectral.hpp"

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

namespace modlab {

struct ParticleEnsemble {
    int d = 2;
    std::vector<Vec> positions;
    double time = 0.0;
    std::uint64_t seed = 0;
    std::uint64_t replica = 0;

    std::size_t size() const { return positions.size(); }
};

/// N i.i.d. draws from omega0 on the stream (seed, Initial, N, replica).
ParticleEnsemble init_ensemble(long long n_particles, const InitialDatum& omega0, std::uint64_t seed,
                               std::uint64_t replica = 0);

/// G = K_eps * V^N. Both factors are radial, so G(x) = g(|x|) R(x)/|x| like
/// K_eps itself; g is tabulated by direct polar quadrature of V^N against
/// K_eps. Harmonic kernels use K beyond the combined support, where the shell
/// theorem makes G = K exactly.
class InteractionTable {
  public:
    InteractionTable(const RegularizedKernel& kernel, const ScaledMollifier& vn, double extent);

    int dim() const { return kernel_.dim(); }
    double extent() const { return extent_; }
    /// Radius past which g is no longer interpolated from the fine table.
    double near_radius() const { return near_; }
    const RegularizedKernel& kernel() const { return kernel_; }

    double radial_profile(double r) const;
    /// Throws OutOfTable when |x| exceeds the extent.
    Vec operator()(const Vec& x) const;
    double sup_norm() const { return sup_; }

  private:
    double interpolate(const std::vector<double>& table, double dr, double r) const;

    RegularizedKernel kernel_;
    double extent_;
    double near_;
    double dr_near_;
    double dr_far_ = 0.0;
    std::vector<double> near_table_;
    std::vector<double> far_table_;
    double sup_ = 0.0;
};

/// g(r) of K_eps * V^N at one radius by polar quadrature.
double interaction_profile_quadrature(const RegularizedKernel& kernel, const ScaledMollifier& vn, double r);

/// (1/N) sum_j G(X_i - X_j), j = i included. The inner sum runs in index
/// order, so the result does not depend on the thread count.
std::vector<Vec> drift_direct(std::span<const Vec> x, const InteractionTable& g, int threads = 1);

/// Particle-in-cell drift: deposit omega^N on the grid, convolve with K_eps
/// in free space (zero padding to 2n per side) and interpolate back with
/// 4-point Lagrange weights per axis.
class GridDrift {
  public:
    GridDrift(const RegularizedKernel& kernel, const ScaledMollifier& vn, const GridSpec& grid);

    const GridSpec& grid() const { return grid_; }
    const ScaledMollifier& vn() const { return vn_; }
    /// K_eps * omega as a d-component field on the grid.
    GridField velocity(const GridField& omega) const;
    std::vector<Vec> operator()(std::span<const Vec> x, int threads = 1) const;
    /// Samples a vector field at arbitrary points.
    std::vector<Vec> interpolate(const GridField& u, std::span<const Vec> x, int threads = 1) const;

  private:
    GridSpec grid_;
    ScaledMollifier vn_;
    std::shared_ptr<Spectral> padded_;
    std::vector<Spectral::Complex> kernel_hat_[3];
};

std::vector<Vec> drift_grid(std::span<const Vec> x, const RegularizedKernel& kernel, const ScaledMollifier& vn,
                            const GridSpec& grid, int threads = 1);

/// Drift source for the particle system: none (pure noise), the O(N^2)
/// pairwise sum, or the grid engine.
class DriftEngine {
  public:
    enum class Mode { None, DirectN2, GridFFT };

    static DriftEngine none();
    static DriftEngine direct(std::shared_ptr<const InteractionTable> table);
    static DriftEngine grid(std::shared_ptr<const GridDrift> engine);

    Mode mode() const { return mode_; }
    std::vector<Vec> operator()(std::span<const Vec> x, int threads = 1) const;

  private:
    Mode mode_ = Mode::None;
    std::shared_ptr<const InteractionTable> table_;
    std::shared_ptr<const GridDrift> grid_;
};

/// One Euler-Maruyama step. Every particle sees the same increments; noise
/// may be null for the noise-free system. Throws NonFinite on overflow.
void step(ParticleEnsemble& ens, double dt, const DriftEngine& drift, const NoiseField* noise,
          const ModeIncrements* incs, int threads = 1);

struct SimulationConfig {
    double dt = 1e-3;
    double T = 0.5;
    /// Requested snapshot times (rounded to the step grid); 0 and T are
    /// always stored. Empty means every step.
    std::vector<double> snapshot_times;
    int threads = 1;

    void check() const;
};

struct Snapshot {
    double time;
    std::vector<Vec> positions;
};

/// Steps ens from its current state to T. Increments come from the stream
/// (seed, Increments, replica), one draw per step, so a trajectory is fixed
/// by (config, seed, replica). Step errors are rethrown with the step index.
std::vector<Snapshot> simulate(ParticleEnsemble ens, const SimulationConfig& cfg, const DriftEngine& drift,
                               const NoiseField* noise);

/// (1/N) sum |X_i|^order.
double empirical_moment(std::span<const Vec> x, double order);

/// particle_id, x1..xd.
void write_snapshot_csv(std::ostream& os, const Snapshot& s, int d);

} // namespace modlab
