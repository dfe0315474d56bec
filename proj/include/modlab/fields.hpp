#pragma once

#include "modlab/common.hpp"
#include "modlab/mollifiers.hpp"
#include "modlab/rng.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace modlab {

/// Uniform periodic box [-L, L)^d with n cells per side; samples live at
/// cell centres -L + (i + 1/2) h. Index order is row-major with x_1 slowest.
struct GridSpec {
    int d = 2;
    int n = 256;
    double half_width = 16.0;

    double h() const { return 2.0 * half_width / n; }
    double cell_volume() const { return std::pow(h(), d); }
    std::size_t cells() const;
    double coord(int i) const { return -half_width + (i + 0.5) * h(); }
    Vec center(std::size_t index) const;
    /// Throws InvalidArgument unless d in {2, 3}, n a power of two >= 8, L > 0.
    void check() const;
    bool operator==(const GridSpec&) const = default;
};

/// Scalar (components = 1) or vector (components = d) samples on a grid,
/// stored component-major.
class GridField {
  public:
    GridField() = default;
    GridField(const GridSpec& spec, int components = 1);

    const GridSpec& spec() const { return spec_; }
    int components() const { return components_; }
    std::size_t cells() const { return spec_.cells(); }
    std::span<double> component(int c) { return {values_.data() + c * cells(), cells()}; }
    std::span<const double> component(int c) const { return {values_.data() + c * cells(), cells()}; }
    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }
    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }

    /// Riemann-sum integral of component c.
    double integral(int c = 0) const;
    double max_abs() const;

  private:
    GridSpec spec_;
    int components_ = 1;
    std::vector<double> values_;
};

GridField operator-(const GridField& a, const GridField& b);

/// Initial densities: an axis-aligned Gaussian or the normalized radial bump
/// c exp(-1/(1 - |x/R|^2)).
struct InitialDatum {
    enum class Kind { Gaussian, Bump };
    Kind kind = Kind::Gaussian;
    int d = 2;
    Vec sigma{1.0, 1.0, 1.0}; ///< Gaussian standard deviations per axis
    double radius = 1.5;      ///< bump support radius

    static InitialDatum gaussian(int d, double sigma);
    static InitialDatum bump(int d, double radius);

    double density(const Vec& x) const;
    Vec sample(Rng& rng) const;
    GridField on_grid(const GridSpec& grid) const;
};

/// omega^N = (1/N) sum_i V^N(x - X_i) at cell centres. Each particle's
/// stencil is rescaled so that its full discrete mass is exactly 1/N.
/// Throws ResolutionError when the V^N support spans fewer than 4 cells
/// and MassLeak when less than 1 - 1e-4 of the mass lands in the box.
GridField mollify(std::span<const Vec> positions, const ScaledMollifier& vn, const GridSpec& grid);
/// d-component (1/N) sum_i v_i V^N(x - X_i), with the same stencils and
/// errors as mollify.
GridField mollify_weighted(std::span<const Vec> positions, std::span<const Vec> values, const ScaledMollifier& vn,
                           const GridSpec& grid);

/// max(||f||_{L^1}, ||f||_{L^p}).
double norm_l1lp(const GridField& f, double p);

/// sum f log f h^d with 0 log 0 = 0; values below 1e-300 count as zero.
double entropy_plugin(const GridField& f);

struct ZetaRow {
    long long n_particles;
    double zeta;
    double standard_error; ///< of the mean m-th power, propagated to zeta
    std::vector<double> distances;
};

struct ZetaReport {
    std::vector<ZetaRow> rows;
    double lambda_fit = 0.0; ///< zeta ~ C N^{-lambda}
};

/// Monte Carlo (E ||omega^N_0 - omega_0||^m_{L^1 cap L^p})^{1/m} over
/// `replicas` independent initial ensembles per N, and the log-log slope.
ZetaReport zeta_estimate(const InitialDatum& omega0, std::span<const long long> n_list,
                         const ModerateScaling& scaling, int replicas, const GridSpec& grid, std::uint64_t seed,
                         int threads = 1);

/// Flat CSV: x_1..x_d, value (or value_1..value_k for vector fields).
void write_csv(std::ostream& os, const GridField& f);

/// Binary layout, little-endian: 8-byte magic "MODLABGF", int32 d, int32 n,
/// int32 components, float64 L, 8-byte dtype tag "float64\0", then the
/// row-major float64 values, component-major.
void write_binary(std::ostream& os, const GridField& f);
GridField read_binary(std::istream& is);

} // namespace modlab
