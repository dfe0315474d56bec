#pragma once

#include "modlab/fields.hpp"

#include <complex>
#include <memory>
#include <vector>

namespace modlab {

/// Real-to-complex FFTs on an n^d periodic box of side 2L. Plans are made
/// once (FFTW_ESTIMATE, so results do not depend on timing) and reused;
/// the planner itself is serialized with a process-wide lock.
class Spectral {
  public:
    using Complex = std::complex<double>;

    Spectral(int d, int n, double half_width);
    explicit Spectral(const GridSpec& g) : Spectral(g.d, g.n, g.half_width) {}
    ~Spectral();
    Spectral(const Spectral&) = delete;
    Spectral& operator=(const Spectral&) = delete;

    int dim() const { return d_; }
    int n() const { return n_; }
    std::size_t real_size() const { return real_size_; }
    std::size_t complex_size() const { return complex_size_; }

    /// Angular wavenumber components and |xi|^2 of each complex coefficient.
    const std::vector<double>& xi(int axis) const { return xi_[axis]; }
    const std::vector<double>& xi2() const { return xi2_; }
    /// True where every |m_a| < n/3 (2/3-rule dealiasing mask).
    const std::vector<unsigned char>& dealias_mask() const { return mask_; }
    /// True for the Nyquist planes, where odd-derivative symbols are zeroed.
    const std::vector<unsigned char>& nyquist() const { return nyquist_; }

    void forward(const double* in, Complex* out) const;
    /// Normalized inverse: inverse(forward(f)) == f up to rounding.
    void inverse(const Complex* in, double* out) const;

    std::vector<Complex> forward(std::span<const double> in) const;
    std::vector<double> inverse(const std::vector<Complex>& in) const;

  private:
    struct Plans;
    int d_;
    int n_;
    std::size_t real_size_;
    std::size_t complex_size_;
    std::vector<double> xi_[3];
    std::vector<double> xi2_;
    std::vector<unsigned char> mask_;
    std::vector<unsigned char> nyquist_;
    std::unique_ptr<Plans> plans_;
};

} // namespace modlab
