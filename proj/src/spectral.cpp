#include "modlab/spectral.hpp"

#include <fftw3.h>

#include <cstring>
#include <mutex>

namespace modlab {

namespace {
std::mutex& planner_mutex()
{
    static std::mutex m;
    return m;
}
} // namespace

struct Spectral::Plans {
    fftw_plan fwd = nullptr;
    fftw_plan inv = nullptr;
    double* rbuf = nullptr;
    fftw_complex* cbuf = nullptr;
    // execution reuses the buffers, so concurrent calls on one instance serialize
    std::mutex exec;
};

Spectral::Spectral(int d, int n, double half_width) : d_(d), n_(n), plans_(std::make_unique<Plans>())
{
    if (d < 2 || d > 3) throw InvalidArgument("spectral dimension must be 2 or 3");
    if (n < 4 || n % 2) throw InvalidArgument("spectral size must be even and >= 4");
    const int nc = n / 2 + 1;
    real_size_ = d == 2 ? static_cast<std::size_t>(n) * n : static_cast<std::size_t>(n) * n * n;
    complex_size_ = real_size_ / n * nc;

    const double dk = kPi / half_width; // 2 pi / (2 L)
    auto wave = [n](int i) { return i <= n / 2 ? i : i - n; };
    for (auto& v : xi_) v.assign(complex_size_, 0.0);
    xi2_.assign(complex_size_, 0.0);
    mask_.assign(complex_size_, 0);
    nyquist_.assign(complex_size_, 0);
    const int cut = n / 3;
    std::size_t idx = 0;
    const int n0 = n, n1 = d == 2 ? nc : n, n2 = d == 2 ? 1 : nc;
    for (int i = 0; i < n0; ++i) {
        for (int j = 0; j < n1; ++j) {
            for (int k = 0; k < n2; ++k, ++idx) {
                const int m[3] = {wave(i), d == 2 ? j : wave(j), d == 2 ? 0 : k};
                bool keep = true, nyq = false;
                double s = 0.0;
                for (int a = 0; a < d; ++a) {
                    xi_[a][idx] = dk * m[a];
                    s += xi_[a][idx] * xi_[a][idx];
                    keep = keep && std::abs(m[a]) < cut;
                    nyq = nyq || std::abs(m[a]) == n / 2;
                }
                xi2_[idx] = s;
                mask_[idx] = keep;
                nyquist_[idx] = nyq;
            }
        }
    }

    std::lock_guard lock(planner_mutex());
    plans_->rbuf = fftw_alloc_real(real_size_);
    plans_->cbuf = fftw_alloc_complex(complex_size_);
    if (d == 2) {
        plans_->fwd = fftw_plan_dft_r2c_2d(n, n, plans_->rbuf, plans_->cbuf, FFTW_ESTIMATE);
        plans_->inv = fftw_plan_dft_c2r_2d(n, n, plans_->cbuf, plans_->rbuf, FFTW_ESTIMATE);
    } else {
        plans_->fwd = fftw_plan_dft_r2c_3d(n, n, n, plans_->rbuf, plans_->cbuf, FFTW_ESTIMATE);
        plans_->inv = fftw_plan_dft_c2r_3d(n, n, n, plans_->cbuf, plans_->rbuf, FFTW_ESTIMATE);
    }
}

Spectral::~Spectral()
{
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plans_->fwd);
    fftw_destroy_plan(plans_->inv);
    fftw_free(plans_->rbuf);
    fftw_free(plans_->cbuf);
}

void Spectral::forward(const double* in, Complex* out) const
{
    std::lock_guard lock(plans_->exec);
    std::memcpy(plans_->rbuf, in, real_size_ * sizeof(double));
    fftw_execute(plans_->fwd);
    std::memcpy(static_cast<void*>(out), plans_->cbuf, complex_size_ * sizeof(fftw_complex));
}

void Spectral::inverse(const Complex* in, double* out) const
{
    std::lock_guard lock(plans_->exec);
    // c2r destroys its input, hence the copy into the plan buffer
    std::memcpy(plans_->cbuf, static_cast<const void*>(in), complex_size_ * sizeof(fftw_complex));
    fftw_execute(plans_->inv);
    const double scale = 1.0 / static_cast<double>(real_size_);
    for (std::size_t i = 0; i < real_size_; ++i) out[i] = plans_->rbuf[i] * scale;
}

std::vector<Spectral::Complex> Spectral::forward(std::span<const double> in) const
{
    if (in.size() != real_size_) throw DimensionMismatch("FFT input size mismatch");
    std::vector<Complex> out(complex_size_);
    forward(in.data(), out.data());
    return out;
}

std::vector<double> Spectral::inverse(const std::vector<Complex>& in) const
{
    if (in.size() != complex_size_) throw DimensionMismatch("FFT input size mismatch");
    std::vector<double> out(real_size_);
    inverse(in.data(), out.data());
    return out;
}

} // namespace modlab
