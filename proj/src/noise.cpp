#include "modlab/noise.hpp"

#include "modlab/parallel.hpp"
#include "modlab/quadrature.hpp"
#include "modlab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace modlab {

namespace {
void check_alpha(double alpha)
{
    if (!(alpha > 2.0)) throw InvalidAlpha("spectral exponent alpha must exceed 2");
}

void check_dim(int d)
{
    if (d < 2 || d > 3) throw InvalidArgument("noise dimension must be 2 or 3");
}

// Diagonal entry of Q(0).
double q0_entry(int d, double alpha) { return sphere_area(d) * (d - 1) / (d * alpha); }

// Angular integrals of cos(s khat.zhat)(I - khat khat^T) over the unit sphere,
// along zhat (par) and across it (perp).
struct Angular {
    double par;
    double perp;
};

Angular angular(int d, double s)
{
    if (d == 2) {
        const double j0 = std::cyl_bessel_j(0.0, s);
        const double j1_s = s < 1e-4 ? 0.5 - s * s / 16.0 : std::cyl_bessel_j(1.0, s) / s;
        // pi (J0 + J2) and pi (J0 - J2) with J2 = 2 J1 / s - J0
        return {2.0 * kPi * j1_s, 2.0 * kPi * (j0 - j1_s)};
    }
    double j0, j1_s;
    if (s < 1e-3) {
        j0 = 1.0 - s * s / 6.0;
        j1_s = 1.0 / 3.0 - s * s / 30.0;
    } else {
        j0 = std::sph_bessel(0, s);
        j1_s = std::sph_bessel(1, s) / s;
    }
    return {8.0 * kPi * j1_s, 4.0 * kPi * (j0 - j1_s)};
}

// Estimated |int_s^inf t^{-1-alpha} A(t) dt|: the smaller of the monotone
// bound and the one-lobe bound of an oscillatory integrand.
double tail_estimate(int d, double alpha, double s)
{
    const double S = sphere_area(d);
    const double envelope =
        d == 2 ? 2.0 * S * std::sqrt(2.0 / (kPi * s)) * (1.0 + 1.0 / s) : 2.0 * S * (1.0 / s + 2.0 / (s * s));
    return std::min(S * std::pow(s, -alpha) / alpha, 2.0 * std::pow(s, -1.0 - alpha) * std::min(S, envelope));
}

// F(a) = int_a^inf s^{-1-alpha} A(s) ds at every a of a sorted positive list,
// integrated once over [a_min, s_max] with suffix sums.
struct Suffix {
    std::vector<double> par;
    std::vector<double> perp;
};

Suffix suffix_integrals(int d, double alpha, std::span<const double> a, double s_max)
{
    std::vector<double> breaks(a.begin(), a.end());
    const double sw = 2.0 * kPi;
    for (double s = a.front(); s < sw; s *= 2.0) breaks.push_back(s);
    const double s_uniform = std::max(sw, a.front());
    for (double s = s_uniform; s < s_max; s += kPi) breaks.push_back(s);
    breaks.push_back(s_max);
    std::sort(breaks.begin(), breaks.end());
    breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());

    const std::size_t nb = breaks.size();
    std::vector<double> cum_par(nb, 0.0), cum_perp(nb, 0.0);
    for (std::size_t i = nb - 1; i-- > 0;) {
        const double lo = breaks[i], hi = breaks[i + 1];
        // both channels share the Bessel evaluations at the 64 nodes
        const double half = 0.5 * (hi - lo), mid = 0.5 * (hi + lo);
        double p = 0.0, q = 0.0;
        const auto& x = quad::Rule64::abscissa();
        const auto& w = quad::Rule64::weights();
        for (std::size_t k = 0; k < x.size(); ++k) {
            for (double s : {mid - half * x[k], mid + half * x[k]}) {
                const Angular ang = angular(d, s);
                const double g = w[k] * std::pow(s, -1.0 - alpha);
                p += g * ang.par;
                q += g * ang.perp;
            }
        }
        cum_par[i] = cum_par[i + 1] + p * half;
        cum_perp[i] = cum_perp[i + 1] + q * half;
    }
    Suffix out;
    for (double ai : a) {
        const auto idx = static_cast<std::size_t>(std::lower_bound(breaks.begin(), breaks.end(), ai) - breaks.begin());
        out.par.push_back(cum_par[idx]);
        out.perp.push_back(cum_perp[idx]);
    }
    return out;
}

double automatic_cutoff(int d, double alpha, double a_max, double rel_tol)
{
    const double target = rel_tol * q0_entry(d, alpha);
    double s = std::max(2.0 * kPi, 2.0 * a_max);
    while (std::pow(a_max, alpha) * tail_estimate(d, alpha, s) > target) s *= 1.25;
    return s;
}

CovarianceProfile profile_impl(int d, double alpha, double n_scale, std::span<const double> radii, double k_max)
{
    check_dim(d);
    check_alpha(alpha);
    CovarianceProfile prof;
    prof.radius.assign(radii.begin(), radii.end());
    prof.par.assign(radii.size(), 0.0);
    prof.perp.assign(radii.size(), 0.0);

    const double scale = std::exp(n_scale);
    std::vector<double> a;
    for (double r : radii) {
        if (!(r >= 0.0) || !std::isfinite(r)) throw InvalidArgument("covariance radius must be finite and >= 0");
        if (r > 0.0) a.push_back(scale * r);
    }
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());

    Suffix suf;
    if (!a.empty()) {
        double s_max;
        if (k_max > 0.0) {
            if (k_max <= 1.0) throw InvalidArgument("k_max must exceed 1");
            if (std::pow(a.back(), alpha) * tail_estimate(d, alpha, a.back() * k_max) > 1e-8 * q0_entry(d, alpha)) {
                throw TailTruncationError("estimated spectral tail beyond k_max exceeds 1e-8 of Q(0)");
            }
            s_max = a.back() * k_max;
        } else {
            s_max = automatic_cutoff(d, alpha, a.back(), 1e-10);
        }
        suf = suffix_integrals(d, alpha, a, s_max);
    }

    const double q0 = q0_entry(d, alpha);
    for (std::size_t i = 0; i < radii.size(); ++i) {
        if (radii[i] == 0.0) {
            prof.par[i] = prof.perp[i] = q0;
            continue;
        }
        const double ai = scale * radii[i];
        const auto j = static_cast<std::size_t>(std::lower_bound(a.begin(), a.end(), ai) - a.begin());
        const double amp = std::pow(ai, alpha);
        prof.par[i] = amp * suf.par[j];
        prof.perp[i] = amp * suf.perp[j];
    }
    return prof;
}
} // namespace

double nu_theoretical(int d, double alpha)
{
    check_alpha(alpha);
    if (d < 2) throw InvalidArgument("noise dimension must be >= 2");
    return 0.5 * q0_entry(d, alpha);
}

NoiseField::NoiseField(int d, double alpha, double n_scale, std::vector<Mode> modes)
    : d_(d), alpha_(alpha), n_scale_(n_scale), nu_(nu_theoretical(d, alpha)), modes_(std::move(modes))
{
    check_dim(d);
    if (modes_.empty()) throw InvalidArgument("noise field needs at least one mode");
    weight_ = sphere_area(d) * (d - 1) / (alpha * static_cast<double>(modes_.size()));
}

CovarianceProfile covariance_profile(int d, double alpha, double n_scale, std::span<const double> radii)
{
    return profile_impl(d, alpha, n_scale, radii, 0.0);
}

Mat covariance_quadrature(int d, double alpha, double n_scale, const Vec& z, double k_max)
{
    const double r = norm(z);
    const double radius[1] = {r};
    const auto prof = profile_impl(d, alpha, n_scale, radius, k_max);
    Mat q{};
    const Vec zh = r > 0.0 ? (1.0 / r) * z : Vec{1.0, 0.0, 0.0};
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            q[i][j] = (i == j ? prof.perp[0] : 0.0) + (prof.par[0] - prof.perp[0]) * zh[i] * zh[j];
    return q;
}

Mat synthesized_covariance(const NoiseField& noise, const Vec& z)
{
    Mat q{};
    for (const auto& m : noise.modes()) {
        const double c = noise.weight() * std::cos(dot(m.k, z));
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) q[i][j] += c * m.e[i] * m.e[j];
    }
    return q;
}

NoiseField build_noise(int d, double alpha, double n_scale, int mode_count, std::uint64_t seed)
{
    check_dim(d);
    check_alpha(alpha);
    if (mode_count < 16) throw InvalidArgument("noise needs at least 16 modes");
    Rng rng(seed);
    std::normal_distribution<double> gauss;
    const double scale = std::exp(n_scale);
    std::vector<NoiseField::Mode> modes(static_cast<std::size_t>(mode_count));
    for (auto& m : modes) {
        const double radius = scale * std::pow(1.0 - uniform01(rng), -1.0 / alpha);
        if (d == 2) {
            const double th = 2.0 * kPi * uniform01(rng);
            const double c = std::cos(th), s = std::sin(th);
            m.k = {radius * c, radius * s, 0.0};
            m.e = {-s, c, 0.0};
            continue;
        }
        Vec u{gauss(rng), gauss(rng), gauss(rng)};
        u = (1.0 / norm(u)) * u;
        // orthonormal basis (b1, b2) of u^perp
        const Vec ref = std::abs(u[0]) < 0.9 ? Vec{1.0, 0.0, 0.0} : Vec{0.0, 1.0, 0.0};
        Vec b1 = ref - dot(ref, u) * u;
        b1 = (1.0 / norm(b1)) * b1;
        const Vec b2{u[1] * b1[2] - u[2] * b1[1], u[2] * b1[0] - u[0] * b1[2], u[0] * b1[1] - u[1] * b1[0]};
        const double ph = 2.0 * kPi * uniform01(rng);
        Vec e = std::cos(ph) * b1 + std::sin(ph) * b2;
        e = e - dot(e, u) * u;
        m.k = radius * u;
        m.e = (1.0 / norm(e)) * e;
    }
    return NoiseField(d, alpha, n_scale, std::move(modes));
}

ModeIncrements sample_shared_increments(const NoiseField& noise, double dt, Rng& rng)
{
    if (!(dt > 0.0)) throw InvalidArgument("dt must be positive");
    std::normal_distribution<double> gauss(0.0, std::sqrt(dt));
    ModeIncrements incs;
    incs.dt = dt;
    incs.xi.resize(noise.mode_count());
    incs.eta.resize(noise.mode_count());
    for (std::size_t j = 0; j < noise.mode_count(); ++j) {
        incs.xi[j] = gauss(rng);
        incs.eta[j] = gauss(rng);
    }
    return incs;
}

Vec velocity_increment(const NoiseField& noise, const ModeIncrements& incs, const Vec& x)
{
    Vec u{0.0, 0.0, 0.0};
    const auto& modes = noise.modes();
    for (std::size_t j = 0; j < modes.size(); ++j) {
        const double ph = dot(modes[j].k, x);
        u += (std::cos(ph) * incs.xi[j] + std::sin(ph) * incs.eta[j]) * modes[j].e;
    }
    return std::sqrt(noise.weight()) * u;
}

void velocity_increments(const NoiseField& noise, const ModeIncrements& incs, std::span<const Vec> x,
                         std::span<Vec> out, int threads)
{
    if (out.size() != x.size()) throw DimensionMismatch("velocity_increments output size differs from input");
    const std::size_t m = noise.mode_count();
    const int d = noise.dim();
    // structure-of-arrays copies for the inner loop
    std::vector<double> k(3 * m), a(3 * m), b(3 * m);
    const double sw = std::sqrt(noise.weight());
    for (std::size_t j = 0; j < m; ++j) {
        const auto& md = noise.modes()[j];
        for (int c = 0; c < 3; ++c) {
            k[c * m + j] = md.k[c];
            a[c * m + j] = sw * incs.xi[j] * md.e[c];
            b[c * m + j] = sw * incs.eta[j] * md.e[c];
        }
    }
    parallel_for(x.size(), threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const Vec& p = x[i];
            double u0 = 0.0, u1 = 0.0, u2 = 0.0;
            if (d == 2) {
                for (std::size_t j = 0; j < m; ++j) {
                    const double ph = k[j] * p[0] + k[m + j] * p[1];
                    const double c = std::cos(ph), s = std::sin(ph);
                    u0 += a[j] * c + b[j] * s;
                    u1 += a[m + j] * c + b[m + j] * s;
                }
            } else {
                for (std::size_t j = 0; j < m; ++j) {
                    const double ph = k[j] * p[0] + k[m + j] * p[1] + k[2 * m + j] * p[2];
                    const double c = std::cos(ph), s = std::sin(ph);
                    u0 += a[j] * c + b[j] * s;
                    u1 += a[m + j] * c + b[m + j] * s;
                    u2 += a[2 * m + j] * c + b[2 * m + j] * s;
                }
            }
            out[i] = {u0, u1, u2};
        }
    });
}

double qn_lr_norm(int d, double alpha, double n_scale, double r, double box_half_width, int resolution,
                  double boundary_tol)
{
    if (!(r >= 2.0)) throw InvalidArgument("qn_lr_norm needs r >= 2");
    if (!(box_half_width > 0.0)) throw InvalidArgument("box half-width must be positive");
    if (resolution < 16) throw InvalidArgument("qn_lr_norm needs at least 16 radial cells");
    const int n = resolution + (resolution % 2); // Simpson needs an even count
    const double h = box_half_width / n;
    std::vector<double> radii(static_cast<std::size_t>(n) + 1);
    for (int i = 0; i <= n; ++i) radii[i] = h * i;
    const auto prof = covariance_profile(d, alpha, n_scale, radii);

    auto frob = [&](std::size_t i) { return std::sqrt(prof.par[i] * prof.par[i] + (d - 1) * prof.perp[i] * prof.perp[i]); };
    const double q0 = frob(0);
    double edge = 0.0;
    for (int i = n - n / 10; i <= n; ++i) edge = std::max(edge, frob(i));
    if (edge > boundary_tol * q0) {
        throw BoxTooSmall("|Q| near the box boundary is " + std::to_string(edge / q0) + " of |Q(0)|");
    }
    double sum = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        sum += w * std::pow(frob(i), r) * std::pow(radii[i], d - 1);
    }
    return std::pow(sphere_area(d) * sum * h / 3.0, 1.0 / r);
}

void write_covariance_csv(std::ostream& os, int d, std::span<const Vec> z, std::span<const Mat> oracle,
                          std::span<const Mat> empirical)
{
    os << "# schema_version: 1\n";
    for (int i = 0; i < d; ++i) os << 'z' << i + 1 << ',';
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) os << 'Q' << i + 1 << j + 1 << ',';
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) os << "Qhat" << i + 1 << j + 1 << (i + 1 == d && j + 1 == d ? '\n' : ',');
    os.precision(17);
    for (std::size_t row = 0; row < z.size(); ++row) {
        for (int i = 0; i < d; ++i) os << z[row][i] << ',';
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) os << oracle[row][i][j] << ',';
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) os << empirical[row][i][j] << (i + 1 == d && j + 1 == d ? '\n' : ',');
    }
}

CovarianceCheck covariance_monte_carlo(int d, double alpha, double n_scale, int mode_count, int replicas,
                                       std::span<const Vec> z, std::uint64_t seed, int threads)
{
    if (replicas < 2) throw InvalidArgument("covariance check needs at least two replicas");
    const std::size_t nz = z.size();
    // samples[r][k][i][j] = u_i(z_k) u_j(0)
    std::vector<std::vector<Mat>> samples(static_cast<std::size_t>(replicas), std::vector<Mat>(nz));
    parallel_for(samples.size(), threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t r = begin; r < end; ++r) {
            const NoiseField noise = build_noise(
                d, alpha, n_scale, mode_count, derive_seed(seed, {static_cast<std::uint64_t>(Stream::NoiseModes), r}));
            Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(Stream::Increments), r}));
            const ModeIncrements inc = sample_shared_increments(noise, 1.0, rng);
            const Vec u0 = velocity_increment(noise, inc, Vec{0.0, 0.0, 0.0});
            for (std::size_t k = 0; k < nz; ++k) {
                const Vec uz = velocity_increment(noise, inc, z[k]);
                for (int i = 0; i < d; ++i)
                    for (int j = 0; j < d; ++j) samples[r][k][i][j] = uz[i] * u0[j];
            }
        }
    });
    CovarianceCheck out;
    out.z.assign(z.begin(), z.end());
    std::vector<double> col(samples.size());
    for (std::size_t k = 0; k < nz; ++k) {
        out.oracle.push_back(covariance_quadrature(d, alpha, n_scale, z[k]));
        Mat m{}, se{};
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) {
                for (std::size_t r = 0; r < samples.size(); ++r) col[r] = samples[r][k][i][j];
                m[i][j] = stats::mean(col);
                se[i][j] = stats::standard_error(col);
            }
        out.mean.push_back(m);
        out.standard_error.push_back(se);
    }
    return out;
}

} // namespace modlab
