#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "modlab/noise.hpp"
#include "modlab/quadrature.hpp"
#include "modlab/stats.hpp"

#include <sstream>

using namespace modlab;

namespace {
// Brute-force 2D oracle straight from the spectral integral: polar
// coordinates in k with the angle integrated numerically, radial panels on
// [1, 100]; the omitted oscillatory tail is below 1e-9 for |z| >= 0.3.
// Shares nothing with the Bessel reduction.
Mat brute_force_q2(double alpha, double n_scale, const Vec& z)
{
    const double sc = std::exp(n_scale);
    Mat q{};
    for (int i = 0; i < 2; ++i) {
        for (int j = i; j < 2; ++j) {
            auto over_rho = [&](double rho) {
                return std::pow(rho, -1.0 - alpha) *
                       quad::adaptive(
                           [&](double th) {
                               const double w[2] = {std::cos(th), std::sin(th)};
                               const double proj = (i == j ? 1.0 : 0.0) - w[i] * w[j];
                               return std::cos(sc * rho * (w[0] * z[0] + w[1] * z[1])) * proj;
                           },
                           0.0, 2.0 * kPi, 1e-11, 1e-13);
            };
            double sum = 0.0;
            for (double lo = 1.0; lo < 100.0; lo += 0.5) sum += quad::gauss64(over_rho, lo, lo + 0.5);
            q[i][j] = q[j][i] = sum;
        }
    }
    return q;
}

double frob(const Mat& m, int d)
{
    double s = 0.0;
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) s += m[i][j] * m[i][j];
    return std::sqrt(s);
}
} // namespace

TEST_CASE("viscosity constant")
{
    CHECK(nu_theoretical(2, 4.0) == doctest::Approx(kPi / 8.0).epsilon(1e-12));
    CHECK(nu_theoretical(2, 4.0) == doctest::Approx(0.392699).epsilon(1e-6));
    CHECK(nu_theoretical(3, 3.0) == doctest::Approx(4.0 * kPi / 9.0).epsilon(1e-12));
    CHECK(nu_theoretical(2, 1e8) < 1e-7);
    CHECK_THROWS_AS(nu_theoretical(2, 2.0), InvalidAlpha);

    for (int d : {2, 3}) {
        const double alpha = d == 2 ? 4.0 : 3.0;
        const Mat q = covariance_quadrature(d, alpha, 0.0, Vec{0, 0, 0});
        for (int i = 0; i < d; ++i) {
            CHECK(q[i][i] == doctest::Approx(2.0 * nu_theoretical(d, alpha)).epsilon(1e-9));
            for (int j = 0; j < d; ++j)
                if (i != j) CHECK(std::abs(q[i][j]) < 1e-10);
        }
        // continuity at the origin
        const Mat qs = covariance_quadrature(d, alpha, 0.0, Vec{1e-5, 0, 0});
        CHECK(qs[0][0] == doctest::Approx(q[0][0]).epsilon(1e-6));
    }
}

TEST_CASE("covariance quadrature matches the brute-force spectral integral")
{
    for (const Vec& z : {Vec{0.3, 0.0, 0.0}, Vec{1.0, 0.5, 0.0}, Vec{-2.0, 1.5, 0.0}}) {
        const Mat q = covariance_quadrature(2, 4.0, 0.0, z);
        const Mat b = brute_force_q2(4.0, 0.0, z);
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) CHECK(std::abs(q[i][j] - b[i][j]) < 1e-8);
    }
    const Mat q = covariance_quadrature(2, 4.0, 0.5, Vec{0.7, -0.2, 0.0});
    const Mat b = brute_force_q2(4.0, 0.5, Vec{0.7, -0.2, 0.0});
    CHECK(std::abs(q[0][1] - b[0][1]) < 1e-8);
}

TEST_CASE("covariance symmetry and decay")
{
    const Mat q0 = covariance_quadrature(2, 4.0, 0.0, Vec{0, 0, 0});
    const Mat q10 = covariance_quadrature(2, 4.0, 0.0, Vec{10, 0, 0});
    CHECK(frob(q10, 2) < frob(q0, 2));
    for (const Vec& z : {Vec{0.4, 1.1, 0.0}, Vec{-3.0, 0.2, 0.0}}) {
        const Mat a = covariance_quadrature(2, 4.0, 0.0, z);
        const Mat b = covariance_quadrature(2, 4.0, 0.0, -z);
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) {
                CHECK(std::abs(a[i][j] - b[j][i]) <= 1e-12);
                CHECK(std::abs(a[i][j] - a[j][i]) <= 1e-12);
            }
    }
    const Mat q3 = covariance_quadrature(3, 3.0, 0.0, Vec{0.5, 0.5, 1.0});
    CHECK(std::abs(q3[0][2] - q3[2][0]) <= 1e-12);
    CHECK(frob(q3, 3) < frob(covariance_quadrature(3, 3.0, 0.0, Vec{}), 3));
}

TEST_CASE("explicit spectral cutoff")
{
    CHECK_THROWS_AS(covariance_quadrature(2, 4.0, 0.0, Vec{1.0, 0, 0}, 2.0), TailTruncationError);
    const Mat q = covariance_quadrature(2, 4.0, 0.0, Vec{1.0, 0, 0}, 2000.0);
    const Mat a = covariance_quadrature(2, 4.0, 0.0, Vec{1.0, 0, 0});
    CHECK(q[0][0] == doctest::Approx(a[0][0]).epsilon(1e-7));
}

TEST_CASE("modes are divergence free and deterministic")
{
    for (int d : {2, 3}) {
        const auto noise = build_noise(d, 4.0, 0.5, 256, 42);
        CHECK(noise.nu() == doctest::Approx(nu_theoretical(d, 4.0)).epsilon(1e-9));
        for (const auto& m : noise.modes()) {
            CHECK(std::abs(dot(m.k, m.e)) <= 1e-12 * norm(m.k));
            CHECK(norm(m.e) == doctest::Approx(1.0).epsilon(1e-14));
            CHECK(norm(m.k) >= std::exp(0.5) * (1.0 - 1e-15));
        }
        const auto again = build_noise(d, 4.0, 0.5, 256, 42);
        bool same = true;
        for (std::size_t j = 0; j < noise.mode_count(); ++j)
            same = same && noise.modes()[j].k == again.modes()[j].k && noise.modes()[j].e == again.modes()[j].e;
        CHECK(same);
    }
    CHECK_THROWS_AS(build_noise(2, 4.0, 0.0, 8, 1), InvalidArgument);
}

TEST_CASE("shared increments")
{
    const auto noise = build_noise(2, 4.0, 0.0, 64, 3);
    Rng rng(9);
    std::vector<double> xi, eta;
    for (int s = 0; s < 160; ++s) {
        const auto inc = sample_shared_increments(noise, 0.01, rng);
        CHECK(inc.xi.size() == 64);
        xi.insert(xi.end(), inc.xi.begin(), inc.xi.end());
        eta.insert(eta.end(), inc.eta.begin(), inc.eta.end());
    }
    // 10240 draws per channel
    CHECK(std::abs(stats::mean(xi)) < 3.0 * 0.1 / std::sqrt(10240.0));
    CHECK(std::abs(stats::mean(eta)) < 3.0 * 0.1 / std::sqrt(10240.0));
    CHECK(stats::stddev(xi) * stats::stddev(xi) == doctest::Approx(0.01).epsilon(0.05));
    CHECK(stats::stddev(eta) * stats::stddev(eta) == doctest::Approx(0.01).epsilon(0.05));

    const auto inc = sample_shared_increments(noise, 0.01, rng);
    const Vec x{0.3, -1.2, 0.0};
    const Vec u1 = velocity_increment(noise, inc, x);
    const Vec u2 = velocity_increment(noise, inc, x);
    CHECK(u1 == u2);
    std::vector<Vec> pts{x, x, Vec{1, 1, 0}};
    std::vector<Vec> out(3);
    velocity_increments(noise, inc, pts, out, 2);
    CHECK(out[0] == out[1]);
    CHECK(out[0][0] == doctest::Approx(u1[0]).epsilon(1e-12));
    CHECK_THROWS_AS(sample_shared_increments(noise, 0.0, rng), InvalidArgument);
}

TEST_CASE("velocity increments are divergence free")
{
    for (int d : {2, 3}) {
        const auto noise = build_noise(d, 4.0, 0.0, 128, 5);
        Rng rng(17);
        const auto inc = sample_shared_increments(noise, 1.0, rng);
        const Vec x{0.2, -0.4, d == 3 ? 0.9 : 0.0};
        const double h = 1e-3;
        double div = 0.0;
        for (int c = 0; c < d; ++c) {
            auto comp = [&](double off) {
                Vec y = x;
                y[c] += off;
                return velocity_increment(noise, inc, y)[c];
            };
            div += (-comp(2 * h) + 8 * comp(h) - 8 * comp(-h) + comp(-2 * h)) / (12 * h);
        }
        CHECK(std::abs(div) <= 1e-6 * norm(velocity_increment(noise, inc, x)));
    }
}

TEST_CASE("Monte Carlo covariance is unbiased")
{
    const int replicas = 4000;
    const std::vector<Vec> zs{Vec{0, 0, 0}, Vec{0.5, 0, 0}, Vec{0.3, 1.0, 0}, Vec{2.0, -1.0, 0}};
    std::vector<std::array<std::vector<double>, 4>> samples(zs.size());
    for (int r = 0; r < replicas; ++r) {
        const auto noise = build_noise(2, 4.0, 0.0, 32, derive_seed(99, {static_cast<std::uint64_t>(r)}));
        Rng rng(derive_seed(100, {static_cast<std::uint64_t>(r)}));
        const auto inc = sample_shared_increments(noise, 1.0, rng);
        const Vec u0 = velocity_increment(noise, inc, Vec{0, 0, 0});
        for (std::size_t k = 0; k < zs.size(); ++k) {
            const Vec uz = velocity_increment(noise, inc, zs[k]);
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 2; ++j) samples[k][2 * i + j].push_back(uz[i] * u0[j]);
        }
    }
    for (std::size_t k = 0; k < zs.size(); ++k) {
        const Mat q = covariance_quadrature(2, 4.0, 0.0, zs[k]);
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) {
                const auto& s = samples[k][2 * i + j];
                CHECK(std::abs(stats::mean(s) - q[i][j]) <= 3.0 * stats::standard_error(s));
            }
    }
}

TEST_CASE("synthesized covariance converges like M^-1/2")
{
    const Vec z{0.6, 0.4, 0.0};
    const double exact = covariance_quadrature(2, 4.0, 0.0, z)[0][0];
    auto rms = [&](int m) {
        double s = 0.0;
        for (int r = 0; r < 400; ++r) {
            const auto noise = build_noise(2, 4.0, 0.0, m, derive_seed(5, {static_cast<std::uint64_t>(r)}));
            const double e = synthesized_covariance(noise, z)[0][0] - exact;
            s += e * e;
        }
        return std::sqrt(s / 400.0);
    };
    const double ratio = rms(16) / rms(1024);
    CHECK(ratio > 8.0 * 0.8);
    CHECK(ratio < 8.0 * 1.25);
}

TEST_CASE("large noise scale decorrelates unit separations")
{
    const Mat q = covariance_quadrature(2, 4.0, 5.0, Vec{1.0, 0.0, 0.0});
    CHECK(frob(q, 2) < 0.01 * 2.0 * nu_theoretical(2, 4.0));
}

TEST_CASE("profile sweep agrees with pointwise quadrature")
{
    const std::vector<double> radii{0.0, 0.1, 0.5, 1.0, 3.0, 7.5};
    const auto prof = covariance_profile(2, 4.0, 0.3, radii);
    for (std::size_t i = 0; i < radii.size(); ++i) {
        const Mat q = covariance_quadrature(2, 4.0, 0.3, Vec{radii[i], 0, 0});
        CHECK(prof.par[i] == doctest::Approx(q[0][0]).epsilon(1e-9));
        CHECK(prof.perp[i] == doctest::Approx(q[1][1]).epsilon(1e-9));
    }
}

TEST_CASE("L^r norm of the covariance decays with the noise scale")
{
    std::vector<double> ns{0.0, 0.5, 1.0, 1.5}, logs;
    for (double n : ns) logs.push_back(std::log(qn_lr_norm(2, 4.0, n, 2.0, 64.0, 2048)));
    for (std::size_t i = 1; i < logs.size(); ++i) CHECK(logs[i] < logs[i - 1]);
    const double slope = stats::fit_line(ns, logs).slope;
    CHECK(slope == doctest::Approx(-1.0).epsilon(0.05));
    CHECK(std::isfinite(std::exp(logs[0])));
    CHECK(std::exp(logs[0]) > 0.0);
    CHECK(qn_lr_norm(2, 4.0, 1.0, 3.0, 64.0, 2048) < qn_lr_norm(2, 4.0, 0.0, 3.0, 64.0, 2048));
    CHECK_THROWS_AS(qn_lr_norm(2, 4.0, 0.0, 2.0, 2.0, 256), BoxTooSmall);
    CHECK_THROWS_AS(qn_lr_norm(2, 4.0, 0.0, 1.5, 64.0, 256), InvalidArgument);
}

TEST_CASE("covariance CSV")
{
    const std::vector<Vec> z{Vec{0, 0, 0}};
    const std::vector<Mat> q{covariance_quadrature(2, 4.0, 0.0, z[0])};
    std::ostringstream os;
    write_covariance_csv(os, 2, z, q, q);
    CHECK(os.str().find("z1,z2,Q11,Q12,Q21,Q22,Qhat11,Qhat12,Qhat21,Qhat22\n") != std::string::npos);
}

TEST_CASE("covariance Monte Carlo harness")
{
    const std::vector<Vec> zs{Vec{0, 0, 0}, Vec{0.7, 0.2, 0}, Vec{-1.5, 1.0, 0}};
    const auto a = covariance_monte_carlo(2, 4.0, 0.5, 64, 3000, zs, 17, 1);
    const auto b = covariance_monte_carlo(2, 4.0, 0.5, 64, 3000, zs, 17, 3);
    REQUIRE(a.mean.size() == 3);
    for (std::size_t k = 0; k < zs.size(); ++k) {
        CHECK(a.mean[k] == b.mean[k]);
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) CHECK(std::abs(a.mean[k][i][j] - a.oracle[k][i][j]) <= 3.0 * a.standard_error[k][i][j]);
    }
    CHECK(a.oracle[0][0][0] == doctest::Approx(2.0 * nu_theoretical(2, 4.0)));
    CHECK_THROWS_AS(covariance_monte_carlo(2, 4.0, 0.0, 64, 1, zs, 1), InvalidArgument);
}
