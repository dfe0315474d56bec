#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "modlab/diagnostics.hpp"
#include "modlab/noise.hpp"
#include "modlab/stats.hpp"

#include <boost/math/quadrature/gauss.hpp>

#include <cmath>
#include <random>
#include <sstream>

using namespace modlab;

namespace {
// E_{1/2}(z) = sum_k z^k / Gamma(k/2 + 1)
double ml_series(double z, int terms)
{
    if (z == 0.0) return 1.0;
    long double s = 0.0L;
    for (int k = 0; k < terms; ++k) {
        s += std::exp(static_cast<long double>(k) * std::log(static_cast<long double>(z)) -
                      std::lgamma(0.5L * k + 1.0L));
    }
    return static_cast<double>(s);
}

std::vector<Snapshot> run(int n, double T, double dt, const DriftEngine& drift, const NoiseField* noise,
                          std::uint64_t seed = 3)
{
    SimulationConfig sc;
    sc.dt = dt;
    sc.T = T;
    return simulate(init_ensemble(n, InitialDatum::gaussian(2, 1.0), seed), sc, drift, noise);
}

struct ZFixture {
    GridSpec grid{2, 128, 8.0};
    ModerateScaling sc;
    std::shared_ptr<GridDrift> pic;

    explicit ZFixture(long long n)
    {
        sc.n_particles = n;
        pic = std::make_shared<GridDrift>(build_regularized(BiotSavart{}, 0.75), ScaledMollifier(Mollifier(2), sc),
                                          grid);
    }
};
} // namespace

TEST_CASE("epsilon schedule")
{
    // min(8, 20) = 8, p' = 4/3: 8^{-1/3} = 0.5
    CHECK(epsilon_schedule(2981, std::exp(-20.0), 4.0, 2) == doctest::Approx(0.5).epsilon(1e-5));
    CHECK(epsilon_schedule(2981, std::exp(-20.0), 4.0, 2) == doctest::Approx(std::pow(std::log(2981.0), -1.0 / 3.0)));
    CHECK(epsilon_schedule(1000, 0.5, 4.0, 2) == doctest::Approx(std::pow(std::log(2.0), -1.0 / 3.0)));
    double prev = 1e300;
    for (long long n : {16LL, 64LL, 256LL, 1024LL, 4096LL}) {
        const double e = epsilon_schedule(n, 1e-9, 4.0, 2);
        CHECK(e < prev);
        prev = e;
    }
    CHECK_THROWS_AS(epsilon_schedule(64, 0.0, 4.0, 2), InvalidZeta);
    CHECK_THROWS_AS(epsilon_schedule(64, 1.0, 4.0, 2), InvalidZeta);
    CHECK_THROWS_AS(epsilon_schedule(64, -0.1, 4.0, 2), InvalidZeta);
}

TEST_CASE("Mittag-Leffler closed form")
{
    CHECK(mittag_leffler_half(0.0) == 1.0);
    CHECK(mittag_leffler_half(1.0) == doctest::Approx(std::exp(1.0) * (1.0 + std::erf(1.0))).epsilon(1e-14));
    CHECK(mittag_leffler_half(1.0) == doctest::Approx(5.00898).epsilon(1e-6));
    for (int i = 0; i <= 50; ++i) {
        const double z = 5.0 * i / 50.0;
        CHECK(mittag_leffler_half(z) == doctest::Approx(ml_series(z, 400)).epsilon(1e-12));
        CHECK(mittag_leffler_half(z) == doctest::Approx(std::exp(z * z) * (1.0 + std::erf(z))).epsilon(1e-13));
    }
    for (int i = 0; i < 100; ++i) CHECK(mittag_leffler_bound_holds(5.0 * i / 99.0));
    CHECK_THROWS_AS(mittag_leffler_half(-1.0), InvalidArgument);

    // the truncated series is short of the closed form by its tail
    const double tail = std::abs(ml_series(3.0, 60) - mittag_leffler_half(3.0)) / mittag_leffler_half(3.0);
    CHECK(tail > 1e-9);
    CHECK(std::abs(ml_series(2.0, 60) - mittag_leffler_half(2.0)) / mittag_leffler_half(2.0) < 1e-13);
}

TEST_CASE("entropy trend")
{
    const GridSpec g{2, 64, 8.0};
    PdeConfig pc;
    pc.kernel = KernelMode::zero();
    pc.grid = g;
    pc.dt = 1e-2;
    pc.T = 0.5;
    const auto heat = solve(InitialDatum::gaussian(2, 1.0).on_grid(g), pc);
    const auto tr = entropy_trend(heat.fields);
    CHECK(tr.values.size() == heat.fields.size());
    CHECK(tr.non_increasing);
    CHECK(tr.bounded);
    CHECK(tr.max_excess == 0.0);
    CHECK(tr.values.back() < tr.initial);

    std::vector<GridField> same(4, InitialDatum::gaussian(2, 1.0).on_grid(g));
    const auto flat = entropy_trend(same);
    CHECK(flat.non_increasing);
    CHECK(flat.max_excess == 0.0);

    std::vector<GridField> sharpening;
    for (double s : {1.0, 0.8, 0.6, 0.5}) sharpening.push_back(InitialDatum::gaussian(2, s).on_grid(g));
    const auto up = entropy_trend(sharpening);
    CHECK_FALSE(up.non_increasing);
    CHECK_FALSE(up.bounded);
    // H = -log(2 pi e s^2) for a 2D Gaussian
    CHECK(up.max_excess == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-3));
}

TEST_CASE("covariance moment and decay")
{
    const double nu = nu_theoretical(2, 4.0);
    const std::vector<Vec> origin{Vec{0.0, 0.0, 0.0}};
    CHECK(covariance_moment(2, 4.0, 0.0, origin, 2.0)[0] == doctest::Approx(8.0 * nu * nu).epsilon(1e-8));
    CHECK(covariance_moment(2, 4.0, 0.0, origin, 3.0)[0] ==
          doctest::Approx(std::pow(2.0 * nu * std::sqrt(2.0), 3.0)).epsilon(1e-8));

    CovDecayConfig cfg;
    cfg.replicas = 256;
    cfg.mode_count = 128;
    cfg.time = 0.25;
    cfg.dt = 2.5e-2;
    const std::vector<double> scales{0.0, 1.0, 2.0, 3.0};
    const auto rows = force_covariance_decay(cfg, scales);
    REQUIRE(rows.size() == 4);
    for (std::size_t k = 1; k < rows.size(); ++k) CHECK(rows[k].mean < rows[k - 1].mean);
    for (const auto& r : rows) {
        CHECK(r.samples.size() == 256);
        CHECK(r.mean <= 8.0 * nu * nu * (1.0 + 1e-9));
    }

    // Independent pair at its initial law. X1 - X2 ~ N(0, 2I) and |Q| is
    // isotropic, so the double integral reduces to
    // int_0^inf F(r) (r/2) e^{-r^2/4} dr, taken on 16-point Gauss-Legendre
    // panels fine enough for the oscillation of Q at the cutoff e^n.
    cfg.noise = false;
    const std::vector<double> one{1.0};
    const auto base = force_covariance_decay(cfg, one)[0];
    using GL = boost::math::quadrature::gauss<double, 16>;
    std::vector<Vec> z;
    std::vector<double> wt;
    const double panel = 0.125;
    for (int k = 0; k < 128; ++k) {
        const double a = k * panel;
        for (std::size_t i = 0; i < GL::abscissa().size(); ++i) {
            for (double sign : {-1.0, 1.0}) {
                if (GL::abscissa()[i] == 0.0 && sign < 0.0) continue;
                const double r = a + 0.5 * panel * (1.0 + sign * GL::abscissa()[i]);
                z.push_back(Vec{r, 0.0, 0.0});
                wt.push_back(0.5 * panel * GL::weights()[i] * 0.5 * r * std::exp(-0.25 * r * r));
            }
        }
    }
    const auto vals = covariance_moment(2, 4.0, 1.0, z, 2.0);
    double oracle = 0.0;
    for (std::size_t i = 0; i < vals.size(); ++i) oracle += wt[i] * vals[i];
    CHECK(std::abs(base.mean - oracle) < 3.0 * base.standard_error);
    CHECK(base.standard_error < 0.15 * oracle);
}

TEST_CASE("exact difference split")
{
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_int_distribution<int> ex(-60, 60);
    for (int i = 0; i < 200000; ++i) {
        const double c = std::ldexp(u(rng), ex(rng));
        const double w = i % 3 == 0 ? c * (1.0 + 1e-15 * u(rng)) : std::ldexp(u(rng), ex(rng));
        const auto [z1, z2] = split_difference(c, w);
        REQUIRE((c - z1) - z2 == w);
        // one of the pair is the rounded difference, the other its error
        REQUIRE((z1 == c - w || z2 == c - w));
        REQUIRE(z1 + z2 == c - w);
    }
    const auto [a, b] = split_difference(0.0, 0.0);
    CHECK(a == 0.0);
    CHECK(b == 0.0);
}

TEST_CASE("stochastic convolution with noise")
{
    ZFixture fx(128);
    const NoiseField noise = build_noise(2, 4.0, std::log(128.0), 64, 5);
    const auto snaps = run(128, 0.1, 5e-3, DriftEngine::grid(fx.pic), &noise);
    ZOptions opt;
    opt.keep_fields = true;
    const auto z = stochastic_convolution_estimate(snaps, *fx.pic, nu_theoretical(2, 4.0), opt);
    REQUIRE(z.times.size() == snaps.size());
    CHECK(z.reconstruction_exact);
    CHECK(z.norms[0] == 0.0);
    for (double v : z.fields[0].z1.values()) CHECK(v == 0.0);
    CHECK(z.sup_norm > 0.0);
    for (std::size_t k = 0; k < z.fields.size(); ++k) CHECK(z.fields[k].reconstruct().values() == z.omega[k].values());
}

TEST_CASE("noise-free residual is a spatial discretization error")
{
    // Without noise Z only collects the gap between the spectral divergence
    // of the deposited flux and the actual motion of the deposit.
    double sup[2];
    int i = 0;
    for (int n : {128, 256}) {
        const GridSpec grid{2, n, 8.0};
        ModerateScaling sc;
        sc.n_particles = 256;
        const auto pic = std::make_shared<GridDrift>(build_regularized(BiotSavart{}, 0.75),
                                                     ScaledMollifier(Mollifier(2), sc), grid);
        const auto snaps = run(256, 0.25, 1e-2, DriftEngine::grid(pic), nullptr);
        sup[i++] = stochastic_convolution_estimate(snaps, *pic, 0.0).sup_norm;
    }
    CHECK(sup[0] < 2e-3);
    CHECK(sup[0] / sup[1] > 4.0);
}

TEST_CASE("stochastic convolution input checks")
{
    ZFixture fx(128);
    const auto fine = run(128, 0.5, 1e-2, DriftEngine::grid(fx.pic), nullptr);
    std::vector<Snapshot> sparse;
    for (std::size_t k = 0; k < fine.size(); k += 10) sparse.push_back(fine[k]);
    CHECK_THROWS_AS(stochastic_convolution_estimate(sparse, *fx.pic, 0.0), QuadratureTooCoarse);
    ZOptions opt;
    opt.check_density = true;
    CHECK_NOTHROW(stochastic_convolution_estimate(fine, *fx.pic, 0.0, opt));
    CHECK_THROWS_AS(stochastic_convolution_estimate(fine, *fx.pic, -1.0), InvalidArgument);
    std::vector<Snapshot> backwards{fine[1], fine[0]};
    CHECK_THROWS_AS(stochastic_convolution_estimate(backwards, *fx.pic, 0.0), InvalidArgument);
}

TEST_CASE("non-interacting sweep")
{
    SweepConfig cfg;
    cfg.kernel.reset();
    cfg.T = 0.1;
    cfg.dt = 5e-3;
    cfg.n_list = {64, 1024};
    cfg.zeta = {0.3, 0.1};
    cfg.replicas = 3;
    cfg.mode_count = 64;
    const auto rep = convergence_sweep(cfg);
    REQUIRE(rep.rows.size() == 2);
    for (const auto& r : rep.rows) {
        CHECK(r.error.empty());
        CHECK(r.dist_eps.size() == 3);
        CHECK(r.moment_sup.size() == 3);
        CHECK(r.z_sup.empty());
        CHECK(r.median_eps == r.median_exact);
        CHECK(r.iqr_eps >= 0.0);
        CHECK(r.n_scale == doctest::Approx(std::log(static_cast<double>(r.n_particles))));
    }
    CHECK(rep.rows[1].median_exact < rep.rows[0].median_exact);
    CHECK(rep.slope_exact < 0.0);

    std::ostringstream a, b;
    write_convergence_csv(a, rep);
    write_convergence_summary_csv(b, rep);
    CHECK(a.str().rfind("# schema_version: 1\nn_particles,replica,", 0) == 0);
    CHECK(b.str().rfind("# schema_version: 1\n# slope_eps: ", 0) == 0);
    std::size_t lines = 0;
    for (char ch : a.str()) lines += ch == '\n';
    CHECK(lines == 2 + 6);

    // same configuration, same numbers
    const auto again = convergence_sweep(cfg);
    CHECK(again.rows[0].dist_exact == rep.rows[0].dist_exact);

    cfg.replicas = 1;
    const auto single = convergence_sweep(cfg);
    CHECK(single.rows[0].iqr_eps == 0.0);
    CHECK(single.rows[0].median_eps == single.rows[0].dist_eps[0]);
}

TEST_CASE("a failing row does not stop the sweep")
{
    SweepConfig cfg;
    cfg.kernel.reset();
    cfg.noise = false;
    cfg.T = 0.0;
    cfg.scaling.strict = false;
    cfg.scaling.beta = 0.25;
    cfg.n_list = {16, 4096};
    cfg.zeta = {0.3, 0.1};
    cfg.replicas = 2;
    const auto rep = convergence_sweep(cfg);
    REQUIRE(rep.rows.size() == 2);
    CHECK(rep.rows[0].error.empty());
    CHECK(rep.rows[1].error.find("cells") != std::string::npos);

    cfg.T = 0.1;
    CHECK_THROWS_AS(convergence_sweep(cfg), InvalidArgument);
    cfg.T = 0.0;
    cfg.zeta = {0.3};
    CHECK_THROWS_AS(convergence_sweep(cfg), InvalidArgument);
}

TEST_CASE("interacting sweep with the stochastic convolution")
{
    SweepConfig cfg;
    cfg.T = 0.1;
    cfg.dt = 5e-3;
    cfg.n_list = {64, 256};
    cfg.zeta = {0.4, 0.2};
    cfg.replicas = 2;
    cfg.mode_count = 64;
    cfg.stochastic_convolution = true;
    const auto rep = convergence_sweep(cfg);
    for (const auto& r : rep.rows) {
        CHECK(r.error.empty());
        CHECK(r.z_sup.size() == 2);
        CHECK(r.median_z > 0.0);
        CHECK(r.z_reconstruction_exact);
        CHECK(r.epsilon == doctest::Approx(epsilon_schedule(r.n_particles, r.zeta, 4.0, 2)));
    }
    CHECK(std::isfinite(rep.iota_fit));
}
