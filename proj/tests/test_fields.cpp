#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "modlab/fields.hpp"
#include "modlab/stats.hpp"

#include <sstream>

using namespace modlab;

namespace {
std::vector<Vec> gaussian_cloud(std::size_t n, std::uint64_t seed, double sigma = 1.0)
{
    Rng rng(seed);
    const auto w = InitialDatum::gaussian(2, sigma);
    std::vector<Vec> x(n);
    for (auto& p : x) p = w.sample(rng);
    return x;
}
} // namespace

TEST_CASE("grid geometry")
{
    GridSpec g{2, 8, 1.0};
    CHECK(g.h() == 0.25);
    CHECK(g.coord(0) == -0.875);
    CHECK(g.center(9)[0] == -0.625);
    CHECK(g.center(9)[1] == -0.625);
    CHECK(g.cells() == 64);
    CHECK_THROWS_AS((GridSpec{2, 12, 1.0}.check()), InvalidArgument);
    CHECK_THROWS_AS((GridSpec{4, 16, 1.0}.check()), InvalidArgument);
    CHECK_THROWS_AS((GridSpec{2, 16, 0.0}.check()), InvalidArgument);
}

TEST_CASE("mollify a single particle")
{
    const GridSpec g{2, 64, 4.0};
    const Mollifier v(2);
    const ScaledMollifier v1(v, ModerateScaling{1.0 / 64, 1});
    const std::vector<Vec> x{Vec{0, 0, 0}};
    const GridField f = mollify(x, v1, g);
    CHECK(f.integral() == doctest::Approx(1.0).epsilon(1e-12));
    double worst = 0.0;
    for (std::size_t i = 0; i < f.cells(); ++i) worst = std::max(worst, std::abs(f[i] - v1(g.center(i))));
    // the per-particle rescaling moves values by the Riemann-sum defect of V
    CHECK(worst <= 1e-3 * v1.from_r2(0.0));
    for (double val : f.values()) CHECK(val >= 0.0);
}

TEST_CASE("mollify conserves mass and detects bad grids")
{
    const GridSpec g{2, 128, 8.0};
    const Mollifier v(2);
    const ModerateScaling sc{1.0 / 64, 1000};
    const ScaledMollifier vn(v, sc);
    const auto x = gaussian_cloud(1000, 3);
    const GridField f = mollify(x, vn, g);
    CHECK(f.integral() == doctest::Approx(1.0).epsilon(1e-10));
    double mn = 0.0;
    for (double val : f.values()) mn = std::min(mn, val);
    CHECK(mn >= 0.0);

    CHECK_THROWS_AS(mollify(x, vn, GridSpec{2, 16, 8.0}), ResolutionError);
    const std::vector<Vec> edge{Vec{7.9, 0.0, 0.0}};
    CHECK_THROWS_AS(mollify(edge, vn, g), MassLeak);
}

TEST_CASE("coincident particles saturate the L^p bound")
{
    const GridSpec g{2, 256, 2.0};
    const Mollifier v(2);
    const double p = 4.0;
    for (long long n : {1LL, 16LL, 256LL}) {
        const ModerateScaling sc{0.25, n, 4.0, 4.0, false};
        const ScaledMollifier vn(v, sc);
        const std::vector<Vec> x(static_cast<std::size_t>(n), Vec{0.01, -0.02, 0.0});
        const GridField f = mollify(x, vn, g);
        double lp = 0.0;
        for (double val : f.values()) lp += std::pow(val, p);
        lp = std::pow(lp * g.cell_volume(), 1.0 / p);
        const double bound = std::pow(static_cast<double>(n), 2 * sc.beta * (1 - 1 / p)) * v.lp_norm(p);
        CHECK(lp == doctest::Approx(bound).epsilon(2e-3));
    }
}

TEST_CASE("mollified measure approaches the density")
{
    const GridSpec g{2, 256, 6.0};
    const Mollifier v(2);
    const GridField target = InitialDatum::gaussian(2, 1.0).on_grid(g);
    auto dist = [&](long long n) {
        const ScaledMollifier vn(v, ModerateScaling{0.1, n, 4, 4, false});
        double s = 0.0;
        for (int r = 0; r < 8; ++r) {
            const auto x = gaussian_cloud(static_cast<std::size_t>(n), 100 + r);
            GridField diff = mollify(x, vn, g) - target;
            double l1 = 0.0;
            for (double val : diff.values()) l1 += std::abs(val);
            s += l1 * g.cell_volume();
        }
        return s / 8.0;
    };
    const double d1 = dist(100), d2 = dist(10000);
    CHECK(d2 < 0.5 * d1);
}

TEST_CASE("L1 cap Lp norm")
{
    const GridSpec g{2, 128, 2.0};
    const Mollifier v(2);
    const ScaledMollifier v1(v, ModerateScaling{1.0 / 64, 1});
    GridField f(g);
    for (std::size_t i = 0; i < f.cells(); ++i) f[i] = v1(g.center(i));
    CHECK(norm_l1lp(f, 4.0) == doctest::Approx(std::max(1.0, v.lp_norm(4.0))).epsilon(1e-6));

    CHECK(norm_l1lp(GridField(g), 3.0) == 0.0);

    // plateau of height 2 on the unit square
    GridField plate(g);
    for (std::size_t i = 0; i < plate.cells(); ++i) {
        const Vec x = g.center(i);
        if (x[0] > 0.0 && x[0] < 1.0 && x[1] > 0.0 && x[1] < 1.0) plate[i] = 2.0;
    }
    CHECK(norm_l1lp(plate, 4.0) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK_THROWS_AS(norm_l1lp(plate, 1.0), InvalidArgument);
}

TEST_CASE("plug-in entropy")
{
    const GridSpec g{2, 128, 8.0};
    const GridField gauss = InitialDatum::gaussian(2, 1.0).on_grid(g);
    CHECK(entropy_plugin(gauss) == doctest::Approx(-std::log(2.0 * kPi * std::exp(1.0))).epsilon(1e-9));
    CHECK(entropy_plugin(gauss) == doctest::Approx(-2.837877).epsilon(1e-6));

    GridField uni(g);
    const double vol = std::pow(16.0, 2);
    for (auto& val : uni.values()) val = 1.0 / vol;
    CHECK(entropy_plugin(uni) == doctest::Approx(-std::log(vol)).epsilon(1e-12));

    Rng rng(5);
    GridField rnd(g);
    for (auto& val : rnd.values()) val = uniform01(rng);
    CHECK(entropy_plugin(rnd) >= -std::exp(-1.0) * vol);
    GridField zero(g);
    CHECK(entropy_plugin(zero) == 0.0);
}

TEST_CASE("zeta estimate")
{
    const GridSpec g{2, 64, 4.0};
    const auto w0 = InitialDatum::bump(2, 1.5);
    const ModerateScaling sc{1.0 / 64, 1, 4.0, 4.0, true};
    const std::vector<long long> ns{64, 256, 1024};
    const auto rep = zeta_estimate(w0, ns, sc, 32, g, 7);
    REQUIRE(rep.rows.size() == 3);
    CHECK(rep.rows[0].zeta > rep.rows[1].zeta);
    CHECK(rep.rows[1].zeta > rep.rows[2].zeta);
    CHECK(rep.lambda_fit > 0.0);
    CHECK_THROWS_AS(zeta_estimate(w0, ns, sc, 8, g, 7), InvalidArgument);

    // Monte Carlo error shrinks like R^{-1/2}
    const std::vector<long long> one{64};
    const double se_small = zeta_estimate(w0, one, sc, 32, g, 11).rows[0].standard_error;
    const double se_big = zeta_estimate(w0, one, sc, 512, g, 11).rows[0].standard_error;
    CHECK(se_small / se_big > 4.0 * 0.6);
    CHECK(se_small / se_big < 4.0 * 1.6);

    // uniform boundedness of the initial norm across N
    const Mollifier v(2);
    std::vector<double> moments;
    for (long long n : {64LL, 256LL, 1024LL, 4096LL}) {
        ModerateScaling s2 = sc;
        s2.n_particles = n;
        const ScaledMollifier vn(v, s2);
        std::vector<double> pw;
        for (int r = 0; r < 16; ++r) {
            Rng rng(derive_seed(3, {static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(r)}));
            std::vector<Vec> x(static_cast<std::size_t>(n));
            for (auto& p : x) p = w0.sample(rng);
            pw.push_back(std::pow(norm_l1lp(mollify(x, vn, g), 4.0), 4.0));
        }
        moments.push_back(stats::mean(pw));
    }
    const auto [mn, mx] = std::minmax_element(moments.begin(), moments.end());
    CHECK(*mx / *mn < 2.0);
}

TEST_CASE("field IO")
{
    const GridSpec g{2, 8, 1.0};
    GridField f(g, 2);
    for (std::size_t i = 0; i < f.values().size(); ++i) f[i] = 0.1 * static_cast<double>(i) - 3.0;
    std::stringstream bin;
    write_binary(bin, f);
    const GridField back = read_binary(bin);
    CHECK(back.spec() == g);
    CHECK(back.components() == 2);
    CHECK(back.values() == f.values());

    std::stringstream bad("NOTAFIELD");
    CHECK_THROWS_AS(read_binary(bad), InvalidArgument);

    std::ostringstream csv;
    write_csv(csv, f);
    const std::string s = csv.str();
    CHECK(s.rfind("# schema_version: 1\nx1,x2,value_1,value_2\n", 0) == 0);
    CHECK(std::count(s.begin(), s.end(), '\n') == 2 + 64);
}

TEST_CASE("weighted deposit")
{
    const GridSpec g{2, 64, 4.0};
    const Mollifier v(2);
    const ScaledMollifier vn(v, ModerateScaling{1.0 / 64, 50});
    const auto x = gaussian_cloud(50, 8, 0.7);
    const GridField rho = mollify(x, vn, g);
    std::vector<Vec> vals(x.size(), Vec{2.0, -0.5, 0.0});
    const GridField f = mollify_weighted(x, vals, vn, g);
    REQUIRE(f.components() == 2);
    for (std::size_t i = 0; i < g.cells(); ++i) {
        CHECK(f.component(0)[i] == doctest::Approx(2.0 * rho[i]).epsilon(1e-14));
        CHECK(f.component(1)[i] == doctest::Approx(-0.5 * rho[i]).epsilon(1e-14));
    }
    // weights enter linearly per particle
    vals[3] = Vec{1.0, 1.0, 0.0};
    const GridField one = mollify_weighted(std::span<const Vec>(x).subspan(3, 1), std::span<const Vec>(vals).subspan(3, 1), vn, g);
    CHECK(one.integral(0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(mollify_weighted(x, std::span<const Vec>(vals).first(3), vn, g), DimensionMismatch);
}
