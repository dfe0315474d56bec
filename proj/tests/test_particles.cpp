#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "modlab/particles.hpp"
#include "modlab/quadrature.hpp"
#include "modlab/stats.hpp"

#include <sstream>

using namespace modlab;

namespace {
const Mollifier kV(2);

struct Setup {
    RegularizedKernel kernel;
    ScaledMollifier vn;
};

Setup biot_savart(double eps, long long n)
{
    return {build_regularized(BiotSavart{}, eps), ScaledMollifier(kV, ModerateScaling{1.0 / 64, n})};
}

// K_eps * V^N at r e_1 by nested adaptive quadrature in Cartesian coordinates.
Vec cartesian_oracle(const RegularizedKernel& k, const ScaledMollifier& vn, double r)
{
    const double a = vn.support_radius();
    Vec out{0.0, 0.0, 0.0};
    for (int c = 0; c < 2; ++c) {
        auto outer = [&](double y1) {
            const double w = std::sqrt(std::max(0.0, a * a - y1 * y1));
            auto inner = [&](double y2) {
                const Vec y{y1, y2, 0.0};
                return k(Vec{r, 0.0, 0.0} - y)[c] * vn(y);
            };
            return w > 0.0 ? quad::adaptive(inner, -w, w, 1e-10, 1e-13, 20) : 0.0;
        };
        out[c] = quad::adaptive(outer, -a, a, 1e-10, 1e-13, 20);
    }
    return out;
}

std::vector<Vec> cloud(std::size_t n, std::uint64_t seed, double sigma = 1.0)
{
    return init_ensemble(static_cast<long long>(n), InitialDatum::gaussian(2, sigma), seed).positions;
}

double max_diff(const std::vector<Vec>& a, const std::vector<Vec>& b)
{
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, norm(a[i] - b[i]));
    return m;
}
} // namespace

TEST_CASE("initial ensemble statistics")
{
    const std::size_t n = 10000;
    const auto ens = init_ensemble(static_cast<long long>(n), InitialDatum::gaussian(2, 1.0), 17);
    CHECK(ens.size() == n);
    CHECK(ens.time == 0.0);
    std::vector<double> x1, x2, r2, r12;
    for (const Vec& p : ens.positions) {
        x1.push_back(p[0]);
        x2.push_back(p[1]);
        r2.push_back(norm2(p));
        r12.push_back(std::pow(norm2(p), 6));
    }
    CHECK(std::abs(stats::mean(x1)) < 3.0 / std::sqrt(n));
    CHECK(std::abs(stats::mean(x2)) < 3.0 / std::sqrt(n));
    CHECK(stats::stddev(x1) * stats::stddev(x1) == doctest::Approx(1.0).epsilon(0.05));
    CHECK(stats::stddev(x2) * stats::stddev(x2) == doctest::Approx(1.0).epsilon(0.05));

    // |X|^2 is exponential with mean 2, so E|X|^{2k} = 2^k k!
    CHECK(std::abs(empirical_moment(ens.positions, 2.0) - 2.0) < 3.0 * stats::standard_error(r2));
    CHECK(std::abs(empirical_moment(ens.positions, 12.0) - 46080.0) < 3.0 * stats::standard_error(r12));

    const std::vector<Vec> zeros(5, Vec{0, 0, 0});
    CHECK(empirical_moment(zeros, 3.0) == 0.0);
    CHECK_THROWS_AS(empirical_moment(zeros, 0.5), InvalidArgument);

    const auto again = init_ensemble(static_cast<long long>(n), InitialDatum::gaussian(2, 1.0), 17);
    CHECK(again.positions == ens.positions);
    CHECK(init_ensemble(10, InitialDatum::gaussian(2, 1.0), 17, 1).positions !=
          init_ensemble(10, InitialDatum::gaussian(2, 1.0), 17, 2).positions);
}

TEST_CASE("interaction table against Cartesian quadrature")
{
    const auto s = biot_savart(0.3, 256);
    const InteractionTable g(s.kernel, s.vn, 10.0);
    double worst = 0.0;
    for (double r : {0.05, 0.2, 0.45, 0.7, 0.9, 1.1, 1.4}) {
        const Vec want = cartesian_oracle(s.kernel, s.vn, r);
        const Vec got = g(Vec{r, 0.0, 0.0});
        worst = std::max(worst, norm(got - want));
        CHECK(std::abs(want[0]) < 1e-9);
    }
    CHECK(worst < 1e-6 * g.sup_norm());

    // shell theorem: outside both supports G is the bare kernel
    for (double r : {1.3, 2.0, 5.0}) {
        const Vec x{0.6 * r, -0.8 * r, 0.0};
        CHECK(norm(g(x) - eval_kernel(BiotSavart{}, std::span<const double>(x.data(), 2))) < 1e-9);
    }
    CHECK(g(Vec{0, 0, 0}) == Vec{0, 0, 0});
    CHECK_THROWS_AS(g(Vec{11.0, 0, 0}), OutOfTable);
}

TEST_CASE("interaction table for a non-harmonic kernel")
{
    const Mollifier v3(3);
    const RieszGradient k{3, 0.5};
    const RegularizedKernel keps = build_regularized(k, 0.4, 1.0, 128);
    const ScaledMollifier vn(v3, ModerateScaling{1.0 / 64, 64, 4, 4, false});
    const InteractionTable g(keps, vn, 6.0);
    for (double r : {0.3, 1.0, 2.5, 5.0}) {
        const double want = interaction_profile_quadrature(keps, vn, r);
        CHECK(g.radial_profile(r) == doctest::Approx(want).epsilon(1e-4));
    }
}

TEST_CASE("direct drift symmetries")
{
    const auto s = biot_savart(0.3, 64);
    const InteractionTable g(s.kernel, s.vn, 20.0);

    const std::vector<Vec> one{Vec{0.3, -0.2, 0.0}};
    CHECK(drift_direct(one, g)[0] == Vec{0, 0, 0});

    const std::vector<Vec> pair{Vec{0.4, 0.1, 0.0}, Vec{-0.4, -0.1, 0.0}};
    const auto b = drift_direct(pair, g);
    CHECK(b[0] == -b[1]);

    const auto x = cloud(128, 5);
    const auto d1 = drift_direct(x, g, 1);
    const auto d3 = drift_direct(x, g, 3);
    CHECK(d1 == d3);
    Vec com{0, 0, 0};
    for (const Vec& v : d1) com += v;
    CHECK(norm(com) / 128.0 < 1e-15 * g.sup_norm() * 128.0);

    const InteractionTable tiny(s.kernel, s.vn, 0.5);
    CHECK_THROWS_AS(drift_direct(x, tiny), OutOfTable);
}

TEST_CASE("grid and direct engines agree")
{
    const GridSpec grid{2, 128, 8.0};
    std::vector<RegularizedKernel> kernels;
    for (double eps : {0.5, 0.6, 0.75, 0.9}) kernels.push_back(build_regularized(BiotSavart{}, eps));
    double worst = 0.0;
    for (int c = 0; c < 20; ++c) {
        const long long n = 16 + 7 * c;
        const RegularizedKernel& k = kernels[static_cast<std::size_t>(c) % kernels.size()];
        const ScaledMollifier vn(kV, ModerateScaling{1.0 / 64, n});
        const InteractionTable g(k, vn, 24.0);
        const GridDrift pic(k, vn, grid);
        const auto x = cloud(static_cast<std::size_t>(n), 100 + c, 0.8 + 0.05 * c);
        const double rel = max_diff(drift_direct(x, g), pic(x)) / g.sup_norm();
        worst = std::max(worst, rel);
    }
    MESSAGE("worst engine discrepancy ", worst);
    CHECK(worst <= 1e-3);
}

TEST_CASE("grid drift special configurations")
{
    const GridSpec grid{2, 128, 8.0};
    const auto s = biot_savart(0.5, 64);
    const GridDrift pic(s.kernel, s.vn, grid);
    const std::vector<Vec> origin{Vec{0, 0, 0}};
    CHECK(norm(pic(origin)[0]) < 1e-10);

    // ring of particles: drift is tangent to the ring
    std::vector<Vec> ring;
    for (int i = 0; i < 64; ++i) {
        const double t = 2.0 * kPi * i / 64.0;
        ring.push_back({1.5 * std::cos(t), 1.5 * std::sin(t), 0.0});
    }
    const auto b = pic(ring);
    const InteractionTable g(s.kernel, s.vn, 20.0);
    const auto bd = drift_direct(ring, g);
    double radial = 0.0, speed = 0.0;
    for (std::size_t i = 0; i < ring.size(); ++i) {
        radial = std::max(radial, std::abs(dot(b[i], ring[i])) / norm(ring[i]));
        speed = std::max(speed, norm(b[i]));
    }
    CHECK(speed > 0.0);
    CHECK(radial < 1e-3 * speed);
    CHECK(max_diff(b, bd) < 1e-3 * g.sup_norm());

    CHECK_THROWS_AS(GridDrift(s.kernel, s.vn, GridSpec{2, 16, 8.0}), ResolutionError);
    const std::vector<Vec> far{Vec{7.9, 0, 0}};
    CHECK_THROWS_AS(pic(far), MassLeak);
}

TEST_CASE("Euler-Maruyama step")
{
    const NoiseField noise = build_noise(2, 4.0, 0.5, 64, 3);
    Rng rng(9);
    auto x = cloud(16, 2);
    ParticleEnsemble ens{2, x, 0.0, 1, 0};
    step(ens, 1e-3, DriftEngine::none(), nullptr, nullptr);
    CHECK(ens.positions == x);
    CHECK(ens.time == doctest::Approx(1e-3));

    ParticleEnsemble twins{2, {Vec{0.3, 0.7, 0}, Vec{0.3, 0.7, 0}, Vec{-1, 0, 0}}, 0.0, 1, 0};
    for (int s = 0; s < 200; ++s) {
        const auto incs = sample_shared_increments(noise, 1e-2, rng);
        step(twins, 1e-2, DriftEngine::none(), &noise, &incs);
    }
    CHECK(twins.positions[0] == twins.positions[1]);
    CHECK(twins.positions[0] != Vec{0.3, 0.7, 0});

    auto bad = sample_shared_increments(noise, 1e-2, rng);
    bad.xi[0] = std::nan("");
    CHECK_THROWS_AS(step(twins, 1e-2, DriftEngine::none(), &noise, &bad), NonFinite);
    CHECK_THROWS_AS(step(twins, 1e-2, DriftEngine::none(), &noise, nullptr), InvalidArgument);
}

TEST_CASE("co-rotating vortex pair")
{
    const auto s = biot_savart(0.2, 2);
    const auto table = std::make_shared<InteractionTable>(s.kernel, s.vn, 10.0);
    const DriftEngine drift = DriftEngine::direct(table);
    const double sep = 3.0;
    // relative vector X1 - X2 obeys r' = G(r): uniform rotation at g(|r|)/|r|
    const double omega = table->radial_profile(sep) / sep;
    const double T = 2.0;
    auto final_error = [&](double dt) {
        ParticleEnsemble ens{2, {Vec{0.5 * sep, 0, 0}, Vec{-0.5 * sep, 0, 0}}, 0.0, 0, 0};
        double drift_in_distance = 0.0;
        const auto steps = std::llround(T / dt);
        for (long long k = 0; k < steps; ++k) {
            step(ens, dt, drift, nullptr, nullptr);
            drift_in_distance = std::max(drift_in_distance, std::abs(norm(ens.positions[0] - ens.positions[1]) - sep));
        }
        CHECK(drift_in_distance < 10.0 * steps * dt * dt * omega * omega * sep);
        const Vec exact{0.5 * sep * std::cos(omega * T), 0.5 * sep * std::sin(omega * T), 0.0};
        return norm(ens.positions[0] - exact);
    };
    const double e1 = final_error(0.02), e2 = final_error(0.01);
    CHECK(e1 / e2 == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("simulate is deterministic")
{
    const auto s = biot_savart(0.5, 256);
    const auto pic = std::make_shared<GridDrift>(s.kernel, s.vn, GridSpec{2, 128, 8.0});
    const DriftEngine drift = DriftEngine::grid(pic);
    const NoiseField noise = build_noise(2, 4.0, std::log(256.0), 128, 5);
    const auto ens = init_ensemble(256, InitialDatum::gaussian(2, 1.0), 42, 3);

    SimulationConfig cfg;
    cfg.dt = 5e-3;
    cfg.T = 0.0;
    const auto zero = simulate(ens, cfg, drift, &noise);
    REQUIRE(zero.size() == 1);
    CHECK(zero[0].positions == ens.positions);

    cfg.T = 0.1;
    cfg.snapshot_times = {0.05};
    const auto a = simulate(ens, cfg, drift, &noise);
    const auto b = simulate(ens, cfg, drift, &noise);
    cfg.threads = 3;
    const auto c = simulate(ens, cfg, drift, &noise);
    REQUIRE(a.size() == 3);
    CHECK(a[1].time == doctest::Approx(0.05));
    for (std::size_t k = 0; k < a.size(); ++k) {
        CHECK(a[k].positions == b[k].positions);
        CHECK(a[k].positions == c[k].positions);
    }
    CHECK(a.back().positions != ens.positions);

    auto other = ens;
    other.replica = 4;
    CHECK(simulate(other, cfg, drift, &noise).back().positions != a.back().positions);

    std::ostringstream os;
    write_snapshot_csv(os, a[1], 2);
    const std::string text = os.str();
    CHECK(text.rfind("# schema_version: 1\n# time: 0.05\nparticle_id,x1,x2\n0,", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 3 + 256);

    ParticleEnsemble edge{2, {Vec{7.5, 0, 0}}, 0.0, 0, 0};
    try {
        simulate(edge, cfg, drift, nullptr);
        FAIL("expected a mass leak");
    } catch (const MassLeak& e) {
        CHECK(std::string(e.what()).rfind("step 0:", 0) == 0);
    }
}
