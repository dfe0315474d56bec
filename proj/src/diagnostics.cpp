#include "modlab/diagnostics.hpp"

#include "modlab/noise.hpp"
#include "modlab/parallel.hpp"
#include "modlab/quadrature.hpp"
#include "modlab/spectral.hpp"
#include "modlab/stats.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>

namespace modlab {

double epsilon_schedule(long long n_particles, double zeta, double p, int d, double theta)
{
    if (n_particles < 2) throw InvalidArgument("epsilon schedule needs N >= 2");
    if (!(zeta > 0.0 && zeta < 1.0)) throw InvalidZeta("zeta_N must lie in (0, 1); got " + std::to_string(zeta));
    if (!(theta > 0.0)) throw InvalidArgument("theta must be positive");
    if (!(p > 1.0)) throw InvalidArgument("p must exceed 1");
    const double pc = p / (p - 1.0);
    const double base = std::min(theta * std::log(static_cast<double>(n_particles)), -theta * std::log(zeta));
    return std::pow(base, -pc / (2.0 * d));
}

//---------------------------------------------------------------------------//
// Convergence sweep
//---------------------------------------------------------------------------//
void SweepConfig::check() const
{
    grid.check();
    if (omega0.d != grid.d) throw DimensionMismatch("initial datum and grid dimensions differ");
    if (kernel) {
        check_kernel(*kernel);
        if (kernel_dim(*kernel) != grid.d) throw DimensionMismatch("kernel and grid dimensions differ");
    }
    if (!(dt > 0.0) || !(T >= 0.0)) throw InvalidArgument("sweep needs dt > 0 and T >= 0");
    if (!noise && T > 0.0) throw InvalidArgument("without noise the particle system has no diffusion; use T = 0");
    if (n_list.empty()) throw InvalidArgument("empty N list");
    if (!std::is_sorted(n_list.begin(), n_list.end())) throw InvalidArgument("N list must be increasing");
    if (replicas < 1) throw InvalidArgument("replicas must be positive");
    if (!zeta.empty() && zeta.size() != n_list.size()) throw InvalidArgument("one zeta per N is required");
    if (!scheduled_epsilon && !(epsilon > 0.0)) throw InvalidArgument("fixed epsilon must be positive");
    if (threads < 1) throw InvalidArgument("threads must be positive");
}

double SweepConfig::nu() const { return noise ? nu_theoretical(grid.d, alpha) : 0.0; }

std::vector<double> SweepConfig::distance_times() const
{
    if (!snapshot_times.empty()) return snapshot_times;
    std::vector<double> t;
    const auto k = static_cast<long long>(std::llround(T / 0.05));
    for (long long i = 0; i <= k; ++i) t.push_back(std::min(T, 0.05 * static_cast<double>(i)));
    return t;
}

namespace {
struct Reference {
    std::vector<long long> steps;
    std::vector<GridField> fields;
};

// PDE trajectory sampled at the distance times (t = 0 included).
Reference reference(const SweepConfig& cfg, const KernelMode& mode, const std::vector<long long>& steps)
{
    Reference ref;
    ref.steps = steps;
    const GridField w0 = cfg.omega0.on_grid(cfg.grid);
    if (cfg.T == 0.0) {
        ref.fields.assign(steps.size(), w0);
        return ref;
    }
    PdeConfig pc;
    pc.nu = cfg.nu();
    pc.kernel = mode;
    pc.grid = cfg.grid;
    pc.dt = cfg.dt;
    pc.T = cfg.T;
    for (long long s : steps) pc.snapshot_times.push_back(static_cast<double>(s) * cfg.dt);
    const Trajectory tr = solve(w0, pc);
    if (tr.blew_up) throw BlowUp("reference solution tripped the blow-up guard at t = " + std::to_string(tr.failure_time));
    for (long long s : steps) {
        const double t = static_cast<double>(s) * cfg.dt;
        std::size_t k = 0;
        while (k + 1 < tr.times.size() && std::abs(tr.times[k] - t) > 0.5 * cfg.dt) ++k;
        ref.fields.push_back(tr.fields[k]);
    }
    return ref;
}

struct ReplicaResult {
    double dist_eps = 0.0;
    double dist_exact = 0.0;
    double z_sup = 0.0;
    bool z_exact = true;
    double moment_sup = 0.0;
};

double iqr(const std::vector<double>& v) { return stats::quantile(v, 0.75) - stats::quantile(v, 0.25); }
} // namespace

ConvergenceReport convergence_sweep(const SweepConfig& cfg)
{
    cfg.check();
    const int d = cfg.grid.d;
    const double p = cfg.scaling.p;
    const Mollifier v(d);

    std::vector<long long> steps;
    for (double t : cfg.distance_times()) steps.push_back(std::llround(t / cfg.dt));
    const auto total_steps = static_cast<long long>(std::llround(cfg.T / cfg.dt));
    steps.push_back(0);
    steps.push_back(total_steps);
    std::sort(steps.begin(), steps.end());
    steps.erase(std::unique(steps.begin(), steps.end()), steps.end());

    std::vector<double> zeta = cfg.zeta;
    if (zeta.empty()) {
        const auto rep = zeta_estimate(cfg.omega0, cfg.n_list, cfg.scaling, std::max(32, cfg.zeta_replicas), cfg.grid,
                                       derive_seed(cfg.seed, {static_cast<std::uint64_t>(Stream::Initial), 0}),
                                       cfg.threads);
        for (const auto& row : rep.rows) zeta.push_back(row.zeta);
    }

    const KernelMode exact_mode = cfg.kernel ? KernelMode::exact(*cfg.kernel) : KernelMode::zero();
    std::optional<Reference> exact;
    std::string exact_error;
    try {
        exact = reference(cfg, exact_mode, steps);
    } catch (const Error& e) {
        exact_error = e.what();
    }

    ConvergenceReport report;
    for (std::size_t row_index = 0; row_index < cfg.n_list.size(); ++row_index) {
        const auto start = std::chrono::steady_clock::now();
        SweepRow row;
        row.n_particles = cfg.n_list[row_index];
        row.beta = cfg.scaling.beta;
        row.zeta = zeta[row_index];
        row.n_scale = cfg.coupled ? std::log(static_cast<double>(row.n_particles)) : cfg.n_scale;
        row.replicas = cfg.replicas;
        try {
            if (!exact) throw Error("reference solution failed: " + exact_error);
            row.epsilon = cfg.scheduled_epsilon ? epsilon_schedule(row.n_particles, row.zeta, p, d, cfg.theta)
                                                : cfg.epsilon;
            ModerateScaling sc = cfg.scaling;
            sc.n_particles = row.n_particles;
            sc.check(d);
            const ScaledMollifier vn(v, sc);

            std::optional<RegularizedKernel> keps;
            DriftEngine drift = DriftEngine::none();
            std::shared_ptr<const GridDrift> pic;
            if (cfg.kernel) {
                keps = build_regularized(*cfg.kernel, row.epsilon, cfg.rho_radius);
                if (cfg.engine == DriftEngine::Mode::DirectN2) {
                    drift = DriftEngine::direct(std::make_shared<InteractionTable>(
                        *keps, vn, 2.0 * std::sqrt(static_cast<double>(d)) * cfg.grid.half_width));
                } else {
                    pic = std::make_shared<GridDrift>(*keps, vn, cfg.grid);
                    drift = DriftEngine::grid(pic);
                }
                if (cfg.stochastic_convolution && !pic) pic = std::make_shared<GridDrift>(*keps, vn, cfg.grid);
            }
            if (cfg.stochastic_convolution && !pic) {
                throw InvalidArgument("the stochastic convolution needs an interaction kernel");
            }
            const Reference reg = cfg.kernel ? reference(cfg, KernelMode::regularized(*cfg.kernel, row.epsilon,
                                                                                      cfg.rho_radius),
                                                         steps)
                                             : *exact;

            SimulationConfig sim;
            sim.dt = cfg.dt;
            sim.T = cfg.T;
            if (!cfg.stochastic_convolution) {
                for (long long s : steps) sim.snapshot_times.push_back(static_cast<double>(s) * cfg.dt);
            }
            const double moment_order = cfg.scaling.m * (d + 1);

            std::vector<ReplicaResult> results(static_cast<std::size_t>(cfg.replicas));
            parallel_for(results.size(), cfg.threads, [&](std::size_t begin, std::size_t end) {
                for (std::size_t r = begin; r < end; ++r) {
                    const auto n = static_cast<std::uint64_t>(row.n_particles);
                    const ParticleEnsemble ens = init_ensemble(row.n_particles, cfg.omega0, cfg.seed, r);
                    std::optional<NoiseField> noise;
                    if (cfg.noise) {
                        noise = build_noise(d, cfg.alpha, row.n_scale, cfg.mode_count,
                                            derive_seed(cfg.seed, {static_cast<std::uint64_t>(Stream::NoiseModes), n, r}));
                    }
                    const auto snaps = simulate(ens, sim, drift, noise ? &*noise : nullptr);
                    ReplicaResult out;
                    std::size_t k = 0;
                    for (const Snapshot& s : snaps) {
                        out.moment_sup = std::max(out.moment_sup, empirical_moment(s.positions, moment_order));
                        const long long step = std::llround(s.time / cfg.dt);
                        while (k < steps.size() && steps[k] < step) ++k;
                        if (k == steps.size() || steps[k] != step) continue;
                        const GridField wn = mollify(s.positions, vn, cfg.grid);
                        out.dist_eps = std::max(out.dist_eps, norm_l1lp(wn - reg.fields[k], p));
                        out.dist_exact = std::max(out.dist_exact, norm_l1lp(wn - exact->fields[k], p));
                    }
                    if (cfg.stochastic_convolution) {
                        ZOptions zo;
                        zo.p = p;
                        const auto z = stochastic_convolution_estimate(snaps, *pic, cfg.nu(), zo);
                        out.z_sup = z.sup_norm;
                        out.z_exact = z.reconstruction_exact;
                    }
                    results[r] = out;
                }
            });
            for (const auto& r : results) {
                row.dist_eps.push_back(r.dist_eps);
                row.dist_exact.push_back(r.dist_exact);
                row.moment_sup.push_back(r.moment_sup);
                if (cfg.stochastic_convolution) row.z_sup.push_back(r.z_sup);
                row.z_reconstruction_exact = row.z_reconstruction_exact && r.z_exact;
            }
            row.median_eps = stats::median(row.dist_eps);
            row.iqr_eps = iqr(row.dist_eps);
            row.lm_eps = stats::lm_norm(row.dist_eps, cfg.scaling.m);
            row.median_exact = stats::median(row.dist_exact);
            row.iqr_exact = iqr(row.dist_exact);
            row.lm_exact = stats::lm_norm(row.dist_exact, cfg.scaling.m);
            if (!row.z_sup.empty()) row.median_z = stats::median(row.z_sup);
        } catch (const Error& e) {
            row.error = e.what();
        }
        row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        report.rows.push_back(std::move(row));
    }

    std::vector<double> ns, me, mx, mz;
    for (const auto& row : report.rows) {
        if (!row.error.empty()) continue;
        ns.push_back(static_cast<double>(row.n_particles));
        me.push_back(row.median_eps);
        mx.push_back(row.median_exact);
        mz.push_back(row.median_z);
    }
    if (ns.size() >= 2) {
        report.slope_eps = stats::fit_loglog(ns, me).slope;
        report.slope_exact = stats::fit_loglog(ns, mx).slope;
        if (cfg.stochastic_convolution) report.iota_fit = -stats::fit_loglog(ns, mz).slope;
    }
    return report;
}

void write_convergence_csv(std::ostream& os, const ConvergenceReport& r)
{
    os << "# schema_version: 1\n";
    os << "n_particles,replica,beta,epsilon,n_scale,dist_eps,dist_exact,z_sup,moment_sup\n";
    os.precision(17);
    for (const auto& row : r.rows) {
        for (std::size_t k = 0; k < row.dist_eps.size(); ++k) {
            os << row.n_particles << ',' << k << ',' << row.beta << ',' << row.epsilon << ',' << row.n_scale << ','
               << row.dist_eps[k] << ',' << row.dist_exact[k] << ',';
            if (k < row.z_sup.size()) os << row.z_sup[k];
            os << ',' << row.moment_sup[k] << '\n';
        }
    }
}

void write_convergence_summary_csv(std::ostream& os, const ConvergenceReport& r)
{
    os << "# schema_version: 1\n";
    os.precision(17);
    os << "# slope_eps: " << r.slope_eps << "\n# slope_exact: " << r.slope_exact << "\n# iota_fit: " << r.iota_fit
       << '\n';
    os << "n_particles,beta,epsilon,zeta,n_scale,replicas,median_eps,iqr_eps,lm_eps,median_exact,iqr_exact,"
          "lm_exact,median_z,error\n";
    for (const auto& row : r.rows) {
        os << row.n_particles << ',' << row.beta << ',' << row.epsilon << ',' << row.zeta << ',' << row.n_scale << ','
           << row.replicas << ',' << row.median_eps << ',' << row.iqr_eps << ',' << row.lm_eps << ','
           << row.median_exact << ',' << row.iqr_exact << ',' << row.lm_exact << ',' << row.median_z << ",\""
           << row.error << "\"\n";
    }
}

//---------------------------------------------------------------------------//
// Force covariance decay
//---------------------------------------------------------------------------//
void CovDecayConfig::check() const
{
    if (omega0.d != d) throw DimensionMismatch("initial datum dimension differs from d");
    if (n_particles < 2) throw InvalidArgument("covariance decay needs two tagged particles");
    if (!(ell >= 2.0)) throw InvalidArgument("ell must be at least 2");
    if (replicas < 2) throw InvalidArgument("covariance decay needs at least two replicas");
    if (!(time >= 0.0) || !(dt > 0.0)) throw InvalidArgument("covariance decay needs time >= 0 and dt > 0");
    if (threads < 1) throw InvalidArgument("threads must be positive");
}

std::vector<double> covariance_moment(int d, double alpha, double n_scale, std::span<const Vec> z, double ell)
{
    std::vector<double> radii;
    for (const Vec& x : z) radii.push_back(norm(x));
    const auto prof = covariance_profile(d, alpha, n_scale, radii);
    std::vector<double> out(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double f2 = prof.par[i] * prof.par[i] + (d - 1) * prof.perp[i] * prof.perp[i];
        out[i] = std::pow(f2, 0.5 * ell);
    }
    return out;
}

std::vector<CovDecayRow> force_covariance_decay(const CovDecayConfig& cfg, std::span<const double> n_scales)
{
    cfg.check();
    std::vector<CovDecayRow> rows;
    SimulationConfig sim;
    sim.dt = cfg.dt;
    sim.T = cfg.time;
    sim.snapshot_times = {cfg.time};
    for (std::size_t si = 0; si < n_scales.size(); ++si) {
        const double n_scale = n_scales[si];
        std::vector<Vec> sep(static_cast<std::size_t>(cfg.replicas));
        parallel_for(sep.size(), cfg.threads, [&](std::size_t begin, std::size_t end) {
            for (std::size_t r = begin; r < end; ++r) {
                ParticleEnsemble ens = init_ensemble(cfg.n_particles, cfg.omega0, cfg.seed, r);
                if (cfg.noise && cfg.time > 0.0) {
                    const NoiseField noise =
                        build_noise(cfg.d, cfg.alpha, n_scale, cfg.mode_count,
                                    derive_seed(cfg.seed, {static_cast<std::uint64_t>(Stream::NoiseModes), si, r}));
                    ens.positions = simulate(ens, sim, DriftEngine::none(), &noise).back().positions;
                }
                sep[r] = ens.positions[0] - ens.positions[1];
            }
        });
        CovDecayRow row;
        row.n_scale = n_scale;
        row.samples = covariance_moment(cfg.d, cfg.alpha, n_scale, sep, cfg.ell);
        row.mean = stats::mean(row.samples);
        row.standard_error = stats::standard_error(row.samples);
        row.median = stats::median(row.samples);
        rows.push_back(std::move(row));
    }
    return rows;
}

//---------------------------------------------------------------------------//
// Stochastic convolution
//---------------------------------------------------------------------------//
std::pair<double, double> split_difference(double c, double omega)
{
    // Fast2Sum with the larger magnitude first
    const double s = c - omega;
    if (std::abs(c) >= std::abs(omega)) {
        const double z = s - c;
        return {s, -omega - z};
    }
    const double z = s + omega;
    return {c - z, s};
}

namespace {
double combine(double heat, double duhamel) { return heat - duhamel; }

struct ZState {
    std::vector<double> times;
    std::vector<double> norms;
    bool exact = true;
    std::vector<ZSnapshot> fields;
    std::vector<GridField> omega;
};

ZState z_sweep(std::span<const Snapshot> snaps, const std::vector<std::size_t>& use, const GridDrift& drift,
               double nu, const ZOptions& opt)
{
    const GridSpec& g = drift.grid();
    const Spectral fft(g);
    const int d = g.d;
    const auto& k2 = fft.xi2();
    const auto& nyq = fft.nyquist();
    ZState st;
    std::vector<Spectral::Complex> w0h, dh(fft.complex_size(), 0.0), divh(fft.complex_size(), 0.0);
    double t0 = 0.0, prev_t = 0.0;
    for (std::size_t u = 0; u < use.size(); ++u) {
        const Snapshot& s = snaps[use[u]];
        const GridField omega = mollify(s.positions, drift.vn(), g);
        if (u == 0) {
            t0 = s.time;
            w0h = fft.forward(omega.values());
        } else {
            // D_k = e^{dt A} (D_{k-1} + dt div F_{k-1})
            const double step = s.time - prev_t;
            for (std::size_t i = 0; i < dh.size(); ++i) dh[i] = std::exp(-nu * step * k2[i]) * (dh[i] + step * divh[i]);
        }
        const double t = s.time - t0;
        std::vector<Spectral::Complex> hh(w0h.size());
        for (std::size_t i = 0; i < hh.size(); ++i) hh[i] = std::exp(-nu * t * k2[i]) * w0h[i];

        ZSnapshot z{GridField(g), GridField(g), GridField(g), GridField(g)};
        if (u == 0) {
            z.heat = omega;
        } else {
            fft.inverse(hh.data(), z.heat.values().data());
            fft.inverse(dh.data(), z.duhamel.values().data());
        }
        for (std::size_t i = 0; i < g.cells(); ++i) {
            const auto [a, b] = split_difference(combine(z.heat[i], z.duhamel[i]), omega[i]);
            z.z1[i] = a;
            z.z2[i] = b;
        }
        const GridField rec = z.reconstruct();
        st.exact = st.exact && rec.values() == omega.values();
        st.times.push_back(s.time);
        st.norms.push_back(norm_l1lp(z.z(), opt.p));

        // flux at this snapshot for the next interval
        const auto vel = drift.interpolate(drift.velocity(omega), s.positions, opt.threads);
        const GridField flux = mollify_weighted(s.positions, vel, drift.vn(), g);
        std::fill(divh.begin(), divh.end(), Spectral::Complex(0.0));
        for (int a = 0; a < d; ++a) {
            const auto fh = fft.forward(flux.component(a));
            const auto& xa = fft.xi(a);
            for (std::size_t i = 0; i < fh.size(); ++i)
                if (!nyq[i]) divh[i] += Spectral::Complex(0.0, xa[i]) * fh[i];
        }
        prev_t = s.time;
        if (opt.keep_fields) {
            st.fields.push_back(std::move(z));
            st.omega.push_back(omega);
        }
    }
    return st;
}
} // namespace

GridField ZSnapshot::z() const
{
    GridField out(z1.spec());
    for (std::size_t i = 0; i < out.cells(); ++i) out[i] = z1[i] + z2[i];
    return out;
}

GridField ZSnapshot::reconstruct() const
{
    GridField out(z1.spec());
    for (std::size_t i = 0; i < out.cells(); ++i) out[i] = (combine(heat[i], duhamel[i]) - z1[i]) - z2[i];
    return out;
}

StochasticConvolution stochastic_convolution_estimate(std::span<const Snapshot> snaps, const GridDrift& drift,
                                                      double nu, const ZOptions& opt)
{
    if (snaps.empty()) throw InvalidArgument("no snapshots");
    if (!(nu >= 0.0)) throw InvalidArgument("nu must be nonnegative");
    for (std::size_t k = 1; k < snaps.size(); ++k)
        if (!(snaps[k].time > snaps[k - 1].time)) throw InvalidArgument("snapshot times must increase");
    const double span = snaps.back().time - snaps.front().time;
    if (span > 0.0 && static_cast<double>(snaps.size() - 1) < 16.0 * span) {
        throw QuadratureTooCoarse("the Duhamel integral needs at least 16 snapshots per unit time");
    }
    std::vector<std::size_t> all(snaps.size());
    for (std::size_t k = 0; k < all.size(); ++k) all[k] = k;
    ZState st = z_sweep(snaps, all, drift, nu, opt);

    StochasticConvolution out;
    out.times = std::move(st.times);
    out.norms = std::move(st.norms);
    out.sup_norm = *std::max_element(out.norms.begin(), out.norms.end());
    out.reconstruction_exact = st.exact;
    out.fields = std::move(st.fields);
    out.omega = std::move(st.omega);

    if (opt.check_density && snaps.size() >= 3) {
        std::vector<std::size_t> half;
        for (std::size_t k = 0; k < snaps.size(); k += 2) half.push_back(k);
        if (half.back() != snaps.size() - 1) half.push_back(snaps.size() - 1);
        ZOptions lean = opt;
        lean.keep_fields = false;
        const ZState coarse = z_sweep(snaps, half, drift, nu, lean);
        const double sup_coarse = *std::max_element(coarse.norms.begin(), coarse.norms.end());
        if (out.sup_norm > 0.0 && std::abs(sup_coarse - out.sup_norm) > 0.2 * out.sup_norm) {
            throw QuadratureTooCoarse("halving the snapshot density moves sup ||Z|| from " +
                                      std::to_string(out.sup_norm) + " to " + std::to_string(sup_coarse));
        }
    }
    return out;
}

//---------------------------------------------------------------------------//
// Entropy and Mittag-Leffler
//---------------------------------------------------------------------------//
EntropyTrend entropy_trend(std::span<const GridField> fields, double tolerance)
{
    EntropyTrend tr;
    if (fields.empty()) return tr;
    for (const auto& f : fields) tr.values.push_back(entropy_plugin(f));
    tr.initial = tr.values.front();
    for (std::size_t k = 0; k < tr.values.size(); ++k) {
        tr.max_excess = std::max(tr.max_excess, tr.values[k] - tr.initial);
        if (k > 0 && tr.values[k] > tr.values[k - 1]) tr.non_increasing = false;
    }
    tr.bounded = tr.max_excess <= tolerance;
    return tr;
}

double mittag_leffler_half(double z)
{
    if (!(z >= 0.0)) throw InvalidArgument("E_{1/2} is evaluated for z >= 0");
    const double integral = z == 0.0 ? 0.0 : quad::adaptive([](double t) { return std::exp(-t * t); }, 0.0, z, 1e-14, 0.0, 30);
    return std::exp(z * z) * (1.0 + 2.0 / std::sqrt(kPi) * integral);
}

bool mittag_leffler_bound_holds(double z) { return mittag_leffler_half(z) <= 2.0 * std::exp(z * z); }

} // namespace modlab
