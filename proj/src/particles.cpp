#include "modlab/particles.hpp"

#include "modlab/parallel.hpp"

#include <boost/math/quadrature/gauss.hpp>

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

namespace modlab {

namespace {
using Rule16 = boost::math::quadrature::gauss<double, 16>;

struct Nodes {
    std::vector<double> x;
    std::vector<double> w;
};

// Composite 16-point Gauss-Legendre on `panels` equal panels of [a, b].
Nodes panel_nodes(double a, double b, int panels)
{
    Nodes n;
    const auto& ax = Rule16::abscissa();
    const auto& aw = Rule16::weights();
    const double width = (b - a) / panels;
    for (int p = 0; p < panels; ++p) {
        const double mid = a + (p + 0.5) * width;
        const double half = 0.5 * width;
        for (std::size_t i = 0; i < ax.size(); ++i) {
            n.x.push_back(mid - half * ax[i]);
            n.w.push_back(half * aw[i]);
            n.x.push_back(mid + half * ax[i]);
            n.w.push_back(half * aw[i]);
        }
    }
    return n;
}

// Polar grid over the V^N ball with symmetry axis e_1. The integrand only
// depends on (s, theta), so in 3D the azimuth integrates to 2 pi.
class ProfileQuadrature {
  public:
    ProfileQuadrature(const RegularizedKernel& kernel, const ScaledMollifier& vn) : kernel_(kernel)
    {
        const int d = kernel.dim();
        const double a = vn.support_radius();
        const double ell = std::min(a, kernel.rho().support_radius());
        const int ps = std::max(2, static_cast<int>(std::ceil(2.0 * a / ell)));
        const int pt = std::max(4, static_cast<int>(std::ceil(2.0 * kPi * a / ell)));
        const Nodes s = panel_nodes(0.0, a, ps);
        const Nodes t = panel_nodes(0.0, kPi, pt);
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            s_.push_back(s.x[i]);
            ws_.push_back(s.w[i] * std::pow(s.x[i], d - 1) * vn.from_r2(s.x[i] * s.x[i]) * (d == 2 ? 2.0 : 2.0 * kPi));
        }
        for (std::size_t j = 0; j < t.x.size(); ++j) {
            cos_.push_back(std::cos(t.x[j]));
            wt_.push_back(t.w[j] * (d == 2 ? 1.0 : std::sin(t.x[j])));
        }
    }

    double operator()(double r) const
    {
        double total = 0.0;
        for (std::size_t i = 0; i < s_.size(); ++i) {
            if (ws_[i] == 0.0) continue;
            const double s = s_[i];
            double inner = 0.0;
            for (std::size_t j = 0; j < cos_.size(); ++j) {
                const double along = r - s * cos_[j];
                const double x = std::sqrt(std::max(0.0, r * r - 2.0 * r * s * cos_[j] + s * s));
                if (x > 0.0) inner += wt_[j] * kernel_.radial_profile(x) * along / x;
            }
            total += ws_[i] * inner;
        }
        return total;
    }

  private:
    const RegularizedKernel& kernel_;
    std::vector<double> s_, ws_, cos_, wt_;
};

constexpr int kNearSamplesPerScale = 32;
constexpr int kFarSamplesPerNear = 16;
} // namespace

ParticleEnsemble init_ensemble(long long n_particles, const InitialDatum& omega0, std::uint64_t seed,
                               std::uint64_t replica)
{
    if (n_particles < 1) throw InvalidArgument("particle count must be positive");
    ParticleEnsemble ens;
    ens.d = omega0.d;
    ens.seed = seed;
    ens.replica = replica;
    Rng rng = make_rng(seed, {static_cast<std::uint64_t>(Stream::Initial), static_cast<std::uint64_t>(n_particles),
                              replica});
    ens.positions.resize(static_cast<std::size_t>(n_particles));
    for (auto& x : ens.positions) x = omega0.sample(rng);
    return ens;
}

double interaction_profile_quadrature(const RegularizedKernel& kernel, const ScaledMollifier& vn, double r)
{
    if (vn.base().dim() != kernel.dim()) throw DimensionMismatch("V^N and kernel dimensions differ");
    return ProfileQuadrature(kernel, vn)(r);
}

InteractionTable::InteractionTable(const RegularizedKernel& kernel, const ScaledMollifier& vn, double extent)
    : kernel_(kernel), extent_(extent)
{
    if (vn.base().dim() != kernel.dim()) throw DimensionMismatch("V^N and kernel dimensions differ");
    if (!(extent > 0.0)) throw InvalidArgument("table extent must be positive");
    const ProfileQuadrature quad(kernel, vn);
    const double a = vn.support_radius();
    const double rho = kernel.rho().support_radius();
    near_ = a + rho;
    dr_near_ = std::min(a, rho) / kNearSamplesPerScale;
    const auto count = static_cast<std::size_t>(std::ceil(near_ / dr_near_)) + 3;
    near_table_.resize(count);
    for (std::size_t k = 1; k < count; ++k) near_table_[k] = quad(static_cast<double>(k) * dr_near_);
    // g(0) = 0 exactly: the integrand is odd about the origin
    near_table_[0] = 0.0;
    for (std::size_t k = 0; k + 3 < count; ++k) sup_ = std::max(sup_, std::abs(near_table_[k]));

    if (!is_harmonic(kernel.kind()) && extent_ > near_) {
        dr_far_ = near_ / kFarSamplesPerNear;
        const auto far = static_cast<std::size_t>(std::ceil(extent_ / dr_far_)) + 3;
        far_table_.resize(far);
        for (std::size_t k = 1; k < far; ++k) {
            const double r = static_cast<double>(k) * dr_far_;
            far_table_[k] = r + 2.0 * dr_far_ < near_ ? 0.0 : quad(r);
        }
    }
}

double InteractionTable::interpolate(const std::vector<double>& table, double dr, double r) const
{
    const double u = r / dr;
    const auto k = static_cast<std::ptrdiff_t>(u);
    const double t = u - static_cast<double>(k);
    const double pm = k == 0 ? -table[1] : table[k - 1];
    const double p0 = table[k];
    const double p1 = table[k + 1];
    const double p2 = table[k + 2];
    return p0 + 0.5 * t * (p1 - pm + t * (2.0 * pm - 5.0 * p0 + 4.0 * p1 - p2 + t * (3.0 * (p0 - p1) + p2 - pm)));
}

double InteractionTable::radial_profile(double r) const
{
    if (r > extent_) {
        throw OutOfTable("displacement " + std::to_string(r) + " exceeds the interaction table extent " +
                         std::to_string(extent_));
    }
    if (r < near_) return interpolate(near_table_, dr_near_, r);
    if (far_table_.empty()) return radial_factor(kernel_.kind(), r) * r;
    return interpolate(far_table_, dr_far_, r);
}

Vec InteractionTable::operator()(const Vec& x) const
{
    const double r = norm(x);
    if (r == 0.0) return {0.0, 0.0, 0.0};
    const double s = radial_profile(r) / r;
    if (is_rotational(kernel_.kind())) return {-s * x[1], s * x[0], 0.0};
    return s * x;
}

std::vector<Vec> drift_direct(std::span<const Vec> x, const InteractionTable& g, int threads)
{
    const std::size_t n = x.size();
    std::vector<Vec> out(n, Vec{0.0, 0.0, 0.0});
    const double inv = 1.0 / static_cast<double>(n);
    parallel_for(n, threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            Vec acc{0.0, 0.0, 0.0};
            for (std::size_t j = 0; j < n; ++j) acc += g(x[i] - x[j]);
            out[i] = inv * acc;
        }
    });
    return out;
}

GridDrift::GridDrift(const RegularizedKernel& kernel, const ScaledMollifier& vn, const GridSpec& grid)
    : grid_(grid), vn_(vn)
{
    grid.check();
    if (kernel.dim() != grid.d || vn.base().dim() != grid.d) throw DimensionMismatch("grid and kernel dimensions differ");
    const double h = grid.h();
    if (vn.support_radius() / h < 4.0 || kernel.rho().support_radius() / h < 4.0) {
        throw ResolutionError("grid spacing " + std::to_string(h) + " must resolve V^N (radius " +
                              std::to_string(vn.support_radius()) + ") and rho_eps (radius " +
                              std::to_string(kernel.rho().support_radius()) + ") with 4 cells");
    }
    const int n = grid.n, m = 2 * n, d = grid.d;
    padded_ = std::make_shared<Spectral>(d, m, 2.0 * grid.half_width);
    const std::size_t size = padded_->real_size();
    std::vector<double> samples[3];
    for (int a = 0; a < d; ++a) samples[a].assign(size, 0.0);
    const double vol = grid.cell_volume();
    for (std::size_t idx = 0; idx < size; ++idx) {
        std::size_t rest = idx;
        Vec x{0.0, 0.0, 0.0};
        bool edge = false;
        for (int a = d - 1; a >= 0; --a) {
            const int i = static_cast<int>(rest % m);
            rest /= m;
            const int off = i < n ? i : i - m;
            edge = edge || off == -n;
            x[a] = off * h;
        }
        if (edge) continue;
        const Vec k = kernel(x);
        for (int a = 0; a < d; ++a) samples[a][idx] = vol * k[a];
    }
    for (int a = 0; a < d; ++a) kernel_hat_[a] = padded_->forward(samples[a]);
}

GridField GridDrift::velocity(const GridField& omega) const
{
    if (!(omega.spec() == grid_) || omega.components() != 1) throw DimensionMismatch("vorticity is not on the drift grid");
    const int n = grid_.n, m = 2 * n, d = grid_.d;
    const std::size_t size = padded_->real_size();
    // padded index of the first cell of each unpadded row
    auto padded_index = [&](std::size_t cell) {
        std::size_t rest = cell, idx = 0, stride = 1;
        for (int a = d - 1; a >= 0; --a) {
            idx += (rest % n) * stride;
            rest /= n;
            stride *= m;
        }
        return idx;
    };
    std::vector<double> pad(size, 0.0);
    for (std::size_t c = 0; c < omega.cells(); ++c) pad[padded_index(c)] = omega[c];
    const auto wh = padded_->forward(pad);
    GridField u(grid_, d);
    std::vector<Spectral::Complex> prod(wh.size());
    for (int a = 0; a < d; ++a) {
        for (std::size_t i = 0; i < wh.size(); ++i) prod[i] = kernel_hat_[a][i] * wh[i];
        padded_->inverse(prod.data(), pad.data());
        auto out = u.component(a);
        for (std::size_t c = 0; c < omega.cells(); ++c) out[c] = pad[padded_index(c)];
    }
    return u;
}

std::vector<Vec> GridDrift::interpolate(const GridField& u, std::span<const Vec> x, int threads) const
{
    const int n = grid_.n, d = grid_.d;
    const double h = grid_.h(), L = grid_.half_width;
    std::vector<Vec> out(x.size(), Vec{0.0, 0.0, 0.0});
    parallel_for(x.size(), threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t p = begin; p < end; ++p) {
            int base[3] = {0, 0, 0};
            double w[3][4] = {};
            for (int a = 0; a < d; ++a) {
                const double s = (x[p][a] + L) / h - 0.5;
                const double f = std::floor(s);
                const double t = s - f;
                base[a] = static_cast<int>(f) - 1;
                if (!(base[a] >= 0 && base[a] + 3 <= n - 1)) {
                    throw OutOfTable("particle at distance " + std::to_string(norm(x[p])) +
                                     " leaves the interpolation grid");
                }
                w[a][0] = -t * (t - 1.0) * (t - 2.0) / 6.0;
                w[a][1] = (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0;
                w[a][2] = -(t + 1.0) * t * (t - 2.0) / 2.0;
                w[a][3] = (t + 1.0) * t * (t - 1.0) / 6.0;
            }
            const int kz = d == 3 ? 4 : 1;
            for (int c = 0; c < d; ++c) {
                const auto comp = u.component(c);
                double acc = 0.0;
                for (int i = 0; i < 4; ++i)
                    for (int j = 0; j < 4; ++j)
                        for (int k = 0; k < kz; ++k) {
                            std::size_t idx = static_cast<std::size_t>(base[0] + i) * n + (base[1] + j);
                            double wt = w[0][i] * w[1][j];
                            if (d == 3) {
                                idx = idx * n + (base[2] + k);
                                wt *= w[2][k];
                            }
                            acc += wt * comp[idx];
                        }
                out[p][c] = acc;
            }
        }
    });
    return out;
}

std::vector<Vec> GridDrift::operator()(std::span<const Vec> x, int threads) const
{
    return interpolate(velocity(mollify(x, vn_, grid_)), x, threads);
}

std::vector<Vec> drift_grid(std::span<const Vec> x, const RegularizedKernel& kernel, const ScaledMollifier& vn,
                            const GridSpec& grid, int threads)
{
    return GridDrift(kernel, vn, grid)(x, threads);
}

DriftEngine DriftEngine::none() { return DriftEngine(); }

DriftEngine DriftEngine::direct(std::shared_ptr<const InteractionTable> table)
{
    DriftEngine e;
    e.mode_ = Mode::DirectN2;
    e.table_ = std::move(table);
    return e;
}

DriftEngine DriftEngine::grid(std::shared_ptr<const GridDrift> engine)
{
    DriftEngine e;
    e.mode_ = Mode::GridFFT;
    e.grid_ = std::move(engine);
    return e;
}

std::vector<Vec> DriftEngine::operator()(std::span<const Vec> x, int threads) const
{
    switch (mode_) {
    case Mode::DirectN2: return drift_direct(x, *table_, threads);
    case Mode::GridFFT: return (*grid_)(x, threads);
    case Mode::None: break;
    }
    return std::vector<Vec>(x.size(), Vec{0.0, 0.0, 0.0});
}

void step(ParticleEnsemble& ens, double dt, const DriftEngine& drift, const NoiseField* noise,
          const ModeIncrements* incs, int threads)
{
    if (!(dt > 0.0)) throw InvalidArgument("dt must be positive");
    if (noise && !incs) throw InvalidArgument("noise needs increments for the step");
    const std::size_t n = ens.size();
    const auto b = drift(ens.positions, threads);
    std::vector<Vec> du(n, Vec{0.0, 0.0, 0.0});
    if (noise) velocity_increments(*noise, *incs, ens.positions, du, threads);
    for (std::size_t i = 0; i < n; ++i) {
        const Vec x = ens.positions[i] + dt * b[i] + du[i];
        if (!(std::isfinite(x[0]) && std::isfinite(x[1]) && std::isfinite(x[2]))) {
            throw NonFinite("particle " + std::to_string(i) + " left the finite range");
        }
        ens.positions[i] = x;
    }
    ens.time += dt;
}

void SimulationConfig::check() const
{
    if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidArgument("dt must be positive");
    if (!(T >= 0.0) || !std::isfinite(T)) throw InvalidArgument("T must be nonnegative");
    for (double t : snapshot_times)
        if (!(t >= 0.0 && t <= T)) throw InvalidArgument("snapshot times must lie in [0, T]");
    if (threads < 1) throw InvalidArgument("threads must be positive");
}

namespace {
template <class E> [[noreturn]] void rethrow_at(const E& e, long long s)
{
    throw E("step " + std::to_string(s) + ": " + e.what());
}
} // namespace

std::vector<Snapshot> simulate(ParticleEnsemble ens, const SimulationConfig& cfg, const DriftEngine& drift,
                               const NoiseField* noise)
{
    cfg.check();
    const auto steps = static_cast<long long>(std::llround(cfg.T / cfg.dt));
    std::vector<long long> keep{0};
    if (cfg.snapshot_times.empty()) {
        for (long long s = 1; s <= steps; ++s) keep.push_back(s);
    } else {
        for (double t : cfg.snapshot_times) keep.push_back(std::clamp(std::llround(t / cfg.dt), 0LL, steps));
        keep.push_back(steps);
        std::sort(keep.begin(), keep.end());
        keep.erase(std::unique(keep.begin(), keep.end()), keep.end());
    }
    Rng rng = make_rng(ens.seed, {static_cast<std::uint64_t>(Stream::Increments), ens.replica});
    const double t0 = ens.time;
    std::vector<Snapshot> out;
    std::size_t next = 0;
    for (long long s = 0;; ++s) {
        if (next < keep.size() && keep[next] == s) {
            out.push_back({t0 + static_cast<double>(s) * cfg.dt, ens.positions});
            ++next;
        }
        if (s == steps) break;
        try {
            if (noise) {
                const ModeIncrements incs = sample_shared_increments(*noise, cfg.dt, rng);
                step(ens, cfg.dt, drift, noise, &incs, cfg.threads);
            } else {
                step(ens, cfg.dt, drift, nullptr, nullptr, cfg.threads);
            }
        } catch (const NonFinite& e) {
            rethrow_at(e, s);
        } catch (const OutOfTable& e) {
            rethrow_at(e, s);
        } catch (const MassLeak& e) {
            rethrow_at(e, s);
        }
    }
    return out;
}

double empirical_moment(std::span<const Vec> x, double order)
{
    if (!(order >= 1.0)) throw InvalidArgument("moment order must be at least 1");
    if (x.empty()) throw InvalidArgument("empty ensemble");
    double s = 0.0;
    for (const Vec& p : x) s += std::pow(norm(p), order);
    return s / static_cast<double>(x.size());
}

void write_snapshot_csv(std::ostream& os, const Snapshot& s, int d)
{
    os << "# schema_version: 1\n# time: " << s.time << "\nparticle_id";
    for (int a = 0; a < d; ++a) os << ",x" << a + 1;
    os << '\n';
    os.precision(17);
    for (std::size_t i = 0; i < s.positions.size(); ++i) {
        os << i;
        for (int a = 0; a < d; ++a) os << ',' << s.positions[i][a];
        os << '\n';
    }
}

} // namespace modlab
