#include "modlab/pde.hpp"

#include <algorithm>
#include <cmath>

namespace modlab {

using Complex = Spectral::Complex;

namespace {
std::shared_ptr<Spectral> make_fft(const GridSpec& g) { return std::make_shared<Spectral>(g); }

void check_scalar(const GridField& f, const GridSpec& g)
{
    if (!(f.spec() == g) || f.components() != 1) throw DimensionMismatch("expected a scalar field on the solver grid");
}

// rho_eps hat on [0, q_max], linearly interpolated; direct quadrature per
// coefficient would cost one Hankel transform per distinct |xi|.
class FourierTable {
  public:
    FourierTable(const Mollifier& rho, double q_max, int samples) : dq_(q_max / samples), v_(samples + 2)
    {
        for (std::size_t i = 0; i < v_.size(); ++i) v_[i] = rho.fourier(dq_ * static_cast<double>(i));
    }
    double operator()(double q) const
    {
        const double u = q / dq_;
        const auto k = std::min(static_cast<std::size_t>(u), v_.size() - 2);
        const double t = u - static_cast<double>(k);
        return (1.0 - t) * v_[k] + t * v_[k + 1];
    }

  private:
    double dq_;
    std::vector<double> v_;
};
} // namespace

void PdeConfig::check() const
{
    grid.check();
    if (!(dt > 0.0)) throw InvalidArgument("pde dt must be positive");
    if (!(T > 0.0)) throw InvalidArgument("pde horizon T must be positive");
    if (!(nu > 0.0)) throw InvalidArgument("pde viscosity must be positive");
    if (kernel.type != KernelMode::Type::Zero) {
        check_kernel(kernel.kind);
        if (kernel_dim(kernel.kind) != grid.d) throw DimensionMismatch("kernel and grid dimensions differ");
    }
    if (kernel.type == KernelMode::Type::Regularized && !(kernel.epsilon > 0.0)) {
        throw InvalidArgument("regularized kernel mode needs epsilon > 0");
    }
}

double kernel_symbol_factor(const KernelKind& kind, double q)
{
    if (q == 0.0) return 0.0;
    const int d = kernel_dim(kind);
    if (std::holds_alternative<BiotSavart>(kind)) return -1.0 / (q * q);
    if (const auto* rp = std::get_if<RepulsivePoisson>(&kind)) return -rp->c_d * sphere_area(d) / (q * q);
    const double s = std::get<RieszGradient>(kind).s;
    if (s == 0.0) return -std::pow(2.0, d - 1) * std::pow(kPi, 0.5 * d) * std::tgamma(0.5 * d) * std::pow(q, -d);
    return -std::pow(2.0, d - s) * std::pow(kPi, 0.5 * d) * std::tgamma(0.5 * (d - s)) / std::tgamma(0.5 * s) *
           std::pow(q, s - d);
}

PdeOperator::PdeOperator(const GridSpec& grid, const KernelMode& kernel, double nu, bool dealias)
    : grid_(grid), kernel_(kernel), nu_(nu), dealias_(dealias), fft_(make_fft(grid))
{
    grid.check();
    const Spectral& s = *fft_;
    const int d = grid.d;
    if (kernel.type == KernelMode::Type::Zero) return;
    if (kernel_dim(kernel.kind) != d) throw DimensionMismatch("kernel and grid dimensions differ");

    std::optional<FourierTable> rho_hat;
    if (kernel.type == KernelMode::Type::Regularized) {
        double q_max = 0.0;
        for (double v : s.xi2()) q_max = std::max(q_max, std::sqrt(v));
        rho_hat.emplace(Mollifier(d, kernel.epsilon * kernel.rho_radius), q_max, 4096);
    }
    const bool rot = is_rotational(kernel.kind);
    for (int a = 0; a < d; ++a) sym_[a].assign(s.complex_size(), 0.0);
    for (std::size_t i = 0; i < s.complex_size(); ++i) {
        if (s.nyquist()[i] || s.xi2()[i] == 0.0) continue;
        const double q = std::sqrt(s.xi2()[i]);
        double c = kernel_symbol_factor(kernel.kind, q);
        if (rho_hat) c *= (*rho_hat)(q);
        if (rot) {
            sym_[0][i] = -c * s.xi(1)[i];
            sym_[1][i] = c * s.xi(0)[i];
        } else {
            for (int a = 0; a < d; ++a) sym_[a][i] = c * s.xi(a)[i];
        }
    }
}

std::vector<Complex> PdeOperator::velocity_hat(const std::vector<Complex>& fh, int axis) const
{
    std::vector<Complex> out(fh.size());
    const auto& sy = sym_[axis];
    for (std::size_t i = 0; i < fh.size(); ++i) out[i] = Complex(0.0, sy[i]) * fh[i];
    return out;
}

GridField PdeOperator::heat(const GridField& f, double t) const
{
    check_scalar(f, grid_);
    if (t == 0.0) return f;
    if (t < 0.0) throw InvalidArgument("heat propagation time must be >= 0");
    auto fh = fft_->forward(f.values());
    const auto& k2 = fft_->xi2();
    for (std::size_t i = 0; i < fh.size(); ++i) fh[i] *= std::exp(-nu_ * t * k2[i]);
    GridField out(grid_);
    fft_->inverse(fh.data(), out.values().data());
    return out;
}

GridField PdeOperator::velocity(const GridField& f) const
{
    check_scalar(f, grid_);
    GridField u(grid_, grid_.d);
    if (kernel_.type == KernelMode::Type::Zero) return u;
    const auto fh = fft_->forward(f.values());
    for (int a = 0; a < grid_.d; ++a) fft_->inverse(velocity_hat(fh, a).data(), u.component(a).data());
    return u;
}

GridField PdeOperator::flux(const GridField& f) const
{
    check_scalar(f, grid_);
    const int d = grid_.d;
    GridField out(grid_, d);
    if (kernel_.type == KernelMode::Type::Zero) return out;
    auto fh = fft_->forward(f.values());
    const auto& mask = fft_->dealias_mask();
    if (dealias_)
        for (std::size_t i = 0; i < fh.size(); ++i)
            if (!mask[i]) fh[i] = 0.0;
    std::vector<double> fd(fft_->real_size()), ua(fft_->real_size());
    fft_->inverse(fh.data(), fd.data());
    std::vector<Complex> ph(fft_->complex_size());
    for (int a = 0; a < d; ++a) {
        fft_->inverse(velocity_hat(fh, a).data(), ua.data());
        for (std::size_t i = 0; i < ua.size(); ++i) ua[i] *= fd[i];
        if (dealias_) {
            fft_->forward(ua.data(), ph.data());
            for (std::size_t i = 0; i < ph.size(); ++i)
                if (!mask[i]) ph[i] = 0.0;
            fft_->inverse(ph.data(), out.component(a).data());
        } else {
            std::copy(ua.begin(), ua.end(), out.component(a).begin());
        }
    }
    return out;
}

GridField PdeOperator::div_heat(const GridField& g, double tau) const
{
    if (!(g.spec() == grid_) || g.components() != grid_.d) throw DimensionMismatch("expected a d-vector field");
    std::vector<Complex> acc(fft_->complex_size(), 0.0), gh(fft_->complex_size());
    const auto& k2 = fft_->xi2();
    const auto& nyq = fft_->nyquist();
    for (int a = 0; a < grid_.d; ++a) {
        fft_->forward(g.component(a).data(), gh.data());
        const auto& xa = fft_->xi(a);
        for (std::size_t i = 0; i < gh.size(); ++i)
            if (!nyq[i]) acc[i] += Complex(0.0, xa[i]) * gh[i];
    }
    if (tau != 0.0)
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] *= std::exp(-nu_ * tau * k2[i]);
    GridField out(grid_);
    fft_->inverse(acc.data(), out.values().data());
    return out;
}

GridField PdeOperator::step(const GridField& f, double dt) const
{
    check_scalar(f, grid_);
    if (kernel_.type == KernelMode::Type::Zero) return heat(f, dt);
    const int d = grid_.d;
    auto fh = fft_->forward(f.values());
    std::vector<Complex> fm = fh;
    const auto& mask = fft_->dealias_mask();
    const auto& nyq = fft_->nyquist();
    if (dealias_)
        for (std::size_t i = 0; i < fm.size(); ++i)
            if (!mask[i]) fm[i] = 0.0;
    std::vector<double> fd(fft_->real_size()), ua(fft_->real_size());
    fft_->inverse(fm.data(), fd.data());
    std::vector<Complex> ph(fft_->complex_size()), div(fft_->complex_size(), 0.0);
    for (int a = 0; a < d; ++a) {
        fft_->inverse(velocity_hat(fm, a).data(), ua.data());
        for (std::size_t i = 0; i < ua.size(); ++i) ua[i] *= fd[i];
        fft_->forward(ua.data(), ph.data());
        const auto& xa = fft_->xi(a);
        for (std::size_t i = 0; i < ph.size(); ++i)
            if (!nyq[i] && (!dealias_ || mask[i])) div[i] += Complex(0.0, xa[i]) * ph[i];
    }
    const auto& k2 = fft_->xi2();
    for (std::size_t i = 0; i < fh.size(); ++i) fh[i] = std::exp(-nu_ * dt * k2[i]) * (fh[i] - dt * div[i]);
    GridField out(grid_);
    fft_->inverse(fh.data(), out.values().data());
    return out;
}

GridField heat_propagate(const GridField& f, double t, double nu)
{
    if (t == 0.0) return f;
    return PdeOperator(f.spec(), KernelMode::zero(), nu).heat(f, t);
}

GridField velocity_from_vorticity(const GridField& f, const KernelMode& mode)
{
    return PdeOperator(f.spec(), mode, 1.0).velocity(f);
}

GridField step_mild(const GridField& f, double dt, const PdeConfig& cfg)
{
    if (cfg.blow_up_threshold > 0.0 && !(f.max_abs() < cfg.blow_up_threshold)) {
        throw BlowUp("sup |omega| reached the blow-up threshold");
    }
    return PdeOperator(cfg.grid, cfg.kernel, cfg.nu, cfg.dealias).step(f, dt);
}

Trajectory solve(const GridField& omega0, const PdeConfig& cfg)
{
    cfg.check();
    check_scalar(omega0, cfg.grid);
    const PdeOperator op(cfg.grid, cfg.kernel, cfg.nu, cfg.dealias);
    const auto steps = static_cast<long long>(std::llround(cfg.T / cfg.dt));
    std::vector<long long> keep;
    keep.push_back(0);
    if (cfg.snapshot_times.empty()) {
        for (long long s = 1; s <= steps; ++s) keep.push_back(s);
    } else {
        for (double t : cfg.snapshot_times) keep.push_back(std::clamp(std::llround(t / cfg.dt), 0LL, steps));
        keep.push_back(steps);
        std::sort(keep.begin(), keep.end());
        keep.erase(std::unique(keep.begin(), keep.end()), keep.end());
    }
    const double threshold = cfg.blow_up_threshold > 0.0 ? cfg.blow_up_threshold : 1e6 * omega0.max_abs();

    Trajectory traj;
    GridField f = omega0;
    std::size_t next = 0;
    for (long long s = 0;; ++s) {
        if (next < keep.size() && keep[next] == s) {
            traj.times.push_back(static_cast<double>(s) * cfg.dt);
            traj.fields.push_back(f);
            ++next;
        }
        if (!(f.max_abs() < threshold)) {
            traj.blew_up = true;
            traj.failure_time = static_cast<double>(s) * cfg.dt;
            break;
        }
        if (s == steps) break;
        f = op.step(f, cfg.dt);
    }
    return traj;
}

double mild_residual(const Trajectory& traj, const PdeConfig& cfg)
{
    if (traj.fields.empty()) throw InvalidArgument("empty trajectory");
    const PdeOperator op(cfg.grid, cfg.kernel, cfg.nu, cfg.dealias);
    const double T = traj.times.back();
    GridField r = traj.fields.back() - op.heat(traj.fields.front(), T);
    if (cfg.kernel.type != KernelMode::Type::Zero) {
        const std::size_t m = traj.fields.size();
        for (std::size_t k = 0; k < m; ++k) {
            const double left = k > 0 ? traj.times[k] - traj.times[k - 1] : 0.0;
            const double right = k + 1 < m ? traj.times[k + 1] - traj.times[k] : 0.0;
            const double w = 0.5 * (left + right);
            if (w == 0.0) continue;
            const GridField term = op.div_heat(op.flux(traj.fields[k]), T - traj.times[k]);
            for (std::size_t i = 0; i < r.cells(); ++i) r[i] += w * term[i];
        }
    }
    double l1 = 0.0;
    for (double v : r.values()) l1 += std::abs(v);
    return l1 * cfg.grid.cell_volume();
}

} // namespace modlab
