#include "modlab/fields.hpp"

#include "modlab/parallel.hpp"
#include "modlab/stats.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

namespace modlab {

std::size_t GridSpec::cells() const
{
    std::size_t c = 1;
    for (int i = 0; i < d; ++i) c *= static_cast<std::size_t>(n);
    return c;
}

Vec GridSpec::center(std::size_t index) const
{
    Vec x{0.0, 0.0, 0.0};
    for (int a = d - 1; a >= 0; --a) {
        x[a] = coord(static_cast<int>(index % n));
        index /= n;
    }
    return x;
}

void GridSpec::check() const
{
    if (d < 2 || d > 3) throw InvalidArgument("grid dimension must be 2 or 3");
    if (n < 8 || !std::has_single_bit(static_cast<unsigned>(n))) {
        throw InvalidArgument("grid resolution must be a power of two >= 8");
    }
    if (!(half_width > 0.0)) throw InvalidArgument("grid half-width must be positive");
}

GridField::GridField(const GridSpec& spec, int components) : spec_(spec), components_(components)
{
    spec_.check();
    if (components != 1 && components != spec.d) throw InvalidArgument("field components must be 1 or d");
    values_.assign(cells() * components, 0.0);
}

double GridField::integral(int c) const
{
    double s = 0.0;
    for (double v : component(c)) s += v;
    return s * spec_.cell_volume();
}

double GridField::max_abs() const
{
    double m = 0.0;
    for (double v : values_) m = std::max(m, std::abs(v));
    return m;
}

GridField operator-(const GridField& a, const GridField& b)
{
    if (!(a.spec() == b.spec()) || a.components() != b.components()) {
        throw DimensionMismatch("field difference needs identical grids");
    }
    GridField out(a.spec(), a.components());
    for (std::size_t i = 0; i < a.values().size(); ++i) out[i] = a[i] - b[i];
    return out;
}

//---------------------------------------------------------------------------//
// Initial data
//---------------------------------------------------------------------------//
InitialDatum InitialDatum::gaussian(int d, double sigma)
{
    InitialDatum w;
    w.kind = Kind::Gaussian;
    w.d = d;
    w.sigma = {sigma, sigma, sigma};
    return w;
}

InitialDatum InitialDatum::bump(int d, double radius)
{
    InitialDatum w;
    w.kind = Kind::Bump;
    w.d = d;
    w.radius = radius;
    return w;
}

double InitialDatum::density(const Vec& x) const
{
    if (kind == Kind::Bump) return Mollifier(d, radius)(x);
    double e = 0.0, c = 1.0;
    for (int i = 0; i < d; ++i) {
        e += x[i] * x[i] / (sigma[i] * sigma[i]);
        c *= std::sqrt(2.0 * kPi) * sigma[i];
    }
    return std::exp(-0.5 * e) / c;
}

Vec InitialDatum::sample(Rng& rng) const
{
    Vec x{0.0, 0.0, 0.0};
    if (kind == Kind::Gaussian) {
        std::normal_distribution<double> n01;
        for (int i = 0; i < d; ++i) x[i] = sigma[i] * n01(rng);
        return x;
    }
    // rejection from the ball against the peak value exp(-1)
    while (true) {
        for (int i = 0; i < d; ++i) x[i] = radius * (2.0 * uniform01(rng) - 1.0);
        const double q = norm2(x) / (radius * radius);
        if (q >= 1.0) continue;
        if (uniform01(rng) < std::exp(1.0 - 1.0 / (1.0 - q))) return x;
    }
}

GridField InitialDatum::on_grid(const GridSpec& grid) const
{
    if (d != grid.d) throw DimensionMismatch("initial datum and grid dimensions differ");
    GridField f(grid);
    if (kind == Kind::Bump) {
        const Mollifier b(d, radius);
        for (std::size_t i = 0; i < f.cells(); ++i) f[i] = b(grid.center(i));
        return f;
    }
    for (std::size_t i = 0; i < f.cells(); ++i) f[i] = density(grid.center(i));
    return f;
}

//---------------------------------------------------------------------------//
// Mollified empirical measure
//---------------------------------------------------------------------------//
namespace {
// (1/N) sum_i values_i V^N(x - X_i), one component per entry of values_i
// (a single unit component when values is empty).
GridField deposit(std::span<const Vec> positions, std::span<const Vec> values, const ScaledMollifier& vn,
                  const GridSpec& grid, double& kept)
{
    grid.check();
    const int d = grid.d;
    if (vn.base().dim() != d) throw DimensionMismatch("mollifier and grid dimensions differ");
    const double h = grid.h();
    const double r = vn.support_radius();
    if (r / h < 4.0) {
        throw ResolutionError("V^N support radius spans " + std::to_string(r / h) + " cells; need >= 4");
    }
    const int comps = values.empty() ? 1 : d;
    GridField f(grid, comps);
    if (positions.empty()) return f;
    const std::size_t cells = grid.cells();
    const int n = grid.n;
    const double inv_n = 1.0 / static_cast<double>(positions.size());
    const double r2 = r * r;
    const int half = static_cast<int>(std::ceil(r / h)) + 1;
    const int width = 2 * half + 1;
    std::vector<double> w(static_cast<std::size_t>(std::pow(width, d)));
    std::vector<double> dx2(width * 3);
    int lo[3] = {0, 0, 0};

    for (std::size_t p = 0; p < positions.size(); ++p) {
        const Vec& x = positions[p];
        const Vec val = values.empty() ? Vec{1.0, 0.0, 0.0} : values[p];
        for (int a = 0; a < d; ++a) {
            if (!std::isfinite(x[a])) throw NonFinite("non-finite particle position");
            // nearest cell index to x, then a symmetric window around it
            const int c = static_cast<int>(std::floor((x[a] + grid.half_width) / h));
            lo[a] = c - half;
            for (int k = 0; k < width; ++k) {
                const double t = grid.coord(lo[a] + k) - x[a];
                dx2[a * width + k] = t * t;
            }
        }
        double total = 0.0;
        if (d == 2) {
            for (int i = 0; i < width; ++i)
                for (int j = 0; j < width; ++j) {
                    const double q = dx2[i] + dx2[width + j];
                    const double v = q < r2 ? vn.from_r2(q) : 0.0;
                    w[i * width + j] = v;
                    total += v;
                }
        } else {
            for (int i = 0; i < width; ++i)
                for (int j = 0; j < width; ++j)
                    for (int k = 0; k < width; ++k) {
                        const double q = dx2[i] + dx2[width + j] + dx2[2 * width + k];
                        const double v = q < r2 ? vn.from_r2(q) : 0.0;
                        w[(i * width + j) * width + k] = v;
                        total += v;
                    }
        }
        const double scale = inv_n / (total * grid.cell_volume());
        auto inside = [n](int i) { return i >= 0 && i < n; };
        if (d == 2) {
            for (int i = 0; i < width; ++i) {
                const int gi = lo[0] + i;
                if (!inside(gi)) continue;
                for (int j = 0; j < width; ++j) {
                    const int gj = lo[1] + j;
                    if (!inside(gj)) continue;
                    const std::size_t idx = static_cast<std::size_t>(gi) * n + gj;
                    kept += scale * w[i * width + j];
                    for (int c = 0; c < comps; ++c) f[c * cells + idx] += scale * val[c] * w[i * width + j];
                }
            }
        } else {
            for (int i = 0; i < width; ++i) {
                const int gi = lo[0] + i;
                if (!inside(gi)) continue;
                for (int j = 0; j < width; ++j) {
                    const int gj = lo[1] + j;
                    if (!inside(gj)) continue;
                    for (int k = 0; k < width; ++k) {
                        const int gk = lo[2] + k;
                        if (!inside(gk)) continue;
                        const std::size_t idx = (static_cast<std::size_t>(gi) * n + gj) * n + gk;
                        kept += scale * w[(i * width + j) * width + k];
                        for (int c = 0; c < comps; ++c)
                            f[c * cells + idx] += scale * val[c] * w[(i * width + j) * width + k];
                    }
                }
            }
        }
    }
    return f;
}

void check_leak(double kept)
{
    if (kept < 1.0 - 1e-4) {
        throw MassLeak("mollified measure keeps only " + std::to_string(kept) + " of its mass inside the box");
    }
}
} // namespace

GridField mollify(std::span<const Vec> positions, const ScaledMollifier& vn, const GridSpec& grid)
{
    double kept = 0.0;
    GridField f = deposit(positions, {}, vn, grid, kept);
    if (!positions.empty()) check_leak(kept * grid.cell_volume());
    return f;
}

GridField mollify_weighted(std::span<const Vec> positions, std::span<const Vec> values, const ScaledMollifier& vn,
                           const GridSpec& grid)
{
    if (values.size() != positions.size()) throw DimensionMismatch("one value per particle is required");
    double kept = 0.0;
    GridField f = deposit(positions, values, vn, grid, kept);
    if (!positions.empty()) check_leak(kept * grid.cell_volume());
    return f;
}

double norm_l1lp(const GridField& f, double p)
{
    if (!(p > 1.0)) throw InvalidArgument("norm_l1lp needs p > 1");
    double l1 = 0.0, lp = 0.0;
    for (std::size_t i = 0; i < f.values().size(); ++i) {
        const double a = std::abs(f[i]);
        l1 += a;
        lp += std::pow(a, p);
    }
    const double vol = f.spec().cell_volume();
    return std::max(l1 * vol, std::pow(lp * vol, 1.0 / p));
}

double entropy_plugin(const GridField& f)
{
    double s = 0.0;
    for (double v : f.component(0))
        if (v > 1e-300) s += v * std::log(v);
    return s * f.spec().cell_volume();
}

ZetaReport zeta_estimate(const InitialDatum& omega0, std::span<const long long> n_list,
                         const ModerateScaling& scaling, int replicas, const GridSpec& grid, std::uint64_t seed,
                         int threads)
{
    if (replicas < 32) throw InvalidArgument("zeta_estimate needs at least 32 replicas");
    if (omega0.d != grid.d) throw DimensionMismatch("initial datum and grid dimensions differ");
    const GridField target = omega0.on_grid(grid);
    const Mollifier v(grid.d);
    ZetaReport rep;
    for (long long n : n_list) {
        ModerateScaling sc = scaling;
        sc.n_particles = n;
        sc.check(grid.d);
        const ScaledMollifier vn(v, sc);
        ZetaRow row{n, 0.0, 0.0, std::vector<double>(static_cast<std::size_t>(replicas))};
        parallel_for(static_cast<std::size_t>(replicas), threads, [&](std::size_t b, std::size_t e) {
            for (std::size_t r = b; r < e; ++r) {
                Rng rng = make_rng(seed, {static_cast<std::uint64_t>(Stream::Initial), static_cast<std::uint64_t>(n),
                                          static_cast<std::uint64_t>(r)});
                std::vector<Vec> x(static_cast<std::size_t>(n));
                for (auto& xi : x) xi = omega0.sample(rng);
                row.distances[r] = norm_l1lp(mollify(x, vn, grid) - target, sc.p);
            }
        });
        std::vector<double> powers;
        for (double dist : row.distances) powers.push_back(std::pow(dist, sc.m));
        const double mean_pow = stats::mean(powers);
        row.zeta = std::pow(mean_pow, 1.0 / sc.m);
        row.standard_error = row.zeta / (sc.m * mean_pow) * stats::standard_error(powers);
        rep.rows.push_back(std::move(row));
    }
    if (rep.rows.size() >= 2) {
        std::vector<double> ns, zs;
        for (const auto& r : rep.rows) {
            ns.push_back(static_cast<double>(r.n_particles));
            zs.push_back(r.zeta);
        }
        rep.lambda_fit = -stats::fit_loglog(ns, zs).slope;
    }
    return rep;
}

//---------------------------------------------------------------------------//
// IO
//---------------------------------------------------------------------------//
void write_csv(std::ostream& os, const GridField& f)
{
    const GridSpec& g = f.spec();
    os << "# schema_version: 1\n";
    for (int a = 0; a < g.d; ++a) os << 'x' << a + 1 << ',';
    if (f.components() == 1) {
        os << "value\n";
    } else {
        for (int c = 0; c < f.components(); ++c) os << "value_" << c + 1 << (c + 1 < f.components() ? ',' : '\n');
    }
    os.precision(17);
    for (std::size_t i = 0; i < f.cells(); ++i) {
        const Vec x = g.center(i);
        for (int a = 0; a < g.d; ++a) os << x[a] << ',';
        for (int c = 0; c < f.components(); ++c) os << f.component(c)[i] << (c + 1 < f.components() ? ',' : '\n');
    }
}

namespace {
constexpr char kMagic[8] = {'M', 'O', 'D', 'L', 'A', 'B', 'G', 'F'};
constexpr char kDtype[8] = {'f', 'l', 'o', 'a', 't', '6', '4', '\0'};
static_assert(std::endian::native == std::endian::little, "binary field layout assumes a little-endian host");

template <class T> void put(std::ostream& os, const T& v) { os.write(reinterpret_cast<const char*>(&v), sizeof(T)); }
template <class T> T get(std::istream& is)
{
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
}
} // namespace

void write_binary(std::ostream& os, const GridField& f)
{
    os.write(kMagic, 8);
    put<std::int32_t>(os, f.spec().d);
    put<std::int32_t>(os, f.spec().n);
    put<std::int32_t>(os, f.components());
    put<double>(os, f.spec().half_width);
    os.write(kDtype, 8);
    os.write(reinterpret_cast<const char*>(f.values().data()),
             static_cast<std::streamsize>(f.values().size() * sizeof(double)));
}

GridField read_binary(std::istream& is)
{
    char magic[8], dtype[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0) throw InvalidArgument("not a field file (bad magic)");
    GridSpec g;
    g.d = get<std::int32_t>(is);
    g.n = get<std::int32_t>(is);
    const int comps = get<std::int32_t>(is);
    g.half_width = get<double>(is);
    is.read(dtype, 8);
    if (!is || std::memcmp(dtype, kDtype, 8) != 0) throw InvalidArgument("unsupported field dtype");
    GridField f(g, comps);
    is.read(reinterpret_cast<char*>(f.values().data()), static_cast<std::streamsize>(f.values().size() * sizeof(double)));
    if (!is) throw InvalidArgument("truncated field file");
    return f;
}

} // namespace modlab
