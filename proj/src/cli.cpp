#include "modlab/cli.hpp"

#include "modlab/noise.hpp"
#include "modlab/pde.hpp"
#include "modlab/stats.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <functional>
#include <memory>
#include <random>
#include <sstream>

#ifndef MODLAB_BUILD_ID
#define MODLAB_BUILD_ID "unknown"
#endif

namespace modlab::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {
const std::vector<std::pair<Experiment, std::string>> kExperiments{
    {Experiment::Simulate, "simulate"}, {Experiment::Pde, "pde"},           {Experiment::Converge, "converge"},
    {Experiment::NoiseCheck, "noise-check"}, {Experiment::CovDecay, "cov-decay"}, {Experiment::Zconv, "zconv"},
    {Experiment::Zeta, "zeta"}};
} // namespace

std::string experiment_name(Experiment e)
{
    for (const auto& [k, name] : kExperiments)
        if (k == e) return name;
    return "?";
}

std::optional<Experiment> parse_experiment(const std::string& name)
{
    for (const auto& [k, n] : kExperiments)
        if (n == name) return k;
    return std::nullopt;
}

//---------------------------------------------------------------------------//
// Config schema
//---------------------------------------------------------------------------//
namespace {
template <class T> bool read_value(const json& j, T& out)
{
    if constexpr (std::is_same_v<T, bool>) {
        if (!j.is_boolean()) return false;
    } else if constexpr (std::is_integral_v<T>) {
        if (!j.is_number_integer()) return false;
        if (std::is_unsigned_v<T> && j.is_number_integer() && !j.is_number_unsigned()) return false;
    } else if constexpr (std::is_floating_point_v<T>) {
        if (!j.is_number()) return false;
    } else if constexpr (std::is_same_v<T, std::string>) {
        if (!j.is_string()) return false;
    } else {
        if (!j.is_array()) return false;
        T tmp;
        for (const auto& e : j) {
            typename T::value_type v;
            if (!read_value(e, v)) return false;
            tmp.push_back(v);
        }
        out = std::move(tmp);
        return true;
    }
    out = j.get<T>();
    return true;
}

std::string type_word(const bool&) { return "a boolean"; }
std::string type_word(const int&) { return "an integer"; }
std::string type_word(const long long&) { return "an integer"; }
std::string type_word(const double&) { return "a number"; }
std::string type_word(const std::string&) { return "a string"; }
template <class T> std::string type_word(const std::vector<T>&) { return "an array"; }

struct Entry {
    std::string section; ///< empty for top-level keys
    std::string key;
    std::function<std::optional<std::string>(RunConfig&, const json&)> read;
    std::function<json(const RunConfig&)> write;
};

template <class T> Entry field(std::string section, std::string key, T RunConfig::*mem)
{
    Entry e;
    e.section = std::move(section);
    e.key = std::move(key);
    e.read = [mem](RunConfig& c, const json& j) -> std::optional<std::string> {
        if (!read_value(j, c.*mem)) return "expected " + type_word(c.*mem);
        return std::nullopt;
    };
    e.write = [mem](const RunConfig& c) { return json(c.*mem); };
    return e;
}

const std::vector<Entry>& schema()
{
    static const std::vector<Entry> entries = [] {
        std::vector<Entry> v;
        Entry exp;
        exp.key = "experiment";
        exp.read = [](RunConfig& c, const json& j) -> std::optional<std::string> {
            if (!j.is_string()) return "expected a string";
            const auto e = parse_experiment(j.get<std::string>());
            if (!e) return "unknown experiment '" + j.get<std::string>() + "'";
            c.experiment = *e;
            return std::nullopt;
        };
        exp.write = [](const RunConfig& c) { return json(experiment_name(c.experiment)); };
        v.push_back(exp);
        Entry seed;
        seed.key = "seed";
        seed.read = [](RunConfig& c, const json& j) -> std::optional<std::string> {
            if (j.is_null()) {
                c.seed.reset();
                return std::nullopt;
            }
            if (!j.is_number_unsigned()) return "expected a nonnegative integer";
            c.seed = j.get<std::uint64_t>();
            return std::nullopt;
        };
        seed.write = [](const RunConfig& c) { return c.seed ? json(*c.seed) : json(nullptr); };
        v.push_back(seed);
        v.push_back(field("", "random_seed", &RunConfig::random_seed));
        v.push_back(field("", "output_dir", &RunConfig::output_dir));
        v.push_back(field("", "threads", &RunConfig::threads));
        v.push_back(field("", "strict", &RunConfig::strict));

        v.push_back(field("kernel", "type", &RunConfig::kernel));
        v.push_back(field("kernel", "d", &RunConfig::d));
        v.push_back(field("kernel", "s", &RunConfig::riesz_s));

        v.push_back(field("mollifier", "beta", &RunConfig::beta));
        v.push_back(field("mollifier", "m", &RunConfig::m));
        v.push_back(field("mollifier", "p", &RunConfig::p));
        v.push_back(field("mollifier", "rho_radius", &RunConfig::rho_radius));
        v.push_back(field("mollifier", "schedule", &RunConfig::scheduled_epsilon));
        v.push_back(field("mollifier", "theta", &RunConfig::theta));
        v.push_back(field("mollifier", "epsilon", &RunConfig::epsilon));
        v.push_back(field("mollifier", "zeta", &RunConfig::zeta));

        v.push_back(field("noise", "enabled", &RunConfig::noise));
        v.push_back(field("noise", "alpha", &RunConfig::alpha));
        v.push_back(field("noise", "modes", &RunConfig::mode_count));
        v.push_back(field("noise", "coupled", &RunConfig::coupled));
        v.push_back(field("noise", "n_scale", &RunConfig::n_scale));

        v.push_back(field("initial", "kind", &RunConfig::initial));
        v.push_back(field("initial", "sigma", &RunConfig::sigma));
        v.push_back(field("initial", "radius", &RunConfig::bump_radius));

        v.push_back(field("grid", "n", &RunConfig::grid_n));
        v.push_back(field("grid", "half_width", &RunConfig::half_width));

        v.push_back(field("particles", "n", &RunConfig::n_particles));
        v.push_back(field("particles", "n_list", &RunConfig::n_list));
        v.push_back(field("particles", "dt", &RunConfig::dt));
        v.push_back(field("particles", "T", &RunConfig::T));
        v.push_back(field("particles", "snapshot_times", &RunConfig::snapshot_times));
        v.push_back(field("particles", "engine", &RunConfig::engine));
        v.push_back(field("particles", "replicas", &RunConfig::replicas));

        v.push_back(field("pde", "kernel", &RunConfig::pde_kernel));
        v.push_back(field("pde", "dt", &RunConfig::pde_dt));
        v.push_back(field("pde", "T", &RunConfig::pde_T));

        v.push_back(field("cov_decay", "n_scales", &RunConfig::n_scales));
        v.push_back(field("cov_decay", "ell", &RunConfig::ell));
        v.push_back(field("cov_decay", "time", &RunConfig::cov_time));
        v.push_back(field("cov_decay", "dt", &RunConfig::cov_dt));
        v.push_back(field("cov_decay", "modes", &RunConfig::cov_modes));

        v.push_back(field("noise_check", "replicas", &RunConfig::check_replicas));
        v.push_back(field("noise_check", "points", &RunConfig::check_points));
        v.push_back(field("noise_check", "radius", &RunConfig::check_radius));

        v.push_back(field("zeta", "replicas", &RunConfig::zeta_replicas));
        return v;
    }();
    return entries;
}

const Entry* find_entry(const std::string& section, const std::string& key)
{
    for (const auto& e : schema())
        if (e.section == section && e.key == key) return &e;
    return nullptr;
}

bool is_section(const std::string& name)
{
    for (const auto& e : schema())
        if (e.section == name) return true;
    return false;
}
} // namespace

json to_json(const RunConfig& cfg)
{
    json j = json::object();
    j["schema_version"] = 1;
    for (const auto& e : schema()) {
        if (e.section.empty()) j[e.key] = e.write(cfg);
        else j[e.section][e.key] = e.write(cfg);
    }
    return j;
}

ParseResult parse_config(const std::string& text)
{
    ParseResult out;
    json j;
    try {
        j = json::parse(text, nullptr, true, true);
    } catch (const json::parse_error& e) {
        out.violations.push_back(std::string("config is not valid JSON: ") + e.what());
        return out;
    }
    if (!j.is_object()) {
        out.violations.push_back("config must be a JSON object");
        return out;
    }
    out.config.seed.reset();
    for (const auto& [key, value] : j.items()) {
        if (key == "schema_version") {
            if (!(value.is_number_integer() && value.get<int>() == 1))
                out.violations.push_back("unsupported schema_version " + value.dump());
            continue;
        }
        if (is_section(key)) {
            if (!value.is_object()) {
                out.violations.push_back("'" + key + "' must be an object");
                continue;
            }
            for (const auto& [k2, v2] : value.items()) {
                const Entry* e = find_entry(key, k2);
                if (!e) {
                    out.violations.push_back("unknown key '" + key + "." + k2 + "'");
                    continue;
                }
                if (auto err = e->read(out.config, v2)) out.violations.push_back(key + "." + k2 + ": " + *err);
            }
            continue;
        }
        const Entry* e = find_entry("", key);
        if (!e) {
            out.violations.push_back("unknown key '" + key + "'");
            continue;
        }
        if (auto err = e->read(out.config, value)) out.violations.push_back(key + ": " + *err);
    }
    return out;
}

ParseResult load_config(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

//---------------------------------------------------------------------------//
// Validation
//---------------------------------------------------------------------------//
namespace {
std::optional<KernelKind> kernel_kind(const RunConfig& c)
{
    if (c.kernel == "biot_savart") return BiotSavart{};
    if (c.kernel == "repulsive_poisson") return repulsive_poisson(c.d);
    if (c.kernel == "riesz") return RieszGradient{c.d, c.riesz_s};
    return std::nullopt;
}

GridSpec grid_of(const RunConfig& c) { return GridSpec{c.d, c.grid_n, c.half_width}; }

InitialDatum initial_of(const RunConfig& c)
{
    if (c.initial == "bump") return InitialDatum::bump(c.d, c.bump_radius);
    InitialDatum w = InitialDatum::gaussian(c.d, 1.0);
    for (int a = 0; a < c.d && a < static_cast<int>(c.sigma.size()); ++a) w.sigma[a] = c.sigma[a];
    return w;
}

ModerateScaling scaling_of(const RunConfig& c, long long n)
{
    ModerateScaling s;
    s.beta = c.beta;
    s.n_particles = n;
    s.m = c.m;
    s.p = c.p;
    s.strict = c.strict;
    return s;
}

double noise_scale(const RunConfig& c, long long n) { return c.coupled ? std::log(static_cast<double>(n)) : c.n_scale; }

std::string fraction(double denominator)
{
    std::ostringstream os;
    if (std::abs(denominator - std::round(denominator)) < 1e-9) os << "1/" << std::llround(denominator);
    else os << "1/" << denominator;
    return os.str();
}

bool uses_particles(Experiment e) { return e == Experiment::Simulate || e == Experiment::Converge || e == Experiment::Zconv; }

void check_output_dir(const std::string& dir, std::vector<std::string>& v)
{
    if (dir.empty()) {
        v.push_back("output_dir must not be empty");
        return;
    }
    // validation leaves no trace: whatever the probe creates is removed again
    std::error_code ec;
    fs::path created;
    for (fs::path p = fs::absolute(dir, ec); !p.empty() && !fs::exists(p, ec); p = p.parent_path()) {
        created = p;
        if (p == p.parent_path()) break;
    }
    fs::create_directories(dir, ec);
    if (ec) {
        v.push_back("output_dir '" + dir + "' cannot be created: " + ec.message());
        return;
    }
    const fs::path probe = fs::path(dir) / ".modlab_write_probe";
    bool writable = false;
    {
        std::ofstream f(probe);
        writable = static_cast<bool>(f);
    }
    fs::remove(probe, ec);
    if (!created.empty()) fs::remove_all(created, ec);
    if (!writable) v.push_back("output_dir '" + dir + "' is not writable");
}
} // namespace

Validation validate(const RunConfig& c)
{
    Validation out;
    auto& v = out.violations;

    if (!c.seed && !c.random_seed) v.push_back("seed missing: set \"seed\" or opt in with random_seed / --random-seed");
    if (c.threads < 1) v.push_back("threads must be at least 1");
    check_output_dir(c.output_dir, v);

    // kernel and exponents
    const bool known_kernel =
        c.kernel == "biot_savart" || c.kernel == "repulsive_poisson" || c.kernel == "riesz" || c.kernel == "none";
    if (!known_kernel) v.push_back("unknown kernel type '" + c.kernel + "'");
    const bool dim_ok = c.d == 2 || c.d == 3;
    if (!dim_ok) v.push_back("d must be 2 or 3");
    if (c.kernel == "biot_savart" && c.d != 2) v.push_back("the Biot-Savart kernel is two-dimensional");
    if (c.kernel == "riesz" && dim_ok && !(c.riesz_s >= 0.0 && c.riesz_s < c.d - 2))
        v.push_back("Riesz exponent s must lie in [0, d - 2)");
    if (!(c.p > 2.0)) v.push_back("p must exceed 2");
    if (!(c.m > 2.0)) v.push_back("m must exceed 2");
    if (c.kernel == "repulsive_poisson" && !(c.p > c.d)) v.push_back("p must exceed d");
    if (c.kernel == "riesz" && !(c.p > c.riesz_s + 2.0)) v.push_back("p must exceed s + 2");

    // moderate scaling
    if (!(c.beta > 0.0 && c.beta < 1.0)) v.push_back("beta must lie in (0, 1)");
    double beta_max = 0.0;
    if (dim_ok && c.m > 0.0) {
        beta_max = 1.0 / (4.0 * c.m * (c.d + 2));
        if (c.strict && c.beta > beta_max) v.push_back("β exceeds " + fraction(4.0 * c.m * (c.d + 2)));
    }
    if (!(c.rho_radius > 0.0)) v.push_back("rho_radius must be positive");
    if (c.scheduled_epsilon) {
        if (!(c.theta > 0.0)) v.push_back("theta must be positive");
    } else if (!(c.epsilon > 0.0)) {
        v.push_back("a fixed epsilon must be positive");
    }
    for (double z : c.zeta)
        if (!(z > 0.0 && z < 1.0)) v.push_back("zeta values must lie in (0, 1)");
    if (!c.zeta.empty() && c.zeta.size() != c.n_list.size()) v.push_back("zeta needs one entry per n_list entry");

    // noise
    if (!(c.alpha > 2.0)) v.push_back("alpha must exceed 2");
    if (c.mode_count < 1) v.push_back("noise modes must be at least 1");
    if (!std::isfinite(c.n_scale)) v.push_back("n_scale must be finite");

    // initial datum
    if (c.initial == "gaussian") {
        if (dim_ok && static_cast<int>(c.sigma.size()) != c.d) v.push_back("initial.sigma needs d entries");
        for (double s : c.sigma)
            if (!(s > 0.0)) v.push_back("initial.sigma entries must be positive");
    } else if (c.initial == "bump") {
        if (!(c.bump_radius > 0.0)) v.push_back("initial.radius must be positive");
    } else {
        v.push_back("unknown initial kind '" + c.initial + "'");
    }

    // grid
    if (c.grid_n < 8 || (c.grid_n & (c.grid_n - 1)) != 0) v.push_back("grid.n must be a power of two >= 8");
    if (!(c.half_width > 0.0)) v.push_back("grid.half_width must be positive");

    // particles
    if (c.n_particles < 2) v.push_back("particles.n must be at least 2");
    if (c.n_list.empty()) v.push_back("particles.n_list must not be empty");
    if (!std::is_sorted(c.n_list.begin(), c.n_list.end()) ||
        std::adjacent_find(c.n_list.begin(), c.n_list.end()) != c.n_list.end())
        v.push_back("particles.n_list must be strictly increasing");
    for (long long n : c.n_list)
        if (n < 2) v.push_back("particles.n_list entries must be at least 2");
    if (!(c.dt > 0.0)) v.push_back("particles.dt must be positive");
    if (!(c.T >= 0.0)) v.push_back("particles.T must be nonnegative");
    for (double t : c.snapshot_times)
        if (!(t >= 0.0 && t <= c.T)) v.push_back("snapshot times must lie in [0, T]");
    if (c.engine != "grid" && c.engine != "direct") v.push_back("particles.engine must be 'grid' or 'direct'");
    if (c.replicas < 1) v.push_back("particles.replicas must be at least 1");
    if ((c.experiment == Experiment::Converge || c.experiment == Experiment::Zconv) && !c.noise && c.T > 0.0)
        v.push_back("a sweep without noise has no diffusion; set particles.T = 0 or enable the noise");
    if (c.experiment == Experiment::Zconv && c.kernel == "none")
        v.push_back("the stochastic convolution needs an interaction kernel");

    // pde
    if (c.pde_kernel != "exact" && c.pde_kernel != "regularized" && c.pde_kernel != "zero")
        v.push_back("pde.kernel must be 'exact', 'regularized' or 'zero'");
    if (!(c.pde_dt > 0.0)) v.push_back("pde.dt must be positive");
    if (!(c.pde_T > 0.0)) v.push_back("pde.T must be positive");
    if (c.experiment == Experiment::Pde && c.pde_kernel == "regularized" && !(c.epsilon > 0.0))
        v.push_back("the regularized pde kernel needs mollifier.epsilon > 0");

    // cov-decay, noise-check, zeta
    if (c.n_scales.empty()) v.push_back("cov_decay.n_scales must not be empty");
    if (!(c.ell >= 2.0)) v.push_back("cov_decay.ell must be at least 2");
    if (!(c.cov_time >= 0.0)) v.push_back("cov_decay.time must be nonnegative");
    if (!(c.cov_dt > 0.0)) v.push_back("cov_decay.dt must be positive");
    if (c.cov_modes < 1) v.push_back("cov_decay.modes must be at least 1");
    if (c.experiment == Experiment::CovDecay && c.replicas < 2) v.push_back("cov-decay needs at least 2 replicas");
    if (c.check_replicas < 2) v.push_back("noise_check.replicas must be at least 2");
    if (c.check_points < 1) v.push_back("noise_check.points must be at least 1");
    if (!(c.check_radius > 0.0)) v.push_back("noise_check.radius must be positive");
    if (c.zeta_replicas < 32) v.push_back("zeta.replicas must be at least 32");

    out.resolved = to_json(c);
    json derived;
    derived["build_id"] = build_id();
    if (dim_ok && c.alpha > 2.0) derived["nu"] = nu_theoretical(c.d, c.alpha);
    derived["beta_max"] = beta_max;
    derived["moment_order"] = c.m * (c.d + 1);
    if (uses_particles(c.experiment) && out.ok()) {
        json rows = json::array();
        const std::vector<long long> ns =
            c.experiment == Experiment::Simulate ? std::vector<long long>{c.n_particles} : c.n_list;
        for (std::size_t k = 0; k < ns.size(); ++k) {
            json r;
            r["n_particles"] = ns[k];
            r["n_scale"] = noise_scale(c, ns[k]);
            r["vn_radius"] = std::pow(static_cast<double>(ns[k]), -c.beta);
            std::optional<double> zeta;
            const auto it = std::find(c.n_list.begin(), c.n_list.end(), ns[k]);
            if (!c.zeta.empty() && it != c.n_list.end()) zeta = c.zeta[static_cast<std::size_t>(it - c.n_list.begin())];
            if (!c.scheduled_epsilon) r["epsilon"] = c.epsilon;
            else if (zeta) r["epsilon"] = epsilon_schedule(ns[k], *zeta, c.p, c.d, c.theta);
            else r["epsilon"] = "from estimated zeta at run time";
            rows.push_back(r);
        }
        derived["schedule"] = rows;
    }
    out.resolved["derived"] = derived;
    return out;
}

//---------------------------------------------------------------------------//
// Run
//---------------------------------------------------------------------------//
std::string build_id() { return MODLAB_BUILD_ID; }

json RunRecord::to_json() const
{
    json j;
    j["schema_version"] = schema_version;
    j["status"] = status;
    j["exit_code"] = exit_code;
    j["message"] = message;
    j["build_id"] = build_id;
    j["config"] = config;
    j["summary"] = summary;
    j["files"] = json::array();
    for (const auto& f : files) j["files"].push_back({{"name", f.name}, {"path", f.path}});
    j["wall_seconds"] = wall_seconds;
    return j;
}

namespace {
// Result files go to <name>.partial until commit().
class Outputs {
  public:
    explicit Outputs(fs::path dir) : dir_(std::move(dir)) {}

    std::ostream& open(const std::string& name)
    {
        std::error_code ec;
        fs::remove(dir_ / name, ec);
        auto f = std::make_unique<std::ofstream>(dir_ / (name + ".partial"), std::ios::binary);
        if (!*f) throw Error("cannot write " + (dir_ / name).string());
        f->precision(17);
        names_.push_back(name);
        streams_.push_back(std::move(f));
        return *streams_.back();
    }

    void close()
    {
        for (auto& s : streams_)
            if (s->is_open()) s->close();
    }

    void commit()
    {
        close();
        for (const auto& n : names_) fs::rename(dir_ / (n + ".partial"), dir_ / n);
        committed_ = true;
    }

    std::vector<OutputFile> files() const
    {
        std::vector<OutputFile> out;
        for (const auto& n : names_) out.push_back({n, (dir_ / (committed_ ? n : n + ".partial")).string()});
        return out;
    }

  private:
    fs::path dir_;
    std::vector<std::string> names_;
    std::vector<std::unique_ptr<std::ofstream>> streams_;
    bool committed_ = false;
};

struct Outcome {
    json summary;
    bool usable = true;
    std::string message;
};

void write_header(std::ostream& os, const std::string& columns) { os << "# schema_version: 1\n" << columns << '\n'; }

void coordinate_columns(std::ostream& os, int d, const char* prefix)
{
    for (int a = 0; a < d; ++a) os << ',' << prefix << a + 1;
}

double zeta_for(const RunConfig& c, long long n, int threads)
{
    const auto it = std::find(c.n_list.begin(), c.n_list.end(), n);
    if (!c.zeta.empty() && it != c.n_list.end()) return c.zeta[static_cast<std::size_t>(it - c.n_list.begin())];
    const std::vector<long long> one{n};
    const auto rep = zeta_estimate(initial_of(c), one, scaling_of(c, n), c.zeta_replicas, grid_of(c),
                                   derive_seed(*c.seed, {static_cast<std::uint64_t>(Stream::Initial), 0}), threads);
    return rep.rows.front().zeta;
}

Outcome run_simulate(const RunConfig& c, Outputs& out)
{
    const long long n = c.n_particles;
    const GridSpec grid = grid_of(c);
    const auto kind = kernel_kind(c);
    Outcome o;
    DriftEngine drift = DriftEngine::none();
    if (kind) {
        double zeta = 0.0;
        double eps = c.epsilon;
        if (c.scheduled_epsilon) {
            zeta = zeta_for(c, n, c.threads);
            eps = epsilon_schedule(n, zeta, c.p, c.d, c.theta);
            o.summary["zeta"] = zeta;
        }
        o.summary["epsilon"] = eps;
        const ModerateScaling sc = scaling_of(c, n);
        sc.check(c.d);
        const ScaledMollifier vn(Mollifier(c.d), sc);
        const auto keps = build_regularized(*kind, eps, c.rho_radius);
        if (c.engine == "direct")
            drift = DriftEngine::direct(
                std::make_shared<InteractionTable>(keps, vn, 2.0 * std::sqrt(static_cast<double>(c.d)) * c.half_width));
        else drift = DriftEngine::grid(std::make_shared<GridDrift>(keps, vn, grid));
    }
    std::optional<NoiseField> noise;
    if (c.noise) {
        noise = build_noise(c.d, c.alpha, noise_scale(c, n), c.mode_count,
                            derive_seed(*c.seed, {static_cast<std::uint64_t>(Stream::NoiseModes),
                                                  static_cast<std::uint64_t>(n), 0}));
        o.summary["n_scale"] = noise->n_scale();
    }
    SimulationConfig sim;
    sim.dt = c.dt;
    sim.T = c.T;
    sim.snapshot_times = c.snapshot_times;
    sim.threads = c.threads;
    const auto snaps = simulate(init_ensemble(n, initial_of(c), *c.seed, 0), sim, drift, noise ? &*noise : nullptr);

    std::ostream& pos = out.open("particles.csv");
    pos << "# schema_version: 1\ntime,particle_id";
    coordinate_columns(pos, c.d, "x");
    pos << '\n';
    std::ostream& mom = out.open("moments.csv");
    write_header(mom, "time,order,moment");
    const double order = c.m * (c.d + 1);
    for (const auto& s : snaps) {
        for (std::size_t i = 0; i < s.positions.size(); ++i) {
            pos << s.time << ',' << i;
            for (int a = 0; a < c.d; ++a) pos << ',' << s.positions[i][a];
            pos << '\n';
        }
        mom << s.time << ',' << order << ',' << empirical_moment(s.positions, order) << '\n';
    }
    o.summary["n_particles"] = n;
    o.summary["snapshots"] = snaps.size();
    return o;
}

double lp(const GridField& f, double p)
{
    double s = 0.0;
    for (double v : f.values()) s += std::pow(std::abs(v), p);
    return std::pow(s * f.spec().cell_volume(), 1.0 / p);
}

Outcome run_pde(const RunConfig& c, Outputs& out)
{
    const GridSpec grid = grid_of(c);
    const auto kind = kernel_kind(c);
    PdeConfig pc;
    pc.nu = nu_theoretical(c.d, c.alpha);
    pc.grid = grid;
    pc.dt = c.pde_dt;
    pc.T = c.pde_T;
    pc.snapshot_times = c.snapshot_times;
    if (!kind || c.pde_kernel == "zero") pc.kernel = KernelMode::zero();
    else if (c.pde_kernel == "regularized") pc.kernel = KernelMode::regularized(*kind, c.epsilon, c.rho_radius);
    else pc.kernel = KernelMode::exact(*kind);
    const Trajectory tr = solve(initial_of(c).on_grid(grid), pc);

    std::ostream& norms = out.open("pde_norms.csv");
    write_header(norms, "time,mass,l1,lp,sup,entropy");
    for (std::size_t k = 0; k < tr.fields.size(); ++k) {
        const GridField& f = tr.fields[k];
        norms << tr.times[k] << ',' << f.integral() << ',' << lp(f, 1.0) << ',' << lp(f, c.p) << ',' << f.max_abs()
              << ',' << entropy_plugin(f) << '\n';
    }
    std::ostream& fin = out.open("pde_final.csv");
    fin << "# schema_version: 1\n# time: " << tr.times.back() << '\n';
    fin << "cell";
    coordinate_columns(fin, c.d, "x");
    fin << ",omega\n";
    const GridField& last = tr.fields.back();
    for (std::size_t i = 0; i < last.cells(); ++i) {
        const Vec x = grid.center(i);
        fin << i;
        for (int a = 0; a < c.d; ++a) fin << ',' << x[a];
        fin << ',' << last[i] << '\n';
    }
    Outcome o;
    o.summary["nu"] = pc.nu;
    o.summary["blew_up"] = tr.blew_up;
    if (tr.blew_up) o.summary["failure_time"] = tr.failure_time;
    o.summary["snapshots"] = tr.fields.size();
    o.summary["mass_drift"] = tr.fields.back().integral() - tr.fields.front().integral();
    return o;
}

Outcome run_sweep(const RunConfig& c, Outputs& out, bool with_z)
{
    SweepConfig s;
    s.kernel = kernel_kind(c);
    s.omega0 = initial_of(c);
    s.grid = grid_of(c);
    s.T = c.T;
    s.dt = c.dt;
    s.snapshot_times = c.snapshot_times;
    s.scaling = scaling_of(c, 1);
    s.n_list = c.n_list;
    s.replicas = c.replicas;
    s.noise = c.noise;
    s.alpha = c.alpha;
    s.mode_count = c.mode_count;
    s.coupled = c.coupled;
    s.n_scale = c.n_scale;
    s.scheduled_epsilon = c.scheduled_epsilon;
    s.theta = c.theta;
    s.epsilon = c.epsilon;
    s.rho_radius = c.rho_radius;
    s.zeta = c.zeta;
    s.zeta_replicas = c.zeta_replicas;
    s.engine = c.engine == "direct" ? DriftEngine::Mode::DirectN2 : DriftEngine::Mode::GridFFT;
    s.stochastic_convolution = with_z;
    s.seed = *c.seed;
    s.threads = c.threads;
    const ConvergenceReport rep = convergence_sweep(s);

    write_convergence_csv(out.open("convergence.csv"), rep);
    write_convergence_summary_csv(out.open("convergence_summary.csv"), rep);

    Outcome o;
    o.usable = false;
    json rows = json::array();
    for (const auto& r : rep.rows) {
        o.usable = o.usable || r.error.empty();
        json jr{{"n_particles", r.n_particles}, {"epsilon", r.epsilon},   {"zeta", r.zeta},
                {"median_eps", r.median_eps},   {"median_exact", r.median_exact}, {"wall_seconds", r.wall_seconds}};
        if (with_z) jr["median_z"] = r.median_z;
        if (!r.error.empty()) jr["error"] = r.error;
        rows.push_back(jr);
    }
    o.summary["rows"] = rows;
    o.summary["slope_eps"] = rep.slope_eps;
    o.summary["slope_exact"] = rep.slope_exact;
    if (with_z) o.summary["iota_fit"] = rep.iota_fit;
    if (!o.usable) o.message = "every row of the sweep failed";
    return o;
}

std::vector<Vec> check_points(const RunConfig& c)
{
    // origin plus a golden-angle spiral out to the requested radius
    std::vector<Vec> z{Vec{0.0, 0.0, 0.0}};
    const double golden = kPi * (3.0 - std::sqrt(5.0));
    for (int k = 1; k <= c.check_points; ++k) {
        const double r = c.check_radius * k / c.check_points;
        const double th = golden * k;
        Vec p{r * std::cos(th), r * std::sin(th), 0.0};
        if (c.d == 3) {
            const double zc = 1.0 - 2.0 * (k - 0.5) / c.check_points;
            const double rho = std::sqrt(std::max(0.0, 1.0 - zc * zc));
            p = Vec{r * rho * std::cos(th), r * rho * std::sin(th), r * zc};
        }
        z.push_back(p);
    }
    return z;
}

Outcome run_noise_check(const RunConfig& c, Outputs& out)
{
    const auto z = check_points(c);
    const CovarianceCheck chk =
        covariance_monte_carlo(c.d, c.alpha, c.n_scale, c.mode_count, c.check_replicas, z, *c.seed, c.threads);
    std::ostream& os = out.open("covariance_check.csv");
    os << "# schema_version: 1\npoint";
    coordinate_columns(os, c.d, "z");
    os << ",i,j,oracle,mean,standard_error\n";
    int within = 0, total = 0;
    for (std::size_t k = 0; k < z.size(); ++k)
        for (int i = 0; i < c.d; ++i)
            for (int j = 0; j < c.d; ++j) {
                os << k;
                for (int a = 0; a < c.d; ++a) os << ',' << z[k][a];
                os << ',' << i + 1 << ',' << j + 1 << ',' << chk.oracle[k][i][j] << ',' << chk.mean[k][i][j] << ','
                   << chk.standard_error[k][i][j] << '\n';
                ++total;
                within += std::abs(chk.mean[k][i][j] - chk.oracle[k][i][j]) <= 3.0 * chk.standard_error[k][i][j];
            }
    Outcome o;
    const double nu2 = 2.0 * nu_theoretical(c.d, c.alpha);
    double worst = 0.0;
    for (int i = 0; i < c.d; ++i) worst = std::max(worst, std::abs(chk.mean[0][i][i] / nu2 - 1.0));
    o.summary["two_nu"] = nu2;
    o.summary["q0_diagonal_relative_error"] = worst;
    o.summary["entries_within_3se"] = within;
    o.summary["entries"] = total;
    return o;
}

Outcome run_cov_decay(const RunConfig& c, Outputs& out)
{
    CovDecayConfig cc;
    cc.d = c.d;
    cc.alpha = c.alpha;
    cc.omega0 = initial_of(c);
    cc.time = c.cov_time;
    cc.dt = c.cov_dt;
    cc.mode_count = c.cov_modes;
    cc.noise = c.noise;
    cc.ell = c.ell;
    cc.replicas = c.replicas;
    cc.seed = *c.seed;
    cc.threads = c.threads;
    const auto rows = force_covariance_decay(cc, c.n_scales);
    std::ostream& os = out.open("cov_decay.csv");
    write_header(os, "n_scale,ell,mean,standard_error,median");
    std::ostream& ss = out.open("cov_decay_samples.csv");
    write_header(ss, "n_scale,replica,value");
    bool decreasing = true;
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto& r = rows[k];
        os << r.n_scale << ',' << c.ell << ',' << r.mean << ',' << r.standard_error << ',' << r.median << '\n';
        for (std::size_t i = 0; i < r.samples.size(); ++i) ss << r.n_scale << ',' << i << ',' << r.samples[i] << '\n';
        if (k > 0 && !(r.mean < rows[k - 1].mean)) decreasing = false;
    }
    Outcome o;
    o.summary["strictly_decreasing"] = decreasing;
    return o;
}

Outcome run_zeta(const RunConfig& c, Outputs& out)
{
    const auto rep = zeta_estimate(initial_of(c), c.n_list, scaling_of(c, 1), c.zeta_replicas, grid_of(c),
                                   derive_seed(*c.seed, {static_cast<std::uint64_t>(Stream::Initial), 0}), c.threads);
    std::ostream& os = out.open("zeta.csv");
    os << "# schema_version: 1\n# lambda_fit: " << rep.lambda_fit << '\n' << "n_particles,zeta,standard_error\n";
    std::ostream& ds = out.open("zeta_distances.csv");
    write_header(ds, "n_particles,replica,distance");
    for (const auto& r : rep.rows) {
        os << r.n_particles << ',' << r.zeta << ',' << r.standard_error << '\n';
        for (std::size_t i = 0; i < r.distances.size(); ++i) ds << r.n_particles << ',' << i << ',' << r.distances[i] << '\n';
    }
    Outcome o;
    o.summary["lambda_fit"] = rep.lambda_fit;
    return o;
}

void write_atomic(const fs::path& path, const std::string& text)
{
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary);
        if (!f) throw Error("cannot write " + tmp.string());
        f << text;
    }
    fs::rename(tmp, path);
}
} // namespace

RunRecord run(const RunConfig& input)
{
    const auto start = std::chrono::steady_clock::now();
    RunConfig c = input;
    if (!c.seed) {
        // explicit opt-in (random_seed); the drawn seed is echoed in the record
        std::random_device rd;
        c.seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
    }
    RunRecord rec;
    rec.build_id = build_id();
    rec.config = to_json(c);
    const Validation val = validate(c);
    if (!val.ok()) {
        rec.status = "failed";
        rec.exit_code = 2;
        for (const auto& v : val.violations) rec.message += (rec.message.empty() ? "" : "; ") + v;
        return rec;
    }
    rec.config = val.resolved;

    const fs::path dir(c.output_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        rec.status = "failed";
        rec.exit_code = 3;
        rec.message = "cannot create output_dir: " + ec.message();
        return rec;
    }
    Outputs out(dir);
    try {
        Outcome o;
        switch (c.experiment) {
        case Experiment::Simulate: o = run_simulate(c, out); break;
        case Experiment::Pde: o = run_pde(c, out); break;
        case Experiment::Converge: o = run_sweep(c, out, false); break;
        case Experiment::Zconv: o = run_sweep(c, out, true); break;
        case Experiment::NoiseCheck: o = run_noise_check(c, out); break;
        case Experiment::CovDecay: o = run_cov_decay(c, out); break;
        case Experiment::Zeta: o = run_zeta(c, out); break;
        }
        rec.summary = o.summary;
        if (o.usable) {
            out.commit();
            rec.status = "ok";
            rec.exit_code = 0;
        } else {
            out.close();
            rec.status = "failed";
            rec.exit_code = 3;
            rec.message = o.message;
        }
    } catch (const std::exception& e) {
        out.close();
        rec.status = "failed";
        rec.exit_code = 3;
        rec.message = e.what();
    }
    rec.files = out.files();
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_atomic(dir / "run_record.json", rec.to_json().dump(2) + "\n");
    return rec;
}

//---------------------------------------------------------------------------//
// Command line
//---------------------------------------------------------------------------//
int command_line(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"modlab: moderately interacting particles with environmental noise"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    int threads = 0;
    bool strict = false, exploratory = false, random_seed = false;

    const std::vector<std::pair<std::string, std::string>> commands{
        {"simulate", "one particle ensemble with snapshots"},
        {"pde", "deterministic limit equation"},
        {"converge", "convergence sweep over N"},
        {"noise-check", "Monte Carlo noise covariance against quadrature"},
        {"cov-decay", "force covariance decay in the noise scale"},
        {"zconv", "convergence sweep with the stochastic convolution"},
        {"zeta", "initial-data distance zeta_N over N"},
        {"validate", "check a config and print the resolved form"}};
    std::vector<CLI::App*> subs;
    for (const auto& [name, help] : commands) {
        CLI::App* sc = app.add_subcommand(name, help);
        sc->add_option("--config", config_path, "JSON config (comments allowed)");
        sc->add_option("--seed", seed, "master seed");
        sc->add_option("--out", out_dir, "output directory");
        sc->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
        auto* s1 = sc->add_flag("--strict", strict, "enforce the admissible beta range");
        auto* s2 = sc->add_flag("--exploratory", exploratory, "allow beta beyond the admissible range");
        s1->excludes(s2);
        sc->add_flag("--random-seed", random_seed, "draw the master seed from the system entropy source");
        subs.push_back(sc);
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    std::string command;
    for (auto* sc : subs)
        if (sc->parsed()) command = sc->get_name();

    ParseResult parsed;
    if (!config_path.empty()) {
        try {
            parsed = load_config(config_path);
        } catch (const ConfigError& e) {
            err << e.what() << '\n';
            return 2;
        }
    }
    RunConfig& cfg = parsed.config;
    if (seed) cfg.seed = seed;
    if (random_seed) {
        cfg.random_seed = true;
        if (!seed) cfg.seed.reset();
    }
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    if (threads > 0) cfg.threads = threads;
    if (strict) cfg.strict = true;
    if (exploratory) cfg.strict = false;
    if (command != "validate") cfg.experiment = *parse_experiment(command);

    const Validation val = validate(cfg);
    std::vector<std::string> violations = parsed.violations;
    violations.insert(violations.end(), val.violations.begin(), val.violations.end());
    if (command == "validate") {
        for (const auto& v : violations) err << "violation: " << v << '\n';
        if (violations.empty()) out << val.resolved.dump(2) << '\n';
        return violations.empty() ? 0 : 2;
    }
    if (!violations.empty()) {
        for (const auto& v : violations) err << "violation: " << v << '\n';
        return 2;
    }
    const RunRecord rec = run(cfg);
    out << experiment_name(cfg.experiment) << ": " << rec.status;
    if (!rec.message.empty()) out << " (" << rec.message << ')';
    out << '\n';
    for (const auto& f : rec.files) out << "  " << f.path << '\n';
    return rec.exit_code;
}

} // namespace modlab::cli
