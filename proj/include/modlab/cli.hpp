#pragma once

#include "modlab/diagnostics.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace modlab::cli {

enum class Experiment { Simulate, Pde, Converge, NoiseCheck, CovDecay, Zconv, Zeta };

std::string experiment_name(Experiment e);
std::optional<Experiment> parse_experiment(const std::string& name);

/// Every knob of every experiment. The on-disk form is JSON with comments,
/// grouped as in configs/example.jsonc; see to_json for the key names.
struct RunConfig {
    Experiment experiment = Experiment::Converge;
    /// Master seed. Absent only when random_seed allows drawing one.
    std::optional<std::uint64_t> seed = 1;
    bool random_seed = false;
    std::string output_dir = "out";
    int threads = 1;
    bool strict = true;

    std::string kernel = "biot_savart"; ///< biot_savart, repulsive_poisson, riesz or none
    int d = 2;
    double riesz_s = 0.0;

    double beta = 1.0 / 64.0;
    double m = 4.0;
    double p = 4.0;
    double rho_radius = 1.0;
    bool scheduled_epsilon = true;
    double theta = 1.0;
    double epsilon = 0.5;
    std::vector<double> zeta; ///< one per n_list entry; estimated when empty

    bool noise = true;
    double alpha = 4.0;
    int mode_count = 512;
    bool coupled = true;
    double n_scale = 0.0;

    std::string initial = "gaussian"; ///< gaussian or bump
    std::vector<double> sigma{1.0, 1.0};
    double bump_radius = 1.5;

    int grid_n = 128;
    double half_width = 8.0;

    long long n_particles = 1024;
    std::vector<long long> n_list{64, 256, 1024, 4096};
    double dt = 2e-3;
    double T = 0.5;
    std::vector<double> snapshot_times;
    std::string engine = "grid"; ///< grid or direct
    int replicas = 16;

    std::string pde_kernel = "exact"; ///< exact, regularized or zero
    double pde_dt = 1e-3;
    double pde_T = 0.5;

    std::vector<double> n_scales{0.0, 0.5, 1.0, 1.5};
    double ell = 2.0;
    double cov_time = 0.5;
    double cov_dt = 1e-2;
    int cov_modes = 256;

    int check_replicas = 10000;
    int check_points = 20;
    double check_radius = 2.0;

    int zeta_replicas = 64;
};

nlohmann::json to_json(const RunConfig& cfg);

struct ParseResult {
    RunConfig config;
    std::vector<std::string> violations; ///< malformed values and unknown keys
};

/// Missing keys keep their defaults, except the seed, which stays absent.
ParseResult parse_config(const std::string& text);
/// Throws ConfigError when the file cannot be read.
ParseResult load_config(const std::filesystem::path& path);

struct Validation {
    std::vector<std::string> violations;
    /// Config echo plus derived quantities (nu, beta bound, per-N schedule).
    nlohmann::json resolved;

    bool ok() const { return violations.empty(); }
};

/// Collects every violation instead of stopping at the first.
Validation validate(const RunConfig& cfg);

struct OutputFile {
    std::string name;
    std::string path;
};

struct RunRecord {
    int schema_version = 1;
    std::string status; ///< ok or failed
    int exit_code = 0;  ///< 0 success, 2 validation failure, 3 runtime failure
    std::string message;
    std::string build_id;
    nlohmann::json config;
    nlohmann::json summary;
    std::vector<OutputFile> files;
    double wall_seconds = 0.0;

    nlohmann::json to_json() const;
};

std::string build_id();

/// Runs the experiment and writes its CSVs plus run_record.json into
/// cfg.output_dir. Result files are written with a .partial suffix and
/// renamed once the run succeeds; a failed run keeps the .partial files.
/// The record itself is written atomically.
RunRecord run(const RunConfig& cfg);

/// Command-line front end; returns the process exit code.
int command_line(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace modlab::cli
