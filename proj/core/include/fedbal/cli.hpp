#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fedbal/augment.hpp"
#include "fedbal/dataio.hpp"
#include "fedbal/fedsim.hpp"

namespace fedbal {

inline constexpr const char* kToolVersion = "0.1.0";

/// One key = value line of a config file, with its provenance for error
/// messages.
struct ConfigEntry {
    std::string section;
    std::string key;
    std::string value;
    std::size_t line = 0;
};

/// Strict line-oriented parse: [section] headers, key = value pairs, #/;
/// comments. Duplicate keys within a section, keys outside any section,
/// and malformed lines raise ConfigError with the line number.
std::vector<ConfigEntry> parse_flat_config(const std::string& text);

enum class RunMode { centralized, federated };

std::string mode_name(RunMode mode);
RunMode mode_from_name(const std::string& name);

/// Synthetic two-cluster source: Gaussian clouds in [0,1]^dims dealt
/// round-robin across the stations.
struct BlobSpec {
    std::size_t negative_rows = 1800;
    std::size_t positive_rows = 200;
    std::size_t dims = 2;
    double negative_mean = 0.3;
    double positive_mean = 0.7;
    double stddev = 0.12;
    std::size_t stations = 9;
};

/// Either a stations CSV with its column schema or a synthetic blob spec;
/// exactly one must be configured.
struct DataSource {
    bool synthetic = false;
    std::filesystem::path csv;
    Schema schema;
    BlobSpec blobs;
};

/// Everything one experiment needs. Every field has a default except the
/// data source; the method token "none" runs the imbalanced baseline.
struct ExperimentConfig {
    DataSource data;
    std::optional<BalanceMethod> method;
    RunMode mode = RunMode::federated;
    std::uint64_t seed = 0;
    std::size_t centralized_epochs = 30;
    SplitSpec split;
    FederationConfig federation;
    BalanceConfig balance;
};

/// Parses and fully validates config text; unknown sections or keys are
/// errors. Manifest bookkeeping sections are accepted and skipped, so a
/// run manifest is itself a valid config.
ExperimentConfig parse_experiment_config(const std::string& text);

struct LoadedConfig {
    ExperimentConfig config;
    /// Present when the file was a run manifest recording its out-dir.
    std::optional<std::filesystem::path> recorded_out_dir;
};

LoadedConfig load_config_file(const std::filesystem::path& path);

/// Canonical resolved snapshot: fixed section order, every field explicit,
/// doubles at full precision. parse_experiment_config(config_text(c))
/// reproduces c exactly.
std::string config_text(const ExperimentConfig& config);

/// Display label for a summary row; the baseline is "Imbalanced".
std::string table_label(const std::optional<BalanceMethod>& method);
/// Config token: "none" or the method's snake-case name.
std::string method_token(const std::optional<BalanceMethod>& method);
std::optional<BalanceMethod> method_from_token(const std::string& token);

/// Replay record written at the out-dir root before training starts and
/// finalized afterwards. The embedded config snapshot re-runs the
/// experiment bit-exactly.
struct RunManifest {
    std::string version = kToolVersion;
    std::string started_at;
    std::string finished_at;
    std::filesystem::path out_dir;
    ExperimentConfig config;
    std::vector<std::pair<std::string, std::uint64_t>> derived_seeds;
    std::vector<std::string> outputs;
};

std::string manifest_text(const RunManifest& manifest);

/// Command-line overrides applied on top of the config file.
struct CliOptions {
    std::optional<std::uint64_t> seed;
    std::optional<std::filesystem::path> out_dir;
    std::optional<std::size_t> parallel_clients;
    bool quiet = false;
};

/// Result of one experiment before any files are written.
struct ExperimentResult {
    MetricsReport summary;
    FederationTrace trace;            // federated runs
    std::vector<double> loss_curve;   // centralized runs
    std::vector<std::pair<std::string, std::uint64_t>> derived_seeds;
};

/// Ingest, augment, train, evaluate — no file output. Stages prefix their
/// errors ("data: ", "augment: ", "train: ").
ExperimentResult run_experiment(const ExperimentConfig& config, bool quiet, std::ostream& log);

/// run_experiment plus the manifest and CSV outputs under out_dir.
ExperimentResult execute_run(const ExperimentConfig& config, const std::filesystem::path& out_dir,
                             bool quiet, std::ostream& log);

/// "Method,Accuracy,Loss,AUC,G-mean" rows, one per (label, report) pair.
std::string summary_csv(
    const std::vector<std::pair<std::string, MetricsReport>>& rows);
/// "Method,Station,Accuracy,Loss,AUC,G-mean" rows from per-station reports.
std::string stations_csv(
    const std::vector<std::pair<std::string, std::vector<LocalReport>>>& rows);

/// 0 success, 2 config, 3 data, 4 divergence, 1 anything else.
int error_exit_code(const std::exception& error);

int cmd_run(const std::filesystem::path& config_path, const CliOptions& options,
            std::ostream& out, std::ostream& err);
int cmd_compare(const std::vector<std::filesystem::path>& config_paths,
                const std::vector<std::string>& method_tokens, const CliOptions& options,
                std::ostream& out, std::ostream& err);
int cmd_stats(const std::filesystem::path& csv_path, const std::filesystem::path& schema_path,
              const CliOptions& options, std::ostream& out, std::ostream& err);

} // namespace fedbal
