#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedbal/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Federated training over imbalanced station data"};
    app.set_version_flag("--version", fedbal::kToolVersion);
    app.require_subcommand(1);
    app.fallthrough();

    std::uint64_t seed = 0;
    std::string out_dir;
    std::size_t parallel_clients = 0;
    const auto* seed_opt = app.add_option("--seed", seed, "Override the experiment seed");
    const auto* out_opt = app.add_option("--out-dir", out_dir, "Directory for output files");
    const auto* par_opt = app.add_option("--parallel-clients", parallel_clients,
                                         "Worker threads for client training");
    app.add_flag("--quiet", "Suppress progress output");

    std::string run_config;
    CLI::App* run = app.add_subcommand("run", "Run one experiment from a config file");
    run->add_option("config", run_config, "Experiment config file")->required();

    std::vector<std::string> compare_configs;
    std::string methods_arg;
    CLI::App* compare =
        app.add_subcommand("compare", "Run several balance methods and tabulate them");
    compare->add_option("configs", compare_configs, "Config files, one per run")->required();
    compare->add_option("--methods", methods_arg,
                        "Comma-separated method tokens applied to one base config");

    std::string stats_csv;
    std::string stats_schema;
    CLI::App* stats = app.add_subcommand("stats", "Per-station class counts for a CSV");
    stats->add_option("csv", stats_csv, "Stations CSV file")->required();
    stats->add_option("--schema", stats_schema, "Column schema file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    fedbal::CliOptions options;
    if (seed_opt->count())
        options.seed = seed;
    if (out_opt->count())
        options.out_dir = out_dir;
    if (par_opt->count())
        options.parallel_clients = parallel_clients;
    options.quiet = app.count("--quiet") > 0;

    if (run->parsed())
        return fedbal::cmd_run(run_config, options, std::cout, std::cerr);
    if (compare->parsed()) {
        std::vector<std::filesystem::path> paths(compare_configs.begin(),
                                                 compare_configs.end());
        std::vector<std::string> tokens;
        if (compare->count("--methods")) {
            std::string item;
            std::stringstream in(methods_arg);
            while (std::getline(in, item, ','))
                tokens.push_back(item);
        }
        return fedbal::cmd_compare(paths, tokens, options, std::cout, std::cerr);
    }
    return fedbal::cmd_stats(stats_csv, stats_schema, options, std::cout, std::cerr);
}
