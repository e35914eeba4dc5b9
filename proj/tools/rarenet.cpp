// Command-line driver: one subcommand per pipeline stage.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "rarenet/pipeline.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Rare-earth production network and dependency pipeline"};
    app.require_subcommand(1, 1);
    app.fallthrough();

    std::string config_path;
    std::string out_dir;
    std::optional<unsigned> jobs;
    std::optional<std::uint64_t> seed;
    app.add_option("--config", config_path, "key = value configuration file");
    app.add_option("--out", out_dir, "output directory (overrides out_dir)");
    app.add_option("--jobs", jobs, "worker thread cap")->check(CLI::PositiveNumber);
    app.add_option("--seed", seed, "rng_seed override");

    std::string stage;
    const std::vector<std::pair<std::string, std::string>> commands{
        {"ingest", "load and validate trade, PV and candidate-link inputs"},
        {"validate-links", "permutation-test candidate links"},
        {"build-net", "assemble the acyclic production network and tiers"},
        {"indicators", "exposure, import concentration, systemic risk and influence"},
        {"scores", "PCA composite, RCA and comparative strengths"},
        {"profiles", "tier-stratified country-year dependency profiles"},
        {"cluster", "2-D embedding, density clustering and modal clusters"},
        {"regress", "change-in-RCA regression"},
        {"sweep", "regression over a grid of baseline/outcome windows"},
        {"synth", "write a synthetic data set with planted truth"},
        {"pipeline", "run every stage from ingest to sweep"},
    };
    for (const auto& [name, help] : commands) {
        app.add_subcommand(name, help)->callback([&stage, name = name] { stage = name; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        rarenet::PipelineConfig config = config_path.empty() ? rarenet::PipelineConfig{}
                                                              : rarenet::load_config(config_path);
        if (!out_dir.empty()) config.out_dir = out_dir;
        if (jobs) config.jobs = *jobs;
        if (seed) config.rng_seed = *seed;
        rarenet::run_stage(stage, config);
    } catch (const std::exception& e) {
        std::cerr << rarenet::error_json(stage, e) << "\n";
        return rarenet::exit_code_for(e);
    }
    return 0;
}
