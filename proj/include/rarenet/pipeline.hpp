#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "rarenet/common.hpp"
#include "rarenet/econometrics.hpp"
#include "rarenet/indicators.hpp"
#include "rarenet/ingest.hpp"
#include "rarenet/netbuild.hpp"
#include "rarenet/profiles.hpp"
#include "rarenet/scores.hpp"
#include "rarenet/synthgen.hpp"

namespace rarenet {

inline constexpr const char* kVersion = "0.1.0";

struct PipelineConfig {
    std::filesystem::path trade;
    std::filesystem::path pv;
    std::filesystem::path links;
    std::filesystem::path out_dir;

    std::optional<std::uint64_t> rng_seed;  ///< mandatory for every stage that draws random numbers
    unsigned jobs = 1;

    IngestConfig ingest;
    std::map<CountryCode, std::set<CountryCode>> regions;  ///< region code -> member countries

    std::set<HsCode> seeds = kDefaultSeeds;
    int min_votes = kDefaultMinVotes;
    int total_repetitions = kDefaultPromptRepetitions;
    double z_threshold = 2.0;
    int n_perm = 1000;
    SeriesOptions series;

    RiskConfig risk;
    bool influence_includes_diagonal = false;
    StrengthRule strength_rule = StrengthRule::mean_rca;

    EmbeddingMethod embedding = EmbeddingMethod::neighbor;
    NeighborEmbeddingParams neighbor;
    DensityParams density;

    YearWindow baseline{2008, 2011};
    YearWindow outcome{2020, 2023};
    DesignOptions design;
    StandardErrors se_type = StandardErrors::robust;
    InputAggregation aggregation = InputAggregation::simple_mean;
    int sweep_length = 4;
    int sweep_step = 2;
    int sweep_min_gap = 4;

    SynthConfig synth;
    std::filesystem::path synth_out;  ///< default: out_dir

    /// Canonical key=value listing of every setting that affects artifacts (paths, jobs and out_dir excluded).
    std::string canonical() const;
};

/// Parses "key = value" lines; '#' starts a comment. Relative paths resolve against base_dir.
/// Unknown keys and malformed values raise ConfigError.
PipelineConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
PipelineConfig load_config(const std::filesystem::path& path);

inline const std::vector<std::string> kStages{"ingest",   "validate-links", "build-net", "indicators", "scores",
                                              "profiles", "cluster",        "regress",   "sweep"};

/// Runs one stage ("pipeline" runs every stage in order; "synth" writes a synthetic data set).
/// Stage inputs are the files emitted by earlier stages in config.out_dir.
void run_stage(const std::string& name, const PipelineConfig& config);

/// Exit code for an exception: 2 config, 3 data, 4 numerical, 1 anything else.
int exit_code_for(const std::exception& error);

/// Machine-readable one-line error report.
std::string error_json(const std::string& stage, const std::exception& error);

}  // namespace rarenet
