#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "rarenet/common.hpp"
#include "rarenet/econometrics.hpp"
#include "rarenet/ingest.hpp"

namespace rarenet {

/// Slopes in kCovariateNames order; defaults follow the sign pattern of the published regression.
inline constexpr std::array<double, kCovariateCount> kDefaultPlantedSlopes{-0.13, 1.1, -0.66, -0.36,
                                                                           0.1,   0.26, -0.37, 0.07};

struct SynthConfig {
    int n_countries = 12;  ///< planting adds a "ROW" country that trades only in the outcome window and absorbs RCA normalization
    int n_products = 20;  ///< networkable products, the three seed codes included; one filler product is added
    int n_years = 5;
    Year first_year = 2019;
    int n_true_links = 10;
    int n_decoy_links = 10;
    double link_strength = 0.95;  ///< correlation of log input imports and log output exports on a true link
    double value_sigma = 0.6;     ///< log-scale spread of country-product totals
    double size_sigma = 0.3;      ///< log-scale spread of a country size factor shared by all products
    double partner_sigma = 1.5;   ///< log-scale spread of bilateral partner affinities
    bool plant_outcome = true;
    std::optional<YearWindow> baseline;  ///< default: first two years
    std::optional<YearWindow> outcome;   ///< default: last two years
    std::array<double, kCovariateCount> planted_slopes = kDefaultPlantedSlopes;
    std::optional<double> planted_intercept;  ///< default: centers the planted change at zero
    double noise_scale = 0.05;
    std::uint64_t rng_seed = 42;

    void validate() const;
    YearWindow baseline_window() const;
    YearWindow outcome_window() const;
};

struct SynthTruth {
    std::set<HsCode> seeds;
    std::vector<std::pair<HsCode, HsCode>> true_edges;
    std::vector<std::pair<HsCode, HsCode>> decoy_edges;
    std::map<HsCode, int> tiers;
    HsCode filler;
    bool planted = false;
    YearWindow baseline;
    YearWindow outcome;
    std::array<double, kCovariateCount> slopes{};
    double intercept = 0.0;
    std::size_t planted_observations = 0;
};

struct SynthData {
    TradePanel panel;
    StabilityPanel stability;
    CandidateLinkSet links;
    SynthTruth truth;
};

SynthData generate_data(const SynthConfig& config);

struct SynthFiles {
    std::filesystem::path trade;
    std::filesystem::path pv;
    std::filesystem::path links;
    std::filesystem::path truth;
};

/// Writes trade.csv, pv.csv, links.csv and truth.json into out_dir.
SynthFiles generate(const SynthConfig& config, const std::filesystem::path& out_dir);

std::string truth_json(const SynthTruth& truth, const SynthConfig& config);

}  // namespace rarenet
