#pragma once

#include <Eigen/Dense>

#include <array>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rarenet/common.hpp"
#include "rarenet/indicators.hpp"
#include "rarenet/ingest.hpp"
#include "rarenet/netbuild.hpp"
#include "rarenet/scores.hpp"

namespace rarenet {

/// RCA source for one (country, product, year); nullopt when undefined.
using RcaLookup = std::function<std::optional<double>(const CountryCode&, HsCode, Year)>;

RcaLookup rca_from_panel(const TradePanel& panel);
RcaLookup rca_from_scores(const ScoreTable& scores);

/// Mean over the window years with a defined RCA; nullopt if none.
std::optional<double> window_mean_rca(const RcaLookup& rca, const CountryCode& country, HsCode product,
                                      const YearWindow& window);

/// Throws ConfigError unless baseline ends before outcome starts.
void check_windows(const YearWindow& baseline, const YearWindow& outcome);

/// Outcome-window mean RCA minus baseline-window mean RCA.
std::optional<double> delta_rca(const TradePanel& panel, const CountryCode& country, HsCode product,
                                const YearWindow& baseline, const YearWindow& outcome);
std::optional<double> delta_rca(const RcaLookup& rca, const CountryCode& country, HsCode product,
                                const YearWindow& baseline, const YearWindow& outcome);

inline constexpr std::size_t kCovariateCount = 8;
inline constexpr std::array<const char*, kCovariateCount> kCovariateNames{
    "rca", "exposure_all", "hhi_all", "str_all", "exposure_inputs", "hhi_inputs", "str_inputs", "rca_inputs"};

struct RegressionObservation {
    CountryCode country;
    HsCode product;
    double delta_rca = 0.0;
    std::array<double, kCovariateCount> covariates{};  ///< baseline-window means, order of kCovariateNames
    int cluster = 0;
    int tier = 0;
};

enum class InputAggregation { simple_mean, trade_weighted };

struct ObservationReport {
    std::size_t candidates = 0;
    std::size_t dropped_outcome = 0;     ///< delta RCA undefined
    std::size_t dropped_covariates = 0;  ///< some baseline covariate undefined (complete-case)
    std::size_t dropped_cluster = 0;     ///< country has no cluster label
};

/// Covariates of one (country, product) observation: the product's own baseline means, and the
/// means over the product's direct network inputs for the same country. nullopt if any is undefined.
std::optional<std::array<double, kCovariateCount>> baseline_covariates(
    const RcaLookup& rca, const IndicatorPanel& indicators, const ProductionNetwork& network,
    const CountryCode& country, HsCode product, const YearWindow& baseline,
    InputAggregation aggregation = InputAggregation::simple_mean, const TradePanel* panel = nullptr);

/// One observation per (clustered country, tiered network node) with complete data.
std::vector<RegressionObservation> build_observations(const RcaLookup& rca, const IndicatorPanel& indicators,
                                                      const ProductionNetwork& network,
                                                      const std::map<CountryCode, int>& clusters,
                                                      const YearWindow& baseline, const YearWindow& outcome,
                                                      InputAggregation aggregation = InputAggregation::simple_mean,
                                                      const TradePanel* panel = nullptr,
                                                      ObservationReport* report = nullptr);

struct DesignOptions {
    int reference_cluster = 1;
    int reference_tier = 0;
    bool cluster_effects = true;
    bool tier_effects = true;
};

struct Design {
    Eigen::MatrixXd x;
    Eigen::VectorXd y;
    std::vector<std::string> terms;
    std::optional<int> reference_cluster;  ///< nullopt when no cluster dummies could be formed
    std::optional<int> reference_tier;
};

/// Index of the first column that lies in the span of the preceding ones.
std::optional<std::size_t> first_dependent_column(const Eigen::MatrixXd& x);

/// Intercept, 8 covariates, then cluster and tier dummies. A reference category missing
/// from the data falls back to the smallest label present.
Design build_design(const std::vector<RegressionObservation>& observations, const DesignOptions& options = {});

enum class StandardErrors { robust, classical };

struct RegressionResult {
    std::vector<std::string> terms;
    Eigen::VectorXd coef;
    Eigen::VectorXd se;
    Eigen::VectorXd t;
    Eigen::VectorXd p;
    std::size_t n_obs = 0;
    std::size_t df_resid = 0;
    double r2 = 0.0;
    double rss = 0.0;
    StandardErrors se_type = StandardErrors::robust;
    std::optional<int> reference_cluster;
    std::optional<int> reference_tier;

    std::optional<std::size_t> index_of(const std::string& term) const;
};

/// Least squares via Householder QR. Robust errors are HC1 sandwich estimates; p-values are
/// two-sided from Student t with n - k degrees of freedom.
RegressionResult ols_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::vector<std::string> terms,
                         StandardErrors se_type = StandardErrors::robust);
RegressionResult ols_fit(const Design& design, StandardErrors se_type = StandardErrors::robust);

struct RegressionInputs {
    RcaLookup rca;
    const IndicatorPanel* indicators = nullptr;
    const ProductionNetwork* network = nullptr;
    const std::map<CountryCode, int>* clusters = nullptr;
    const TradePanel* panel = nullptr;  ///< only needed for trade-weighted input aggregation
    InputAggregation aggregation = InputAggregation::simple_mean;
    DesignOptions design;
    StandardErrors se_type = StandardErrors::robust;
};

struct RegressionRun {
    RegressionResult result;
    ObservationReport report;
};

RegressionRun run_regression(const RegressionInputs& inputs, const YearWindow& baseline, const YearWindow& outcome);

struct SweepCell {
    YearWindow baseline;
    YearWindow outcome;
    std::optional<RegressionResult> result;
    std::string error;
};

struct SignSummary {
    std::string term;
    std::size_t fits = 0;
    std::size_t positive = 0;
    std::size_t negative = 0;
    std::size_t significant_positive = 0;  ///< p < 0.05
    std::size_t significant_negative = 0;
    double stability = 0.0;  ///< share of fits agreeing with the majority sign
};

struct SweepResult {
    std::vector<SweepCell> cells;
    std::vector<SignSummary> summary;
};

/// One regression per (baseline, outcome) pair; failures become error cells.
SweepResult window_sweep(const RegressionInputs& inputs,
                         const std::vector<std::pair<YearWindow, YearWindow>>& window_pairs, unsigned jobs = 1);

/// Every pair of `length`-year windows starting `step` years apart within [first, last]
/// whose gap (outcome.first - baseline.last - 1) is at least min_gap.
std::vector<std::pair<YearWindow, YearWindow>> default_sweep_grid(Year first, Year last, int length = 4,
                                                                  int step = 2, int min_gap = 4);

std::string regression_csv(const RegressionResult& result, const std::string& manifest = {});
std::string sweep_csv(const SweepResult& sweep, const std::string& manifest = {});
std::string sweep_summary_csv(const SweepResult& sweep, const std::string& manifest = {});

}  // namespace rarenet
