#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "rarenet/common.hpp"
#include "rarenet/ingest.hpp"

namespace rarenet {

/// Total imports of the input product into `country` against its total exports of the output product.
struct CorrelationObservation {
    CountryCode country;
    Year year = 0;
    double in_value = 0.0;
    double out_value = 0.0;
};

enum class CorrelationMode {
    pooled,       ///< all (country, year) cells in one sample
    within_year,  ///< both series demeaned within each year before pooling
};

struct SeriesOptions {
    CorrelationMode mode = CorrelationMode::pooled;
    bool log1p = false;
};

std::vector<CorrelationObservation> correlation_series(const TradePanel& panel, HsCode input, HsCode output);

/// Throws DataError("undefined correlation") for n < 3 or a zero-variance series.
double pearson_rho(std::span<const CorrelationObservation> observations);
double pearson_rho(std::span<const double> x, std::span<const double> y);

/// Dense country x year import/export grids for every product, so that repeated
/// correlations (the permutation null) avoid touching the flow list.
class SeriesCache {
public:
    explicit SeriesCache(const TradePanel& panel);

    bool has_product(HsCode product) const;
    const std::vector<HsCode>& products() const { return products_; }

    struct Rho {
        double value = 0.0;
        std::size_t n_obs = 0;
    };
    /// nullopt when the correlation is undefined. Throws DataError when a product is absent.
    std::optional<Rho> rho(HsCode input, HsCode output, const SeriesOptions& options = {}) const;

private:
    std::size_t index_of(HsCode product) const;

    std::vector<HsCode> products_;
    std::vector<Year> years_;
    std::size_t n_countries_ = 0;
    std::vector<std::vector<double>> imports_;  // [product][country * n_years + year]
    std::vector<std::vector<double>> exports_;
};

enum class LinkFailure {
    absent,          ///< product has no recorded trade
    degenerate,      ///< observed correlation undefined
    degenerate_null, ///< null distribution has zero spread or too few defined draws
    pool_too_small,
};
std::string to_string(LinkFailure failure);

class LinkTestError : public DataError {
public:
    LinkTestError(LinkFailure failure, const std::string& message) : DataError(message), failure_(failure) {}
    LinkFailure failure() const { return failure_; }

private:
    LinkFailure failure_;
};

struct LinkTestResult {
    HsCode input;
    HsCode output;
    double rho = 0.0;
    double z_score = 0.0;
    double p_value = 1.0;  ///< one-sided upper tail, (r + 1) / (n_perm + 1)
    double null_mean = 0.0;
    double null_sd = 0.0;
    std::size_t n_obs = 0;
    std::size_t n_perm = 0;
};

inline constexpr int kMinPermutations = 100;
inline constexpr std::size_t kMinNullPool = 20;

/// Null distribution: rho(input, j') for n_perm uniform draws j' from output_pool with the input held fixed.
LinkTestResult permutation_test(const SeriesCache& cache, HsCode input, HsCode candidate_output,
                                std::span<const HsCode> output_pool, int n_perm, std::uint64_t rng_seed,
                                const SeriesOptions& options = {});
LinkTestResult permutation_test(const TradePanel& panel, HsCode input, HsCode candidate_output,
                                std::span<const HsCode> output_pool, int n_perm, std::uint64_t rng_seed,
                                const SeriesOptions& options = {});

struct LinkTestConfig {
    double z_threshold = 2.0;
    int n_perm = 1000;
    std::uint64_t seed = 0;
    SeriesOptions series;
    unsigned jobs = 1;
};

struct ValidatedEdge {
    HsCode input;
    HsCode output;
    double rho = 0.0;
    double weight = 0.0;  ///< display only; not used for tiers
};

struct LinkAudit {
    CandidateLink candidate;
    std::optional<LinkTestResult> result;
    bool retained = false;
    std::string drop_reason;  ///< empty when retained
};

struct LinkValidation {
    std::vector<LinkAudit> audit;
    std::vector<ValidatedEdge> edges;
};

/// Retains links with z >= threshold and rho > 0. Per-link failures become drop records.
LinkValidation validate_links(const CandidateLinkSet& candidates, const TradePanel& panel,
                              const LinkTestConfig& config);

std::string links_validated_csv(const LinkValidation& validation);
/// Retained rows of a links_validated.csv artifact.
std::vector<ValidatedEdge> read_validated_edges(const std::filesystem::path& path);

struct DroppedEdge {
    ValidatedEdge edge;
    std::string reason;
};

/// Validated DAG with shortest-path tiers from the seed set. Nodes unreachable
/// from every seed have no tier.
struct ProductionNetwork {
    std::vector<HsCode> nodes;  ///< sorted
    std::vector<ValidatedEdge> edges;
    std::set<HsCode> seeds;
    std::map<HsCode, int> tiers;
    std::vector<DroppedEdge> dropped;

    std::optional<int> tier(HsCode product) const;
    std::vector<HsCode> predecessors(HsCode product) const;
    int max_tier() const;  ///< -1 for an empty tier map
    bool contains(HsCode product) const;
};

inline const std::set<HsCode> kDefaultSeeds{HsCode(280530), HsCode(284610), HsCode(284690)};

/// Breaks cycles by repeatedly dropping the weakest-|rho| edge on a detected cycle, then assigns tiers.
ProductionNetwork build_network(std::vector<ValidatedEdge> edges, const std::set<HsCode>& seeds = kDefaultSeeds);

/// Multi-source breadth-first shortest path lengths from the seeds.
std::map<HsCode, int> assign_tiers(std::span<const ValidatedEdge> edges, const std::set<HsCode>& seeds);

/// Kahn topological sort succeeds.
bool is_acyclic(std::span<const ValidatedEdge> edges);

/// Stable-key-order JSON; `manifest` is written first when non-empty.
std::string network_json(const ProductionNetwork& network, const std::string& manifest = {});
ProductionNetwork parse_network_json(const std::string& text);

}  // namespace rarenet
