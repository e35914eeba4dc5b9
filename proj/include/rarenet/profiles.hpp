#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "rarenet/common.hpp"
#include "rarenet/indicators.hpp"
#include "rarenet/ingest.hpp"
#include "rarenet/netbuild.hpp"
#include "rarenet/scores.hpp"

namespace rarenet {

/// Metric groups repeated for every tier, in feature order.
inline constexpr std::array<const char*, 8> kProfileMetrics{
    "exposure_all", "hhi_all", "str_all", "exposure_inputs", "hhi_inputs", "str_inputs", "pca", "influence"};
inline constexpr std::size_t kMetricsPerTier = kProfileMetrics.size();

/// Feature name "t<tier>_<metric>" for a flat feature index.
std::string profile_feature_name(std::size_t index);

/// Trade-weighted tier-stratified country-year feature vector. features.size() == 8 * (max_tier + 1);
/// feature index = tier * 8 + metric. nullopt marks a stratum with zero weight.
struct DependencyProfile {
    CountryCode country;
    Year year = 0;
    std::vector<std::optional<double>> features;
    double trade_weight = 0.0;   ///< imports + exports over tiered network products
    double export_weight = 0.0;  ///< exports over tiered network products
};

/// Weighted averages sum_p w_p x_p / sum_p w_p with w_p = imports + exports of the country.
/// PCA and influence use all products of the tier; the *_inputs metrics only the country's input products.
DependencyProfile build_profile(const CountryCode& country, Year year, const TradePanel& panel,
                                const IndicatorPanel& indicators, const ScoreTable& scores,
                                const ProductionNetwork& network, const std::set<HsCode>& input_products);

std::vector<DependencyProfile> build_profiles(const TradePanel& panel, const IndicatorPanel& indicators,
                                              const ScoreTable& scores, const ProductionNetwork& network,
                                              const std::map<CountryCode, std::set<HsCode>>& input_sets,
                                              unsigned jobs = 1);

std::string profiles_csv(const std::vector<DependencyProfile>& profiles, const std::string& manifest = {});
std::vector<DependencyProfile> read_profiles_csv(const std::filesystem::path& path);

/// Column-standardized profile matrix. Missing cells are imputed with 0 and flagged in `imputed`.
struct FeatureMatrix {
    Eigen::MatrixXd values;                      ///< rows = profiles, columns = kept features
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> imputed;
    std::vector<std::size_t> kept_features;      ///< original feature index of each column
    std::vector<std::size_t> dropped_features;   ///< constant or all-missing
};

/// Per-feature z-score (population sd) over non-missing entries.
FeatureMatrix normalize_features(const std::vector<std::vector<std::optional<double>>>& rows);
FeatureMatrix normalize_features(const std::vector<DependencyProfile>& profiles);

enum class EmbeddingMethod { pca2, neighbor };

struct NeighborEmbeddingParams {
    int n_neighbors = 15;
    int n_epochs = 200;
    int negative_samples = 5;
    double a = 1.577;  ///< output-space kernel 1 / (1 + a d^(2b)), min_dist 0.1
    double b = 0.8951;
};

inline constexpr std::size_t kMinNeighborRows = 10;

struct Embedding {
    Eigen::MatrixXd coords;  ///< n x 2
    /// pca2 only: coords = (X - mean) * basis
    Eigen::RowVectorXd mean;
    Eigen::MatrixXd basis;
};

Embedding embed_2d(const Eigen::MatrixXd& matrix, EmbeddingMethod method, std::uint64_t rng_seed,
                   const NeighborEmbeddingParams& params = {});

struct DensityParams {
    double eps = 0.0;  ///< neighborhood radius; <= 0 selects it from the data
    int min_points = 5;
    double auto_eps_scale = 5.0;  ///< auto radius = scale * median distance to the min_points-th neighbor
};

struct Clustering {
    std::vector<int> labels;  ///< -1 = outlier; clusters numbered by decreasing size
    double eps = 0.0;
    int n_clusters = 0;
    std::size_t n_outliers = 0;
};

/// Radius / min-neighbors density clustering. Identical points collapse to one cluster 0.
Clustering cluster_density(const Eigen::MatrixXd& coords, const DensityParams& params = {});

struct LabeledYear {
    CountryCode country;
    Year year = 0;
    int label = -1;
};

/// Most frequent label per country; ties go to the tied label held in the most recent year.
std::map<CountryCode, int> modal_assignment(const std::vector<LabeledYear>& labels);

std::string embedding_csv(const std::vector<DependencyProfile>& profiles, const Embedding& embedding,
                          const Clustering& clustering, const std::string& manifest = {});
std::string clusters_csv(const std::map<CountryCode, int>& modal, const std::string& manifest = {});
std::map<CountryCode, int> read_clusters_csv(const std::filesystem::path& path);

}  // namespace rarenet
