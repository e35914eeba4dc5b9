#pragma once

#include <Eigen/Dense>

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "rarenet/common.hpp"
#include "rarenet/indicators.hpp"
#include "rarenet/ingest.hpp"
#include "rarenet/netbuild.hpp"

namespace rarenet {

/// Balassa index on export values: (X_c^p / X_c) / (X_world^p / X_world).
/// nullopt when the country exports nothing that year or nobody exports the product.
std::optional<double> rca(const TradePanel& panel, const CountryCode& country, HsCode product, Year year);

enum class StrengthRule {
    mean_rca,        ///< mean RCA over years with a defined value exceeds 1
    fraction_above,  ///< more than half of the years with a defined value have RCA > 1
};

/// Products that are a comparative strength of the country. `candidates` restricts the
/// products examined (empty = every product in the panel).
std::set<HsCode> comparative_strengths(const TradePanel& panel, const CountryCode& country,
                                       std::span<const Year> years, StrengthRule rule = StrengthRule::mean_rca,
                                       std::span<const HsCode> candidates = {});

/// Same decision rule applied to an already computed RCA series.
bool is_strength(std::span<const std::optional<double>> rca_series, StrengthRule rule = StrengthRule::mean_rca);

/// Union of direct predecessors of every strength product. Strengths outside the network
/// are ignored and counted in `ignored`.
std::set<HsCode> input_products(const ProductionNetwork& network, const std::set<HsCode>& strengths,
                                std::size_t* ignored = nullptr);

/// Standardized first principal component of (exposure, hhi, str).
struct PcaModel {
    Eigen::Vector3d means = Eigen::Vector3d::Zero();
    Eigen::Vector3d scales = Eigen::Vector3d::Ones();
    Eigen::Vector3d loadings = Eigen::Vector3d::Zero();  ///< unit norm, exposure loading >= 0
    double explained_variance_ratio = 0.0;
    std::size_t n_records = 0;
};

inline constexpr std::size_t kMinPcaRecords = 10;
inline constexpr std::array<const char*, 3> kPcaIndicatorNames{"exposure", "hhi", "str"};

/// Fits on complete rows (exposure, hhi, str). Throws DataError("rank-deficient: <name>") for a constant column.
PcaModel fit_pca(std::span<const std::array<double, 3>> rows);
PcaModel fit_pca(const IndicatorPanel& panel);

double composite_score(const PcaModel& model, const std::array<double, 3>& row);
/// nullopt unless exposure, hhi and str are all defined.
std::optional<double> composite_score(const PcaModel& model, const IndicatorRecord& record);

std::string pca_json(const PcaModel& model, const std::string& manifest = {});
PcaModel parse_pca_json(const std::string& text);

struct ScoreRecord {
    CountryCode country;
    HsCode product;
    Year year = 0;
    std::optional<double> rca;
    std::optional<double> composite;
};

/// Per (country, product, year) RCA and composite, sorted by key.
class ScoreTable {
public:
    ScoreTable() = default;
    explicit ScoreTable(std::vector<ScoreRecord> records);

    const std::vector<ScoreRecord>& records() const { return records_; }
    const ScoreRecord* find(const CountryCode& country, HsCode product, Year year) const;
    std::optional<double> rca(const CountryCode& country, HsCode product, Year year) const;
    std::optional<double> composite(const CountryCode& country, HsCode product, Year year) const;

private:
    std::vector<ScoreRecord> records_;
};

/// RCA for every (country, tiered network product, year) where it is defined, composite where
/// the indicator record is complete.
ScoreTable compute_scores(const TradePanel& panel, const IndicatorPanel& indicators, const ProductionNetwork& network,
                          const PcaModel& model);

std::string scores_csv(const ScoreTable& table, const std::string& manifest = {});
ScoreTable read_scores_csv(const std::filesystem::path& path);

struct StrengthRow {
    CountryCode country;
    HsCode product;
    bool is_strength = false;
    bool is_input_product = false;
};

/// One row per (country, network node).
std::vector<StrengthRow> compute_strength_table(const ScoreTable& scores, const ProductionNetwork& network,
                                                std::span<const CountryCode> countries, std::span<const Year> years,
                                                StrengthRule rule = StrengthRule::mean_rca);
std::string strengths_csv(const std::vector<StrengthRow>& rows, const std::string& manifest = {});
std::vector<StrengthRow> read_strengths_csv(const std::filesystem::path& path);
/// country -> input-product set
std::map<CountryCode, std::set<HsCode>> input_product_sets(const std::vector<StrengthRow>& rows);

}  // namespace rarenet
