#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rarenet/common.hpp"
#include "rarenet/ingest.hpp"
#include "rarenet/netbuild.hpp"

namespace rarenet {

/// imports / (imports + exports); nullopt when the country does not trade the product.
std::optional<double> exposure(const TradePanel& panel, const CountryCode& country, HsCode product, Year year);

/// Herfindahl-Hirschman index of supplier shares in the country's imports; nullopt without imports.
std::optional<double> import_concentration(const TradePanel& panel, const CountryCode& country, HsCode product,
                                           Year year);

struct PvFallbackStats {
    std::size_t exact = 0;
    std::size_t nearest_year = 0;
    std::size_t year_median = 0;
    std::size_t config_default = 0;
};

struct RiskConfig {
    double clamp_delta = 1e-6;  ///< stability factor (1 - PV/100) is capped at 1 - clamp_delta
    double default_pv = 50.0;   ///< used when neither the country nor the year has any PV entry
};

/// PV for (country, year): exact entry, else the country's nearest year, else the year's median, else default.
double resolve_pv(const StabilityPanel& stability, const CountryCode& country, Year year, double default_pv,
                  PvFallbackStats* stats = nullptr);

/// Stability-weighted import shares of one product-year. Row = importer c, column = supplier a:
/// weights(c, a) = (1 - PV(a)/100) * T[a->c] / sum_a' T[a'->c].
/// `countries` holds every country trading the product that year; others would be isolated identity rows.
struct RiskMatrix {
    HsCode product;
    Year year = 0;
    std::vector<CountryCode> countries;
    Eigen::MatrixXd weights;
};

RiskMatrix build_risk_matrix(const TradePanel& panel, const StabilityPanel& stability, HsCode product, Year year,
                             const RiskConfig& config = {}, PvFallbackStats* stats = nullptr);

/// (I - W)^-1 via one LU factorization. Throws NumericalError when the system is numerically singular.
Eigen::MatrixXd leontief_inverse(const Eigen::MatrixXd& weights);

/// Row sums of (I - W)^-1, aligned with the matrix country order.
Eigen::VectorXd systemic_trade_risk(const Eigen::MatrixXd& weights);
Eigen::VectorXd systemic_trade_risk(const RiskMatrix& matrix);

/// Column sums of (I - W)^-1, off-diagonal only unless include_diagonal.
Eigen::VectorXd influence(const Eigen::MatrixXd& weights, bool include_diagonal = false);
Eigen::VectorXd influence(const RiskMatrix& matrix, bool include_diagonal = false);

struct IndicatorRecord {
    CountryCode country;
    HsCode product;
    Year year = 0;
    int tier = 0;
    std::optional<double> exposure;
    std::optional<double> hhi;
    std::optional<double> str;
    double influence = 0.0;
};

struct IndicatorConfig {
    RiskConfig risk;
    bool influence_includes_diagonal = false;
    unsigned jobs = 1;
};

/// Records sorted by (country, product, year).
class IndicatorPanel {
public:
    IndicatorPanel() = default;
    explicit IndicatorPanel(std::vector<IndicatorRecord> records);

    const std::vector<IndicatorRecord>& records() const { return records_; }
    const IndicatorRecord* find(const CountryCode& country, HsCode product, Year year) const;
    std::vector<CountryCode> countries() const;
    std::vector<Year> years() const;

    PvFallbackStats pv_stats;
    std::size_t skipped_products = 0;  ///< networked products with no trade in the panel

private:
    std::vector<IndicatorRecord> records_;
};

/// Every (country, tiered network product, year) where the country trades the product.
IndicatorPanel compute_indicator_panel(const TradePanel& panel, const StabilityPanel& stability,
                                       const ProductionNetwork& network, const std::vector<Year>& years,
                                       const IndicatorConfig& config = {});

std::string indicators_csv(const IndicatorPanel& panel, const std::string& manifest = {});
IndicatorPanel read_indicators_csv(const std::filesystem::path& path);

}  // namespace rarenet
