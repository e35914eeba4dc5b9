#include "rarenet/indicators.hpp"

#include <algorithm>
#include <map>
#include <sstream>
#include <tuple>

#include "rarenet/io.hpp"
#include "rarenet/parallel.hpp"

namespace rarenet {

namespace {

constexpr double kMinReciprocalCondition = 1e-12;

}  // namespace

std::optional<double> exposure(const TradePanel& panel, const CountryCode& country, HsCode product, Year year) {
    const double imports = panel.imports(country, product, year);
    const double exports = panel.exports(country, product, year);
    const double total = imports + exports;
    if (!(total > 0.0)) return std::nullopt;
    return imports / total;
}

std::optional<double> import_concentration(const TradePanel& panel, const CountryCode& country, HsCode product,
                                           Year year) {
    const double imports = panel.imports(country, product, year);
    if (!(imports > 0.0)) return std::nullopt;
    // Sum of squares over the squared total: equal shares give 1/n with a single rounding.
    double squares = 0.0;
    for (const auto& flow : panel.flows_for(product, year)) {
        if (flow.importer == country) squares += flow.value * flow.value;
    }
    return squares / (imports * imports);
}

double resolve_pv(const StabilityPanel& stability, const CountryCode& country, Year year, double default_pv,
                  PvFallbackStats* stats) {
    PvFallbackStats local;
    PvFallbackStats& s = stats != nullptr ? *stats : local;
    if (auto pv = stability.get(country, year)) {
        ++s.exact;
        return *pv;
    }
    if (auto pv = stability.nearest_year(country, year)) {
        ++s.nearest_year;
        return *pv;
    }
    if (auto pv = stability.median_for_year(year)) {
        ++s.year_median;
        return *pv;
    }
    ++s.config_default;
    return default_pv;
}

RiskMatrix build_risk_matrix(const TradePanel& panel, const StabilityPanel& stability, HsCode product, Year year,
                             const RiskConfig& config, PvFallbackStats* stats) {
    RiskMatrix matrix;
    matrix.product = product;
    matrix.year = year;
    const auto* m = panel.marginals(product, year);
    if (m == nullptr) {
        matrix.weights.resize(0, 0);
        return matrix;
    }
    std::vector<std::size_t> panel_to_local(panel.countries().size(), SIZE_MAX);
    for (std::size_t c = 0; c < panel.countries().size(); ++c) {
        if (m->imports[c] > 0.0 || m->exports[c] > 0.0) {
            panel_to_local[c] = matrix.countries.size();
            matrix.countries.push_back(panel.countries()[c]);
        }
    }
    const auto n = static_cast<Eigen::Index>(matrix.countries.size());
    matrix.weights = Eigen::MatrixXd::Zero(n, n);

    std::vector<double> factor(matrix.countries.size());
    const double max_factor = 1.0 - config.clamp_delta;
    for (std::size_t i = 0; i < matrix.countries.size(); ++i) {
        const double pv = resolve_pv(stability, matrix.countries[i], year, config.default_pv, stats);
        factor[i] = std::min(1.0 - pv / 100.0, max_factor);
    }
    for (const auto& flow : panel.flows_for(product, year)) {
        if (!(flow.value > 0.0)) continue;
        const auto importer = *panel.country_index(flow.importer);
        const auto supplier = *panel.country_index(flow.exporter);
        const auto row = static_cast<Eigen::Index>(panel_to_local[importer]);
        const auto col = static_cast<Eigen::Index>(panel_to_local[supplier]);
        matrix.weights(row, col) += factor[panel_to_local[supplier]] * flow.value / m->imports[importer];
    }
    return matrix;
}

Eigen::MatrixXd leontief_inverse(const Eigen::MatrixXd& weights) {
    const auto n = weights.rows();
    if (n != weights.cols()) throw NumericalError("risk matrix is not square");
    if (n == 0) return Eigen::MatrixXd(0, 0);
    const Eigen::MatrixXd system = Eigen::MatrixXd::Identity(n, n) - weights;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(system);
    const double rcond = lu.rcond();
    if (!(rcond >= kMinReciprocalCondition)) {
        std::ostringstream msg;
        msg << "singular (I - W): estimated condition number " << (rcond > 0.0 ? 1.0 / rcond : INFINITY)
            << " exceeds " << 1.0 / kMinReciprocalCondition;
        throw NumericalError(msg.str());
    }
    return lu.inverse();
}

Eigen::VectorXd systemic_trade_risk(const Eigen::MatrixXd& weights) {
    return leontief_inverse(weights).rowwise().sum();
}

Eigen::VectorXd systemic_trade_risk(const RiskMatrix& matrix) { return systemic_trade_risk(matrix.weights); }

Eigen::VectorXd influence(const Eigen::MatrixXd& weights, bool include_diagonal) {
    const Eigen::MatrixXd inverse = leontief_inverse(weights);
    Eigen::VectorXd columns = inverse.colwise().sum().transpose();
    if (!include_diagonal) columns -= inverse.diagonal();
    return columns;
}

Eigen::VectorXd influence(const RiskMatrix& matrix, bool include_diagonal) {
    return influence(matrix.weights, include_diagonal);
}

IndicatorPanel::IndicatorPanel(std::vector<IndicatorRecord> records) : records_(std::move(records)) {
    std::sort(records_.begin(), records_.end(), [](const IndicatorRecord& a, const IndicatorRecord& b) {
        return std::tie(a.country, a.product, a.year) < std::tie(b.country, b.product, b.year);
    });
}

const IndicatorRecord* IndicatorPanel::find(const CountryCode& country, HsCode product, Year year) const {
    auto it = std::lower_bound(records_.begin(), records_.end(), std::tie(country, product, year),
                               [](const IndicatorRecord& r, const auto& key) {
                                   return std::tie(r.country, r.product, r.year) < key;
                               });
    if (it == records_.end() || it->country != country || it->product != product || it->year != year) return nullptr;
    return &*it;
}

std::vector<CountryCode> IndicatorPanel::countries() const {
    std::vector<CountryCode> result;
    for (const auto& r : records_) {
        if (result.empty() || result.back() != r.country) result.push_back(r.country);
    }
    return result;
}

std::vector<Year> IndicatorPanel::years() const {
    std::vector<Year> result;
    for (const auto& r : records_) result.push_back(r.year);
    std::sort(result.begin(), result.end());
    result.erase(std::unique(result.begin(), result.end()), result.end());
    return result;
}

IndicatorPanel compute_indicator_panel(const TradePanel& panel, const StabilityPanel& stability,
                                       const ProductionNetwork& network, const std::vector<Year>& years,
                                       const IndicatorConfig& config) {
    struct Cell {
        HsCode product;
        int tier = 0;
        Year year = 0;
    };
    std::vector<Cell> cells;
    std::size_t skipped = 0;
    for (const auto& [product, tier] : network.tiers) {
        if (!panel.has_product(product)) {
            ++skipped;
            continue;
        }
        for (Year year : years) {
            if (panel.marginals(product, year) != nullptr) cells.push_back({product, tier, year});
        }
    }

    std::vector<std::vector<IndicatorRecord>> per_cell(cells.size());
    std::vector<PvFallbackStats> per_cell_stats(cells.size());
    parallel_for(cells.size(), config.jobs, [&](std::size_t i) {
        const auto& cell = cells[i];
        const auto matrix = build_risk_matrix(panel, stability, cell.product, cell.year, config.risk, &per_cell_stats[i]);
        const auto* m = panel.marginals(cell.product, cell.year);
        std::vector<double> squares(panel.countries().size(), 0.0);
        for (const auto& flow : panel.flows_for(cell.product, cell.year)) {
            squares[*panel.country_index(flow.importer)] += flow.value * flow.value;
        }
        const Eigen::MatrixXd inverse = leontief_inverse(matrix.weights);
        const Eigen::VectorXd str = inverse.rowwise().sum();
        Eigen::VectorXd infl = inverse.colwise().sum().transpose();
        if (!config.influence_includes_diagonal) infl -= inverse.diagonal();
        for (std::size_t k = 0; k < matrix.countries.size(); ++k) {
            const auto& country = matrix.countries[k];
            IndicatorRecord record;
            record.country = country;
            record.product = cell.product;
            record.year = cell.year;
            record.tier = cell.tier;
            const auto c = *panel.country_index(country);
            const double imports = m->imports[c];
            record.exposure = imports / (imports + m->exports[c]);
            if (imports > 0.0) record.hhi = squares[c] / (imports * imports);
            if (record.hhi) record.str = str(static_cast<Eigen::Index>(k));
            record.influence = infl(static_cast<Eigen::Index>(k));
            per_cell[i].push_back(std::move(record));
        }
    });

    std::vector<IndicatorRecord> records;
    PvFallbackStats stats;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        for (auto& r : per_cell[i]) records.push_back(std::move(r));
        stats.exact += per_cell_stats[i].exact;
        stats.nearest_year += per_cell_stats[i].nearest_year;
        stats.year_median += per_cell_stats[i].year_median;
        stats.config_default += per_cell_stats[i].config_default;
    }
    IndicatorPanel result(std::move(records));
    result.pv_stats = stats;
    result.skipped_products = skipped;
    return result;
}

std::string indicators_csv(const IndicatorPanel& panel, const std::string& manifest) {
    std::string out;
    if (!manifest.empty()) out += "# manifest: " + manifest + "\n";
    out += "country,hs6,year,tier,exposure,hhi,str,influence\n";
    for (const auto& r : panel.records()) {
        out += r.country + ',' + r.product.str() + ',' + std::to_string(r.year) + ',' + std::to_string(r.tier) + ',' +
               format_optional(r.exposure) + ',' + format_optional(r.hhi) + ',' + format_optional(r.str) + ',' +
               format_double(r.influence) + '\n';
    }
    return out;
}

IndicatorPanel read_indicators_csv(const std::filesystem::path& path) {
    auto table = io::read_csv(path);
    const auto c_country = table.column("country");
    const auto c_hs = table.column("hs6");
    const auto c_year = table.column("year");
    const auto c_tier = table.column("tier");
    const auto c_exp = table.column("exposure");
    const auto c_hhi = table.column("hhi");
    const auto c_str = table.column("str");
    const auto c_infl = table.column("influence");
    std::vector<IndicatorRecord> records;
    records.reserve(table.rows.size());
    for (const auto& row : table.rows) {
        if (row.size() != table.header.size()) throw DataError("malformed row in " + path.string());
        IndicatorRecord r;
        r.country = row[c_country];
        auto hs = HsCode::parse(row[c_hs]);
        auto year = io::parse_int(row[c_year]);
        auto tier = io::parse_int(row[c_tier]);
        auto infl = io::parse_double(row[c_infl]);
        if (!hs || !year || !tier || !infl) throw DataError("malformed row in " + path.string());
        r.product = *hs;
        r.year = static_cast<Year>(*year);
        r.tier = static_cast<int>(*tier);
        r.exposure = io::parse_double(row[c_exp]);
        r.hhi = io::parse_double(row[c_hhi]);
        r.str = io::parse_double(row[c_str]);
        r.influence = *infl;
        records.push_back(std::move(r));
    }
    return IndicatorPanel(std::move(records));
}

}  // namespace rarenet
