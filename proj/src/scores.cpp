#include "rarenet/scores.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include <nlohmann/json.hpp>

#include "rarenet/io.hpp"

namespace rarenet {

std::optional<double> rca(const TradePanel& panel, const CountryCode& country, HsCode product, Year year) {
    const double country_total = panel.total_exports(country, year);
    const double world_product = panel.world_exports(product, year);
    const double world_total = panel.world_total(year);
    if (!(country_total > 0.0) || !(world_product > 0.0) || !(world_total > 0.0)) return std::nullopt;
    return (panel.exports(country, product, year) / country_total) / (world_product / world_total);
}

bool is_strength(std::span<const std::optional<double>> rca_series, StrengthRule rule) {
    double sum = 0.0;
    std::size_t defined = 0;
    std::size_t above = 0;
    for (const auto& value : rca_series) {
        if (!value) continue;
        sum += *value;
        ++defined;
        if (*value > 1.0) ++above;
    }
    if (defined == 0) return false;
    if (rule == StrengthRule::mean_rca) return sum / static_cast<double>(defined) > 1.0;
    return 2 * above > defined;
}

std::set<HsCode> comparative_strengths(const TradePanel& panel, const CountryCode& country,
                                       std::span<const Year> years, StrengthRule rule,
                                       std::span<const HsCode> candidates) {
    std::span<const HsCode> products = candidates.empty() ? std::span<const HsCode>(panel.products()) : candidates;
    std::set<HsCode> strengths;
    std::vector<std::optional<double>> series(years.size());
    for (HsCode product : products) {
        for (std::size_t i = 0; i < years.size(); ++i) series[i] = rca(panel, country, product, years[i]);
        if (is_strength(series, rule)) strengths.insert(product);
    }
    return strengths;
}

std::set<HsCode> input_products(const ProductionNetwork& network, const std::set<HsCode>& strengths,
                                std::size_t* ignored) {
    std::set<HsCode> inputs;
    std::size_t outside = 0;
    for (HsCode product : strengths) {
        if (!network.contains(product)) {
            ++outside;
            continue;
        }
        for (const auto& edge : network.edges) {
            if (edge.output == product) inputs.insert(edge.input);
        }
    }
    if (ignored != nullptr) *ignored = outside;
    return inputs;
}

PcaModel fit_pca(std::span<const std::array<double, 3>> rows) {
    if (rows.size() < kMinPcaRecords) {
        throw DataError("PCA needs at least " + std::to_string(kMinPcaRecords) + " complete records, got " +
                        std::to_string(rows.size()));
    }
    PcaModel model;
    model.n_records = rows.size();
    const double n = static_cast<double>(rows.size());
    for (const auto& row : rows) {
        for (int k = 0; k < 3; ++k) model.means(k) += row[static_cast<std::size_t>(k)];
    }
    model.means /= n;
    Eigen::Vector3d ss = Eigen::Vector3d::Zero();
    for (const auto& row : rows) {
        for (int k = 0; k < 3; ++k) {
            const double d = row[static_cast<std::size_t>(k)] - model.means(k);
            ss(k) += d * d;
        }
    }
    for (int k = 0; k < 3; ++k) {
        model.scales(k) = std::sqrt(ss(k) / n);
        if (!(model.scales(k) > 1e-12 * std::max(1.0, std::abs(model.means(k))))) {
            throw DataError(std::string("rank-deficient: ") + kPcaIndicatorNames[static_cast<std::size_t>(k)]);
        }
    }
    Eigen::Matrix3d correlation = Eigen::Matrix3d::Zero();
    for (const auto& row : rows) {
        Eigen::Vector3d z;
        for (int k = 0; k < 3; ++k) z(k) = (row[static_cast<std::size_t>(k)] - model.means(k)) / model.scales(k);
        correlation += z * z.transpose();
    }
    correlation /= n;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(correlation);
    if (solver.info() != Eigen::Success) throw NumericalError("PCA eigen-decomposition failed");
    model.loadings = solver.eigenvectors().col(2).normalized();
    model.explained_variance_ratio = solver.eigenvalues()(2) / correlation.trace();
    // Orientation: exposure loading >= 0, falling back to the next nonzero loading.
    for (int k = 0; k < 3; ++k) {
        if (model.loadings(k) > 0.0) break;
        if (model.loadings(k) < 0.0) {
            model.loadings = -model.loadings;
            break;
        }
    }
    return model;
}

PcaModel fit_pca(const IndicatorPanel& panel) {
    std::vector<std::array<double, 3>> rows;
    for (const auto& r : panel.records()) {
        if (r.exposure && r.hhi && r.str) rows.push_back({*r.exposure, *r.hhi, *r.str});
    }
    return fit_pca(rows);
}

double composite_score(const PcaModel& model, const std::array<double, 3>& row) {
    double score = 0.0;
    for (int k = 0; k < 3; ++k) {
        score += model.loadings(k) * (row[static_cast<std::size_t>(k)] - model.means(k)) / model.scales(k);
    }
    return score;
}

std::optional<double> composite_score(const PcaModel& model, const IndicatorRecord& record) {
    if (!record.exposure || !record.hhi || !record.str) return std::nullopt;
    return composite_score(model, {*record.exposure, *record.hhi, *record.str});
}

std::string pca_json(const PcaModel& model, const std::string& manifest) {
    nlohmann::ordered_json doc = nlohmann::ordered_json::object();
    if (!manifest.empty()) doc["manifest"] = manifest;
    doc["indicators"] = {"exposure", "hhi", "str"};
    doc["means"] = {model.means(0), model.means(1), model.means(2)};
    doc["scales"] = {model.scales(0), model.scales(1), model.scales(2)};
    doc["loadings"] = {model.loadings(0), model.loadings(1), model.loadings(2)};
    doc["explained_variance_ratio"] = model.explained_variance_ratio;
    doc["n_records"] = model.n_records;
    return doc.dump(2) + "\n";
}

PcaModel parse_pca_json(const std::string& text) {
    PcaModel model;
    try {
        auto doc = nlohmann::json::parse(text);
        for (int k = 0; k < 3; ++k) {
            model.means(k) = doc.at("means").at(static_cast<std::size_t>(k)).get<double>();
            model.scales(k) = doc.at("scales").at(static_cast<std::size_t>(k)).get<double>();
            model.loadings(k) = doc.at("loadings").at(static_cast<std::size_t>(k)).get<double>();
        }
        model.explained_variance_ratio = doc.at("explained_variance_ratio").get<double>();
        model.n_records = doc.at("n_records").get<std::size_t>();
    } catch (const nlohmann::json::exception& error) {
        throw DataError(std::string("malformed pca.json: ") + error.what());
    }
    return model;
}

ScoreTable::ScoreTable(std::vector<ScoreRecord> records) : records_(std::move(records)) {
    std::sort(records_.begin(), records_.end(), [](const ScoreRecord& a, const ScoreRecord& b) {
        return std::tie(a.country, a.product, a.year) < std::tie(b.country, b.product, b.year);
    });
}

const ScoreRecord* ScoreTable::find(const CountryCode& country, HsCode product, Year year) const {
    auto it = std::lower_bound(records_.begin(), records_.end(), std::tie(country, product, year),
                               [](const ScoreRecord& r, const auto& key) {
                                   return std::tie(r.country, r.product, r.year) < key;
                               });
    if (it == records_.end() || it->country != country || it->product != product || it->year != year) return nullptr;
    return &*it;
}

std::optional<double> ScoreTable::rca(const CountryCode& country, HsCode product, Year year) const {
    const auto* record = find(country, product, year);
    return record != nullptr ? record->rca : std::nullopt;
}

std::optional<double> ScoreTable::composite(const CountryCode& country, HsCode product, Year year) const {
    const auto* record = find(country, product, year);
    return record != nullptr ? record->composite : std::nullopt;
}

ScoreTable compute_scores(const TradePanel& panel, const IndicatorPanel& indicators, const ProductionNetwork& network,
                          const PcaModel& model) {
    std::vector<ScoreRecord> records;
    for (const auto& country : panel.countries()) {
        for (HsCode product : network.nodes) {
            if (!panel.has_product(product)) continue;
            for (Year year : panel.years()) {
                ScoreRecord record{country, product, year, rarenet::rca(panel, country, product, year), std::nullopt};
                if (const auto* ind = indicators.find(country, product, year)) {
                    record.composite = composite_score(model, *ind);
                }
                if (record.rca || record.composite) records.push_back(std::move(record));
            }
        }
    }
    return ScoreTable(std::move(records));
}

std::string scores_csv(const ScoreTable& table, const std::string& manifest) {
    std::string out;
    if (!manifest.empty()) out += "# manifest: " + manifest + "\n";
    out += "country,hs6,year,rca,composite\n";
    for (const auto& r : table.records()) {
        out += r.country + ',' + r.product.str() + ',' + std::to_string(r.year) + ',' + format_optional(r.rca) + ',' +
               format_optional(r.composite) + '\n';
    }
    return out;
}

ScoreTable read_scores_csv(const std::filesystem::path& path) {
    auto table = io::read_csv(path);
    const auto c_country = table.column("country");
    const auto c_hs = table.column("hs6");
    const auto c_year = table.column("year");
    const auto c_rca = table.column("rca");
    const auto c_comp = table.column("composite");
    std::vector<ScoreRecord> records;
    records.reserve(table.rows.size());
    for (const auto& row : table.rows) {
        if (row.size() != table.header.size()) throw DataError("malformed row in " + path.string());
        auto hs = HsCode::parse(row[c_hs]);
        auto year = io::parse_int(row[c_year]);
        if (!hs || !year) throw DataError("malformed row in " + path.string());
        records.push_back({row[c_country], *hs, static_cast<Year>(*year), io::parse_double(row[c_rca]),
                           io::parse_double(row[c_comp])});
    }
    return ScoreTable(std::move(records));
}

std::vector<StrengthRow> compute_strength_table(const ScoreTable& scores, const ProductionNetwork& network,
                                                std::span<const CountryCode> countries, std::span<const Year> years,
                                                StrengthRule rule) {
    std::vector<StrengthRow> rows;
    std::vector<std::optional<double>> series(years.size());
    for (const auto& country : countries) {
        std::set<HsCode> strengths;
        for (HsCode product : network.nodes) {
            for (std::size_t i = 0; i < years.size(); ++i) series[i] = scores.rca(country, product, years[i]);
            if (is_strength(series, rule)) strengths.insert(product);
        }
        const auto inputs = input_products(network, strengths);
        for (HsCode product : network.nodes) {
            rows.push_back({country, product, strengths.contains(product), inputs.contains(product)});
        }
    }
    return rows;
}

std::string strengths_csv(const std::vector<StrengthRow>& rows, const std::string& manifest) {
    std::string out;
    if (!manifest.empty()) out += "# manifest: " + manifest + "\n";
    out += "country,hs6,is_strength,is_input_product\n";
    for (const auto& r : rows) {
        out += r.country + ',' + r.product.str() + ',' + (r.is_strength ? "1" : "0") + ',' +
               (r.is_input_product ? "1" : "0") + '\n';
    }
    return out;
}

std::vector<StrengthRow> read_strengths_csv(const std::filesystem::path& path) {
    auto table = io::read_csv(path);
    const auto c_country = table.column("country");
    const auto c_hs = table.column("hs6");
    const auto c_strength = table.column("is_strength");
    const auto c_input = table.column("is_input_product");
    std::vector<StrengthRow> rows;
    for (const auto& row : table.rows) {
        if (row.size() != table.header.size()) throw DataError("malformed row in " + path.string());
        auto hs = HsCode::parse(row[c_hs]);
        if (!hs) throw DataError("malformed row in " + path.string());
        rows.push_back({row[c_country], *hs, row[c_strength] == "1", row[c_input] == "1"});
    }
    return rows;
}

std::map<CountryCode, std::set<HsCode>> input_product_sets(const std::vector<StrengthRow>& rows) {
    std::map<CountryCode, std::set<HsCode>> sets;
    for (const auto& row : rows) {
        auto& set = sets[row.country];
        if (row.is_input_product) set.insert(row.product);
    }
    return sets;
}

}  // namespace rarenet
