#include "rarenet/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "rarenet/indicators.hpp"
#include "rarenet/io.hpp"
#include "rarenet/netbuild.hpp"
#include "rarenet/scores.hpp"

namespace rarenet {

namespace fs = std::filesystem;

namespace {

constexpr std::array<const char*, 60> kCountryPool{
    "CHN", "USA", "DEU", "JPN", "KOR", "FRA", "GBR", "ITA", "IND", "BRA", "CAN", "AUS", "RUS", "MEX", "ESP",
    "NLD", "TWN", "VNM", "THA", "MYS", "IDN", "TUR", "POL", "SWE", "BEL", "AUT", "CHE", "ZAF", "ARG", "CHL",
    "PHL", "SGP", "ISR", "NOR", "DNK", "FIN", "IRL", "PRT", "CZE", "HUN", "ROU", "GRC", "EGY", "NGA", "PAK",
    "BGD", "SAU", "ARE", "COL", "PER", "KAZ", "UKR", "MAR", "NZL", "SVK", "SVN", "BGR", "HRV", "LTU", "EST"};

constexpr std::uint32_t kFillerCode = 270900;
// When an outcome is planted, RCA's world-share identity ties each product's country RCAs together,
// so one extra country takes up the slack. It trades only in the outcome window: with no baseline
// RCA it never becomes a regression observation.
const CountryCode kAbsorber = "ROW";
constexpr double kAbsorberScale = 2.0;
constexpr std::uint32_t kFirstSyntheticCode = 850501;
constexpr double kMinTargetRca = 0.05;
constexpr int kPlantingPasses = 6;

std::vector<CountryCode> make_countries(int n) {
    std::vector<CountryCode> countries;
    for (int i = 0; i < n; ++i) {
        if (static_cast<std::size_t>(i) < kCountryPool.size()) {
            countries.emplace_back(kCountryPool[static_cast<std::size_t>(i)]);
        } else {
            const int k = i - static_cast<int>(kCountryPool.size());
            countries.push_back(std::string("Q") + static_cast<char>('A' + k / 26) + static_cast<char>('A' + k % 26));
        }
    }
    return countries;
}

// Iterative proportional fitting of a zero-diagonal affinity matrix to export (row) and import
// (column) totals. Totals are first rescaled to their geometric-mean grand total.
Eigen::MatrixXd fit_flows(const Eigen::MatrixXd& affinity, Eigen::VectorXd exports, Eigen::VectorXd imports) {
    const double grand = std::sqrt(exports.sum() * imports.sum());
    exports *= grand / exports.sum();
    imports *= grand / imports.sum();
    Eigen::MatrixXd t = affinity;
    for (int iter = 0; iter < 200; ++iter) {
        const Eigen::VectorXd rows = t.rowwise().sum();
        for (Eigen::Index a = 0; a < t.rows(); ++a) {
            if (rows(a) > 0.0) t.row(a) *= exports(a) / rows(a);
        }
        const Eigen::RowVectorXd cols = t.colwise().sum();
        double worst = 0.0;
        for (Eigen::Index b = 0; b < t.cols(); ++b) {
            if (cols(b) > 0.0) t.col(b) *= imports(b) / cols(b);
        }
        const Eigen::VectorXd check = t.rowwise().sum();
        for (Eigen::Index a = 0; a < t.rows(); ++a) {
            if (exports(a) > 0.0) worst = std::max(worst, std::abs(check(a) / exports(a) - 1.0));
        }
        if (worst < 1e-10) break;
    }
    return t;
}

class Generator {
public:
    explicit Generator(const SynthConfig& config) : config_(config), rng_(config.rng_seed) {}

    SynthData run();

private:
    double normal() { return std::normal_distribution<double>(0.0, 1.0)(rng_); }
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
    int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }

    void draw_structure();
    void draw_latents();
    void draw_stability();
    void draw_links();
    TradePanel assemble_panel() const;
    void plant_outcome(SynthData& data);

    // Indexing helpers: product p in [0, n_products] (last = filler), country c, year index y.
    std::size_t cell(std::size_t c, std::size_t y) const { return c * years_.size() + y; }

    const SynthConfig& config_;
    std::mt19937_64 rng_;

    std::vector<CountryCode> countries_;
    std::vector<HsCode> products_;  // networkable products then the filler
    std::vector<Year> years_;
    std::vector<double> product_scale_;
    std::vector<double> country_size_;
    std::vector<Eigen::MatrixXd> affinity_;                   // [p] exporter x importer
    std::vector<std::vector<double>> export_level_;           // [p][cell]
    std::vector<std::vector<double>> import_level_;           // [p][cell]
    std::vector<std::pair<std::size_t, std::size_t>> true_edges_;
    std::vector<std::pair<std::size_t, std::size_t>> decoys_;
    StabilityPanel stability_;
};

void Generator::draw_structure() {
    countries_ = make_countries(config_.n_countries);
    if (config_.plant_outcome) countries_.push_back(kAbsorber);
    for (Year y = 0; y < config_.n_years; ++y) years_.push_back(config_.first_year + y);
    for (HsCode seed : kDefaultSeeds) products_.push_back(seed);
    for (int p = static_cast<int>(products_.size()); p < config_.n_products; ++p) {
        products_.emplace_back(kFirstSyntheticCode + static_cast<std::uint32_t>(p));
    }
    products_.emplace_back(kFillerCode);

    const std::size_t n = countries_.size();
    for (std::size_t p = 0; p < products_.size(); ++p) {
        product_scale_.push_back(uniform(std::log(200.0), std::log(5000.0)));
        Eigen::MatrixXd k(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
        for (Eigen::Index a = 0; a < k.rows(); ++a) {
            for (Eigen::Index b = 0; b < k.cols(); ++b) k(a, b) = a == b ? 0.0 : std::exp(config_.partner_sigma * normal());
        }
        affinity_.push_back(std::move(k));
    }
    // The filler dominates every country's export basket so that networked RCAs can move freely.
    product_scale_.back() = std::log(20.0 * static_cast<double>(config_.n_products) * 2000.0);
    for (int c = 0; c < config_.n_countries; ++c) country_size_.push_back(config_.size_sigma * normal());
    if (config_.plant_outcome) country_size_.push_back(std::log(kAbsorberScale));

    // True links: a random tree over the first products rooted at the seeds, then extra forward edges.
    const int n_seeds = static_cast<int>(kDefaultSeeds.size());
    const int tree_edges = std::min(config_.n_true_links, config_.n_products - n_seeds);
    for (int j = n_seeds; j < n_seeds + tree_edges; ++j) {
        true_edges_.emplace_back(static_cast<std::size_t>(uniform_int(0, j - 1)), static_cast<std::size_t>(j));
    }
    int guard = 0;
    while (static_cast<int>(true_edges_.size()) < config_.n_true_links && guard++ < 100000) {
        const int j = uniform_int(n_seeds, config_.n_products - 1);
        const int i = uniform_int(0, j - 1);
        std::pair<std::size_t, std::size_t> edge{static_cast<std::size_t>(i), static_cast<std::size_t>(j)};
        if (std::find(true_edges_.begin(), true_edges_.end(), edge) == true_edges_.end()) true_edges_.push_back(edge);
    }
}

void Generator::draw_latents() {
    const std::size_t cells = countries_.size() * years_.size();
    const double sigma = config_.value_sigma;
    std::vector<std::vector<double>> z_imp(products_.size(), std::vector<double>(cells));
    std::vector<std::vector<double>> z_exp(products_.size(), std::vector<double>(cells));
    for (std::size_t p = 0; p < products_.size(); ++p) {
        for (std::size_t k = 0; k < cells; ++k) {
            z_imp[p][k] = normal();
            z_exp[p][k] = normal();
        }
    }
    // Output exports load on the parents' import shocks.
    const double s = config_.link_strength;
    for (std::size_t j = 0; j + 1 < products_.size(); ++j) {
        std::vector<std::size_t> parents;
        for (const auto& [a, b] : true_edges_) {
            if (b == j) parents.push_back(a);
        }
        if (parents.empty()) continue;
        for (std::size_t k = 0; k < cells; ++k) {
            double shared = 0.0;
            for (std::size_t a : parents) shared += z_imp[a][k];
            shared /= std::sqrt(static_cast<double>(parents.size()));
            z_exp[j][k] = s * shared + std::sqrt(1.0 - s * s) * z_exp[j][k];
        }
    }
    export_level_.assign(products_.size(), std::vector<double>(cells));
    import_level_.assign(products_.size(), std::vector<double>(cells));
    for (std::size_t p = 0; p < products_.size(); ++p) {
        const double spread = p + 1 == products_.size() ? 0.2 : sigma;
        for (std::size_t c = 0; c < countries_.size(); ++c) {
            for (std::size_t y = 0; y < years_.size(); ++y) {
                const auto k = cell(c, y);
                const double base = product_scale_[p] + country_size_[c];
                export_level_[p][k] = std::exp(base + spread * z_exp[p][k]);
                import_level_[p][k] = std::exp(base + spread * z_imp[p][k]);
                if (countries_[c] == kAbsorber && !config_.outcome_window().contains(years_[y])) {
                    export_level_[p][k] = 0.0;
                    import_level_[p][k] = 0.0;
                }
            }
        }
    }
}

void Generator::draw_stability() {
    for (const auto& country : countries_) {
        const double base = uniform(10.0, 90.0);
        for (Year year : years_) {
            const double pv = std::clamp(base + 4.0 * normal(), 0.0, 100.0);
            stability_.insert(country, year, pv);
        }
    }
}

void Generator::draw_links() {
    const int n = config_.n_products;
    int guard = 0;
    while (static_cast<int>(decoys_.size()) < config_.n_decoy_links && guard++ < 100000) {
        const auto i = static_cast<std::size_t>(uniform_int(0, n - 1));
        const auto j = static_cast<std::size_t>(uniform_int(0, n - 1));
        if (i == j) continue;
        std::pair<std::size_t, std::size_t> edge{i, j};
        if (std::find(true_edges_.begin(), true_edges_.end(), edge) != true_edges_.end()) continue;
        if (std::find(decoys_.begin(), decoys_.end(), edge) != decoys_.end()) continue;
        decoys_.push_back(edge);
    }
}

TradePanel Generator::assemble_panel() const {
    std::vector<TradeFlow> flows;
    const auto n = static_cast<Eigen::Index>(countries_.size());
    for (std::size_t p = 0; p < products_.size(); ++p) {
        for (std::size_t y = 0; y < years_.size(); ++y) {
            Eigen::VectorXd exports(n);
            Eigen::VectorXd imports(n);
            for (Eigen::Index c = 0; c < n; ++c) {
                exports(c) = export_level_[p][cell(static_cast<std::size_t>(c), y)];
                imports(c) = import_level_[p][cell(static_cast<std::size_t>(c), y)];
            }
            const Eigen::MatrixXd t = fit_flows(affinity_[p], exports, imports);
            for (Eigen::Index a = 0; a < n; ++a) {
                for (Eigen::Index b = 0; b < n; ++b) {
                    if (a == b || !(t(a, b) > 0.0)) continue;
                    flows.push_back({years_[y], countries_[static_cast<std::size_t>(a)],
                                     countries_[static_cast<std::size_t>(b)], products_[p], t(a, b)});
                }
            }
        }
    }
    return TradePanel::from_flows(std::move(flows));
}

void Generator::plant_outcome(SynthData& data) {
    const YearWindow baseline = config_.baseline_window();
    const YearWindow outcome = config_.outcome_window();

    std::vector<ValidatedEdge> edges;
    for (const auto& [a, b] : true_edges_) edges.push_back({products_[a], products_[b], 1.0});
    const auto network = build_network(edges, kDefaultSeeds);
    std::vector<Year> baseline_years;
    for (Year y = baseline.first; y <= baseline.last; ++y) baseline_years.push_back(y);
    const auto indicators = compute_indicator_panel(data.panel, stability_, network, baseline_years);
    const auto rca = rca_from_panel(data.panel);

    struct Target {
        std::size_t product;
        std::size_t country;
        double baseline_rca;
        double signal;
    };
    std::vector<Target> targets;
    for (std::size_t c = 0; c < countries_.size(); ++c) {
        for (std::size_t p = 0; p + 1 < products_.size(); ++p) {
            if (!network.tier(products_[p])) continue;
            auto x = baseline_covariates(rca, indicators, network, countries_[c], products_[p], baseline);
            auto base = window_mean_rca(rca, countries_[c], products_[p], baseline);
            if (!x || !base) continue;
            double signal = 0.0;
            for (std::size_t k = 0; k < kCovariateCount; ++k) signal += config_.planted_slopes[k] * (*x)[k];
            targets.push_back({p, c, *base, signal});
        }
    }
    double intercept = 0.0;
    if (config_.planted_intercept) {
        intercept = *config_.planted_intercept;
    } else if (!targets.empty()) {
        for (const auto& t : targets) intercept -= t.signal;
        intercept /= static_cast<double>(targets.size());
    }
    // target outcome-window RCA per (product, country)
    std::map<std::pair<std::size_t, std::size_t>, double> goal;
    for (const auto& t : targets) {
        const double value = t.baseline_rca + intercept + t.signal + config_.noise_scale * normal();
        goal[{t.product, t.country}] = std::max(value, kMinTargetRca);
    }

    for (int pass = 0; pass < kPlantingPasses; ++pass) {
        for (std::size_t y = 0; y < years_.size(); ++y) {
            if (!outcome.contains(years_[y])) continue;
            for (const auto& [key, target] : goal) {
                const auto [p, c] = key;
                auto current = rarenet::rca(data.panel, countries_[c], products_[p], years_[y]);
                if (!current || !(*current > 0.0)) continue;
                export_level_[p][cell(c, y)] *= target / *current;
            }
        }
        data.panel = assemble_panel();
    }

    data.truth.planted = true;
    data.truth.intercept = intercept;
    data.truth.planted_observations = goal.size();
}

SynthData Generator::run() {
    config_.validate();
    draw_structure();
    draw_latents();
    draw_stability();
    draw_links();

    SynthData data;
    data.panel = assemble_panel();
    data.stability = stability_;

    data.truth.seeds = kDefaultSeeds;
    data.truth.filler = products_.back();
    for (const auto& [a, b] : true_edges_) data.truth.true_edges.emplace_back(products_[a], products_[b]);
    for (const auto& [a, b] : decoys_) data.truth.decoy_edges.emplace_back(products_[a], products_[b]);
    std::vector<ValidatedEdge> edges;
    for (const auto& [a, b] : data.truth.true_edges) edges.push_back({a, b, 1.0});
    data.truth.tiers = assign_tiers(edges, kDefaultSeeds);
    data.truth.baseline = config_.baseline_window();
    data.truth.outcome = config_.outcome_window();
    data.truth.slopes = config_.planted_slopes;

    for (const auto& [a, b] : data.truth.true_edges) data.links.links.push_back({a, b, uniform_int(7, 10)});
    for (const auto& [a, b] : data.truth.decoy_edges) data.links.links.push_back({a, b, uniform_int(6, 10)});
    std::sort(data.links.links.begin(), data.links.links.end(), [](const CandidateLink& x, const CandidateLink& y) {
        return std::tie(x.input, x.output) < std::tie(y.input, y.output);
    });

    if (config_.plant_outcome) plant_outcome(data);
    return data;
}

}  // namespace

void SynthConfig::validate() const {
    const int n_seeds = static_cast<int>(kDefaultSeeds.size());
    if (n_countries < 3) throw ConfigError("synth: n_countries must be at least 3");
    if (n_products <= n_seeds) throw ConfigError("synth: n_products must exceed the seed count");
    if (n_products > 9000) throw ConfigError("synth: n_products too large for synthetic HS codes");
    if (n_years < 1) throw ConfigError("synth: n_years must be positive");
    if (n_true_links < 0 || n_decoy_links < 0) throw ConfigError("synth: link counts must be non-negative");
    if (!(link_strength >= 0.0 && link_strength <= 1.0)) throw ConfigError("synth: link_strength must lie in [0, 1]");
    if (!(noise_scale >= 0.0)) throw ConfigError("synth: noise_scale must be non-negative");
    const long max_forward = static_cast<long>(n_products) * (n_products - 1) / 2 -
                             static_cast<long>(n_seeds) * (n_seeds - 1) / 2;
    if (n_true_links > max_forward) throw ConfigError("synth: too many true links for the product count");
    if (plant_outcome) {
        const YearWindow years{first_year, first_year + n_years - 1};
        const auto b = baseline_window();
        const auto o = outcome_window();
        check_windows(b, o);
        if (b.first < years.first || o.last > years.last) throw ConfigError("synth: windows outside generated years");
    }
}

YearWindow SynthConfig::baseline_window() const {
    if (baseline) return *baseline;
    return {first_year, first_year + std::min(1, n_years - 1)};
}

YearWindow SynthConfig::outcome_window() const {
    if (outcome) return *outcome;
    const Year last = first_year + n_years - 1;
    return {std::max(first_year, last - 1), last};
}

SynthData generate_data(const SynthConfig& config) { return Generator(config).run(); }

std::string truth_json(const SynthTruth& truth, const SynthConfig& config) {
    nlohmann::ordered_json doc = nlohmann::ordered_json::object();
    doc["rng_seed"] = config.rng_seed;
    doc["seeds"] = nlohmann::ordered_json::array();
    for (HsCode seed : truth.seeds) doc["seeds"].push_back(seed.str());
    doc["filler"] = truth.filler.str();
    auto edge_list = [](const std::vector<std::pair<HsCode, HsCode>>& edges) {
        auto list = nlohmann::ordered_json::array();
        for (const auto& [a, b] : edges) list.push_back({a.str(), b.str()});
        return list;
    };
    doc["true_edges"] = edge_list(truth.true_edges);
    doc["decoy_edges"] = edge_list(truth.decoy_edges);
    doc["tiers"] = nlohmann::ordered_json::object();
    for (const auto& [product, tier] : truth.tiers) doc["tiers"][product.str()] = tier;
    doc["planted"] = truth.planted;
    doc["baseline_window"] = truth.baseline.str();
    doc["outcome_window"] = truth.outcome.str();
    doc["planted_coefficients"] = nlohmann::ordered_json::object();
    doc["planted_coefficients"]["constant"] = truth.intercept;
    for (std::size_t k = 0; k < kCovariateCount; ++k) doc["planted_coefficients"][kCovariateNames[k]] = truth.slopes[k];
    doc["noise_scale"] = config.noise_scale;
    doc["planted_observations"] = truth.planted_observations;
    return doc.dump(2) + "\n";
}

SynthFiles generate(const SynthConfig& config, const fs::path& out_dir) {
    const auto data = generate_data(config);
    fs::create_directories(out_dir);
    SynthFiles files{out_dir / "trade.csv", out_dir / "pv.csv", out_dir / "links.csv", out_dir / "truth.json"};
    io::write_atomic(files.trade, trade_csv(data.panel));
    io::write_atomic(files.pv, pv_csv(data.stability));
    io::write_atomic(files.links, links_csv(data.links));
    io::write_atomic(files.truth, truth_json(data.truth, config));
    return files;
}

}  // namespace rarenet
