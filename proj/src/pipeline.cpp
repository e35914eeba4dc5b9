#include "rarenet/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <functional>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rarenet/country_codes.hpp"
#include "rarenet/io.hpp"

namespace rarenet {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

// ---------------------------------------------------------------- config parsing

bool parse_bool(std::string_view key, std::string_view value) {
    if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
    if (value == "false" || value == "0" || value == "no" || value == "off") return false;
    throw ConfigError("config: " + std::string(key) + " expects a boolean, got '" + std::string(value) + "'");
}

double parse_real(std::string_view key, std::string_view value) {
    auto parsed = io::parse_double(value);
    if (!parsed) throw ConfigError("config: " + std::string(key) + " expects a number, got '" + std::string(value) + "'");
    return *parsed;
}

long long parse_integer(std::string_view key, std::string_view value) {
    auto parsed = io::parse_int(value);
    if (!parsed) {
        throw ConfigError("config: " + std::string(key) + " expects an integer, got '" + std::string(value) + "'");
    }
    return *parsed;
}

int parse_count(std::string_view key, std::string_view value, long long min_value) {
    const auto parsed = parse_integer(key, value);
    if (parsed < min_value || parsed > 1'000'000'000) {
        throw ConfigError("config: " + std::string(key) + " out of range: " + std::string(value));
    }
    return static_cast<int>(parsed);
}

YearWindow parse_window(std::string_view key, std::string_view value) {
    try {
        return YearWindow::parse(value);
    } catch (const std::exception& e) {
        throw ConfigError("config: " + std::string(key) + ": " + e.what());
    }
}

std::vector<std::string> split_list(std::string_view value) {
    std::vector<std::string> items;
    std::string current;
    for (char ch : value) {
        if (ch == ',' || ch == ' ' || ch == '\t') {
            if (!current.empty()) items.push_back(std::move(current));
            current.clear();
        } else {
            current.push_back(ch);
        }
    }
    if (!current.empty()) items.push_back(std::move(current));
    return items;
}

CountryCode parse_country(std::string_view key, std::string_view value) {
    auto code = normalize_country(value);
    if (!code) throw ConfigError("config: " + std::string(key) + ": unknown country code '" + std::string(value) + "'");
    return *code;
}

using Setter = std::function<void(PipelineConfig&, std::string_view key, std::string_view value)>;

const std::map<std::string, Setter, std::less<>>& setters() {
    static const std::map<std::string, Setter, std::less<>> table = [] {
        std::map<std::string, Setter, std::less<>> t;
        t["trade"] = [](PipelineConfig& c, auto, auto v) { c.trade = std::string(v); };
        t["pv"] = [](PipelineConfig& c, auto, auto v) { c.pv = std::string(v); };
        t["links"] = [](PipelineConfig& c, auto, auto v) { c.links = std::string(v); };
        t["out_dir"] = [](PipelineConfig& c, auto, auto v) { c.out_dir = std::string(v); };
        t["rng_seed"] = [](PipelineConfig& c, auto k, auto v) {
            const auto seed = parse_integer(k, v);
            if (seed < 0) throw ConfigError("config: rng_seed must be non-negative");
            c.rng_seed = static_cast<std::uint64_t>(seed);
        };
        t["jobs"] = [](PipelineConfig& c, auto k, auto v) { c.jobs = static_cast<unsigned>(parse_count(k, v, 1)); };
        t["year_min"] = [](PipelineConfig& c, auto k, auto v) { c.ingest.year_min = parse_count(k, v, 0); };
        t["year_max"] = [](PipelineConfig& c, auto k, auto v) { c.ingest.year_max = parse_count(k, v, 0); };
        t["max_reject_fraction"] = [](PipelineConfig& c, auto k, auto v) {
            c.ingest.max_reject_fraction = parse_real(k, v);
        };
        t["seeds"] = [](PipelineConfig& c, auto k, auto v) {
            c.seeds.clear();
            for (const auto& item : split_list(v)) {
                auto code = HsCode::parse(item);
                if (!code) throw ConfigError("config: " + std::string(k) + ": not an HS6 code: " + item);
                c.seeds.insert(*code);
            }
            if (c.seeds.empty()) throw ConfigError("config: seeds must not be empty");
        };
        t["min_votes"] = [](PipelineConfig& c, auto k, auto v) { c.min_votes = parse_count(k, v, 0); };
        t["total_repetitions"] = [](PipelineConfig& c, auto k, auto v) { c.total_repetitions = parse_count(k, v, 1); };
        t["z_threshold"] = [](PipelineConfig& c, auto k, auto v) { c.z_threshold = parse_real(k, v); };
        t["n_perm"] = [](PipelineConfig& c, auto k, auto v) { c.n_perm = parse_count(k, v, kMinPermutations); };
        t["correlation_mode"] = [](PipelineConfig& c, auto k, auto v) {
            if (v == "pooled") c.series.mode = CorrelationMode::pooled;
            else if (v == "within_year") c.series.mode = CorrelationMode::within_year;
            else throw ConfigError("config: " + std::string(k) + " must be pooled or within_year");
        };
        t["log1p"] = [](PipelineConfig& c, auto k, auto v) { c.series.log1p = parse_bool(k, v); };
        t["default_pv"] = [](PipelineConfig& c, auto k, auto v) {
            c.risk.default_pv = parse_real(k, v);
            if (!(c.risk.default_pv >= 0.0 && c.risk.default_pv <= 100.0)) {
                throw ConfigError("config: default_pv must lie in [0, 100]");
            }
        };
        t["clamp_delta"] = [](PipelineConfig& c, auto k, auto v) {
            c.risk.clamp_delta = parse_real(k, v);
            if (!(c.risk.clamp_delta > 0.0 && c.risk.clamp_delta < 1.0)) {
                throw ConfigError("config: clamp_delta must lie in (0, 1)");
            }
        };
        t["influence_diagonal"] = [](PipelineConfig& c, auto k, auto v) {
            c.influence_includes_diagonal = parse_bool(k, v);
        };
        t["strength_rule"] = [](PipelineConfig& c, auto k, auto v) {
            if (v == "mean_rca") c.strength_rule = StrengthRule::mean_rca;
            else if (v == "fraction_above") c.strength_rule = StrengthRule::fraction_above;
            else throw ConfigError("config: " + std::string(k) + " must be mean_rca or fraction_above");
        };
        t["embedding"] = [](PipelineConfig& c, auto k, auto v) {
            if (v == "neighbor") c.embedding = EmbeddingMethod::neighbor;
            else if (v == "pca2") c.embedding = EmbeddingMethod::pca2;
            else throw ConfigError("config: " + std::string(k) + " must be neighbor or pca2");
        };
        t["n_neighbors"] = [](PipelineConfig& c, auto k, auto v) { c.neighbor.n_neighbors = parse_count(k, v, 2); };
        t["n_epochs"] = [](PipelineConfig& c, auto k, auto v) { c.neighbor.n_epochs = parse_count(k, v, 1); };
        t["cluster_eps"] = [](PipelineConfig& c, auto k, auto v) { c.density.eps = parse_real(k, v); };
        t["min_points"] = [](PipelineConfig& c, auto k, auto v) { c.density.min_points = parse_count(k, v, 1); };
        t["baseline"] = [](PipelineConfig& c, auto k, auto v) { c.baseline = parse_window(k, v); };
        t["outcome"] = [](PipelineConfig& c, auto k, auto v) { c.outcome = parse_window(k, v); };
        t["reference_cluster"] = [](PipelineConfig& c, auto k, auto v) {
            c.design.reference_cluster = static_cast<int>(parse_integer(k, v));
        };
        t["reference_tier"] = [](PipelineConfig& c, auto k, auto v) {
            c.design.reference_tier = static_cast<int>(parse_integer(k, v));
        };
        t["cluster_effects"] = [](PipelineConfig& c, auto k, auto v) { c.design.cluster_effects = parse_bool(k, v); };
        t["tier_effects"] = [](PipelineConfig& c, auto k, auto v) { c.design.tier_effects = parse_bool(k, v); };
        t["se"] = [](PipelineConfig& c, auto k, auto v) {
            if (v == "robust") c.se_type = StandardErrors::robust;
            else if (v == "classical") c.se_type = StandardErrors::classical;
            else throw ConfigError("config: " + std::string(k) + " must be robust or classical");
        };
        t["input_aggregation"] = [](PipelineConfig& c, auto k, auto v) {
            if (v == "simple_mean") c.aggregation = InputAggregation::simple_mean;
            else if (v == "trade_weighted") c.aggregation = InputAggregation::trade_weighted;
            else throw ConfigError("config: " + std::string(k) + " must be simple_mean or trade_weighted");
        };
        t["sweep_length"] = [](PipelineConfig& c, auto k, auto v) { c.sweep_length = parse_count(k, v, 1); };
        t["sweep_step"] = [](PipelineConfig& c, auto k, auto v) { c.sweep_step = parse_count(k, v, 1); };
        t["sweep_min_gap"] = [](PipelineConfig& c, auto k, auto v) { c.sweep_min_gap = parse_count(k, v, 0); };

        t["synth.out_dir"] = [](PipelineConfig& c, auto, auto v) { c.synth_out = std::string(v); };
        t["synth.n_countries"] = [](PipelineConfig& c, auto k, auto v) { c.synth.n_countries = parse_count(k, v, 1); };
        t["synth.n_products"] = [](PipelineConfig& c, auto k, auto v) { c.synth.n_products = parse_count(k, v, 1); };
        t["synth.n_years"] = [](PipelineConfig& c, auto k, auto v) { c.synth.n_years = parse_count(k, v, 1); };
        t["synth.first_year"] = [](PipelineConfig& c, auto k, auto v) { c.synth.first_year = parse_count(k, v, 0); };
        t["synth.n_true_links"] = [](PipelineConfig& c, auto k, auto v) { c.synth.n_true_links = parse_count(k, v, 0); };
        t["synth.n_decoy_links"] = [](PipelineConfig& c, auto k, auto v) {
            c.synth.n_decoy_links = parse_count(k, v, 0);
        };
        t["synth.link_strength"] = [](PipelineConfig& c, auto k, auto v) { c.synth.link_strength = parse_real(k, v); };
        t["synth.value_sigma"] = [](PipelineConfig& c, auto k, auto v) { c.synth.value_sigma = parse_real(k, v); };
        t["synth.size_sigma"] = [](PipelineConfig& c, auto k, auto v) { c.synth.size_sigma = parse_real(k, v); };
        t["synth.partner_sigma"] = [](PipelineConfig& c, auto k, auto v) { c.synth.partner_sigma = parse_real(k, v); };
        t["synth.noise_scale"] = [](PipelineConfig& c, auto k, auto v) { c.synth.noise_scale = parse_real(k, v); };
        t["synth.plant_outcome"] = [](PipelineConfig& c, auto k, auto v) { c.synth.plant_outcome = parse_bool(k, v); };
        t["synth.baseline"] = [](PipelineConfig& c, auto k, auto v) { c.synth.baseline = parse_window(k, v); };
        t["synth.outcome"] = [](PipelineConfig& c, auto k, auto v) { c.synth.outcome = parse_window(k, v); };
        t["synth.intercept"] = [](PipelineConfig& c, auto k, auto v) { c.synth.planted_intercept = parse_real(k, v); };
        for (std::size_t i = 0; i < kCovariateCount; ++i) {
            t[std::string("synth.slope.") + kCovariateNames[i]] = [i](PipelineConfig& c, auto k, auto v) {
                c.synth.planted_slopes[i] = parse_real(k, v);
            };
        }
        return t;
    }();
    return table;
}

void resolve_path(fs::path& path, const fs::path& base_dir) {
    if (!path.empty() && path.is_relative() && !base_dir.empty()) path = base_dir / path;
}

// ---------------------------------------------------------------- staging helpers

std::string read_manifest_hash(const fs::path& dir);

// The manifest hash is read only after a stage has checked its own inputs, so a missing
// predecessor artifact is reported by name.
struct Stage {
    const PipelineConfig& config;
    fs::path dir;

    std::string manifest() const { return read_manifest_hash(dir); }
};

fs::path require_input(const fs::path& dir, const std::string& name) {
    auto path = dir / name;
    if (!fs::exists(path)) throw DataError("missing input: " + name);
    return path;
}

std::uint64_t require_seed(const PipelineConfig& config) {
    if (!config.rng_seed) throw ConfigError("config: rng_seed is required");
    return *config.rng_seed;
}

std::uint64_t sub_seed(const PipelineConfig& config, std::string_view stage) {
    return mix_seed(require_seed(config), fnv1a(stage));
}

fs::path require_out_dir(const PipelineConfig& config) {
    if (config.out_dir.empty()) throw ConfigError("config: out_dir is required");
    fs::create_directories(config.out_dir);
    return config.out_dir;
}

std::string read_manifest_hash(const fs::path& dir) {
    const auto path = require_input(dir, "manifest.json");
    const auto doc = nlohmann::json::parse(io::read_file(path), nullptr, false);
    if (doc.is_discarded() || !doc.contains("hash") || !doc["hash"].is_string()) {
        throw DataError("malformed manifest.json");
    }
    return doc["hash"].get<std::string>();
}

std::string with_header(const std::string& manifest, const std::string& body) {
    return "# manifest: " + manifest + "\n" + body;
}

std::string json_text(const ordered_json& doc) { return doc.dump(2) + "\n"; }

ordered_json report_json(const IngestReport& report) {
    ordered_json doc = ordered_json::object();
    doc["rows_read"] = report.rows_read;
    doc["rows_accepted"] = report.rows_accepted;
    doc["rejected"] = report.rejected;
    doc["duplicates_merged"] = report.duplicates_merged;
    doc["offenders"] = report.offenders;
    return doc;
}

fs::path require_file(const fs::path& path, const char* key) {
    if (path.empty()) throw ConfigError(std::string("config: ") + key + " path is required");
    if (!fs::exists(path)) throw DataError("missing input: " + path.string());
    return path;
}

// Region PV is the mean of the members' PV in that year.
void add_region_stability(StabilityPanel& stability, const CountryCode& region, const std::set<CountryCode>& members) {
    std::map<Year, std::pair<double, int>> sums;
    for (const auto& [key, pv] : stability.entries()) {
        if (!members.contains(key.first)) continue;
        auto& [sum, count] = sums[key.second];
        sum += pv;
        ++count;
    }
    for (const auto& [year, acc] : sums) stability.insert(region, year, acc.first / acc.second);
}

// ---------------------------------------------------------------- stages

void stage_ingest(const PipelineConfig& config) {
    const auto dir = require_out_dir(config);
    const auto trade_path = require_file(config.trade, "trade");
    const auto pv_path = require_file(config.pv, "pv");
    const auto links_path = require_file(config.links, "links");
    require_seed(config);

    auto panel = load_trade_csv(trade_path, config.ingest);
    auto stability = load_pv_csv(pv_path);
    const auto links = load_candidate_links(links_path, config.min_votes, config.total_repetitions);
    const IngestReport trade_report = panel.report;
    for (const auto& [region, members] : config.regions) {
        panel = aggregate_region(panel, members, region);
        add_region_stability(stability, region, members);
    }

    const std::string config_hash = hex_digest(fnv1a(config.canonical()));
    ordered_json inputs = ordered_json::object();
    std::uint64_t combined = fnv1a(config_hash);
    combined = fnv1a(kVersion, combined);
    for (const auto& [name, path] : {std::pair{"trade", trade_path}, {"pv", pv_path}, {"links", links_path}}) {
        const auto digest = hex_digest(fnv1a(io::read_file(path)));
        inputs[name] = {{"path", path.string()}, {"digest", digest}};
        combined = fnv1a(digest, combined);
    }
    const std::string hash = hex_digest(combined);

    ordered_json manifest = ordered_json::object();
    manifest["hash"] = hash;
    manifest["version"] = kVersion;
    manifest["config_hash"] = config_hash;
    manifest["inputs"] = inputs;
    std::vector<std::string> lines;
    std::istringstream canonical(config.canonical());
    for (std::string line; std::getline(canonical, line);) lines.push_back(line);
    manifest["config"] = lines;
    io::write_atomic(dir / "manifest.json", json_text(manifest));

    io::write_atomic(dir / "trade_clean.csv", with_header(hash, trade_csv(panel)));
    io::write_atomic(dir / "pv_clean.csv", with_header(hash, pv_csv(stability)));
    io::write_atomic(dir / "links_candidates.csv", with_header(hash, links_csv(links)));

    ordered_json report = ordered_json::object();
    report["manifest"] = hash;
    report["trade"] = report_json(trade_report);
    report["trade"]["countries"] = panel.countries().size();
    report["trade"]["products"] = panel.products().size();
    report["trade"]["years"] = panel.years().size();
    report["pv"] = report_json(stability.report);
    report["links"] = {{"accepted", links.links.size()},         {"below_threshold", links.below_threshold},
                       {"self_loops", links.self_loops},         {"duplicates", links.duplicates},
                       {"invalid", links.invalid},               {"warnings", links.warnings}};
    report["regions"] = ordered_json::object();
    for (const auto& [region, members] : config.regions) {
        report["regions"][region] = std::vector<std::string>(members.begin(), members.end());
    }
    io::write_atomic(dir / "ingest_report.json", json_text(report));
}

TradePanel load_clean_trade(const Stage& stage) {
    IngestConfig ingest = stage.config.ingest;
    return load_trade_csv(require_input(stage.dir, "trade_clean.csv"), ingest);
}

ProductionNetwork load_network(const Stage& stage) {
    return parse_network_json(io::read_file(require_input(stage.dir, "network.json")));
}

void stage_validate_links(const Stage& stage) {
    const auto trade_path = require_input(stage.dir, "trade_clean.csv");
    const auto links_path = require_input(stage.dir, "links_candidates.csv");
    const auto panel = load_trade_csv(trade_path, stage.config.ingest);
    const auto candidates = load_candidate_links(links_path, stage.config.min_votes, stage.config.total_repetitions);
    LinkTestConfig test;
    test.z_threshold = stage.config.z_threshold;
    test.n_perm = stage.config.n_perm;
    test.seed = sub_seed(stage.config, "validate-links");
    test.series = stage.config.series;
    test.jobs = stage.config.jobs;
    const auto validation = validate_links(candidates, panel, test);
    io::write_atomic(stage.dir / "links_validated.csv", with_header(stage.manifest(), links_validated_csv(validation)));
}

void stage_build_net(const Stage& stage) {
    const auto edges = read_validated_edges(require_input(stage.dir, "links_validated.csv"));
    const auto network = build_network(edges, stage.config.seeds);
    io::write_atomic(stage.dir / "network.json", network_json(network, stage.manifest()));
}

void stage_indicators(const Stage& stage) {
    require_input(stage.dir, "trade_clean.csv");
    const auto pv_path = require_input(stage.dir, "pv_clean.csv");
    const auto network = load_network(stage);
    const auto panel = load_clean_trade(stage);
    const auto stability = load_pv_csv(pv_path);
    IndicatorConfig config;
    config.risk = stage.config.risk;
    config.influence_includes_diagonal = stage.config.influence_includes_diagonal;
    config.jobs = stage.config.jobs;
    const auto indicators = compute_indicator_panel(panel, stability, network, panel.years(), config);
    io::write_atomic(stage.dir / "indicators.csv", indicators_csv(indicators, stage.manifest()));

    ordered_json report = ordered_json::object();
    report["manifest"] = stage.manifest();
    report["records"] = indicators.records().size();
    report["skipped_products"] = indicators.skipped_products;
    report["pv_resolution"] = {{"exact", indicators.pv_stats.exact},
                               {"nearest_year", indicators.pv_stats.nearest_year},
                               {"year_median", indicators.pv_stats.year_median},
                               {"config_default", indicators.pv_stats.config_default}};
    io::write_atomic(stage.dir / "indicators_report.json", json_text(report));
}

void stage_scores(const Stage& stage) {
    require_input(stage.dir, "trade_clean.csv");
    const auto indicators_path = require_input(stage.dir, "indicators.csv");
    const auto network = load_network(stage);
    const auto panel = load_clean_trade(stage);
    const auto indicators = read_indicators_csv(indicators_path);
    const auto model = fit_pca(indicators);
    const auto scores = compute_scores(panel, indicators, network, model);
    const auto strengths =
        compute_strength_table(scores, network, panel.countries(), panel.years(), stage.config.strength_rule);
    io::write_atomic(stage.dir / "pca.json", pca_json(model, stage.manifest()));
    io::write_atomic(stage.dir / "scores.csv", scores_csv(scores, stage.manifest()));
    io::write_atomic(stage.dir / "strengths.csv", strengths_csv(strengths, stage.manifest()));
}

void stage_profiles(const Stage& stage) {
    require_input(stage.dir, "trade_clean.csv");
    const auto indicators_path = require_input(stage.dir, "indicators.csv");
    const auto scores_path = require_input(stage.dir, "scores.csv");
    const auto strengths_path = require_input(stage.dir, "strengths.csv");
    const auto network = load_network(stage);
    const auto panel = load_clean_trade(stage);
    const auto indicators = read_indicators_csv(indicators_path);
    const auto scores = read_scores_csv(scores_path);
    const auto input_sets = input_product_sets(read_strengths_csv(strengths_path));
    const auto profiles = build_profiles(panel, indicators, scores, network, input_sets, stage.config.jobs);
    io::write_atomic(stage.dir / "profiles.csv", profiles_csv(profiles, stage.manifest()));
}

void stage_cluster(const Stage& stage) {
    const auto profiles = read_profiles_csv(require_input(stage.dir, "profiles.csv"));
    if (profiles.empty()) throw DataError("no dependency profiles to cluster");
    const auto features = normalize_features(profiles);
    if (features.values.cols() == 0) throw DataError("every profile feature is constant or missing");

    auto method = stage.config.embedding;
    std::string note;
    if (method == EmbeddingMethod::neighbor && static_cast<std::size_t>(features.values.rows()) < kMinNeighborRows) {
        method = EmbeddingMethod::pca2;
        note = "too few profiles for the neighbor embedding; used pca2";
    }
    const auto embedding = embed_2d(features.values, method, sub_seed(stage.config, "cluster"), stage.config.neighbor);
    const auto clustering = cluster_density(embedding.coords, stage.config.density);

    // Outlier years do not vote; a country with only outlier years keeps label -1.
    std::vector<LabeledYear> voting;
    std::vector<LabeledYear> outliers;
    for (std::size_t i = 0; i < profiles.size(); ++i) {
        LabeledYear entry{profiles[i].country, profiles[i].year, clustering.labels[i]};
        (entry.label < 0 ? outliers : voting).push_back(std::move(entry));
    }
    auto modal = modal_assignment(voting);
    for (const auto& entry : outliers) modal.emplace(entry.country, -1);

    io::write_atomic(stage.dir / "embedding.csv", embedding_csv(profiles, embedding, clustering, stage.manifest()));
    io::write_atomic(stage.dir / "clusters.csv", clusters_csv(modal, stage.manifest()));

    ordered_json report = ordered_json::object();
    report["manifest"] = stage.manifest();
    report["method"] = method == EmbeddingMethod::neighbor ? "neighbor" : "pca2";
    if (!note.empty()) report["note"] = note;
    report["profiles"] = profiles.size();
    report["features_kept"] = features.kept_features.size();
    std::vector<std::string> dropped;
    for (auto index : features.dropped_features) dropped.push_back(profile_feature_name(index));
    report["features_dropped"] = dropped;
    report["eps"] = clustering.eps;
    report["min_points"] = stage.config.density.min_points;
    report["n_clusters"] = clustering.n_clusters;
    report["n_outliers"] = clustering.n_outliers;
    std::map<int, std::size_t> sizes;
    for (const auto& [country, label] : modal) ++sizes[label];
    report["countries_per_cluster"] = ordered_json::object();
    for (const auto& [label, count] : sizes) report["countries_per_cluster"][std::to_string(label)] = count;
    io::write_atomic(stage.dir / "cluster_report.json", json_text(report));
}

struct RegressionData {
    ScoreTable scores;
    IndicatorPanel indicators;
    ProductionNetwork network;
    std::map<CountryCode, int> clusters;
    std::optional<TradePanel> panel;

    RegressionInputs inputs(const PipelineConfig& config) const {
        RegressionInputs in;
        in.rca = rca_from_scores(scores);
        in.indicators = &indicators;
        in.network = &network;
        in.clusters = &clusters;
        in.panel = panel ? &*panel : nullptr;
        in.aggregation = config.aggregation;
        in.design = config.design;
        in.se_type = config.se_type;
        return in;
    }
};

RegressionData load_regression_data(const Stage& stage) {
    const auto scores_path = require_input(stage.dir, "scores.csv");
    const auto indicators_path = require_input(stage.dir, "indicators.csv");
    const auto network_path = require_input(stage.dir, "network.json");
    const auto clusters_path = require_input(stage.dir, "clusters.csv");
    RegressionData data;
    data.scores = read_scores_csv(scores_path);
    data.indicators = read_indicators_csv(indicators_path);
    data.network = parse_network_json(io::read_file(network_path));
    data.clusters = read_clusters_csv(clusters_path);
    if (stage.config.aggregation == InputAggregation::trade_weighted) data.panel = load_clean_trade(stage);
    return data;
}

const char* se_name(StandardErrors se) { return se == StandardErrors::robust ? "HC1" : "classical"; }

void stage_regress(const Stage& stage) {
    const auto data = load_regression_data(stage);
    const auto run = run_regression(data.inputs(stage.config), stage.config.baseline, stage.config.outcome);
    const auto& result = run.result;
    io::write_atomic(stage.dir / "regression.csv", regression_csv(result, stage.manifest()));

    ordered_json summary = ordered_json::object();
    summary["manifest"] = stage.manifest();
    summary["baseline_window"] = stage.config.baseline.str();
    summary["outcome_window"] = stage.config.outcome.str();
    summary["n_obs"] = result.n_obs;
    summary["n_terms"] = result.terms.size();
    summary["df_resid"] = result.df_resid;
    summary["r2"] = result.r2;
    summary["standard_errors"] = se_name(result.se_type);
    summary["reference_cluster"] = result.reference_cluster ? ordered_json(*result.reference_cluster) : ordered_json();
    summary["reference_tier"] = result.reference_tier ? ordered_json(*result.reference_tier) : ordered_json();
    summary["observations"] = {{"candidates", run.report.candidates},
                               {"dropped_outcome", run.report.dropped_outcome},
                               {"dropped_covariates", run.report.dropped_covariates},
                               {"dropped_cluster", run.report.dropped_cluster}};
    io::write_atomic(stage.dir / "regression_summary.json", json_text(summary));
}

void stage_sweep(const Stage& stage) {
    const auto data = load_regression_data(stage);
    Year first = 0;
    Year last = -1;
    for (const auto& record : data.scores.records()) {
        if (last < first) {
            first = last = record.year;
        } else {
            first = std::min(first, record.year);
            last = std::max(last, record.year);
        }
    }
    const auto grid = last < first ? std::vector<std::pair<YearWindow, YearWindow>>{}
                                   : default_sweep_grid(first, last, stage.config.sweep_length,
                                                        stage.config.sweep_step, stage.config.sweep_min_gap);
    const auto sweep = window_sweep(data.inputs(stage.config), grid, stage.config.jobs);
    io::write_atomic(stage.dir / "sweep.csv", sweep_csv(sweep, stage.manifest()));
    io::write_atomic(stage.dir / "sweep_summary.csv", sweep_summary_csv(sweep, stage.manifest()));
}

void stage_synth(const PipelineConfig& config) {
    auto synth = config.synth;
    synth.rng_seed = sub_seed(config, "synth");
    const fs::path dir = config.synth_out.empty() ? require_out_dir(config) : config.synth_out;
    fs::create_directories(dir);
    const auto data = generate_data(synth);
    const std::string hash = hex_digest(fnv1a(kVersion, fnv1a(config.canonical())));
    io::write_atomic(dir / "trade.csv", with_header(hash, trade_csv(data.panel)));
    io::write_atomic(dir / "pv.csv", with_header(hash, pv_csv(data.stability)));
    io::write_atomic(dir / "links.csv", with_header(hash, links_csv(data.links)));
    ordered_json truth = ordered_json::object();
    truth["manifest"] = hash;
    const auto body = ordered_json::parse(truth_json(data.truth, synth));
    for (const auto& [key, value] : body.items()) truth[key] = value;
    io::write_atomic(dir / "truth.json", json_text(truth));
}

const std::map<std::string, void (*)(const Stage&), std::less<>>& stage_table() {
    static const std::map<std::string, void (*)(const Stage&), std::less<>> table{
        {"validate-links", stage_validate_links},
        {"build-net", stage_build_net},
        {"indicators", stage_indicators},
        {"scores", stage_scores},
        {"profiles", stage_profiles},
        {"cluster", stage_cluster},
        {"regress", stage_regress},
        {"sweep", stage_sweep},
    };
    return table;
}

void run_single(const std::string& name, const PipelineConfig& config) {
    if (name == "ingest") return stage_ingest(config);
    if (name == "synth") return stage_synth(config);
    auto it = stage_table().find(name);
    if (it == stage_table().end()) throw ConfigError("unknown stage: " + name);
    const auto dir = require_out_dir(config);
    Stage stage{config, dir};
    it->second(stage);
}

}  // namespace

std::string PipelineConfig::canonical() const {
    std::ostringstream out;
    out << "rng_seed=" << (rng_seed ? std::to_string(*rng_seed) : "") << "\n";
    out << "year_min=" << ingest.year_min << "\nyear_max=" << ingest.year_max << "\n";
    out << "max_reject_fraction=" << format_double(ingest.max_reject_fraction) << "\n";
    for (const auto& [region, members] : regions) {
        out << "region." << region << "=";
        bool first = true;
        for (const auto& member : members) {
            out << (first ? "" : ",") << member;
            first = false;
        }
        out << "\n";
    }
    out << "seeds=";
    bool first = true;
    for (HsCode seed : seeds) {
        out << (first ? "" : ",") << seed.str();
        first = false;
    }
    out << "\n";
    out << "min_votes=" << min_votes << "\ntotal_repetitions=" << total_repetitions << "\n";
    out << "z_threshold=" << format_double(z_threshold) << "\nn_perm=" << n_perm << "\n";
    out << "correlation_mode=" << (series.mode == CorrelationMode::pooled ? "pooled" : "within_year") << "\n";
    out << "log1p=" << (series.log1p ? "true" : "false") << "\n";
    out << "default_pv=" << format_double(risk.default_pv) << "\nclamp_delta=" << format_double(risk.clamp_delta)
        << "\n";
    out << "influence_diagonal=" << (influence_includes_diagonal ? "true" : "false") << "\n";
    out << "strength_rule=" << (strength_rule == StrengthRule::mean_rca ? "mean_rca" : "fraction_above") << "\n";
    out << "embedding=" << (embedding == EmbeddingMethod::neighbor ? "neighbor" : "pca2") << "\n";
    out << "n_neighbors=" << neighbor.n_neighbors << "\nn_epochs=" << neighbor.n_epochs << "\n";
    out << "cluster_eps=" << format_double(density.eps) << "\nmin_points=" << density.min_points << "\n";
    out << "baseline=" << baseline.str() << "\noutcome=" << outcome.str() << "\n";
    out << "reference_cluster=" << design.reference_cluster << "\nreference_tier=" << design.reference_tier << "\n";
    out << "cluster_effects=" << (design.cluster_effects ? "true" : "false") << "\n";
    out << "tier_effects=" << (design.tier_effects ? "true" : "false") << "\n";
    out << "se=" << (se_type == StandardErrors::robust ? "robust" : "classical") << "\n";
    out << "input_aggregation=" << (aggregation == InputAggregation::simple_mean ? "simple_mean" : "trade_weighted")
        << "\n";
    out << "sweep_length=" << sweep_length << "\nsweep_step=" << sweep_step << "\nsweep_min_gap=" << sweep_min_gap
        << "\n";
    out << "synth.n_countries=" << synth.n_countries << "\nsynth.n_products=" << synth.n_products
        << "\nsynth.n_years=" << synth.n_years << "\nsynth.first_year=" << synth.first_year
        << "\nsynth.n_true_links=" << synth.n_true_links << "\nsynth.n_decoy_links=" << synth.n_decoy_links << "\n";
    out << "synth.link_strength=" << format_double(synth.link_strength)
        << "\nsynth.value_sigma=" << format_double(synth.value_sigma)
        << "\nsynth.size_sigma=" << format_double(synth.size_sigma)
        << "\nsynth.partner_sigma=" << format_double(synth.partner_sigma)
        << "\nsynth.noise_scale=" << format_double(synth.noise_scale) << "\n";
    out << "synth.plant_outcome=" << (synth.plant_outcome ? "true" : "false") << "\n";
    out << "synth.baseline=" << synth.baseline_window().str() << "\nsynth.outcome=" << synth.outcome_window().str()
        << "\n";
    out << "synth.intercept=" << (synth.planted_intercept ? format_double(*synth.planted_intercept) : "auto") << "\n";
    for (std::size_t i = 0; i < kCovariateCount; ++i) {
        out << "synth.slope." << kCovariateNames[i] << "=" << format_double(synth.planted_slopes[i]) << "\n";
    }
    return out.str();
}

PipelineConfig parse_config(const std::string& text, const fs::path& base_dir) {
    PipelineConfig config;
    std::istringstream in(text);
    std::string line;
    int line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto view = io::trim(line);
        if (view.empty()) continue;
        const auto eq = view.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError("config line " + std::to_string(line_number) + ": expected key = value");
        }
        const auto key = io::trim(view.substr(0, eq));
        const auto value = io::trim(view.substr(eq + 1));
        if (key.starts_with("region.")) {
            const auto region = parse_country(key, key.substr(7));
            std::set<CountryCode> members;
            for (const auto& item : split_list(value)) members.insert(parse_country(key, item));
            if (members.empty()) throw ConfigError("config: " + std::string(key) + " has no members");
            config.regions[region] = std::move(members);
            continue;
        }
        auto it = setters().find(key);
        if (it == setters().end()) {
            throw ConfigError("config line " + std::to_string(line_number) + ": unknown key '" + std::string(key) + "'");
        }
        it->second(config, key, value);
    }
    resolve_path(config.trade, base_dir);
    resolve_path(config.pv, base_dir);
    resolve_path(config.links, base_dir);
    resolve_path(config.out_dir, base_dir);
    resolve_path(config.synth_out, base_dir);
    if (config.ingest.year_min > config.ingest.year_max) throw ConfigError("config: year_min exceeds year_max");
    return config;
}

PipelineConfig load_config(const fs::path& path) {
    if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
    return parse_config(io::read_file(path), path.parent_path());
}

void run_stage(const std::string& name, const PipelineConfig& config) {
    if (name != "pipeline") return run_single(name, config);
    for (const auto& stage : kStages) run_single(stage, config);
}

int exit_code_for(const std::exception& error) {
    if (dynamic_cast<const ConfigError*>(&error) != nullptr) return 2;
    if (dynamic_cast<const DataError*>(&error) != nullptr) return 3;
    if (dynamic_cast<const NumericalError*>(&error) != nullptr) return 4;
    return 1;
}

std::string error_json(const std::string& stage, const std::exception& error) {
    const int code = exit_code_for(error);
    const char* type = code == 2 ? "config_error" : code == 3 ? "data_error" : code == 4 ? "numerical_error" : "error";
    ordered_json doc = ordered_json::object();
    doc["error"] = {{"stage", stage}, {"type", type}, {"message", error.what()}, {"exit_code", code}};
    return doc.dump();
}

}  // namespace rarenet
