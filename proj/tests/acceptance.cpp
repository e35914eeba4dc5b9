// Acceptance suite: one PASS/FAIL line per criterion. Exit status is non-zero if any criterion fails.

#include <chrono>
#include <cstdlib>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>
#include <unistd.h>
#include <vector>

#include "oracles.hpp"
#include "rarenet/common.hpp"
#include "rarenet/econometrics.hpp"
#include "rarenet/indicators.hpp"
#include "rarenet/io.hpp"
#include "rarenet/netbuild.hpp"
#include "rarenet/pipeline.hpp"
#include "rarenet/profiles.hpp"
#include "rarenet/scores.hpp"
#include "rarenet/synthgen.hpp"

namespace fs = std::filesystem;
using namespace rarenet;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* format, auto... args) {
    char buffer[512];
    std::snprintf(buffer, sizeof buffer, format, args...);
    return buffer;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

fs::path scratch_dir(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("rarenet_acceptance_" + std::to_string(::getpid())) / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// ---------------------------------------------------------------- 1. STR vs Neumann series

Outcome str_oracle() {
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<int> size(1, 30);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double worst = 0.0;
    double worst_converged = 0.0;
    double worst_radius = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const int n = size(rng);
        Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
        for (int i = 0; i < n; ++i) {
            double sum = 0.0;
            for (int j = 0; j < n; ++j) {
                if (i != j) sum += (w(i, j) = unit(rng));
            }
            if (sum > 0.0) w.row(i) *= 0.9 * unit(rng) / sum;
        }
        const Eigen::VectorXd direct = systemic_trade_risk(w);
        const Eigen::VectorXd series = oracle::neumann_str(w, 60);
        worst = std::max(worst, (direct - series).cwiseAbs().maxCoeff());
        // The truncated series is off by up to r^60 / (1 - r); a long series separates that from solver error.
        worst_converged = std::max(worst_converged, (direct - oracle::neumann_str(w, 2000)).cwiseAbs().maxCoeff());
        if (n > 1) worst_radius = std::max(worst_radius, Eigen::EigenSolver<Eigen::MatrixXd>(w).eigenvalues().cwiseAbs().maxCoeff());
    }
    Eigen::MatrixXd one_way(2, 2);
    one_way << 0.0, 0.5, 0.0, 0.0;
    Eigen::MatrixXd cycle(2, 2);
    cycle << 0.0, 0.5, 0.5, 0.0;
    const auto a = systemic_trade_risk(one_way);
    const auto b = systemic_trade_risk(cycle);
    const double analytic = std::max({std::abs(a(0) - 1.5), std::abs(a(1) - 1.0), std::abs(b(0) - 2.0),
                                      std::abs(b(1) - 2.0)});
    return {worst <= 1e-9 && analytic <= 1e-12,
            fmt("200 matrices, max |direct - neumann60| = %.2e (max |direct - neumann2000| = %.2e, largest spectral "
                "radius %.3f); 2x2 analytic max error = %.2e",
                worst, worst_converged, worst_radius, analytic)};
}

// ---------------------------------------------------------------- 2. permutation-test calibration

Outcome permutation_calibration() {
    SynthConfig null_config;
    null_config.n_countries = 20;
    null_config.n_products = 100;
    null_config.n_years = 5;
    null_config.n_true_links = 0;
    null_config.n_decoy_links = 0;
    null_config.plant_outcome = false;
    std::vector<double> p_values;
    for (int trial = 0; trial < 500; ++trial) {
        null_config.rng_seed = mix_seed(2, static_cast<std::uint64_t>(trial));
        const auto data = generate_data(null_config);
        const SeriesCache cache(data.panel);
        std::vector<HsCode> products;
        for (HsCode p : cache.products()) {
            if (p != data.truth.filler) products.push_back(p);
        }
        std::mt19937_64 rng(null_config.rng_seed);
        std::uniform_int_distribution<std::size_t> pick(0, products.size() - 1);
        const HsCode input = products[pick(rng)];
        HsCode output = input;
        while (output == input) output = products[pick(rng)];
        std::vector<HsCode> pool;
        for (HsCode p : cache.products()) {
            if (p != input) pool.push_back(p);
        }
        p_values.push_back(permutation_test(cache, input, output, pool, 1000, rng()).p_value);
    }
    const auto ks = oracle::ks_uniform(p_values);

    SynthConfig planted;
    planted.n_true_links = 1;
    planted.n_decoy_links = 50;
    planted.link_strength = 0.95;
    planted.plant_outcome = false;
    int true_kept = 0;
    std::size_t decoys = 0;
    std::size_t decoys_kept = 0;
    double worst_decoy_rate = 0.0;
    const int panels = 10;
    for (int seed = 0; seed < panels; ++seed) {
        planted.rng_seed = mix_seed(22, static_cast<std::uint64_t>(seed));
        const auto data = generate_data(planted);
        LinkTestConfig test;
        test.seed = planted.rng_seed;
        const auto validation = validate_links(data.links, data.panel, test);
        const auto truth = data.truth.true_edges.front();
        std::size_t panel_decoys = 0;
        std::size_t panel_kept = 0;
        for (const auto& audit : validation.audit) {
            if (audit.candidate.input == truth.first && audit.candidate.output == truth.second) {
                true_kept += audit.retained ? 1 : 0;
            } else {
                ++panel_decoys;
                panel_kept += audit.retained ? 1 : 0;
            }
        }
        decoys += panel_decoys;
        decoys_kept += panel_kept;
        worst_decoy_rate = std::max(worst_decoy_rate, static_cast<double>(panel_kept) / static_cast<double>(panel_decoys));
    }
    const bool pass = ks.p_value >= 0.01 && true_kept == panels && worst_decoy_rate <= 0.10;
    return {pass, fmt("null: 500 tests, KS D = %.4f, p = %.3f; planted: true link kept in %d/%d panels, "
                      "decoys kept %zu/%zu (worst panel %.0f%%)",
                      ks.d, ks.p_value, true_kept, panels, decoys_kept, decoys, 100.0 * worst_decoy_rate)};
}

// ---------------------------------------------------------------- 3. tiers vs brute force

Outcome tier_oracle() {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> size(1, 50);
    std::uniform_real_distribution<double> density(0.02, 0.3);
    int mismatches = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const int n = size(rng);
        const auto edges = oracle::random_dag(n, density(rng), rng);
        std::set<int> seeds;
        std::uniform_int_distribution<int> node(0, n - 1);
        const int n_seeds = std::uniform_int_distribution<int>(1, std::min(n, 3))(rng);
        while (static_cast<int>(seeds.size()) < n_seeds) seeds.insert(node(rng));

        auto code = [](int v) { return HsCode(static_cast<std::uint32_t>(100000 + v)); };
        std::vector<ValidatedEdge> validated;
        for (auto [a, b] : edges) validated.push_back({code(a), code(b), 1.0});
        std::set<HsCode> seed_codes;
        for (int s : seeds) seed_codes.insert(code(s));
        const auto tiers = assign_tiers(validated, seed_codes);
        const auto expected = oracle::brute_force_tiers(n, edges, seeds);
        std::map<HsCode, int> expected_codes;
        for (auto [v, t] : expected) expected_codes[code(v)] = t;
        if (tiers != expected_codes) ++mismatches;
    }
    return {mismatches == 0, fmt("100 random DAGs (<= 50 nodes), %d mismatches against Floyd-Warshall", mismatches)};
}

// ---------------------------------------------------------------- 4. indicator identities

TradePanel random_panel(std::mt19937_64& rng, int n_countries, int n_products, int n_years) {
    std::uniform_real_distribution<double> value(0.0, 100.0);
    std::bernoulli_distribution present(0.6);
    std::vector<TradeFlow> flows;
    for (int y = 0; y < n_years; ++y)
        for (int p = 0; p < n_products; ++p)
            for (int a = 0; a < n_countries; ++a)
                for (int b = 0; b < n_countries; ++b) {
                    if (a == b || !present(rng)) continue;
                    flows.push_back({2010 + y, "C" + std::to_string(10 + a), "C" + std::to_string(10 + b),
                                     HsCode(static_cast<std::uint32_t>(100000 + p)), value(rng)});
                }
    return TradePanel::from_flows(std::move(flows));
}

Outcome indicator_identities() {
    std::mt19937_64 rng(4);
    std::size_t exposure_checks = 0;
    std::size_t exposure_violations = 0;
    std::size_t hhi_violations = 0;
    double worst_rca = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const auto panel = random_panel(rng, 6, 8, 3);
        for (Year year : panel.years()) {
            for (const auto& country : panel.countries()) {
                double identity = 0.0;
                bool any = false;
                for (HsCode product : panel.products()) {
                    if (auto e = exposure(panel, country, product, year)) {
                        ++exposure_checks;
                        if (!(*e >= 0.0 && *e <= 1.0)) ++exposure_violations;
                    }
                    if (auto h = import_concentration(panel, country, product, year)) {
                        std::size_t suppliers = 0;
                        for (const auto& flow : panel.flows_for(product, year)) {
                            if (flow.importer == country && flow.value > 0.0) ++suppliers;
                        }
                        if (*h < 1.0 / static_cast<double>(suppliers) - 1e-15 || *h > 1.0 + 1e-15) ++hhi_violations;
                    }
                    if (auto r = rca(panel, country, product, year)) {
                        identity += *r * panel.world_exports(product, year) / panel.world_total(year);
                        any = true;
                    }
                }
                if (any) worst_rca = std::max(worst_rca, std::abs(identity - 1.0));
            }
        }
    }
    // Equal shares from n suppliers give exactly 1/n.
    double worst_equal = 0.0;
    for (int n = 1; n <= 40; ++n) {
        std::vector<TradeFlow> flows;
        for (int a = 0; a < n; ++a) flows.push_back({2015, "S" + std::to_string(100 + a), "IMP", HsCode(284690), 7.25});
        const auto panel = TradePanel::from_flows(std::move(flows));
        worst_equal = std::max(worst_equal, std::abs(*import_concentration(panel, "IMP", HsCode(284690), 2015) - 1.0 / n));
    }
    const bool pass = exposure_violations == 0 && hhi_violations == 0 && worst_equal == 0.0 && worst_rca <= 1e-10;
    return {pass, fmt("exposure out of [0,1]: %zu/%zu; HHI below 1/n: %zu; equal-share |HHI - 1/n| max %.1e; "
                      "max |sum RCA x world share - 1| = %.2e",
                      exposure_violations, exposure_checks, hhi_violations, worst_equal, worst_rca)};
}

// ---------------------------------------------------------------- 5. OLS oracle and design shape

Outcome ols_oracle() {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> normal(0.0, 1.0);
    double worst_coef = 0.0;
    double worst_t = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 60 + trial * 4;
        const int k = 2 + trial % 12;
        Eigen::MatrixXd x(n, k);
        Eigen::VectorXd y(n);
        for (int i = 0; i < n; ++i) {
            x(i, 0) = 1.0;
            for (int j = 1; j < k; ++j) x(i, j) = normal(rng);
            y(i) = normal(rng);
            for (int j = 0; j < k; ++j) y(i) += 0.3 * (j + 1) * x(i, j) * (j % 2 == 0 ? 1.0 : -1.0);
        }
        std::vector<std::string> terms;
        for (int j = 0; j < k; ++j) terms.push_back("x" + std::to_string(j));
        const auto fit = ols_fit(x, y, terms);
        worst_coef = std::max(worst_coef, (fit.coef - oracle::normal_equations(x, y)).cwiseAbs().maxCoeff());

        Eigen::MatrixXd scaled = x;
        const int column = k - 1;
        scaled.col(column) *= 1000.0 * (trial + 1);
        for (auto se : {StandardErrors::robust, StandardErrors::classical}) {
            const auto base = ols_fit(x, y, terms, se);
            const auto rescaled = ols_fit(scaled, y, terms, se);
            worst_t = std::max(worst_t, (base.t - rescaled.t).cwiseAbs().maxCoeff());
        }
    }

    std::vector<RegressionObservation> observations;
    for (int i = 0; i < 200; ++i) {
        RegressionObservation obs;
        obs.country = "C" + std::to_string(i % 40);
        obs.product = HsCode(static_cast<std::uint32_t>(100000 + i));
        obs.cluster = i % 5;
        obs.tier = (i / 5) % 5;
        for (auto& c : obs.covariates) c = normal(rng);
        obs.delta_rca = normal(rng);
        observations.push_back(obs);
    }
    const auto design = build_design(observations);
    const auto& terms = design.terms;
    auto has = [&](const std::string& t) { return std::find(terms.begin(), terms.end(), t) != terms.end(); };
    const bool shape = design.x.cols() == 17 && terms.size() == 17 && design.reference_cluster == 1 &&
                       design.reference_tier == 0 && !has("cluster_1") && !has("tier_0") && has("cluster_0") &&
                       has("cluster_4") && has("tier_1") && has("tier_4");
    return {worst_coef <= 1e-8 && worst_t <= 1e-9 && shape,
            fmt("50 systems, max |beta - normal eq.| = %.2e; max t change under rescaling = %.2e; "
                "design columns = %ld (refs cluster %d, tier %d)",
                worst_coef, worst_t, static_cast<long>(design.x.cols()), design.reference_cluster.value_or(-1),
                design.reference_tier.value_or(-1))};
}

// ---------------------------------------------------------------- 6. sign recovery through the pipeline

PipelineConfig recovery_config(const fs::path& dir, std::uint64_t seed) {
    PipelineConfig config;
    config.rng_seed = seed;
    config.out_dir = dir / "out";
    config.synth_out = dir / "data";
    config.trade = dir / "data" / "trade.csv";
    config.pv = dir / "data" / "pv.csv";
    config.links = dir / "data" / "links.csv";
    config.synth.n_countries = 16;
    config.synth.n_products = 30;
    config.synth.n_years = 10;
    config.synth.first_year = 2014;
    config.synth.n_true_links = 20;
    config.synth.n_decoy_links = 20;
    config.synth.noise_scale = 0.05;
    config.synth.baseline = YearWindow{2014, 2015};
    config.synth.outcome = YearWindow{2022, 2023};
    config.baseline = *config.synth.baseline;
    config.outcome = *config.synth.outcome;
    config.n_perm = 500;
    return config;
}

Outcome sign_recovery() {
    const auto start = std::chrono::steady_clock::now();
    const std::vector<std::string> checked{"exposure_all", "hhi_all", "str_all", "hhi_inputs", "str_inputs", "rca_inputs"};
    std::map<std::string, double> planted;
    for (std::size_t i = 0; i < kCovariateCount; ++i) planted[kCovariateNames[i]] = kDefaultPlantedSlopes[i];

    int recovered = 0;
    int failures = 0;
    std::map<std::string, int> per_term;
    const int seeds = 100;
    for (int seed = 0; seed < seeds; ++seed) {
        const auto dir = scratch_dir("recovery_" + std::to_string(seed));
        const auto config = recovery_config(dir, static_cast<std::uint64_t>(1000 + seed));
        try {
            run_stage("synth", config);
            run_stage("pipeline", config);
        } catch (const std::exception&) {
            ++failures;
            fs::remove_all(dir);
            continue;
        }
        const auto table = io::read_csv(config.out_dir / "regression.csv");
        const auto term_col = table.column("term");
        const auto coef_col = table.column("coef");
        const auto p_col = table.column("p");
        int ok = 0;
        for (const auto& row : table.rows) {
            const auto& term = row[term_col];
            if (std::find(checked.begin(), checked.end(), term) == checked.end()) continue;
            const double coef = *io::parse_double(row[coef_col]);
            const double p = *io::parse_double(row[p_col]);
            if (coef * planted[term] > 0.0 && p < 0.05) {
                ++ok;
                ++per_term[term];
            }
        }
        if (ok == static_cast<int>(checked.size())) ++recovered;
        fs::remove_all(dir);
    }
    const double elapsed = seconds_since(start);
    std::string terms;
    for (const auto& t : checked) terms += fmt(" %s %d", t.c_str(), per_term[t]);
    return {recovered >= 90 && elapsed < 600.0,
            fmt("all six signs with p < 0.05 in %d/%d seeds (%d pipeline failures) in %.1f s; per term:%s", recovered,
                seeds, failures, elapsed, terms.c_str())};
}

// ---------------------------------------------------------------- 7. two-blob clustering

Outcome two_blob_clustering() {
    int exact_two = 0;
    int deterministic = 0;
    double worst_agreement = 1.0;
    const int trials = 10;
    for (int trial = 0; trial < trials; ++trial) {
        std::mt19937_64 rng(mix_seed(7, static_cast<std::uint64_t>(trial)));
        std::normal_distribution<double> normal(0.0, 1.0);
        const int per_blob = 60;
        constexpr int dims = 8;
        // Blob centers 10 sigma apart along a random direction.
        std::vector<double> direction(dims);
        double norm = 0.0;
        for (auto& v : direction) norm += (v = normal(rng)) * v;
        for (auto& v : direction) v /= std::sqrt(norm);
        std::vector<std::vector<std::optional<double>>> rows;
        std::vector<int> truth;
        for (int blob = 0; blob < 2; ++blob) {
            for (int i = 0; i < per_blob; ++i) {
                std::vector<std::optional<double>> row;
                for (int d = 0; d < dims; ++d) row.push_back(normal(rng) + 10.0 * blob * direction[static_cast<std::size_t>(d)]);
                rows.push_back(row);
                truth.push_back(blob);
            }
        }
        const auto features = normalize_features(rows);
        const std::uint64_t seed = rng();
        const auto first = cluster_density(embed_2d(features.values, EmbeddingMethod::neighbor, seed).coords);
        const auto second = cluster_density(embed_2d(features.values, EmbeddingMethod::neighbor, seed).coords);
        if (first.labels == second.labels) ++deterministic;
        if (first.n_clusters == 2) ++exact_two;
        // Best of the two label matchings; outliers count as disagreements.
        int same = 0;
        int swapped = 0;
        for (std::size_t i = 0; i < truth.size(); ++i) {
            same += first.labels[i] == truth[i] ? 1 : 0;
            swapped += first.labels[i] == 1 - truth[i] ? 1 : 0;
        }
        worst_agreement = std::min(worst_agreement, std::max(same, swapped) / static_cast<double>(truth.size()));
    }
    return {exact_two == trials && deterministic == trials && worst_agreement >= 0.98,
            fmt("%d trials: exactly 2 clusters in %d, min agreement %.1f%%, identical reruns %d", trials, exact_two,
                100.0 * worst_agreement, deterministic)};
}

// ---------------------------------------------------------------- 8. end-to-end determinism and budget

std::map<std::string, std::string> digests(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file()) out[entry.path().filename().string()] = hex_digest(fnv1a(io::read_file(entry.path())));
    }
    return out;
}

Outcome end_to_end() {
    const auto dir = scratch_dir("end_to_end");
    PipelineConfig config;
    config.rng_seed = 8;
    config.out_dir = dir / "out";
    config.synth_out = dir / "data";
    config.trade = dir / "data" / "trade.csv";
    config.pv = dir / "data" / "pv.csv";
    config.links = dir / "data" / "links.csv";
    config.baseline = config.synth.baseline_window();
    config.outcome = config.synth.outcome_window();

    run_stage("synth", config);
    const auto start = std::chrono::steady_clock::now();
    std::string error;
    try {
        run_stage("pipeline", config);
    } catch (const std::exception& e) {
        error = e.what();
    }
    const double first_run = seconds_since(start);
    const auto first = digests(config.out_dir);
    try {
        if (error.empty()) run_stage("pipeline", config);
    } catch (const std::exception& e) {
        error = e.what();
    }
    const auto second = digests(config.out_dir);

    const std::vector<std::string> expected{
        "manifest.json",    "trade_clean.csv", "pv_clean.csv",  "links_candidates.csv", "ingest_report.json",
        "links_validated.csv", "network.json",  "indicators.csv", "indicators_report.json", "pca.json",
        "scores.csv",       "strengths.csv",   "profiles.csv",  "embedding.csv",        "clusters.csv",
        "cluster_report.json", "regression.csv", "regression_summary.json", "sweep.csv", "sweep_summary.csv"};
    std::size_t present = 0;
    for (const auto& name : expected) present += first.contains(name) ? 1 : 0;
    fs::remove_all(dir);
    const bool pass = error.empty() && first_run < 60.0 && present == expected.size() && first == second;
    return {pass, fmt("12 countries / 20 products / 5 years: %.2f s, %zu/%zu artifacts, reruns %s%s%s", first_run,
                      present, expected.size(), first == second ? "byte-identical" : "differ",
                      error.empty() ? "" : "; error: ", error.c_str())};
}

}  // namespace

// Optional arguments select criteria by number, e.g. `acceptance 4 7`.
int main(int argc, char** argv) {
    std::set<std::size_t> selected;
    for (int i = 1; i < argc; ++i) selected.insert(static_cast<std::size_t>(std::atoi(argv[i])));
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"STR oracle equivalence", str_oracle},
        {"permutation-test calibration", permutation_calibration},
        {"tier oracle", tier_oracle},
        {"indicator identities", indicator_identities},
        {"OLS oracle and design shape", ols_oracle},
        {"sign recovery", sign_recovery},
        {"clustering recovery", two_blob_clustering},
        {"end-to-end determinism and budget", end_to_end},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        if (!selected.empty() && !selected.contains(i + 1)) continue;
        Outcome outcome;
        try {
            outcome = criteria[i].second();
        } catch (const std::exception& e) {
            outcome = {false, std::string("exception: ") + e.what()};
        }
        failed += outcome.pass ? 0 : 1;
        std::printf("%s  [%zu] %s: %s\n", outcome.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                    outcome.detail.c_str());
        std::fflush(stdout);
    }
    fs::remove_all(fs::temp_directory_path() / ("rarenet_acceptance_" + std::to_string(::getpid())));
    return failed == 0 ? 0 : 1;
}
