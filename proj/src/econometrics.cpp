#include "rarenet/econometrics.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "rarenet/parallel.hpp"

namespace rarenet {

RcaLookup rca_from_panel(const TradePanel& panel) {
    return [&panel](const CountryCode& country, HsCode product, Year year) {
        return rca(panel, country, product, year);
    };
}

RcaLookup rca_from_scores(const ScoreTable& scores) {
    return [&scores](const CountryCode& country, HsCode product, Year year) {
        return scores.rca(country, product, year);
    };
}

std::optional<double> window_mean_rca(const RcaLookup& rca, const CountryCode& country, HsCode product,
                                      const YearWindow& window) {
    double sum = 0.0;
    int count = 0;
    for (Year year = window.first; year <= window.last; ++year) {
        if (auto value = rca(country, product, year)) {
            sum += *value;
            ++count;
        }
    }
    if (count == 0) return std::nullopt;
    return sum / count;
}

void check_windows(const YearWindow& baseline, const YearWindow& outcome) {
    if (baseline.last < baseline.first || outcome.last < outcome.first) {
        throw ConfigError("invalid window " + baseline.str() + " / " + outcome.str());
    }
    if (baseline.overlaps(outcome) || baseline.first > outcome.first) {
        throw ConfigError("windows must be disjoint with the baseline first: baseline " + baseline.str() +
                          ", outcome " + outcome.str());
    }
}

std::optional<double> delta_rca(const RcaLookup& rca, const CountryCode& country, HsCode product,
                                const YearWindow& baseline, const YearWindow& outcome) {
    check_windows(baseline, outcome);
    auto before = window_mean_rca(rca, country, product, baseline);
    auto after = window_mean_rca(rca, country, product, outcome);
    if (!before || !after) return std::nullopt;
    return *after - *before;
}

std::optional<double> delta_rca(const TradePanel& panel, const CountryCode& country, HsCode product,
                                const YearWindow& baseline, const YearWindow& outcome) {
    return delta_rca(rca_from_panel(panel), country, product, baseline, outcome);
}

namespace {

struct IndicatorMeans {
    std::optional<double> exposure;
    std::optional<double> hhi;
    std::optional<double> str;
    double trade = 0.0;
};

IndicatorMeans baseline_indicator_means(const IndicatorPanel& indicators, const CountryCode& country, HsCode product,
                                        const YearWindow& window, const TradePanel* panel) {
    double sums[3] = {0.0, 0.0, 0.0};
    int counts[3] = {0, 0, 0};
    IndicatorMeans means;
    for (Year year = window.first; year <= window.last; ++year) {
        if (panel != nullptr) {
            means.trade += panel->imports(country, product, year) + panel->exports(country, product, year);
        }
        const auto* r = indicators.find(country, product, year);
        if (r == nullptr) continue;
        const std::optional<double>* values[3] = {&r->exposure, &r->hhi, &r->str};
        for (int k = 0; k < 3; ++k) {
            if (*values[k]) {
                sums[k] += **values[k];
                ++counts[k];
            }
        }
    }
    if (counts[0] > 0) means.exposure = sums[0] / counts[0];
    if (counts[1] > 0) means.hhi = sums[1] / counts[1];
    if (counts[2] > 0) means.str = sums[2] / counts[2];
    return means;
}

struct Aggregate {
    double sum = 0.0;
    double weight = 0.0;

    void add(const std::optional<double>& value, double w) {
        if (!value || !(w > 0.0)) return;
        sum += w * *value;
        weight += w;
    }
    std::optional<double> value() const {
        if (!(weight > 0.0)) return std::nullopt;
        return sum / weight;
    }
};

}  // namespace

std::optional<std::array<double, kCovariateCount>> baseline_covariates(
    const RcaLookup& rca, const IndicatorPanel& indicators, const ProductionNetwork& network,
    const CountryCode& country, HsCode product, const YearWindow& baseline, InputAggregation aggregation,
    const TradePanel* panel) {
    if (aggregation == InputAggregation::trade_weighted && panel == nullptr) {
        throw ConfigError("trade-weighted input aggregation needs the trade panel");
    }
    const auto own_rca = window_mean_rca(rca, country, product, baseline);
    const auto own = baseline_indicator_means(indicators, country, product, baseline, nullptr);
    if (!own_rca || !own.exposure || !own.hhi || !own.str) return std::nullopt;

    Aggregate inputs[4];
    for (HsCode input : network.predecessors(product)) {
        const auto means = baseline_indicator_means(indicators, country, input, baseline, panel);
        const double w = aggregation == InputAggregation::simple_mean ? 1.0 : means.trade;
        inputs[0].add(means.exposure, w);
        inputs[1].add(means.hhi, w);
        inputs[2].add(means.str, w);
        inputs[3].add(window_mean_rca(rca, country, input, baseline), w);
    }
    std::array<double, kCovariateCount> covariates{*own_rca, *own.exposure, *own.hhi, *own.str};
    for (int k = 0; k < 4; ++k) {
        auto value = inputs[k].value();
        if (!value) return std::nullopt;
        covariates[static_cast<std::size_t>(4 + k)] = *value;
    }
    return covariates;
}

std::vector<RegressionObservation> build_observations(const RcaLookup& rca, const IndicatorPanel& indicators,
                                                      const ProductionNetwork& network,
                                                      const std::map<CountryCode, int>& clusters,
                                                      const YearWindow& baseline, const YearWindow& outcome,
                                                      InputAggregation aggregation, const TradePanel* panel,
                                                      ObservationReport* report) {
    check_windows(baseline, outcome);
    ObservationReport local;
    ObservationReport& rep = report != nullptr ? *report : local;
    std::vector<RegressionObservation> observations;
    for (const auto& country : indicators.countries()) {
        for (const auto& [product, tier] : network.tiers) {
            ++rep.candidates;
            auto cluster = clusters.find(country);
            if (cluster == clusters.end()) {
                ++rep.dropped_cluster;
                continue;
            }
            auto delta = delta_rca(rca, country, product, baseline, outcome);
            if (!delta) {
                ++rep.dropped_outcome;
                continue;
            }
            auto covariates = baseline_covariates(rca, indicators, network, country, product, baseline, aggregation, panel);
            if (!covariates) {
                ++rep.dropped_covariates;
                continue;
            }
            observations.push_back({country, product, *delta, *covariates, cluster->second, tier});
        }
    }
    return observations;
}

std::optional<std::size_t> first_dependent_column(const Eigen::MatrixXd& x) {
    const double scale = std::max(1.0, x.cwiseAbs().maxCoeff());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x.leftCols(j + 1));
        qr.setThreshold(1e-10);
        if (qr.rank() < j + 1 || x.col(j).cwiseAbs().maxCoeff() <= 1e-14 * scale) return static_cast<std::size_t>(j);
    }
    return std::nullopt;
}

Design build_design(const std::vector<RegressionObservation>& observations, const DesignOptions& options) {
    std::set<int> cluster_labels;
    std::set<int> tier_labels;
    for (const auto& obs : observations) {
        cluster_labels.insert(obs.cluster);
        tier_labels.insert(obs.tier);
    }
    Design design;
    auto reference = [](const std::set<int>& present, int preferred) -> std::optional<int> {
        if (present.empty()) return std::nullopt;
        return present.contains(preferred) ? preferred : *present.begin();
    };
    std::vector<int> cluster_dummies;
    std::vector<int> tier_dummies;
    if (options.cluster_effects) {
        design.reference_cluster = reference(cluster_labels, options.reference_cluster);
        for (int label : cluster_labels) {
            if (label != design.reference_cluster) cluster_dummies.push_back(label);
        }
    }
    if (options.tier_effects) {
        design.reference_tier = reference(tier_labels, options.reference_tier);
        for (int label : tier_labels) {
            if (label != design.reference_tier) tier_dummies.push_back(label);
        }
    }

    design.terms.push_back("constant");
    for (const char* name : kCovariateNames) design.terms.emplace_back(name);
    for (int label : cluster_dummies) design.terms.push_back("cluster_" + std::to_string(label));
    for (int label : tier_dummies) design.terms.push_back("tier_" + std::to_string(label));

    const std::size_t k = design.terms.size();
    if (observations.size() < k + 5) {
        throw DataError("design needs at least " + std::to_string(k + 5) + " observations for " + std::to_string(k) +
                        " terms, got " + std::to_string(observations.size()));
    }
    const auto n = static_cast<Eigen::Index>(observations.size());
    design.x = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(k));
    design.y.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& obs = observations[static_cast<std::size_t>(i)];
        design.y(i) = obs.delta_rca;
        design.x(i, 0) = 1.0;
        for (std::size_t c = 0; c < kCovariateCount; ++c) design.x(i, static_cast<Eigen::Index>(1 + c)) = obs.covariates[c];
        Eigen::Index col = 1 + static_cast<Eigen::Index>(kCovariateCount);
        for (int label : cluster_dummies) design.x(i, col++) = obs.cluster == label ? 1.0 : 0.0;
        for (int label : tier_dummies) design.x(i, col++) = obs.tier == label ? 1.0 : 0.0;
    }
    if (auto dependent = first_dependent_column(design.x)) {
        throw DataError("collinear design: column '" + design.terms[*dependent] +
                        "' is a linear combination of earlier columns");
    }
    return design;
}

std::optional<std::size_t> RegressionResult::index_of(const std::string& term) const {
    auto it = std::find(terms.begin(), terms.end(), term);
    if (it == terms.end()) return std::nullopt;
    return static_cast<std::size_t>(it - terms.begin());
}

RegressionResult ols_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::vector<std::string> terms,
                         StandardErrors se_type) {
    const auto n = x.rows();
    const auto k = x.cols();
    if (y.size() != n) throw DataError("response length does not match design rows");
    if (static_cast<Eigen::Index>(terms.size()) != k) throw DataError("term names do not match design columns");
    if (n <= k) throw DataError("ols needs more observations than terms");
    if (auto dependent = first_dependent_column(x)) {
        throw DataError("rank-deficient design: column '" + terms[*dependent] + "'");
    }

    // Rows are factored in a canonical order so the fit is bitwise independent of observation order.
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        for (Eigen::Index j = 0; j < k; ++j) {
            if (x(a, j) != x(b, j)) return x(a, j) < x(b, j);
        }
        return y(a) < y(b);
    });
    Eigen::MatrixXd xs(n, k);
    Eigen::VectorXd ys(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        xs.row(i) = x.row(order[static_cast<std::size_t>(i)]);
        ys(i) = y(order[static_cast<std::size_t>(i)]);
    }

    Eigen::HouseholderQR<Eigen::MatrixXd> qr(xs);
    const Eigen::MatrixXd r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
    const Eigen::VectorXd beta = qr.solve(ys);
    const Eigen::MatrixXd r_inv = r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(k, k));
    const Eigen::MatrixXd bread = r_inv * r_inv.transpose();  // (X'X)^-1

    const Eigen::VectorXd residual = ys - xs * beta;
    const double rss = residual.squaredNorm();
    const auto df = static_cast<double>(n - k);

    Eigen::MatrixXd covariance;
    if (se_type == StandardErrors::classical) {
        covariance = bread * (rss / df);
    } else {
        const Eigen::MatrixXd scaled = xs.array().colwise() * residual.array();
        const Eigen::MatrixXd meat = scaled.transpose() * scaled;
        covariance = bread * meat * bread * (static_cast<double>(n) / df);
    }

    RegressionResult result;
    result.terms = std::move(terms);
    result.coef = beta;
    result.se = covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
    result.t.resize(k);
    result.p.resize(k);
    boost::math::students_t dist(df);
    for (Eigen::Index j = 0; j < k; ++j) {
        if (result.se(j) > 0.0) {
            result.t(j) = beta(j) / result.se(j);
            result.p(j) = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(result.t(j))));
        } else if (beta(j) == 0.0) {
            result.t(j) = 0.0;
            result.p(j) = 1.0;
        } else {
            result.t(j) = std::copysign(INFINITY, beta(j));
            result.p(j) = 0.0;
        }
        result.p(j) = std::clamp(result.p(j), 0.0, 1.0);
    }
    result.n_obs = static_cast<std::size_t>(n);
    result.df_resid = static_cast<std::size_t>(n - k);
    result.rss = rss;
    const double tss = (ys.array() - ys.mean()).matrix().squaredNorm();
    result.r2 = tss > 0.0 ? 1.0 - rss / tss : (rss == 0.0 ? 1.0 : 0.0);
    result.se_type = se_type;
    return result;
}

RegressionResult ols_fit(const Design& design, StandardErrors se_type) {
    auto result = ols_fit(design.x, design.y, design.terms, se_type);
    result.reference_cluster = design.reference_cluster;
    result.reference_tier = design.reference_tier;
    return result;
}

RegressionRun run_regression(const RegressionInputs& inputs, const YearWindow& baseline, const YearWindow& outcome) {
    if (inputs.indicators == nullptr || inputs.network == nullptr || inputs.clusters == nullptr || !inputs.rca) {
        throw ConfigError("regression inputs are incomplete");
    }
    RegressionRun run;
    const auto observations = build_observations(inputs.rca, *inputs.indicators, *inputs.network, *inputs.clusters,
                                                 baseline, outcome, inputs.aggregation, inputs.panel, &run.report);
    run.result = ols_fit(build_design(observations, inputs.design), inputs.se_type);
    return run;
}

SweepResult window_sweep(const RegressionInputs& inputs,
                         const std::vector<std::pair<YearWindow, YearWindow>>& window_pairs, unsigned jobs) {
    SweepResult sweep;
    sweep.cells.resize(window_pairs.size());
    parallel_for(window_pairs.size(), jobs, [&](std::size_t i) {
        auto& cell = sweep.cells[i];
        cell.baseline = window_pairs[i].first;
        cell.outcome = window_pairs[i].second;
        try {
            cell.result = run_regression(inputs, cell.baseline, cell.outcome).result;
        } catch (const std::exception& error) {
            cell.error = error.what();
        }
    });

    std::vector<std::string> order;
    std::map<std::string, SignSummary> by_term;
    for (const auto& cell : sweep.cells) {
        if (!cell.result) continue;
        const auto& r = *cell.result;
        for (std::size_t j = 0; j < r.terms.size(); ++j) {
            auto [it, inserted] = by_term.try_emplace(r.terms[j]);
            if (inserted) {
                it->second.term = r.terms[j];
                order.push_back(r.terms[j]);
            }
            auto& s = it->second;
            const auto idx = static_cast<Eigen::Index>(j);
            ++s.fits;
            const bool significant = r.p(idx) < 0.05;
            if (r.coef(idx) > 0.0) {
                ++s.positive;
                if (significant) ++s.significant_positive;
            } else if (r.coef(idx) < 0.0) {
                ++s.negative;
                if (significant) ++s.significant_negative;
            }
        }
    }
    for (const auto& term : order) {
        auto s = by_term[term];
        s.stability = s.fits > 0 ? static_cast<double>(std::max(s.positive, s.negative)) / static_cast<double>(s.fits) : 0.0;
        sweep.summary.push_back(s);
    }
    return sweep;
}

std::vector<std::pair<YearWindow, YearWindow>> default_sweep_grid(Year first, Year last, int length, int step,
                                                                  int min_gap) {
    std::vector<YearWindow> windows;
    for (Year start = first; start + length - 1 <= last; start += step) windows.push_back({start, start + length - 1});
    std::vector<std::pair<YearWindow, YearWindow>> pairs;
    for (const auto& baseline : windows) {
        for (const auto& outcome : windows) {
            if (outcome.first - baseline.last - 1 >= min_gap) pairs.emplace_back(baseline, outcome);
        }
    }
    return pairs;
}

namespace {

std::string sign_of(double value) {
    if (value > 0.0) return "+";
    if (value < 0.0) return "-";
    return "0";
}

std::string sanitize(std::string text) {
    std::replace(text.begin(), text.end(), ',', ';');
    std::replace(text.begin(), text.end(), '\n', ' ');
    return text;
}

}  // namespace

std::string regression_csv(const RegressionResult& result, const std::string& manifest) {
    std::string out;
    if (!manifest.empty()) out += "# manifest: " + manifest + "\n";
    out += "term,coef,se,t,p\n";
    for (std::size_t j = 0; j < result.terms.size(); ++j) {
        const auto i = static_cast<Eigen::Index>(j);
        out += result.terms[j] + ',' + format_double(result.coef(i)) + ',' + format_double(result.se(i)) + ',' +
               format_double(result.t(i)) + ',' + format_double(result.p(i)) + '\n';
    }
    return out;
}

std::string sweep_csv(const SweepResult& sweep, const std::string& manifest) {
    std::string out;
    if (!manifest.empty()) out += "# manifest: " + manifest + "\n";
    out += "baseline_window,outcome_window,term,coef,p,sign,note\n";
    for (const auto& cell : sweep.cells) {
        const std::string prefix = cell.baseline.str() + ',' + cell.outcome.str() + ',';
        if (!cell.result) {
            out += prefix + "error,,,," + sanitize(cell.error) + '\n';
            continue;
        }
        const auto& r = *cell.result;
        for (std::size_t j = 0; j < r.terms.size(); ++j) {
            const auto i = static_cast<Eigen::Index>(j);
            out += prefix + r.terms[j] + ',' + format_double(r.coef(i)) + ',' + format_double(r.p(i)) + ',' +
                   sign_of(r.coef(i)) + ",\n";
        }
    }
    return out;
}

std::string sweep_summary_csv(const SweepResult& sweep, const std::string& manifest) {
    std::string out;
    if (!manifest.empty()) out += "# manifest: " + manifest + "\n";
    out += "term,fits,positive,negative,significant_positive,significant_negative,stability\n";
    for (const auto& s : sweep.summary) {
        out += s.term + ',' + std::to_string(s.fits) + ',' + std::to_string(s.positive) + ',' +
               std::to_string(s.negative) + ',' + std::to_string(s.significant_positive) + ',' +
               std::to_string(s.significant_negative) + ',' + format_double(s.stability) + '\n';
    }
    return out;
}

}  // namespace rarenet
