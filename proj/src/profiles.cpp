#include "rarenet/profiles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <tuple>

#include "rarenet/io.hpp"
#include "rarenet/parallel.hpp"

namespace rarenet {

std::string profile_feature_name(std::size_t index) {
    return "t" + std::to_string(index / kMetricsPerTier) + "_" + kProfileMetrics[index % kMetricsPerTier];
}

namespace {

struct WeightedMean {
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

DependencyProfile build_profile(const CountryCode& country, Year year, const TradePanel& panel,
                                const IndicatorPanel& indicators, const ScoreTable& scores,
                                const ProductionNetwork& network, const std::set<HsCode>& input_products) {
    const int max_tier = network.max_tier();
    const std::size_t n_tiers = static_cast<std::size_t>(max_tier + 1);
    std::vector<WeightedMean> acc(n_tiers * kMetricsPerTier);

    DependencyProfile profile;
    profile.country = country;
    profile.year = year;
    for (const auto& [product, tier] : network.tiers) {
        const auto* record = indicators.find(country, product, year);
        if (record == nullptr) continue;
        const double exports = panel.exports(country, product, year);
        const double w = panel.imports(country, product, year) + exports;
        profile.trade_weight += w;
        profile.export_weight += exports;
        auto* slot = &acc[static_cast<std::size_t>(tier) * kMetricsPerTier];
        slot[0].add(record->exposure, w);
        slot[1].add(record->hhi, w);
        slot[2].add(record->str, w);
        if (input_products.contains(product)) {
            slot[3].add(record->exposure, w);
            slot[4].add(record->hhi, w);
            slot[5].add(record->str, w);
        }
        slot[6].add(scores.composite(country, product, year), w);
        slot[7].add(record->influence, w);
    }
    profile.features.reserve(acc.size());
    for (const auto& a : acc) profile.features.push_back(a.value());
    if (profile.features.size() != kMetricsPerTier * n_tiers) throw std::logic_error("profile width mismatch");
    return profile;
}

std::vector<DependencyProfile> build_profiles(const TradePanel& panel, const IndicatorPanel& indicators,
                                              const ScoreTable& scores, const ProductionNetwork& network,
                                              const std::map<CountryCode, std::set<HsCode>>& input_sets,
                                              unsigned jobs) {
    std::vector<std::pair<CountryCode, Year>> keys;
    for (const auto& country : indicators.countries()) {
        for (Year year : indicators.years()) keys.emplace_back(country, year);
    }
    static const std::set<HsCode> kEmpty;
    std::vector<DependencyProfile> profiles(keys.size());
    parallel_for(keys.size(), jobs, [&](std::size_t i) {
        auto it = input_sets.find(keys[i].first);
        profiles[i] = build_profile(keys[i].first, keys[i].second, panel, indicators, scores, network,
                                    it == input_sets.end() ? kEmpty : it->second);
    });
    // A country-year without any networked trade carries no profile.
    std::erase_if(profiles, [](const DependencyProfile& p) { return !(p.trade_weight > 0.0); });
    return profiles;
}

std::string profiles_csv(const std::vector<DependencyProfile>& profiles, const std::string& manifest) {
    std::string out;
    if (!manifest.empty()) out += "# manifest: " + manifest + "\n";
    out += "country,year,trade_weight,export_weight";
    const std::size_t width = profiles.empty() ? 0 : profiles.front().features.size();
    for (std::size_t f = 0; f < width; ++f) out += ',' + profile_feature_name(f);
    out += '\n';
    for (const auto& p : profiles) {
        out += p.country + ',' + std::to_string(p.year) + ',' + format_double(p.trade_weight) + ',' +
               format_double(p.export_weight);
        for (const auto& value : p.features) out += ',' + format_optional(value);
        out += '\n';
    }
    return out;
}

std::vector<DependencyProfile> read_profiles_csv(const std::filesystem::path& path) {
    auto table = io::read_csv(path);
    const auto c_country = table.column("country");
    const auto c_year = table.column("year");
    const auto c_trade = table.column("trade_weight");
    const auto c_export = table.column("export_weight");
    const std::size_t first_feature = 4;
    if (table.header.size() < first_feature || (table.header.size() - first_feature) % kMetricsPerTier != 0) {
        throw DataError("profiles.csv: feature count is not a multiple of " + std::to_string(kMetricsPerTier));
    }
    std::vector<DependencyProfile> profiles;
    for (const auto& row : table.rows) {
        if (row.size() != table.header.size()) throw DataError("malformed row in " + path.string());
        DependencyProfile p;
        p.country = row[c_country];
        auto year = io::parse_int(row[c_year]);
        auto trade = io::parse_double(row[c_trade]);
        auto exports = io::parse_double(row[c_export]);
        if (!year || !trade || !exports) throw DataError("malformed row in " + path.string());
        p.year = static_cast<Year>(*year);
        p.trade_weight = *trade;
        p.export_weight = *exports;
        for (std::size_t f = first_feature; f < row.size(); ++f) p.features.push_back(io::parse_double(row[f]));
        profiles.push_back(std::move(p));
    }
    return profiles;
}

FeatureMatrix normalize_features(const std::vector<std::vector<std::optional<double>>>& rows) {
    if (rows.size() < 2) throw DataError("normalize_features needs at least 2 profiles");
    const std::size_t width = rows.front().size();
    for (const auto& row : rows) {
        if (row.size() != width) throw DataError("profiles have inconsistent feature counts");
    }
    FeatureMatrix result;
    std::vector<double> means;
    std::vector<double> sds;
    for (std::size_t f = 0; f < width; ++f) {
        double sum = 0.0;
        std::size_t count = 0;
        for (const auto& row : rows) {
            if (row[f]) {
                sum += *row[f];
                ++count;
            }
        }
        if (count == 0) {
            result.dropped_features.push_back(f);
            continue;
        }
        const double mean = sum / static_cast<double>(count);
        double ss = 0.0;
        for (const auto& row : rows) {
            if (row[f]) ss += (*row[f] - mean) * (*row[f] - mean);
        }
        const double sd = std::sqrt(ss / static_cast<double>(count));
        if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) {
            result.dropped_features.push_back(f);
            continue;
        }
        result.kept_features.push_back(f);
        means.push_back(mean);
        sds.push_back(sd);
    }
    const auto n = static_cast<Eigen::Index>(rows.size());
    const auto k = static_cast<Eigen::Index>(result.kept_features.size());
    result.values = Eigen::MatrixXd::Zero(n, k);
    result.imputed = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(n, k, false);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < k; ++j) {
            const auto& cell = rows[static_cast<std::size_t>(i)][result.kept_features[static_cast<std::size_t>(j)]];
            if (cell) {
                result.values(i, j) = (*cell - means[static_cast<std::size_t>(j)]) / sds[static_cast<std::size_t>(j)];
            } else {
                result.imputed(i, j) = true;
            }
        }
    }
    return result;
}

FeatureMatrix normalize_features(const std::vector<DependencyProfile>& profiles) {
    std::vector<std::vector<std::optional<double>>> rows;
    rows.reserve(profiles.size());
    for (const auto& p : profiles) rows.push_back(p.features);
    return normalize_features(rows);
}

namespace {

Embedding embed_pca2(const Eigen::MatrixXd& matrix) {
    Embedding embedding;
    const auto n = matrix.rows();
    embedding.mean = matrix.colwise().mean();
    const Eigen::MatrixXd centered = matrix.rowwise() - embedding.mean;
    embedding.basis = Eigen::MatrixXd::Zero(matrix.cols(), 2);
    if (matrix.cols() > 0 && n > 0) {
        Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
        const auto components = std::min<Eigen::Index>(2, svd.matrixV().cols());
        for (Eigen::Index c = 0; c < components; ++c) {
            Eigen::VectorXd v = svd.matrixV().col(c);
            Eigen::Index arg = 0;
            v.cwiseAbs().maxCoeff(&arg);
            if (v(arg) < 0.0) v = -v;
            embedding.basis.col(c) = v;
        }
    }
    embedding.coords = centered * embedding.basis;
    return embedding;
}

// Fuzzy k-nearest-neighbor graph with a stochastic layout of attractive edge
// forces and sampled repulsion, initialized from the PCA layout.
Embedding embed_neighbor(const Eigen::MatrixXd& matrix, std::uint64_t rng_seed, const NeighborEmbeddingParams& params) {
    const auto n = static_cast<std::size_t>(matrix.rows());
    if (n < kMinNeighborRows) {
        throw DataError("neighbor embedding needs at least " + std::to_string(kMinNeighborRows) + " rows, got " +
                        std::to_string(n));
    }
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(std::max(params.n_neighbors, 2)), n - 1);

    std::vector<std::vector<std::pair<double, std::size_t>>> knn(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::pair<double, std::size_t>> dists;
        dists.reserve(n - 1);
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            dists.emplace_back((matrix.row(static_cast<Eigen::Index>(i)) - matrix.row(static_cast<Eigen::Index>(j))).norm(), j);
        }
        std::partial_sort(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(k), dists.end());
        dists.resize(k);
        knn[i] = std::move(dists);
    }

    // Membership strengths: exp(-(d - rho_i) / sigma_i), with sigma_i solving sum = log2(k).
    const double target = std::log2(static_cast<double>(k));
    std::map<std::pair<std::size_t, std::size_t>, double> directed;
    for (std::size_t i = 0; i < n; ++i) {
        double rho = 0.0;
        for (const auto& [d, j] : knn[i]) {
            if (d > 0.0) {
                rho = d;
                break;
            }
        }
        double lo = 0.0;
        double hi = INFINITY;
        double sigma = 1.0;
        for (int iter = 0; iter < 64; ++iter) {
            double total = 0.0;
            for (const auto& [d, j] : knn[i]) total += std::exp(-std::max(0.0, d - rho) / sigma);
            if (std::abs(total - target) < 1e-5) break;
            if (total > target) {
                hi = sigma;
                sigma = 0.5 * (lo + hi);
            } else {
                lo = sigma;
                sigma = std::isinf(hi) ? sigma * 2.0 : 0.5 * (lo + hi);
            }
        }
        for (const auto& [d, j] : knn[i]) directed[{i, j}] = std::exp(-std::max(0.0, d - rho) / sigma);
    }
    struct Edge {
        std::size_t head;
        std::size_t tail;
        double weight;
    };
    std::vector<Edge> edges;
    for (const auto& [key, w] : directed) {
        const auto [i, j] = key;
        auto reverse = directed.find({j, i});
        const double wr = reverse == directed.end() ? 0.0 : reverse->second;
        if (reverse != directed.end() && j < i) continue;  // emitted once from the smaller index
        edges.push_back({i, j, w + wr - w * wr});
    }

    Embedding init = embed_pca2(matrix);
    Eigen::MatrixXd y = init.coords;
    const double extent = y.cwiseAbs().maxCoeff();
    if (extent > 0.0) y *= 10.0 / extent;

    std::mt19937_64 rng(rng_seed);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    // Tiny deterministic jitter separates duplicate rows.
    std::normal_distribution<double> jitter(0.0, 1e-4);
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
        y(i, 0) += jitter(rng);
        y(i, 1) += jitter(rng);
    }

    double max_weight = 0.0;
    for (const auto& e : edges) max_weight = std::max(max_weight, e.weight);
    std::vector<double> epochs_per_sample(edges.size());
    std::vector<double> next_sample(edges.size());
    for (std::size_t e = 0; e < edges.size(); ++e) {
        epochs_per_sample[e] = edges[e].weight > 0.0 ? max_weight / edges[e].weight : INFINITY;
        next_sample[e] = epochs_per_sample[e];
    }

    const double a = params.a;
    const double b = params.b;
    auto clip = [](double v) { return std::clamp(v, -4.0, 4.0); };
    for (int epoch = 1; epoch <= params.n_epochs; ++epoch) {
        const double alpha = 1.0 - static_cast<double>(epoch - 1) / static_cast<double>(params.n_epochs);
        for (std::size_t e = 0; e < edges.size(); ++e) {
            if (next_sample[e] > epoch) continue;
            next_sample[e] += epochs_per_sample[e];
            const auto i = static_cast<Eigen::Index>(edges[e].head);
            const auto j = static_cast<Eigen::Index>(edges[e].tail);
            Eigen::Vector2d diff = (y.row(i) - y.row(j)).transpose();
            const double d2 = diff.squaredNorm();
            if (d2 > 0.0) {
                const double coeff = -2.0 * a * b * std::pow(d2, b - 1.0) / (1.0 + a * std::pow(d2, b));
                for (int c = 0; c < 2; ++c) {
                    const double g = clip(coeff * diff(c)) * alpha;
                    y(i, c) += g;
                    y(j, c) -= g;
                }
            }
            for (int s = 0; s < params.negative_samples; ++s) {
                const auto m = static_cast<Eigen::Index>(pick(rng));
                if (m == i) continue;
                Eigen::Vector2d away = (y.row(i) - y.row(m)).transpose();
                const double q2 = away.squaredNorm();
                for (int c = 0; c < 2; ++c) {
                    const double g = q2 > 0.0 ? clip(2.0 * b / ((0.001 + q2) * (1.0 + a * std::pow(q2, b))) * away(c)) : 4.0;
                    y(i, c) += g * alpha;
                }
            }
        }
    }
    Embedding embedding;
    embedding.coords = std::move(y);
    return embedding;
}

}  // namespace

Embedding embed_2d(const Eigen::MatrixXd& matrix, EmbeddingMethod method, std::uint64_t rng_seed,
                   const NeighborEmbeddingParams& params) {
    if (!matrix.allFinite()) throw DataError("embedding input contains non-finite values");
    if (method == EmbeddingMethod::pca2) {
        if (matrix.rows() < 2) throw DataError("pca2 embedding needs at least 2 rows");
        return embed_pca2(matrix);
    }
    return embed_neighbor(matrix, rng_seed, params);
}

Clustering cluster_density(const Eigen::MatrixXd& coords, const DensityParams& params) {
    if (!coords.allFinite()) throw DataError("cluster coordinates must be finite");
    const auto n = static_cast<std::size_t>(coords.rows());
    Clustering result;
    result.labels.assign(n, -1);
    if (n == 0) return result;

    auto dist = [&](std::size_t i, std::size_t j) {
        return (coords.row(static_cast<Eigen::Index>(i)) - coords.row(static_cast<Eigen::Index>(j))).norm();
    };
    bool identical = true;
    for (std::size_t i = 1; i < n && identical; ++i) identical = dist(0, i) == 0.0;
    if (identical) {
        std::fill(result.labels.begin(), result.labels.end(), 0);
        result.n_clusters = 1;
        return result;
    }

    double eps = params.eps;
    if (!(eps > 0.0)) {
        std::vector<double> kth;
        const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(std::max(params.min_points, 1)), n - 1);
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<double> d;
            for (std::size_t j = 0; j < n; ++j) {
                if (j != i) d.push_back(dist(i, j));
            }
            std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k - 1), d.end());
            kth.push_back(d[k - 1]);
        }
        std::nth_element(kth.begin(), kth.begin() + static_cast<std::ptrdiff_t>(kth.size() / 2), kth.end());
        eps = params.auto_eps_scale * kth[kth.size() / 2];
        if (!(eps > 0.0)) eps = 1e-12;
    }
    result.eps = eps;

    std::vector<std::vector<std::size_t>> neighbors(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (dist(i, j) <= eps) neighbors[i].push_back(j);  // includes i itself
        }
    }
    const auto min_points = static_cast<std::size_t>(std::max(params.min_points, 1));
    int next_label = 0;
    std::vector<int> raw(n, -1);
    for (std::size_t i = 0; i < n; ++i) {
        if (raw[i] != -1 || neighbors[i].size() < min_points) continue;
        const int label = next_label++;
        raw[i] = label;
        std::vector<std::size_t> frontier{i};
        while (!frontier.empty()) {
            const std::size_t p = frontier.back();
            frontier.pop_back();
            if (neighbors[p].size() < min_points) continue;  // border point: no expansion
            for (std::size_t q : neighbors[p]) {
                if (raw[q] != -1) continue;
                raw[q] = label;
                frontier.push_back(q);
            }
        }
    }

    // Canonical numbering: by decreasing size, ties by first member index.
    std::vector<std::size_t> sizes(static_cast<std::size_t>(next_label), 0);
    std::vector<std::size_t> first(static_cast<std::size_t>(next_label), n);
    for (std::size_t i = 0; i < n; ++i) {
        if (raw[i] < 0) continue;
        ++sizes[static_cast<std::size_t>(raw[i])];
        first[static_cast<std::size_t>(raw[i])] = std::min(first[static_cast<std::size_t>(raw[i])], i);
    }
    std::vector<int> order(static_cast<std::size_t>(next_label));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int x, int y) {
        const auto ux = static_cast<std::size_t>(x);
        const auto uy = static_cast<std::size_t>(y);
        return std::tie(sizes[uy], first[ux]) < std::tie(sizes[ux], first[uy]);
    });
    std::vector<int> relabel(static_cast<std::size_t>(next_label));
    for (std::size_t r = 0; r < order.size(); ++r) relabel[static_cast<std::size_t>(order[r])] = static_cast<int>(r);
    for (std::size_t i = 0; i < n; ++i) {
        result.labels[i] = raw[i] < 0 ? -1 : relabel[static_cast<std::size_t>(raw[i])];
        if (raw[i] < 0) ++result.n_outliers;
    }
    result.n_clusters = next_label;
    return result;
}

std::map<CountryCode, int> modal_assignment(const std::vector<LabeledYear>& labels) {
    std::map<CountryCode, std::map<int, std::size_t>> counts;
    std::map<CountryCode, std::map<int, Year>> latest;
    for (const auto& entry : labels) {
        ++counts[entry.country][entry.label];
        auto [it, inserted] = latest[entry.country].emplace(entry.label, entry.year);
        if (!inserted) it->second = std::max(it->second, entry.year);
    }
    std::map<CountryCode, int> modal;
    for (const auto& [country, by_label] : counts) {
        std::size_t best_count = 0;
        Year best_year = std::numeric_limits<Year>::min();
        int best_label = -1;
        for (const auto& [label, count] : by_label) {
            const Year year = latest[country][label];
            if (count > best_count || (count == best_count && year > best_year)) {
                best_count = count;
                best_year = year;
                best_label = label;
            }
        }
        modal[country] = best_label;
    }
    return modal;
}

std::string embedding_csv(const std::vector<DependencyProfile>& profiles, const Embedding& embedding,
                          const Clustering& clustering, const std::string& manifest) {
    std::string out;
    if (!manifest.empty()) out += "# manifest: " + manifest + "\n";
    out += "country,year,x,y,label\n";
    for (std::size_t i = 0; i < profiles.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        out += profiles[i].country + ',' + std::to_string(profiles[i].year) + ',' +
               format_double(embedding.coords(r, 0)) + ',' + format_double(embedding.coords(r, 1)) + ',' +
               std::to_string(clustering.labels[i]) + '\n';
    }
    return out;
}

std::string clusters_csv(const std::map<CountryCode, int>& modal, const std::string& manifest) {
    std::string out;
    if (!manifest.empty()) out += "# manifest: " + manifest + "\n";
    out += "country,modal_label\n";
    for (const auto& [country, label] : modal) out += country + ',' + std::to_string(label) + '\n';
    return out;
}

std::map<CountryCode, int> read_clusters_csv(const std::filesystem::path& path) {
    auto table = io::read_csv(path);
    const auto c_country = table.column("country");
    const auto c_label = table.column("modal_label");
    std::map<CountryCode, int> modal;
    for (const auto& row : table.rows) {
        if (row.size() != table.header.size()) throw DataError("malformed row in " + path.string());
        auto label = io::parse_int(row[c_label]);
        if (!label) throw DataError("malformed row in " + path.string());
        modal[row[c_country]] = static_cast<int>(*label);
    }
    return modal;
}

}  // namespace rarenet
