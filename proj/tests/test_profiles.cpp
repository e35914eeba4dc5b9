#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "rarenet/profiles.hpp"
#include "support.hpp"

using namespace rarenet;
using testing::flow;
using testing::hs;

namespace {

ValidatedEdge edge(std::uint32_t from, std::uint32_t to) { return {hs(from), hs(to), 0.5, 0.0}; }

StabilityPanel flat_pv(const TradePanel& panel, double pv = 50.0) {
    StabilityPanel s;
    for (const auto& c : panel.countries())
        for (Year y : panel.years()) s.insert(c, y, pv);
    return s;
}

/// Points around two centres 10 sigma apart along a random direction.
Eigen::MatrixXd two_blobs(std::mt19937_64& rng, int per_blob, int dims) {
    std::normal_distribution<double> normal;
    Eigen::VectorXd direction(dims);
    for (int d = 0; d < dims; ++d) direction(d) = normal(rng);
    direction.normalize();
    Eigen::MatrixXd x(2 * per_blob, dims);
    for (int i = 0; i < 2 * per_blob; ++i)
        for (int d = 0; d < dims; ++d) x(i, d) = normal(rng) + (i >= per_blob ? 10.0 * direction(d) : 0.0);
    return x;
}

/// Fraction of points whose label agrees with the blob they came from, best over the two matchings.
double agreement(const std::vector<int>& labels, int per_blob) {
    int same = 0, swapped = 0;
    for (int i = 0; i < 2 * per_blob; ++i) {
        const int truth = i >= per_blob ? 1 : 0;
        same += labels[static_cast<std::size_t>(i)] == truth;
        swapped += labels[static_cast<std::size_t>(i)] == 1 - truth;
    }
    return std::max(same, swapped) / (2.0 * per_blob);
}

}  // namespace

TEST_SUITE("profiles") {

TEST_CASE("profile weighted means") {
    // Tier 1 holds products 2 and 3; nobody trades the seed.
    const auto panel = TradePanel::from_flows({flow(2010, "YYY", "XXX", 2, 3), flow(2010, "XXX", "ZZZ", 3, 1),
                                               flow(2010, "YYY", "ZZZ", 3, 3), flow(2010, "ZZZ", "YYY", 3, 1)});
    const auto network = build_network({edge(1, 2), edge(1, 3)}, {hs(1)});
    const auto indicators = compute_indicator_panel(panel, flat_pv(panel), network, {2010});
    const ScoreTable scores;

    const auto x = build_profile("XXX", 2010, panel, indicators, scores, network, {hs(2)});
    REQUIRE(x.features.size() == 16);
    CHECK(*x.features[8 + 0] == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(*x.features[8 + 3] == 1.0);  // exposure over the single input product
    for (std::size_t f = 0; f < 8; ++f) CHECK_FALSE(x.features[f]);
    CHECK_FALSE(x.features[8 + 6]);  // no composite scores supplied
    CHECK(x.trade_weight == 4.0);
    CHECK(x.export_weight == 1.0);

    const auto z = build_profile("ZZZ", 2010, panel, indicators, scores, network, {});
    CHECK(*z.features[8 + 0] == doctest::Approx(0.8).epsilon(1e-15));
    CHECK_FALSE(z.features[8 + 3]);
    CHECK(profile_feature_name(8 + 3) == "t1_exposure_inputs");
}

TEST_CASE("property: profile features lie within contributing values") {
    std::mt19937_64 rng(51);
    for (int trial = 0; trial < 15; ++trial) {
        const auto panel = testing::random_panel(rng, 6, 5, 2, 0.5);
        const auto network = build_network(
            {edge(100000, 100001), edge(100000, 100002), edge(100001, 100003), edge(100002, 100004)}, {hs(100000)});
        const auto indicators = compute_indicator_panel(panel, flat_pv(panel, 30.0), network, panel.years());
        const auto profiles = build_profiles(panel, indicators, ScoreTable{}, network, {});
        for (const auto& p : profiles) {
            CHECK(p.features.size() == kMetricsPerTier * static_cast<std::size_t>(network.max_tier() + 1));
            for (int tier = 0; tier <= network.max_tier(); ++tier) {
                double lo = INFINITY, hi = -INFINITY;
                for (const auto& r : indicators.records()) {
                    if (r.country == p.country && r.year == p.year && r.tier == tier && r.exposure) {
                        lo = std::min(lo, *r.exposure);
                        hi = std::max(hi, *r.exposure);
                    }
                }
                const auto& v = p.features[static_cast<std::size_t>(tier) * kMetricsPerTier];
                if (v) {
                    CHECK(*v >= lo - 1e-12);
                    CHECK(*v <= hi + 1e-12);
                }
            }
        }
    }
}

TEST_CASE("normalize features examples") {
    using Row = std::vector<std::optional<double>>;
    const auto m = normalize_features(std::vector<Row>{{1.0, std::nullopt, 5.0}, {3.0, std::nullopt, 5.0}});
    REQUIRE(m.kept_features == std::vector<std::size_t>{0});
    CHECK(m.dropped_features == std::vector<std::size_t>{1, 2});
    CHECK(m.values(0, 0) == doctest::Approx(-1.0));
    CHECK(m.values(1, 0) == doctest::Approx(1.0));

    const double s = std::sqrt(2.0);
    const std::vector<Row> standard{{-s}, {0.0}, {s}, {0.0}};
    const auto again = normalize_features(standard);
    for (int i = 0; i < 4; ++i) CHECK(std::abs(again.values(i, 0) - *standard[static_cast<std::size_t>(i)][0]) < 1e-12);

    CHECK_THROWS_AS(normalize_features(std::vector<Row>{{1.0}}), DataError);
}

TEST_CASE("property: normalized columns have mean 0 and sd 1 over observed cells") {
    std::mt19937_64 rng(52);
    std::normal_distribution<double> normal;
    std::bernoulli_distribution missing(0.2);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<std::vector<std::optional<double>>> rows(20, std::vector<std::optional<double>>(6));
        for (auto& row : rows)
            for (std::size_t f = 0; f < row.size(); ++f)
                if (!missing(rng)) row[f] = 10.0 * f + (f + 1) * normal(rng);
        const auto m = normalize_features(rows);
        for (Eigen::Index c = 0; c < m.values.cols(); ++c) {
            double sum = 0.0, sq = 0.0;
            int n = 0;
            for (Eigen::Index r = 0; r < m.values.rows(); ++r) {
                if (m.imputed(r, c)) {
                    CHECK(m.values(r, c) == 0.0);
                    continue;
                }
                sum += m.values(r, c);
                sq += m.values(r, c) * m.values(r, c);
                ++n;
            }
            CHECK(std::abs(sum / n) < 1e-10);
            CHECK(std::abs(sq / n - 1.0) < 1e-10);
        }
    }
}

TEST_CASE("pca2 reconstructs rank-2 data") {
    std::mt19937_64 rng(53);
    std::normal_distribution<double> normal;
    const Eigen::MatrixXd a = Eigen::MatrixXd::NullaryExpr(40, 2, [&] { return normal(rng); });
    const Eigen::MatrixXd b = Eigen::MatrixXd::NullaryExpr(2, 7, [&] { return normal(rng); });
    const Eigen::MatrixXd x = (a * b).rowwise() + Eigen::RowVectorXd::LinSpaced(7, 1.0, 7.0);
    const auto e = embed_2d(x, EmbeddingMethod::pca2, 0);
    const Eigen::MatrixXd back = (e.coords * e.basis.transpose()).rowwise() + e.mean;
    CHECK((back - x).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("embeddings separate 10-sigma blobs") {
    std::mt19937_64 rng(54);
    const int per = 40;
    const auto x = two_blobs(rng, per, 6);
    for (auto method : {EmbeddingMethod::pca2, EmbeddingMethod::neighbor}) {
        const auto coords = embed_2d(x, method, 17).coords;
        const Eigen::RowVector2d c0 = coords.topRows(per).colwise().mean();
        const Eigen::RowVector2d c1 = coords.bottomRows(per).colwise().mean();
        std::vector<double> spread;
        for (int i = 0; i < 2 * per; ++i) spread.push_back((coords.row(i) - (i < per ? c0 : c1)).norm());
        std::sort(spread.begin(), spread.end());
        const double p95 = spread[static_cast<std::size_t>(0.95 * (spread.size() - 1))];
        CHECK((c0 - c1).norm() > p95);
        CHECK(embed_2d(x, method, 17).coords == coords);
    }
    CHECK_THROWS_AS(embed_2d(x.topRows(5), EmbeddingMethod::neighbor, 1), DataError);
}

TEST_CASE("density clustering examples") {
    std::mt19937_64 rng(55);
    const auto x = two_blobs(rng, 100, 2);
    const auto c = cluster_density(x);
    CHECK(c.n_clusters == 2);
    CHECK(agreement(c.labels, 100) >= 0.98);

    Eigen::MatrixXd with_far(x.rows() + 1, 2);
    with_far << x, Eigen::RowVector2d(500.0, 500.0);
    CHECK(cluster_density(with_far).labels.back() == -1);

    const auto same = cluster_density(Eigen::MatrixXd::Constant(12, 2, 3.0));
    CHECK(same.n_clusters == 1);
    CHECK(std::all_of(same.labels.begin(), same.labels.end(), [](int l) { return l == 0; }));
}

TEST_CASE("property: clustering is identical across reruns and ordered by size") {
    std::mt19937_64 rng(56);
    std::normal_distribution<double> normal;
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::MatrixXd x = two_blobs(rng, 30 + trial, 2);
        x.bottomRows(10).array() += 40.0;  // third small group
        const auto a = cluster_density(x);
        const auto b = cluster_density(x);
        CHECK(a.labels == b.labels);
        std::vector<int> sizes(static_cast<std::size_t>(a.n_clusters), 0);
        for (int l : a.labels)
            if (l >= 0) ++sizes[static_cast<std::size_t>(l)];
        CHECK(std::is_sorted(sizes.rbegin(), sizes.rend()));
    }
}

TEST_CASE("modal assignment examples") {
    const auto m = modal_assignment({{"AAA", 2010, 1},
                                     {"AAA", 2011, 1},
                                     {"AAA", 2012, 2},
                                     {"BBB", 2020, 2},
                                     {"BBB", 2010, 1},
                                     {"CCC", 2015, 3}});
    CHECK(m.at("AAA") == 1);
    CHECK(m.at("BBB") == 2);
    CHECK(m.at("CCC") == 3);
}

TEST_CASE("profile and cluster artifacts round-trip") {
    std::vector<DependencyProfile> profiles(2);
    profiles[0] = {"AAA", 2010, std::vector<std::optional<double>>(8), 3.5, 1.0};
    profiles[0].features[2] = 1.25;
    profiles[1] = {"BBB", 2011, std::vector<std::optional<double>>(8, 0.1), 2.0, 0.0};
    testing::TempDir dir;
    testing::write_file(dir / "p.csv", profiles_csv(profiles, "m"));
    CHECK(profiles_csv(read_profiles_csv(dir / "p.csv"), "m") == profiles_csv(profiles, "m"));

    const std::map<CountryCode, int> modal{{"AAA", 0}, {"BBB", -1}};
    testing::write_file(dir / "c.csv", clusters_csv(modal, "m"));
    CHECK(read_clusters_csv(dir / "c.csv") == modal);
}

}  // TEST_SUITE
