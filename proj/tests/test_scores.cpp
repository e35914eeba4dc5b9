#include <doctest.h>

#include <cmath>
#include <random>

#include "rarenet/scores.hpp"
#include "support.hpp"

using namespace rarenet;
using testing::flow;
using testing::hs;

namespace {

ValidatedEdge edge(std::uint32_t from, std::uint32_t to) { return {hs(from), hs(to), 0.5, 0.0}; }

std::vector<std::array<double, 3>> correlated_rows(std::mt19937_64& rng, std::size_t n) {
    std::normal_distribution<double> normal;
    std::vector<std::array<double, 3>> rows(n);
    for (auto& r : rows) {
        const double common = normal(rng);
        r = {common + 0.5 * normal(rng), common + 0.8 * normal(rng), -common + normal(rng)};
    }
    return rows;
}

}  // namespace

TEST_SUITE("scores") {

TEST_CASE("rca examples") {
    const auto single = TradePanel::from_flows({flow(2010, "AAA", "BBB", 1, 3), flow(2010, "BBB", "CCC", 1, 8)});
    CHECK(rca(single, "AAA", hs(1), 2010) == 1.0);
    CHECK(rca(single, "BBB", hs(1), 2010) == 1.0);
    CHECK_FALSE(rca(single, "CCC", hs(1), 2010));

    const auto panel = TradePanel::from_flows({flow(2010, "AAA", "CCC", 1, 10), flow(2010, "AAA", "CCC", 2, 90),
                                               flow(2010, "BBB", "CCC", 1, 40), flow(2010, "BBB", "CCC", 2, 860)});
    CHECK(*rca(panel, "AAA", hs(1), 2010) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK_FALSE(rca(panel, "AAA", hs(3), 2010));
}

TEST_CASE("strength rules") {
    using S = std::vector<std::optional<double>>;
    CHECK(is_strength(S{2.0, 2.0, 2.0}));
    CHECK_FALSE(is_strength(S{0.5, 0.5}));
    CHECK(is_strength(S{0.4, 1.8}));
    CHECK(is_strength(S{std::nullopt, 1.5}));
    CHECK_FALSE(is_strength(S{std::nullopt}));
    CHECK_FALSE(is_strength(S{0.4, 1.8}, StrengthRule::fraction_above));
    CHECK(is_strength(S{0.4, 1.8, 1.2}, StrengthRule::fraction_above));
}

TEST_CASE("comparative strengths from a panel") {
    const auto panel = TradePanel::from_flows({flow(2010, "AAA", "CCC", 1, 10), flow(2010, "AAA", "CCC", 2, 90),
                                               flow(2010, "BBB", "CCC", 1, 40), flow(2010, "BBB", "CCC", 2, 860)});
    const std::vector<Year> years{2010};
    CHECK(comparative_strengths(panel, "AAA", years) == std::set<HsCode>{hs(1)});
    CHECK(comparative_strengths(panel, "BBB", years) == std::set<HsCode>{hs(2)});
}

TEST_CASE("input products examples") {
    const auto a = build_network({edge(1, 2)}, {hs(1)});
    CHECK(input_products(a, {hs(2)}) == std::set<HsCode>{hs(1)});
    CHECK(input_products(a, {hs(1)}).empty());

    const auto b = build_network({edge(1, 2), edge(1, 3), edge(4, 3)}, {hs(1)});
    CHECK(input_products(b, {hs(2), hs(3)}) == std::set<HsCode>{hs(1), hs(4)});

    std::size_t ignored = 0;
    CHECK(input_products(b, {hs(9)}, &ignored).empty());
    CHECK(ignored == 1);
}

TEST_CASE("property: input products distribute over union") {
    std::mt19937_64 rng(41);
    std::uniform_int_distribution<int> node(0, 19);
    std::bernoulli_distribution coin(0.3);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<ValidatedEdge> edges;
        for (int i = 0; i < 30; ++i) {
            const int a = node(rng), b = node(rng);
            if (a < b) edges.push_back(edge(static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)));
        }
        const auto net = build_network(edges, {hs(0)});
        std::set<HsCode> s1, s2, both;
        for (auto n : net.nodes) {
            if (coin(rng)) s1.insert(n);
            if (coin(rng)) s2.insert(n);
        }
        both = s1;
        both.insert(s2.begin(), s2.end());
        auto expected = input_products(net, s1);
        const auto second = input_products(net, s2);
        expected.insert(second.begin(), second.end());
        CHECK(input_products(net, both) == expected);
    }
}

TEST_CASE("property: RCA world-share identity") {
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 30; ++trial) {
        const auto panel = testing::random_panel(rng, 6, 5, 2, 0.7);
        for (Year year : panel.years())
            for (const auto& c : panel.countries()) {
                if (panel.total_exports(c, year) == 0.0) continue;
                double sum = 0.0;
                for (auto p : panel.products()) {
                    const auto r = rca(panel, c, p, year);
                    if (r) sum += *r * panel.world_exports(p, year) / panel.world_total(year);
                }
                CHECK(std::abs(sum - 1.0) < 1e-10);
            }
    }
}

TEST_CASE("pca: perfectly correlated indicators") {
    std::vector<std::array<double, 3>> rows;
    for (int i = 0; i < 20; ++i) rows.push_back({double(i), double(i), double(i)});
    const auto model = fit_pca(rows);
    CHECK(model.explained_variance_ratio == doctest::Approx(1.0).epsilon(1e-12));
    for (int k = 0; k < 3; ++k) CHECK(model.loadings(k) == doctest::Approx(1.0 / std::sqrt(3.0)).epsilon(1e-12));
}

TEST_CASE("pca: independent indicators share variance evenly") {
    std::mt19937_64 rng(43);
    std::normal_distribution<double> normal;
    std::vector<std::array<double, 3>> rows(100000);
    for (auto& r : rows) r = {normal(rng), normal(rng), normal(rng)};
    const auto model = fit_pca(rows);
    CHECK(std::abs(model.explained_variance_ratio - 1.0 / 3.0) <= 0.01);
    CHECK(model.loadings.norm() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(model.loadings(0) >= 0.0);
}

TEST_CASE("pca: errors") {
    std::vector<std::array<double, 3>> rows;
    for (int i = 0; i < 20; ++i) rows.push_back({double(i), double(i % 3), 4.0});
    CHECK_THROWS_WITH_AS(fit_pca(rows), "rank-deficient: str", DataError);
    rows.resize(5);
    CHECK_THROWS_AS(fit_pca(rows), DataError);
}

TEST_CASE("composite score examples") {
    PcaModel model;
    model.means = Eigen::Vector3d(1.0, 2.0, 3.0);
    model.scales = Eigen::Vector3d(0.5, 2.0, 4.0);
    model.loadings = Eigen::Vector3d::Constant(1.0 / std::sqrt(3.0));
    CHECK(composite_score(model, {1.0, 2.0, 3.0}) == doctest::Approx(0.0));
    CHECK(composite_score(model, {1.5, 4.0, 7.0}) == doctest::Approx(std::sqrt(3.0)).epsilon(1e-14));
    IndicatorRecord incomplete;
    incomplete.exposure = 0.3;
    incomplete.str = 1.2;
    CHECK_FALSE(composite_score(model, incomplete));
}

TEST_CASE("property: pca is invariant to affine rescaling of an indicator") {
    std::mt19937_64 rng(44);
    std::uniform_real_distribution<double> scale(0.01, 100.0), shift(-50.0, 50.0);
    for (int trial = 0; trial < 30; ++trial) {
        const auto rows = correlated_rows(rng, 200);
        const auto base = fit_pca(rows);
        auto moved = rows;
        const auto k = static_cast<std::size_t>(trial % 3);
        const double a = scale(rng), b = shift(rng);
        for (auto& r : moved) r[k] = a * r[k] + b;
        const auto model = fit_pca(moved);
        CHECK((model.loadings - base.loadings).cwiseAbs().maxCoeff() < 1e-10);
        for (std::size_t i = 0; i < rows.size(); i += 17)
            CHECK(std::abs(composite_score(model, moved[i]) - composite_score(base, rows[i])) < 1e-10);
    }
}

TEST_CASE("property: the most dependent record never scores below the mean record") {
    std::mt19937_64 rng(45);
    for (int trial = 0; trial < 30; ++trial) {
        const auto rows = correlated_rows(rng, 100);
        const auto model = fit_pca(rows);
        std::size_t top = 0;
        double best = -INFINITY;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            double s = 0.0;
            for (int k = 0; k < 3; ++k) s += (rows[i][static_cast<std::size_t>(k)] - model.means(k)) / model.scales(k);
            if (s > best) {
                best = s;
                top = i;
            }
        }
        const std::array<double, 3> mean{model.means(0), model.means(1), model.means(2)};
        CHECK(composite_score(model, rows[top]) >= composite_score(model, mean));
    }
}

TEST_CASE("score artifacts round-trip") {
    std::mt19937_64 rng(46);
    const auto model = fit_pca(correlated_rows(rng, 50));
    const auto back = parse_pca_json(pca_json(model, "m"));
    CHECK(back.loadings == model.loadings);
    CHECK(back.means == model.means);
    CHECK(back.scales == model.scales);
    CHECK(back.explained_variance_ratio == model.explained_variance_ratio);

    ScoreTable table({{"AAA", hs(1), 2010, 1.25, std::nullopt}, {"BBB", hs(2), 2011, std::nullopt, -0.5}});
    std::vector<StrengthRow> strengths{{"AAA", hs(1), true, false}, {"AAA", hs(2), false, true}};
    testing::TempDir dir;
    testing::write_file(dir / "scores.csv", scores_csv(table, "m"));
    testing::write_file(dir / "strengths.csv", strengths_csv(strengths, "m"));
    CHECK(scores_csv(read_scores_csv(dir / "scores.csv"), "m") == scores_csv(table, "m"));
    const auto rows = read_strengths_csv(dir / "strengths.csv");
    CHECK(strengths_csv(rows, "m") == strengths_csv(strengths, "m"));
    CHECK(input_product_sets(rows).at("AAA") == std::set<HsCode>{hs(2)});
    CHECK(table.rca("AAA", hs(1), 2010) == 1.25);
    CHECK_FALSE(table.rca("BBB", hs(2), 2011));
}

}  // TEST_SUITE
