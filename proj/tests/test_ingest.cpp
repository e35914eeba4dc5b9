#include <doctest.h>

#include <map>
#include <random>

#include "rarenet/ingest.hpp"
#include "support.hpp"

using namespace rarenet;
using testing::flow;
using testing::hs;

namespace {

const char* kTradeHeader = "year,exporter,importer,hs6,value_kusd\n";

std::string good_rows(int n) {
    std::string rows;
    for (int i = 0; i < n; ++i) rows += "2012,JPN,KOR," + std::to_string(100000 + i) + ",1\n";
    return rows;
}

double touching(const TradePanel& panel, const std::set<CountryCode>& side) {
    double total = 0.0;
    for (const auto& f : panel.flows()) {
        if (side.contains(f.exporter) != side.contains(f.importer)) total += f.value;
    }
    return total;
}

}  // namespace

TEST_SUITE("ingest") {

TEST_CASE("duplicate trade keys are summed") {
    testing::TempDir dir;
    auto path = testing::write_file(dir / "trade.csv", std::string(kTradeHeader) +
                                                          "2010,CHN,USA,280530,120.0\n"
                                                          "2010,CHN,USA,280530,30.0\n");
    const auto panel = load_trade_csv(path);
    REQUIRE(panel.flows().size() == 1);
    CHECK(panel.flows()[0].value == 150.0);
    CHECK(panel.report.duplicates_merged == 1);
}

TEST_CASE("header-only trade file gives an empty panel") {
    testing::TempDir dir;
    const auto panel = load_trade_csv(testing::write_file(dir / "trade.csv", kTradeHeader));
    CHECK(panel.flows().empty());
    CHECK(panel.countries().empty());
}

TEST_CASE("negative value is rejected and counted") {
    testing::TempDir dir;
    auto path = testing::write_file(dir / "trade.csv",
                                    std::string(kTradeHeader) + good_rows(20) + "2010,CHN,USA,280530,-5\n");
    const auto panel = load_trade_csv(path);
    CHECK(panel.report.rejected == 1);
    CHECK(panel.flows().size() == 20);
    REQUIRE(panel.report.offenders.size() == 1);
    CHECK(panel.report.offenders[0].find("line 22") != std::string::npos);
}

TEST_CASE("rows violating flow invariants are rejected") {
    testing::TempDir dir;
    auto path = testing::write_file(dir / "trade.csv", std::string(kTradeHeader) + good_rows(100) +
                                                          "2010,CHN,CHN,280530,1\n"
                                                          "2010,CHN,USA,28053,1\n"
                                                          "1990,CHN,USA,280530,1\n"
                                                          "2010,CHN,USA,280530\n");
    const auto panel = load_trade_csv(path);
    CHECK(panel.report.rejected == 4);
    CHECK(panel.report.rows_accepted == 100);
}

TEST_CASE("more than 5% rejected rows is a hard error listing offenders") {
    testing::TempDir dir;
    std::string rows;
    for (int i = 0; i < 12; ++i) rows += "2010,CHN,USA,280530,-1\n";
    auto path = testing::write_file(dir / "trade.csv", std::string(kTradeHeader) + good_rows(10) + rows);
    try {
        load_trade_csv(path);
        FAIL("expected a DataError");
    } catch (const DataError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("12 of 22") != std::string::npos);
        std::size_t listed = 0;
        for (std::size_t pos = msg.find("line "); pos != std::string::npos; pos = msg.find("line ", pos + 1)) ++listed;
        CHECK(listed == 10);
    }
}

TEST_CASE("trade loader errors") {
    testing::TempDir dir;
    CHECK_THROWS_AS(load_trade_csv(dir / "missing.csv"), DataError);
    CHECK_THROWS_AS(load_trade_csv(testing::write_file(dir / "bad.csv", "year,from,to,hs6,value\n")), DataError);
}

TEST_CASE("numeric country codes are normalized at load") {
    testing::TempDir dir;
    const auto panel =
        load_trade_csv(testing::write_file(dir / "t.csv", std::string(kTradeHeader) + "2010,156,842,280530,5\n"));
    REQUIRE(panel.flows().size() == 1);
    CHECK(panel.flows()[0].exporter == "CHN");
    CHECK(panel.flows()[0].importer == "USA");
}

TEST_CASE("pv loader") {
    testing::TempDir dir;
    const auto pv = load_pv_csv(testing::write_file(dir / "pv.csv", "country,year,pv_percentile\n"
                                                                    "CHN,2010,30.0\n"
                                                                    "XXX,2010,130.0\n"));
    CHECK(pv.get("CHN", 2010) == 30.0);
    CHECK_FALSE(pv.get("XXX", 2010));
    CHECK(pv.report.rejected == 1);

    auto dup = testing::write_file(dir / "dup.csv", "country,year,pv_percentile\nUSA,2011,40\nUSA,2011,41\n");
    CHECK_THROWS_AS(load_pv_csv(dup), DataError);
}

TEST_CASE("pv fallbacks") {
    StabilityPanel pv;
    pv.insert("CHN", 2008, 20.0);
    pv.insert("CHN", 2012, 40.0);
    pv.insert("USA", 2010, 70.0);
    pv.insert("DEU", 2010, 90.0);
    pv.insert("JPN", 2010, 80.0);
    CHECK(pv.nearest_year("CHN", 2010) == 20.0);  // tie goes to the earlier year
    CHECK(pv.nearest_year("CHN", 2011) == 40.0);
    CHECK_FALSE(pv.nearest_year("FRA", 2010));
    CHECK(pv.median_for_year(2010) == 80.0);
    CHECK_FALSE(pv.median_for_year(1999));
}

TEST_CASE("candidate links honour the vote threshold") {
    testing::TempDir dir;
    const auto set = load_candidate_links(testing::write_file(dir / "links.csv", "input_hs6,output_hs6,votes\n"
                                                                                 "280530,850511,9\n"
                                                                                 "280530,850512,3\n"
                                                                                 "280530,280530,10\n"
                                                                                 "280530,850511,7\n"
                                                                                 "280530,850513,11\n"),
                                          6);
    REQUIRE(set.links.size() == 1);
    CHECK(set.links[0] == CandidateLink{hs(280530), hs(850511), 9});
    CHECK(set.below_threshold == 1);
    CHECK(set.self_loops == 1);
    CHECK(set.duplicates == 1);
    CHECK(set.invalid == 1);
    CHECK(set.warnings.size() == 3);
}

TEST_CASE("region aggregation examples") {
    auto panel = TradePanel::from_flows({flow(2010, "DEU", "FRA", 1, 10), flow(2010, "DEU", "USA", 1, 10),
                                         flow(2010, "FRA", "USA", 1, 5), flow(2010, "USA", "JPN", 1, 4)});
    const auto eu = aggregate_region(panel, {"DEU", "FRA"}, "EUU");
    REQUIRE(eu.flows().size() == 2);
    CHECK(eu.exports("EUU", hs(1), 2010) == 15.0);
    CHECK(eu.imports("JPN", hs(1), 2010) == 4.0);
    CHECK_FALSE(eu.country_index("DEU"));
    CHECK_FALSE(eu.country_index("FRA"));

    CHECK_THROWS_AS(aggregate_region(panel, {}, "EUU"), ConfigError);
    CHECK_THROWS_AS(aggregate_region(panel, {"DEU"}, "USA"), ConfigError);
}

TEST_CASE("property: region aggregation conserves extra-region trade") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const auto panel = testing::random_panel(rng, 8, 3, 2, 0.5);
        std::set<CountryCode> members;
        std::bernoulli_distribution pick(0.4);
        for (const auto& c : panel.countries())
            if (pick(rng)) members.insert(c);
        if (members.empty()) members.insert(panel.countries().front());
        const auto region = aggregate_region(panel, members, "EUU");
        CHECK(touching(panel, members) == doctest::Approx(touching(region, {"EUU"})).epsilon(1e-12));
    }
}

TEST_CASE("property: trade csv round-trip is exact") {
    std::mt19937_64 rng(12);
    testing::TempDir dir;
    for (int trial = 0; trial < 20; ++trial) {
        const auto panel = testing::random_panel(rng, 5, 4, 3);
        auto path = dir / "rt.csv";
        testing::write_file(path, trade_csv(panel));
        const auto again = load_trade_csv(path);
        CHECK(again.flows() == panel.flows());
        testing::write_file(path, trade_csv(again));
        CHECK(load_trade_csv(path).flows() == panel.flows());
    }
}

TEST_CASE("property: pv and link csv round-trips") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> pct(0.0, 100.0);
    testing::TempDir dir;
    StabilityPanel pv;
    for (int c = 0; c < 10; ++c)
        for (int y = 2007; y < 2012; ++y) pv.insert(testing::country(c), y, pct(rng));
    testing::write_file(dir / "pv.csv", pv_csv(pv));
    CHECK(load_pv_csv(dir / "pv.csv").entries() == pv.entries());

    CandidateLinkSet links;
    for (std::uint32_t i = 0; i < 20; ++i) links.links.push_back({hs(100000 + i), hs(200000 + i), 6 + int(i % 5)});
    testing::write_file(dir / "links.csv", links_csv(links));
    CHECK(load_candidate_links(dir / "links.csv").links == links.links);
}

TEST_CASE("property: panel marginals equal member flow totals") {
    std::mt19937_64 rng(14);
    for (int trial = 0; trial < 20; ++trial) {
        const auto panel = testing::random_panel(rng, 6, 3, 2);
        std::map<std::pair<Year, HsCode>, double> totals;
        for (const auto& f : panel.flows()) totals[{f.year, f.product}] += f.value;
        for (const auto& [key, total] : totals) {
            const auto* m = panel.marginals(key.second, key.first);
            REQUIRE(m != nullptr);
            double imports = 0.0, exports = 0.0;
            for (double v : m->imports) imports += v;
            for (double v : m->exports) exports += v;
            CHECK(m->total == doctest::Approx(total).epsilon(1e-12));
            CHECK(imports == doctest::Approx(total).epsilon(1e-12));
            CHECK(exports == doctest::Approx(total).epsilon(1e-12));
        }
    }
}

}  // TEST_SUITE
