#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "rarenet/common.hpp"

namespace rarenet {

/// One bilateral flow, value in thousand USD.
struct TradeFlow {
    Year year = 0;
    CountryCode exporter;
    CountryCode importer;
    HsCode product;
    double value = 0.0;

    bool operator==(const TradeFlow&) const = default;
};

struct IngestConfig {
    Year year_min = 2007;
    Year year_max = 2023;
    double max_reject_fraction = 0.05;
};

struct IngestReport {
    std::size_t rows_read = 0;
    std::size_t rows_accepted = 0;
    std::size_t rejected = 0;
    std::size_t duplicates_merged = 0;
    std::vector<std::string> offenders;  ///< First few rejected rows, "line N: reason".
};

/// Importer/exporter totals of one (product, year), indexed by TradePanel country index.
struct Marginals {
    std::vector<double> imports;
    std::vector<double> exports;
    double total = 0.0;
};

/// Immutable indexed bilateral trade panel. Flows are unique per
/// (year, exporter, importer, product) and sorted by (year, product, importer, exporter).
class TradePanel {
public:
    TradePanel() = default;

    /// Builds the panel, summing duplicate keys. Invariant violations are the caller's responsibility.
    static TradePanel from_flows(std::vector<TradeFlow> flows, std::size_t* duplicates_merged = nullptr);

    const std::vector<TradeFlow>& flows() const { return flows_; }
    const std::vector<CountryCode>& countries() const { return countries_; }
    const std::vector<HsCode>& products() const { return products_; }
    const std::vector<Year>& years() const { return years_; }

    std::optional<std::size_t> country_index(const CountryCode& code) const;
    bool has_product(HsCode product) const;

    /// Flows of one (product, year), grouped by importer. Empty when absent.
    std::span<const TradeFlow> flows_for(HsCode product, Year year) const;
    /// nullptr when the (product, year) has no flows.
    const Marginals* marginals(HsCode product, Year year) const;

    double imports(const CountryCode& country, HsCode product, Year year) const;
    double exports(const CountryCode& country, HsCode product, Year year) const;
    /// Exports of the country summed over every product in the panel.
    double total_exports(const CountryCode& country, Year year) const;
    double world_exports(HsCode product, Year year) const;
    double world_total(Year year) const;

    IngestReport report;

private:
    struct Slot {
        std::size_t begin = 0;
        std::size_t end = 0;
        Marginals marginals;
    };

    std::vector<TradeFlow> flows_;
    std::vector<CountryCode> countries_;
    std::unordered_map<CountryCode, std::size_t> country_lookup_;
    std::vector<HsCode> products_;
    std::vector<Year> years_;
    std::map<std::pair<Year, HsCode>, Slot> slots_;
    std::map<Year, std::vector<double>> country_exports_;
    std::map<Year, double> world_totals_;
};

TradePanel load_trade_csv(const std::filesystem::path& path, const IngestConfig& config = {});
/// Serializes with the loader's header; load_trade_csv(write) reproduces the panel.
std::string trade_csv(const TradePanel& panel);

/// (country, year) -> PV percentile rank in [0, 100].
class StabilityPanel {
public:
    void insert(const CountryCode& country, Year year, double pv);
    std::optional<double> get(const CountryCode& country, Year year) const;
    /// Value of the closest year for the country; ties go to the earlier year.
    std::optional<double> nearest_year(const CountryCode& country, Year year) const;
    /// Median over all countries with an entry for the year.
    std::optional<double> median_for_year(Year year) const;

    const std::map<std::pair<CountryCode, Year>, double>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }

    IngestReport report;

private:
    std::map<std::pair<CountryCode, Year>, double> entries_;
};

StabilityPanel load_pv_csv(const std::filesystem::path& path);
std::string pv_csv(const StabilityPanel& panel);

struct CandidateLink {
    HsCode input;
    HsCode output;
    int votes = 0;

    bool operator==(const CandidateLink&) const = default;
};

struct CandidateLinkSet {
    std::vector<CandidateLink> links;
    std::size_t below_threshold = 0;
    std::size_t self_loops = 0;
    std::size_t duplicates = 0;
    std::size_t invalid = 0;
    std::vector<std::string> warnings;
};

inline constexpr int kDefaultMinVotes = 6;
inline constexpr int kDefaultPromptRepetitions = 10;

CandidateLinkSet load_candidate_links(const std::filesystem::path& path, int min_votes = kDefaultMinVotes,
                                      int total_repetitions = kDefaultPromptRepetitions);
std::string links_csv(const CandidateLinkSet& links);

/// Collapses member countries into one region code: intra-member flows are dropped and
/// member/non-member flows are re-keyed to region_code and summed.
TradePanel aggregate_region(const TradePanel& panel, const std::set<CountryCode>& members,
                            const CountryCode& region_code);

}  // namespace rarenet
