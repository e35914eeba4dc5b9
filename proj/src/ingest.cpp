#include "rarenet/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <tuple>

#include "rarenet/country_codes.hpp"
#include "rarenet/io.hpp"

namespace rarenet {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t kMaxOffenders = 10;

void expect_header(const std::string& line, std::string_view expected, const fs::path& path) {
    std::string normalized;
    for (auto field : io::split_csv(line)) {
        if (!normalized.empty()) normalized += ',';
        normalized += io::trim(field);
    }
    if (normalized != expected) {
        throw DataError("malformed header in " + path.string() + ": expected '" + std::string(expected) + "', got '" +
                        line + "'");
    }
}

// Reads the header line, skipping '#' comment lines emitted by the pipeline.
bool next_content_line(io::LineReader& reader, std::string& line) {
    while (reader.next(line)) {
        auto view = io::trim(line);
        if (view.empty() || view.front() == '#') continue;
        return true;
    }
    return false;
}

void note_offender(IngestReport& report, std::size_t line_number, const std::string& reason) {
    ++report.rejected;
    if (report.offenders.size() < kMaxOffenders) {
        report.offenders.push_back("line " + std::to_string(line_number) + ": " + reason);
    }
}

}  // namespace

TradePanel TradePanel::from_flows(std::vector<TradeFlow> flows, std::size_t* duplicates_merged) {
    TradePanel panel;
    std::sort(flows.begin(), flows.end(), [](const TradeFlow& a, const TradeFlow& b) {
        return std::tie(a.year, a.product, a.importer, a.exporter) < std::tie(b.year, b.product, b.importer, b.exporter);
    });
    std::size_t merged = 0;
    for (auto& flow : flows) {
        if (!panel.flows_.empty()) {
            auto& last = panel.flows_.back();
            if (last.year == flow.year && last.product == flow.product && last.importer == flow.importer &&
                last.exporter == flow.exporter) {
                last.value += flow.value;
                ++merged;
                continue;
            }
        }
        panel.flows_.push_back(std::move(flow));
    }
    if (duplicates_merged != nullptr) *duplicates_merged = merged;

    std::set<CountryCode> countries;
    std::set<HsCode> products;
    std::set<Year> years;
    for (const auto& flow : panel.flows_) {
        countries.insert(flow.exporter);
        countries.insert(flow.importer);
        products.insert(flow.product);
        years.insert(flow.year);
    }
    panel.countries_.assign(countries.begin(), countries.end());
    panel.products_.assign(products.begin(), products.end());
    panel.years_.assign(years.begin(), years.end());
    for (std::size_t i = 0; i < panel.countries_.size(); ++i) panel.country_lookup_[panel.countries_[i]] = i;

    const std::size_t n = panel.countries_.size();
    for (Year year : panel.years_) {
        panel.country_exports_[year].assign(n, 0.0);
        panel.world_totals_[year] = 0.0;
    }
    std::size_t i = 0;
    while (i < panel.flows_.size()) {
        const auto key = std::make_pair(panel.flows_[i].year, panel.flows_[i].product);
        Slot slot;
        slot.begin = i;
        slot.marginals.imports.assign(n, 0.0);
        slot.marginals.exports.assign(n, 0.0);
        auto& country_exports = panel.country_exports_[key.first];
        while (i < panel.flows_.size() && panel.flows_[i].year == key.first && panel.flows_[i].product == key.second) {
            const auto& flow = panel.flows_[i];
            const auto exporter = panel.country_lookup_.at(flow.exporter);
            slot.marginals.imports[panel.country_lookup_.at(flow.importer)] += flow.value;
            slot.marginals.exports[exporter] += flow.value;
            slot.marginals.total += flow.value;
            country_exports[exporter] += flow.value;
            ++i;
        }
        slot.end = i;
        panel.world_totals_[key.first] += slot.marginals.total;
        panel.slots_.emplace(key, std::move(slot));
    }
    return panel;
}

std::optional<std::size_t> TradePanel::country_index(const CountryCode& code) const {
    auto it = country_lookup_.find(code);
    if (it == country_lookup_.end()) return std::nullopt;
    return it->second;
}

bool TradePanel::has_product(HsCode product) const {
    return std::binary_search(products_.begin(), products_.end(), product);
}

std::span<const TradeFlow> TradePanel::flows_for(HsCode product, Year year) const {
    auto it = slots_.find({year, product});
    if (it == slots_.end()) return {};
    return std::span<const TradeFlow>(flows_.data() + it->second.begin, it->second.end - it->second.begin);
}

const Marginals* TradePanel::marginals(HsCode product, Year year) const {
    auto it = slots_.find({year, product});
    return it == slots_.end() ? nullptr : &it->second.marginals;
}

double TradePanel::imports(const CountryCode& country, HsCode product, Year year) const {
    const auto* m = marginals(product, year);
    auto idx = country_index(country);
    return (m == nullptr || !idx) ? 0.0 : m->imports[*idx];
}

double TradePanel::exports(const CountryCode& country, HsCode product, Year year) const {
    const auto* m = marginals(product, year);
    auto idx = country_index(country);
    return (m == nullptr || !idx) ? 0.0 : m->exports[*idx];
}

double TradePanel::total_exports(const CountryCode& country, Year year) const {
    auto it = country_exports_.find(year);
    auto idx = country_index(country);
    return (it == country_exports_.end() || !idx) ? 0.0 : it->second[*idx];
}

double TradePanel::world_exports(HsCode product, Year year) const {
    const auto* m = marginals(product, year);
    return m == nullptr ? 0.0 : m->total;
}

double TradePanel::world_total(Year year) const {
    auto it = world_totals_.find(year);
    return it == world_totals_.end() ? 0.0 : it->second;
}

TradePanel load_trade_csv(const fs::path& path, const IngestConfig& config) {
    io::LineReader reader(path);
    std::string line;
    if (!next_content_line(reader, line)) throw DataError("malformed header in " + path.string() + ": file is empty");
    expect_header(line, "year,exporter,importer,hs6,value_kusd", path);

    IngestReport report;
    std::vector<TradeFlow> flows;
    while (reader.next(line)) {
        auto view = io::trim(line);
        if (view.empty() || view.front() == '#') continue;
        ++report.rows_read;
        const auto row = reader.line_number();
        auto fields = io::split_csv(view);
        if (fields.size() != 5) {
            note_offender(report, row, "expected 5 fields");
            continue;
        }
        auto year = io::parse_int(fields[0]);
        if (!year || *year < config.year_min || *year > config.year_max) {
            note_offender(report, row, "year out of range");
            continue;
        }
        auto exporter = normalize_country(fields[1]);
        auto importer = normalize_country(fields[2]);
        if (!exporter || !importer) {
            note_offender(report, row, "unknown country code");
            continue;
        }
        if (*exporter == *importer) {
            note_offender(report, row, "exporter equals importer");
            continue;
        }
        auto product = HsCode::parse(fields[3]);
        if (!product) {
            note_offender(report, row, "hs6 must be exactly 6 digits");
            continue;
        }
        auto value = io::parse_double(fields[4]);
        if (!value || !std::isfinite(*value) || *value < 0.0) {
            note_offender(report, row, "value must be a non-negative number");
            continue;
        }
        flows.push_back({static_cast<Year>(*year), std::move(*exporter), std::move(*importer), *product, *value});
    }
    report.rows_accepted = flows.size();

    if (report.rows_read > 0 &&
        static_cast<double>(report.rejected) > config.max_reject_fraction * static_cast<double>(report.rows_read)) {
        std::ostringstream msg;
        msg << "too many rejected rows in " << path.string() << ": " << report.rejected << " of " << report.rows_read;
        for (const auto& offender : report.offenders) msg << "\n  " << offender;
        throw DataError(msg.str());
    }

    std::size_t merged = 0;
    auto panel = TradePanel::from_flows(std::move(flows), &merged);
    report.duplicates_merged = merged;
    panel.report = std::move(report);
    return panel;
}

std::string trade_csv(const TradePanel& panel) {
    std::string out = "year,exporter,importer,hs6,value_kusd\n";
    for (const auto& flow : panel.flows()) {
        out += std::to_string(flow.year);
        out += ',';
        out += flow.exporter;
        out += ',';
        out += flow.importer;
        out += ',';
        out += flow.product.str();
        out += ',';
        out += format_double(flow.value);
        out += '\n';
    }
    return out;
}

void StabilityPanel::insert(const CountryCode& country, Year year, double pv) {
    if (!(pv >= 0.0 && pv <= 100.0)) throw DataError("PV outside [0, 100] for " + country);
    if (!entries_.emplace(std::make_pair(country, year), pv).second) {
        throw DataError("duplicate PV entry for (" + country + ", " + std::to_string(year) + ")");
    }
}

std::optional<double> StabilityPanel::get(const CountryCode& country, Year year) const {
    auto it = entries_.find({country, year});
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

std::optional<double> StabilityPanel::nearest_year(const CountryCode& country, Year year) const {
    auto lo = entries_.lower_bound({country, std::numeric_limits<Year>::min()});
    std::optional<double> best;
    int best_distance = std::numeric_limits<int>::max();
    for (auto it = lo; it != entries_.end() && it->first.first == country; ++it) {
        int distance = std::abs(it->first.second - year);
        // Iteration is in increasing year, so strict < keeps the earlier year on ties.
        if (distance < best_distance) {
            best_distance = distance;
            best = it->second;
        }
    }
    return best;
}

std::optional<double> StabilityPanel::median_for_year(Year year) const {
    std::vector<double> values;
    for (const auto& [key, pv] : entries_) {
        if (key.second == year) values.push_back(pv);
    }
    if (values.empty()) return std::nullopt;
    std::sort(values.begin(), values.end());
    const auto mid = values.size() / 2;
    return values.size() % 2 == 1 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

StabilityPanel load_pv_csv(const fs::path& path) {
    io::LineReader reader(path);
    std::string line;
    if (!next_content_line(reader, line)) throw DataError("malformed header in " + path.string() + ": file is empty");
    expect_header(line, "country,year,pv_percentile", path);

    StabilityPanel panel;
    IngestReport report;
    while (reader.next(line)) {
        auto view = io::trim(line);
        if (view.empty() || view.front() == '#') continue;
        ++report.rows_read;
        const auto row = reader.line_number();
        auto fields = io::split_csv(view);
        if (fields.size() != 3) {
            note_offender(report, row, "expected 3 fields");
            continue;
        }
        auto country = normalize_country(fields[0]);
        auto year = io::parse_int(fields[1]);
        auto pv = io::parse_double(fields[2]);
        if (!country || !year) {
            note_offender(report, row, "invalid country or year");
            continue;
        }
        if (!pv || !(*pv >= 0.0 && *pv <= 100.0)) {
            note_offender(report, row, "PV outside [0, 100]");
            continue;
        }
        if (panel.get(*country, static_cast<Year>(*year))) {
            throw DataError("duplicate PV entry for (" + *country + ", " + std::to_string(*year) + ") at line " +
                            std::to_string(row));
        }
        panel.insert(*country, static_cast<Year>(*year), *pv);
        ++report.rows_accepted;
    }
    panel.report = std::move(report);
    return panel;
}

std::string pv_csv(const StabilityPanel& panel) {
    std::string out = "country,year,pv_percentile\n";
    for (const auto& [key, pv] : panel.entries()) {
        out += key.first + ',' + std::to_string(key.second) + ',' + format_double(pv) + '\n';
    }
    return out;
}

CandidateLinkSet load_candidate_links(const fs::path& path, int min_votes, int total_repetitions) {
    io::LineReader reader(path);
    std::string line;
    if (!next_content_line(reader, line)) throw DataError("malformed header in " + path.string() + ": file is empty");
    expect_header(line, "input_hs6,output_hs6,votes", path);

    CandidateLinkSet set;
    std::set<std::pair<HsCode, HsCode>> seen;
    while (reader.next(line)) {
        auto view = io::trim(line);
        if (view.empty() || view.front() == '#') continue;
        const auto row = std::to_string(reader.line_number());
        auto fields = io::split_csv(view);
        auto input = fields.size() == 3 ? HsCode::parse(fields[0]) : std::nullopt;
        auto output = fields.size() == 3 ? HsCode::parse(fields[1]) : std::nullopt;
        auto votes = fields.size() == 3 ? io::parse_int(fields[2]) : std::nullopt;
        if (!input || !output || !votes || *votes < 1 || *votes > total_repetitions) {
            ++set.invalid;
            set.warnings.push_back("line " + row + ": invalid link row");
            continue;
        }
        if (*input == *output) {
            ++set.self_loops;
            set.warnings.push_back("line " + row + ": self-loop " + input->str() + " rejected");
            continue;
        }
        if (!seen.insert({*input, *output}).second) {
            ++set.duplicates;
            set.warnings.push_back("line " + row + ": duplicate link " + input->str() + "->" + output->str());
            continue;
        }
        if (*votes < min_votes) {
            ++set.below_threshold;
            continue;
        }
        set.links.push_back({*input, *output, static_cast<int>(*votes)});
    }
    return set;
}

std::string links_csv(const CandidateLinkSet& links) {
    std::string out = "input_hs6,output_hs6,votes\n";
    for (const auto& link : links.links) {
        out += link.input.str() + ',' + link.output.str() + ',' + std::to_string(link.votes) + '\n';
    }
    return out;
}

TradePanel aggregate_region(const TradePanel& panel, const std::set<CountryCode>& members,
                            const CountryCode& region_code) {
    if (members.empty()) throw ConfigError("region " + region_code + ": empty member set");
    if (panel.country_index(region_code)) throw ConfigError("region code " + region_code + " already present in panel");
    for (const auto& member : members) {
        if (!panel.country_index(member)) throw ConfigError("region " + region_code + ": unknown member " + member);
    }
    std::vector<TradeFlow> flows;
    flows.reserve(panel.flows().size());
    for (auto flow : panel.flows()) {
        const bool from_member = members.contains(flow.exporter);
        const bool to_member = members.contains(flow.importer);
        if (from_member && to_member) continue;
        if (from_member) flow.exporter = region_code;
        if (to_member) flow.importer = region_code;
        flows.push_back(std::move(flow));
    }
    auto result = TradePanel::from_flows(std::move(flows));
    result.report = panel.report;
    return result;
}

}  // namespace rarenet
