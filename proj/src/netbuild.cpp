#include "rarenet/netbuild.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <random>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "rarenet/io.hpp"
#include "rarenet/parallel.hpp"

namespace rarenet {

namespace {

using ordered_json = nlohmann::ordered_json;

// Relative threshold below which a centered sum of squares counts as zero variance.
constexpr double kVarianceEpsilon = 1e-24;

double transform(double value, const SeriesOptions& options) {
    return options.log1p ? std::log1p(value) : value;
}

void demean_within_groups(std::vector<double>& values, const std::vector<std::size_t>& groups, std::size_t n_groups) {
    std::vector<double> sums(n_groups, 0.0);
    std::vector<std::size_t> counts(n_groups, 0);
    for (std::size_t i = 0; i < values.size(); ++i) {
        sums[groups[i]] += values[i];
        ++counts[groups[i]];
    }
    for (std::size_t i = 0; i < values.size(); ++i) values[i] -= sums[groups[i]] / static_cast<double>(counts[groups[i]]);
}

}  // namespace

std::vector<CorrelationObservation> correlation_series(const TradePanel& panel, HsCode input, HsCode output) {
    for (HsCode product : {input, output}) {
        double total = 0.0;
        for (Year year : panel.years()) total += panel.world_exports(product, year);
        if (!panel.has_product(product) || total <= 0.0) {
            throw LinkTestError(LinkFailure::absent, "product absent: " + product.str());
        }
    }
    std::vector<CorrelationObservation> observations;
    const auto& countries = panel.countries();
    for (Year year : panel.years()) {
        const auto* in = panel.marginals(input, year);
        const auto* out = panel.marginals(output, year);
        for (std::size_t c = 0; c < countries.size(); ++c) {
            const double in_value = in != nullptr ? in->imports[c] : 0.0;
            const double out_value = out != nullptr ? out->exports[c] : 0.0;
            if (in_value > 0.0 || out_value > 0.0) observations.push_back({countries[c], year, in_value, out_value});
        }
    }
    return observations;
}

double pearson_rho(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    if (n != y.size()) throw DataError("undefined correlation: series lengths differ");
    if (n < 3) throw DataError("undefined correlation: fewer than 3 observations");
    double mean_x = 0.0;
    double mean_y = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mean_x += x[i];
        mean_y += y[i];
    }
    mean_x /= static_cast<double>(n);
    mean_y /= static_cast<double>(n);
    double sxx = 0.0;
    double syy = 0.0;
    double sxy = 0.0;
    double raw_xx = 0.0;
    double raw_yy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mean_x;
        const double dy = y[i] - mean_y;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
        raw_xx += x[i] * x[i];
        raw_yy += y[i] * y[i];
    }
    if (sxx <= kVarianceEpsilon * raw_xx || syy <= kVarianceEpsilon * raw_yy || sxx == 0.0 || syy == 0.0) {
        throw DataError("undefined correlation: zero variance");
    }
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double pearson_rho(std::span<const CorrelationObservation> observations) {
    std::vector<double> x;
    std::vector<double> y;
    x.reserve(observations.size());
    y.reserve(observations.size());
    for (const auto& obs : observations) {
        x.push_back(obs.in_value);
        y.push_back(obs.out_value);
    }
    return pearson_rho(x, y);
}

SeriesCache::SeriesCache(const TradePanel& panel)
    : years_(panel.years()), n_countries_(panel.countries().size()) {
    const std::size_t cells = n_countries_ * years_.size();
    for (HsCode product : panel.products()) {
        std::vector<double> imports(cells, 0.0);
        std::vector<double> exports(cells, 0.0);
        double total = 0.0;
        for (std::size_t y = 0; y < years_.size(); ++y) {
            const auto* m = panel.marginals(product, years_[y]);
            if (m == nullptr) continue;
            total += m->total;
            for (std::size_t c = 0; c < n_countries_; ++c) {
                imports[c * years_.size() + y] = m->imports[c];
                exports[c * years_.size() + y] = m->exports[c];
            }
        }
        if (total <= 0.0) continue;
        products_.push_back(product);
        imports_.push_back(std::move(imports));
        exports_.push_back(std::move(exports));
    }
}

bool SeriesCache::has_product(HsCode product) const {
    return std::binary_search(products_.begin(), products_.end(), product);
}

std::size_t SeriesCache::index_of(HsCode product) const {
    auto it = std::lower_bound(products_.begin(), products_.end(), product);
    if (it == products_.end() || *it != product) {
        throw LinkTestError(LinkFailure::absent, "product absent: " + product.str());
    }
    return static_cast<std::size_t>(it - products_.begin());
}

std::optional<SeriesCache::Rho> SeriesCache::rho(HsCode input, HsCode output, const SeriesOptions& options) const {
    const auto& in = imports_[index_of(input)];
    const auto& out = exports_[index_of(output)];
    std::vector<double> x;
    std::vector<double> y;
    std::vector<std::size_t> year_of;
    x.reserve(in.size());
    y.reserve(in.size());
    for (std::size_t cell = 0; cell < in.size(); ++cell) {
        if (in[cell] > 0.0 || out[cell] > 0.0) {
            x.push_back(transform(in[cell], options));
            y.push_back(transform(out[cell], options));
            year_of.push_back(cell % years_.size());
        }
    }
    if (options.mode == CorrelationMode::within_year) {
        demean_within_groups(x, year_of, years_.size());
        demean_within_groups(y, year_of, years_.size());
    }
    try {
        return Rho{pearson_rho(x, y), x.size()};
    } catch (const DataError&) {
        return std::nullopt;
    }
}

std::string to_string(LinkFailure failure) {
    switch (failure) {
        case LinkFailure::absent: return "absent";
        case LinkFailure::degenerate: return "degenerate";
        case LinkFailure::degenerate_null: return "degenerate_null";
        case LinkFailure::pool_too_small: return "pool_too_small";
    }
    return "unknown";
}

LinkTestResult permutation_test(const SeriesCache& cache, HsCode input, HsCode candidate_output,
                                std::span<const HsCode> output_pool, int n_perm, std::uint64_t rng_seed,
                                const SeriesOptions& options) {
    if (n_perm < kMinPermutations) {
        throw ConfigError("n_perm must be at least " + std::to_string(kMinPermutations) + ", got " +
                          std::to_string(n_perm));
    }
    if (std::find(output_pool.begin(), output_pool.end(), input) != output_pool.end()) {
        throw ConfigError("output pool must exclude the input product " + input.str());
    }
    if (output_pool.size() < kMinNullPool) {
        throw LinkTestError(LinkFailure::pool_too_small, "null pool too small: " + std::to_string(output_pool.size()) +
                                                             " products (need " + std::to_string(kMinNullPool) + ")");
    }
    auto observed = cache.rho(input, candidate_output, options);
    if (!observed) {
        throw LinkTestError(LinkFailure::degenerate,
                            "undefined correlation for " + input.str() + "->" + candidate_output.str());
    }

    // rho(input, j') only depends on j', so each pool member is evaluated at most once.
    std::vector<std::optional<std::optional<double>>> memo(output_pool.size());
    auto pool_rho = [&](std::size_t k) -> std::optional<double> {
        if (!memo[k]) {
            std::optional<double> value;
            if (cache.has_product(output_pool[k])) {
                if (auto r = cache.rho(input, output_pool[k], options)) value = r->value;
            }
            memo[k] = value;
        }
        return *memo[k];
    };

    std::mt19937_64 rng(rng_seed);
    std::uniform_int_distribution<std::size_t> pick(0, output_pool.size() - 1);
    const std::size_t max_failures = 10 * static_cast<std::size_t>(n_perm);
    std::size_t failures = 0;
    std::vector<double> null_values;
    null_values.reserve(static_cast<std::size_t>(n_perm));
    while (null_values.size() < static_cast<std::size_t>(n_perm)) {
        auto value = pool_rho(pick(rng));
        if (!value) {
            if (++failures > max_failures) {
                throw LinkTestError(LinkFailure::degenerate_null, "degenerate null: too many undefined draws");
            }
            continue;
        }
        null_values.push_back(*value);
    }

    double mean = 0.0;
    for (double v : null_values) mean += v;
    mean /= static_cast<double>(null_values.size());
    double ss = 0.0;
    for (double v : null_values) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(null_values.size() - 1));
    if (!(sd > 0.0)) throw LinkTestError(LinkFailure::degenerate_null, "degenerate null: zero spread");

    const auto exceed = std::count_if(null_values.begin(), null_values.end(), [&](double v) { return v >= observed->value; });

    LinkTestResult result;
    result.input = input;
    result.output = candidate_output;
    result.rho = observed->value;
    result.z_score = (observed->value - mean) / sd;
    result.p_value = static_cast<double>(exceed + 1) / static_cast<double>(n_perm + 1);
    result.null_mean = mean;
    result.null_sd = sd;
    result.n_obs = observed->n_obs;
    result.n_perm = static_cast<std::size_t>(n_perm);
    return result;
}

LinkTestResult permutation_test(const TradePanel& panel, HsCode input, HsCode candidate_output,
                                std::span<const HsCode> output_pool, int n_perm, std::uint64_t rng_seed,
                                const SeriesOptions& options) {
    SeriesCache cache(panel);
    return permutation_test(cache, input, candidate_output, output_pool, n_perm, rng_seed, options);
}

LinkValidation validate_links(const CandidateLinkSet& candidates, const TradePanel& panel,
                              const LinkTestConfig& config) {
    LinkValidation validation;
    validation.audit.resize(candidates.links.size());
    if (candidates.links.empty()) return validation;

    const SeriesCache cache(panel);
    parallel_for(candidates.links.size(), config.jobs, [&](std::size_t i) {
        const auto& link = candidates.links[i];
        auto& audit = validation.audit[i];
        audit.candidate = link;
        std::vector<HsCode> pool;
        pool.reserve(cache.products().size());
        for (HsCode product : cache.products()) {
            if (product != link.input) pool.push_back(product);
        }
        const auto sub_seed = mix_seed(config.seed, (std::uint64_t{link.input.value()} << 32) | link.output.value());
        try {
            audit.result = permutation_test(cache, link.input, link.output, pool, config.n_perm, sub_seed, config.series);
        } catch (const LinkTestError& error) {
            audit.drop_reason = to_string(error.failure());
            return;
        }
        if (audit.result->rho <= 0.0) {
            audit.drop_reason = "non_positive_rho";
        } else if (audit.result->z_score < config.z_threshold) {
            audit.drop_reason = "below_threshold";
        } else {
            audit.retained = true;
        }
    });
    for (const auto& audit : validation.audit) {
        if (audit.retained) validation.edges.push_back({audit.candidate.input, audit.candidate.output, audit.result->rho});
    }
    return validation;
}

std::string links_validated_csv(const LinkValidation& validation) {
    std::string out = "input_hs6,output_hs6,rho,z,p,n_obs,retained,drop_reason\n";
    for (const auto& audit : validation.audit) {
        out += audit.candidate.input.str() + ',' + audit.candidate.output.str() + ',';
        if (audit.result) {
            out += format_double(audit.result->rho) + ',' + format_double(audit.result->z_score) + ',' +
                   format_double(audit.result->p_value) + ',' + std::to_string(audit.result->n_obs);
        } else {
            out += ",,,";
        }
        out += audit.retained ? ",1," : ",0,";
        out += audit.drop_reason;
        out += '\n';
    }
    return out;
}

std::vector<ValidatedEdge> read_validated_edges(const std::filesystem::path& path) {
    auto table = io::read_csv(path);
    const auto c_in = table.column("input_hs6");
    const auto c_out = table.column("output_hs6");
    const auto c_rho = table.column("rho");
    const auto c_retained = table.column("retained");
    std::vector<ValidatedEdge> edges;
    for (const auto& row : table.rows) {
        if (row.size() != table.header.size()) throw DataError("malformed row in " + path.string());
        if (row[c_retained] != "1") continue;
        auto input = HsCode::parse(row[c_in]);
        auto output = HsCode::parse(row[c_out]);
        auto rho = io::parse_double(row[c_rho]);
        if (!input || !output || !rho) throw DataError("malformed retained edge in " + path.string());
        edges.push_back({*input, *output, *rho});
    }
    return edges;
}

std::optional<int> ProductionNetwork::tier(HsCode product) const {
    auto it = tiers.find(product);
    if (it == tiers.end()) return std::nullopt;
    return it->second;
}

std::vector<HsCode> ProductionNetwork::predecessors(HsCode product) const {
    std::vector<HsCode> result;
    for (const auto& edge : edges) {
        if (edge.output == product) result.push_back(edge.input);
    }
    std::sort(result.begin(), result.end());
    result.erase(std::unique(result.begin(), result.end()), result.end());
    return result;
}

int ProductionNetwork::max_tier() const {
    int best = -1;
    for (const auto& [product, t] : tiers) best = std::max(best, t);
    return best;
}

bool ProductionNetwork::contains(HsCode product) const {
    return std::binary_search(nodes.begin(), nodes.end(), product);
}

std::map<HsCode, int> assign_tiers(std::span<const ValidatedEdge> edges, const std::set<HsCode>& seeds) {
    std::map<HsCode, std::vector<HsCode>> successors;
    for (const auto& edge : edges) successors[edge.input].push_back(edge.output);
    std::map<HsCode, int> tiers;
    std::deque<HsCode> queue;
    for (HsCode seed : seeds) {
        tiers[seed] = 0;
        queue.push_back(seed);
    }
    while (!queue.empty()) {
        const HsCode node = queue.front();
        queue.pop_front();
        auto it = successors.find(node);
        if (it == successors.end()) continue;
        for (HsCode next : it->second) {
            if (tiers.contains(next)) continue;
            tiers[next] = tiers[node] + 1;
            queue.push_back(next);
        }
    }
    return tiers;
}

bool is_acyclic(std::span<const ValidatedEdge> edges) {
    std::map<HsCode, int> in_degree;
    std::map<HsCode, std::vector<HsCode>> successors;
    for (const auto& edge : edges) {
        successors[edge.input].push_back(edge.output);
        ++in_degree[edge.output];
        in_degree.try_emplace(edge.input, 0);
    }
    std::vector<HsCode> ready;
    for (const auto& [node, degree] : in_degree) {
        if (degree == 0) ready.push_back(node);
    }
    std::size_t visited = 0;
    while (!ready.empty()) {
        HsCode node = ready.back();
        ready.pop_back();
        ++visited;
        for (HsCode next : successors[node]) {
            if (--in_degree[next] == 0) ready.push_back(next);
        }
    }
    return visited == in_degree.size();
}

namespace {

// Edge indices along one directed cycle, or empty when the graph is acyclic.
std::vector<std::size_t> find_cycle(const std::vector<ValidatedEdge>& edges) {
    std::map<HsCode, std::vector<std::size_t>> out_edges;
    for (std::size_t i = 0; i < edges.size(); ++i) out_edges[edges[i].input].push_back(i);

    enum class Mark { unvisited, active, done };
    std::map<HsCode, Mark> marks;
    std::vector<std::size_t> path;  // edge indices from the DFS root

    std::function<std::optional<HsCode>(HsCode)> visit = [&](HsCode node) -> std::optional<HsCode> {
        marks[node] = Mark::active;
        for (std::size_t e : out_edges[node]) {
            const HsCode next = edges[e].output;
            const auto mark = marks.contains(next) ? marks[next] : Mark::unvisited;
            if (mark == Mark::done) continue;
            path.push_back(e);
            if (mark == Mark::active) return next;
            if (auto hit = visit(next)) return hit;
            path.pop_back();
        }
        marks[node] = Mark::done;
        return std::nullopt;
    };

    for (const auto& [node, unused] : out_edges) {
        if (marks.contains(node)) continue;
        path.clear();
        if (auto start = visit(node)) {
            // Trim the path prefix that leads into the cycle.
            std::size_t first = 0;
            while (edges[path[first]].input != *start) ++first;
            return {path.begin() + static_cast<std::ptrdiff_t>(first), path.end()};
        }
    }
    return {};
}

}  // namespace

ProductionNetwork build_network(std::vector<ValidatedEdge> edges, const std::set<HsCode>& seeds) {
    if (seeds.empty()) throw ConfigError("seed set must not be empty");
    ProductionNetwork network;
    network.seeds = seeds;

    std::sort(edges.begin(), edges.end(), [](const ValidatedEdge& a, const ValidatedEdge& b) {
        return std::tie(a.input, a.output) < std::tie(b.input, b.output);
    });
    edges.erase(std::unique(edges.begin(), edges.end(),
                            [](const ValidatedEdge& a, const ValidatedEdge& b) {
                                return a.input == b.input && a.output == b.output;
                            }),
                edges.end());

    while (true) {
        auto cycle = find_cycle(edges);
        if (cycle.empty()) break;
        // Weakest |rho| goes; ties resolve to the lexicographically last edge.
        std::size_t weakest = cycle.front();
        for (std::size_t e : cycle) {
            const double a = std::abs(edges[e].rho);
            const double b = std::abs(edges[weakest].rho);
            if (a < b || (a == b && std::tie(edges[e].input, edges[e].output) >
                                        std::tie(edges[weakest].input, edges[weakest].output))) {
                weakest = e;
            }
        }
        network.dropped.push_back({edges[weakest], "cycle"});
        edges.erase(edges.begin() + static_cast<std::ptrdiff_t>(weakest));
    }

    std::set<HsCode> nodes(seeds.begin(), seeds.end());
    for (const auto& edge : edges) {
        nodes.insert(edge.input);
        nodes.insert(edge.output);
    }
    network.nodes.assign(nodes.begin(), nodes.end());
    network.tiers = assign_tiers(edges, seeds);
    network.edges = std::move(edges);
    return network;
}

std::string network_json(const ProductionNetwork& network, const std::string& manifest) {
    ordered_json doc = ordered_json::object();
    if (!manifest.empty()) doc["manifest"] = manifest;
    doc["seeds"] = ordered_json::array();
    for (HsCode seed : network.seeds) doc["seeds"].push_back(seed.str());
    doc["max_tier"] = network.max_tier();
    doc["nodes"] = ordered_json::array();
    for (HsCode node : network.nodes) {
        ordered_json entry = ordered_json::object();
        entry["hs6"] = node.str();
        if (auto t = network.tier(node)) {
            entry["tier"] = *t;
        } else {
            entry["tier"] = nullptr;
        }
        doc["nodes"].push_back(std::move(entry));
    }
    doc["edges"] = ordered_json::array();
    for (const auto& edge : network.edges) {
        ordered_json entry = ordered_json::object();
        entry["input"] = edge.input.str();
        entry["output"] = edge.output.str();
        entry["rho"] = edge.rho;
        entry["weight"] = edge.weight;
        doc["edges"].push_back(std::move(entry));
    }
    doc["dropped_edges"] = ordered_json::array();
    for (const auto& dropped : network.dropped) {
        ordered_json entry = ordered_json::object();
        entry["input"] = dropped.edge.input.str();
        entry["output"] = dropped.edge.output.str();
        entry["rho"] = dropped.edge.rho;
        entry["reason"] = dropped.reason;
        doc["dropped_edges"].push_back(std::move(entry));
    }
    return doc.dump(2) + "\n";
}

ProductionNetwork parse_network_json(const std::string& text) {
    auto code = [](const nlohmann::json& value) {
        auto parsed = HsCode::parse(value.get<std::string>());
        if (!parsed) throw DataError("network.json: invalid hs6 '" + value.get<std::string>() + "'");
        return *parsed;
    };
    ProductionNetwork network;
    try {
        auto doc = nlohmann::json::parse(text);
        for (const auto& seed : doc.at("seeds")) network.seeds.insert(code(seed));
        for (const auto& node : doc.at("nodes")) {
            const HsCode hs = code(node.at("hs6"));
            network.nodes.push_back(hs);
            if (!node.at("tier").is_null()) network.tiers[hs] = node.at("tier").get<int>();
        }
        std::sort(network.nodes.begin(), network.nodes.end());
        for (const auto& edge : doc.at("edges")) {
            network.edges.push_back({code(edge.at("input")), code(edge.at("output")), edge.at("rho").get<double>(),
                                     edge.at("weight").get<double>()});
        }
        for (const auto& dropped : doc.at("dropped_edges")) {
            network.dropped.push_back({{code(dropped.at("input")), code(dropped.at("output")),
                                        dropped.at("rho").get<double>()},
                                       dropped.at("reason").get<std::string>()});
        }
    } catch (const nlohmann::json::exception& error) {
        throw DataError(std::string("malformed network.json: ") + error.what());
    }
    return network;
}

}  // namespace rarenet
