#pragma once

// Shared fixtures for the unit tests: scratch directories, file writers and small panels.

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "rarenet/common.hpp"
#include "rarenet/ingest.hpp"

namespace testing {

/// Directory removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("rarenet_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ignored;
        std::filesystem::remove_all(path_, ignored);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::filesystem::path write_file(const std::filesystem::path& path, const std::string& contents) {
    std::ofstream out(path, std::ios::binary);
    out << contents;
    return path;
}

inline rarenet::HsCode hs(std::uint32_t code) { return rarenet::HsCode(code); }

/// Alpha-3 style code for the i-th synthetic country: QAA, QAB, ...
inline std::string country(int i) {
    return std::string{'Q', static_cast<char>('A' + i / 26), static_cast<char>('A' + i % 26)};
}

inline rarenet::TradeFlow flow(rarenet::Year year, const std::string& exporter, const std::string& importer,
                               std::uint32_t product, double value) {
    return {year, exporter, importer, rarenet::HsCode(product), value};
}

/// Dense random panel: every ordered country pair trades every product in every year with
/// probability `density`, values lognormal.
inline rarenet::TradePanel random_panel(std::mt19937_64& rng, int n_countries, int n_products, int n_years,
                                        double density = 0.6) {
    std::bernoulli_distribution trades(density);
    std::lognormal_distribution<double> value(3.0, 1.0);
    std::vector<rarenet::TradeFlow> flows;
    for (int y = 0; y < n_years; ++y)
        for (int p = 0; p < n_products; ++p)
            for (int e = 0; e < n_countries; ++e)
                for (int i = 0; i < n_countries; ++i) {
                    if (e == i || !trades(rng)) continue;
                    flows.push_back(flow(2010 + y, country(e), country(i),
                                         static_cast<std::uint32_t>(100000 + p), value(rng)));
                }
    return rarenet::TradePanel::from_flows(std::move(flows));
}

}  // namespace testing
