#pragma once
//
// Experiment runner behind the `hrcm` command line tool.
//

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hrcm/analysis.hpp"
#include "hrcm/hmatrix.hpp"

namespace hrcm {

enum class Mode { Pair, Single, Census, SvdDecay, GramCheck, Timing };

Mode parse_mode(const std::string& s);
std::string to_string(Mode m);

struct ExperimentConfig {
    Mode mode = Mode::Single;
    std::string kernel = "screened:0.01";
    std::size_t n = 4096;  // points per set; a power of 4
    double L = 8.0;        // box side
    int p0 = 2;
    std::size_t K = 16;    // c = r = K
    double epsilon = 1e-8;
    // Admissibility ratio in single/timing mode. In pair and svd-decay mode a
    // given eta places the boxes L / eta apart instead of pair_separation.
    std::optional<double> eta;
    std::uint64_t seed = 42;
    std::size_t realizations = 20;
    double pair_separation = 16.0;
    std::string x = "ones";         // ones | random | file:PATH
    std::string density = "ones";   // ones | uniform
    std::string layout = "jittered"; // jittered | center
    std::string sampling = "stratified"; // stratified | iid
    std::string apply = "singular";  // singular | projector
    unsigned threads = 0;
    // Timing mode sweeps N = 4^p_min .. 4^p_max; direct sums above direct_cap are skipped.
    int p_min = 5;
    int p_max = 9;
    std::size_t direct_cap = std::size_t{1} << 14;
    std::size_t gram_trials = 10000;
    std::size_t gram_c = 8;

    // Throws ConfigError on any invalid or mode-incompatible field.
    void validate() const;
    int p() const;
    double admissibility_eta() const;
    double separation() const;
    TraversalConfig traversal() const;
};

struct CsvRow {
    std::size_t N = 0;
    std::size_t K = 0;
    double mean = 0.0;
    double variance = 0.0;
    double t_direct = -1.0; // negative when not measured
    double t_hrcm = -1.0;
};

struct RunRecord {
    ExperimentConfig config;
    std::optional<ErrorStats> stats;
    double t_direct = -1.0;
    double t_hrcm = -1.0;
    std::optional<CensusTable> census;
    std::optional<CensusTable> visited;
    std::vector<double> sigma_exact;
    std::vector<double> sigma_sampled;
    std::vector<CsvRow> rows;
    nlohmann::json extra = nlohmann::json::object();
};

RunRecord run_experiment(const ExperimentConfig& cfg);

nlohmann::json config_to_json(const ExperimentConfig& cfg);
nlohmann::json census_to_json(const CensusTable& table);
// With include_timing = false the wall-clock fields are left out.
nlohmann::json to_json(const RunRecord& rec, bool include_timing = true);
std::string to_csv(const RunRecord& rec);

// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

} // namespace hrcm
