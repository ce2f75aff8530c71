// hrcm: run one experiment and write its record as JSON (and optionally CSV).

#include <cmath>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "hrcm/bench.hpp"

namespace {

constexpr int kConfigErrorExit = 2;

void write_text(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path);
    if (!out)
        throw hrcm::ConfigError("cannot write " + path);
    out << text;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hierarchical randomized compression for kernel summation"};
    app.require_subcommand(1);
    auto* run = app.add_subcommand("run", "Run one experiment");

    hrcm::ExperimentConfig cfg;
    std::string mode = "single";
    int p = -1;
    double eta = std::nan("");
    std::string out_path = "-";
    std::string csv_path;
    bool no_timing = false;

    run->add_option("--mode", mode, "pair | single | census | svd-decay | gram-check | timing")->capture_default_str();
    run->add_option("--kernel", cfg.kernel,
                    "log2d | screened:GAMMA | helmholtz:K. In single-set runs the i == j self term is left out.")
        ->capture_default_str();
    run->add_option("--n", cfg.n, "Points per set (a power of 4)")->capture_default_str();
    run->add_option("--p", p, "Sets N = 4^p (overrides --n)");
    run->add_option("--L", cfg.L, "Box side length")->capture_default_str();
    run->add_option("--p0", cfg.p0, "Leaf boxes hold 4^p0 points")->capture_default_str();
    run->add_option("--k", cfg.K, "Sampled columns and rows per block (c = r = K)")->capture_default_str();
    run->add_option("--epsilon", cfg.epsilon, "Singular-value cutoff")->capture_default_str();
    run->add_option("--eta", eta,
                    "single/timing: admissibility ratio (default 0.7071); pair/svd-decay/gram-check: place the "
                    "boxes L/eta apart");
    run->add_option("--seed", cfg.seed, "Run seed")->capture_default_str();
    run->add_option("--realizations", cfg.realizations, "Independent randomized runs")->capture_default_str();
    run->add_option("--pair-separation", cfg.pair_separation, "Center distance of the two boxes")
        ->capture_default_str();
    run->add_option("--x", cfg.x, "ones | random | file:PATH")->capture_default_str();
    run->add_option("--density", cfg.density, "ones | uniform")->capture_default_str();
    run->add_option("--layout", cfg.layout, "jittered | center")->capture_default_str();
    run->add_option("--sampling", cfg.sampling, "stratified | iid")->capture_default_str();
    run->add_option("--apply", cfg.apply, "singular | projector")->capture_default_str();
    run->add_option("--threads", cfg.threads, "Worker threads (0: HRCM_THREADS or all cores)")->capture_default_str();
    run->add_option("--p-min", cfg.p_min, "Timing sweep start exponent")->capture_default_str();
    run->add_option("--p-max", cfg.p_max, "Timing sweep end exponent")->capture_default_str();
    run->add_option("--direct-cap", cfg.direct_cap, "Largest N timed with direct summation")->capture_default_str();
    run->add_option("--gram-trials", cfg.gram_trials, "Sketches per Gram-error estimate")->capture_default_str();
    run->add_option("--gram-c", cfg.gram_c, "Columns per Gram-error sketch")->capture_default_str();
    run->add_option("--out", out_path, "JSON output path ('-' for stdout)")->capture_default_str();
    run->add_option("--csv", csv_path, "Optional CSV output path");
    run->add_flag("--no-timing", no_timing, "Leave wall-clock fields out of the JSON record");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfigErrorExit;
    }

    try {
        cfg.mode = hrcm::parse_mode(mode);
        if (p >= 0) {
            if (p > 15)
                throw hrcm::ConfigError("--p must be at most 15");
            cfg.n = std::size_t{1} << (2 * p);
        }
        if (!std::isnan(eta))
            cfg.eta = eta;
        const auto rec = hrcm::run_experiment(cfg);
        write_text(out_path, hrcm::to_json(rec, !no_timing).dump(2) + "\n");
        if (!csv_path.empty())
            write_text(csv_path, hrcm::to_csv(rec));
    } catch (const hrcm::ConfigError& e) {
        std::cerr << "hrcm: " << e.what() << "\n";
        return kConfigErrorExit;
    } catch (const std::exception& e) {
        std::cerr << "hrcm: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
