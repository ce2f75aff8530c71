#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "hrcm/bench.hpp"

using namespace hrcm;
using nlohmann::json;

namespace {

json load_golden(const std::string& name) {
    std::ifstream in(std::string(HRCM_GOLDEN_DIR) + "/" + name);
    REQUIRE(in.good());
    return json::parse(in);
}

// Same keys, types and strings; numbers equal to 1e-9 relative.
bool same_record(const json& a, const json& b, std::string path = "") {
    if (a.is_number() && b.is_number()) {
        const double x = a.get<double>();
        const double y = b.get<double>();
        if (std::abs(x - y) <= 1e-9 * std::max(std::abs(x), std::abs(y)))
            return true;
        MESSAGE("number differs at " << path << ": " << x << " vs " << y);
        return false;
    }
    if (a.type() != b.type()) {
        MESSAGE("type differs at " << path);
        return false;
    }
    if (a.is_object()) {
        if (a.size() != b.size()) {
            MESSAGE("key count differs at " << path);
            return false;
        }
        for (const auto& [key, value] : a.items())
            if (!b.contains(key) || !same_record(value, b.at(key), path + "/" + key))
                return false;
        return true;
    }
    if (a.is_array()) {
        if (a.size() != b.size()) {
            MESSAGE("length differs at " << path);
            return false;
        }
        for (std::size_t i = 0; i < a.size(); ++i)
            if (!same_record(a[i], b[i], path + "/" + std::to_string(i)))
                return false;
        return true;
    }
    return a == b;
}

} // namespace

TEST_CASE("configuration validation") {
    ExperimentConfig ok;
    CHECK_NOTHROW(ok.validate());
    auto bad = [&](auto mutate) {
        ExperimentConfig c;
        mutate(c);
        CHECK_THROWS_AS(c.validate(), ConfigError);
    };
    bad([](ExperimentConfig& c) { c.n = 1000; });
    bad([](ExperimentConfig& c) { c.K = 0; });
    bad([](ExperimentConfig& c) { c.epsilon = 0; });
    bad([](ExperimentConfig& c) { c.L = -1; });
    bad([](ExperimentConfig& c) { c.eta = -0.5; });
    bad([](ExperimentConfig& c) { c.realizations = 0; });
    bad([](ExperimentConfig& c) { c.kernel = "gauss"; });
    bad([](ExperimentConfig& c) { c.x = "twos"; });
    bad([](ExperimentConfig& c) { c.sampling = "sobol"; });
    bad([](ExperimentConfig& c) {
        c.mode = Mode::Pair;
        c.pair_separation = 4;
    });
    bad([](ExperimentConfig& c) {
        c.mode = Mode::GramCheck;
        c.kernel = "helmholtz:1";
    });
    bad([](ExperimentConfig& c) {
        c.mode = Mode::Census;
        c.n = 4;
    });
    CHECK_THROWS_AS(parse_mode("fast"), ConfigError);
    CHECK(parse_mode("svd-decay") == Mode::SvdDecay);
    CHECK(to_string(Mode::GramCheck) == "gram-check");
}

TEST_CASE("pair geometry follows eta or the separation") {
    ExperimentConfig c;
    CHECK(c.separation() == 16.0);
    c.eta = 0.25;
    CHECK(c.separation() == 32.0);
    CHECK(c.admissibility_eta() == 0.25);
    ExperimentConfig d;
    CHECK(d.admissibility_eta() == doctest::Approx(std::sqrt(2.0) / 2.0));
    d.n = 1024;
    CHECK(d.p() == 5);
}

TEST_CASE("census mode") {
    ExperimentConfig c;
    c.mode = Mode::Census;
    c.n = 64;
    c.p0 = 0;
    const auto rec = run_experiment(c);
    REQUIRE(rec.census);
    const auto& r1 = rec.census->rows[1];
    CHECK((r1.S == 4 && r1.E == 8 && r1.V == 4 && r1.LR == 0));
}

TEST_CASE("golden census record") {
    ExperimentConfig c;
    c.mode = Mode::Census;
    c.n = 256;
    c.p0 = 1;
    CHECK(same_record(to_json(run_experiment(c), false), load_golden("census_p4_p0_1.json")));
}

TEST_CASE("golden svd-decay record") {
    ExperimentConfig c;
    c.mode = Mode::SvdDecay;
    c.n = 64;
    c.K = 16;
    c.seed = 7;
    const auto rec = run_experiment(c);
    CHECK(rec.sigma_exact.size() == 18);
    CHECK(rec.sigma_sampled.size() == 16);
    CHECK(same_record(to_json(rec, false), load_golden("svd_decay_n64_k16.json")));
}

TEST_CASE("pair mode error band at K = 16") {
    ExperimentConfig c;
    c.mode = Mode::Pair;
    c.n = 1024;
    c.K = 16;
    c.eta = 0.5;
    const auto rec = run_experiment(c);
    REQUIRE(rec.stats);
    CHECK(rec.stats->realizations == 20);
    CHECK(rec.stats->mean >= 8.9e-3);
    CHECK(rec.stats->mean <= 8.0e-2);
    CHECK(rec.t_direct >= 0.0);
}

TEST_CASE("single mode on one leaf equals direct") {
    ExperimentConfig c;
    c.mode = Mode::Single;
    c.n = 16;
    c.realizations = 3;
    const auto rec = run_experiment(c);
    REQUIRE(rec.stats);
    CHECK(rec.stats->mean <= 1e-12);
}

TEST_CASE("records are reproducible apart from wall-clock fields") {
    ExperimentConfig c;
    c.mode = Mode::Single;
    c.n = 256;
    c.p0 = 1;
    c.K = 8;
    c.realizations = 4;
    c.x = "random";
    c.density = "uniform";
    c.kernel = "helmholtz:1";
    const auto a = to_json(run_experiment(c), false).dump();
    const auto b = to_json(run_experiment(c), false).dump();
    CHECK(a == b);
    CHECK(a.find("t_hrcm") == std::string::npos);
    c.seed = 43;
    CHECK(to_json(run_experiment(c), false).dump() != a);
}

TEST_CASE("gram-check mode") {
    ExperimentConfig c;
    c.mode = Mode::GramCheck;
    c.gram_trials = 2000;
    const auto rec = run_experiment(c);
    CHECK(rec.extra["identity"]["relative_gap"].get<double>() < 0.1);
    const auto& no = rec.extra["nearly_optimal"];
    CHECK(no["empirical"].get<double>() <= no["bound"].get<double>() + 3 * no["std_error"].get<double>());
}

TEST_CASE("timing mode and csv layout") {
    ExperimentConfig c;
    c.mode = Mode::Timing;
    c.p_min = 2;
    c.p_max = 4;
    c.direct_cap = 64;
    const auto rec = run_experiment(c);
    REQUIRE(rec.rows.size() == 3);
    CHECK(rec.rows[0].t_direct >= 0.0);
    CHECK(rec.rows[2].t_direct < 0.0);
    const auto csv = to_csv(rec);
    CHECK(csv.rfind("N,K,mean,variance,t_direct,t_hrcm\n", 0) == 0);
    std::istringstream lines(csv);
    std::string line;
    int n = 0;
    while (std::getline(lines, line))
        ++n;
    CHECK(n == 4);
    const auto j = to_json(rec, true);
    CHECK(j.contains("slope_hrcm"));
    CHECK(j["sweep"].size() == 3);
}

TEST_CASE("x read from a file") {
    const std::string path = "x_values.txt";
    {
        std::ofstream out(path);
        for (int i = 0; i < 16; ++i)
            out << 0.5 * i << "\n";
    }
    ExperimentConfig c;
    c.mode = Mode::Single;
    c.n = 16;
    c.realizations = 1;
    c.x = "file:" + path;
    CHECK(run_experiment(c).stats->mean <= 1e-12);
    c.n = 64;
    CHECK_THROWS_AS(run_experiment(c), ConfigError);
}

TEST_CASE("log-log slope") {
    CHECK(loglog_slope({1, 10, 100}, {2, 200, 20000}) == doctest::Approx(2.0));
    CHECK(loglog_slope({4, 16}, {3, 6}) == doctest::Approx(0.5));
    CHECK_THROWS_AS(loglog_slope({1}, {1}), ConfigError);
}
