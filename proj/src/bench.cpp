#include "hrcm/bench.hpp"

#include <bit>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

namespace hrcm {

namespace {

constexpr std::uint64_t kGeometryStream = 0x67656f6dull; // "geom"
constexpr std::uint64_t kVectorStream = 0x76656374ull;   // "vect"
constexpr std::uint64_t kGramStream = 0x6772616dull;     // "gram"

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

bool is_power_of_four(std::size_t n) { return n > 0 && (n & (n - 1)) == 0 && (std::countr_zero(n) % 2 == 0); }

GridLayout layout_of(const ExperimentConfig& cfg) {
    return cfg.layout == "center" ? GridLayout::CellCenter : GridLayout::Jittered;
}

DensityKind density_of(const ExperimentConfig& cfg) {
    return cfg.density == "uniform" ? DensityKind::UniformRandom : DensityKind::Ones;
}

template <KernelScalar T>
std::vector<T> make_x(const ExperimentConfig& cfg, std::size_t n) {
    std::vector<T> x(n, T(1));
    if (cfg.x == "ones")
        return x;
    if (cfg.x == "random") {
        RandomStream rng(cfg.seed, kVectorStream);
        for (auto& v : x)
            v = T(rng.uniform01());
        return x;
    }
    const std::string path = cfg.x.substr(5);
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open x file " + path);
    std::size_t k = 0;
    double v = 0.0;
    while (k < n && in >> v)
        x[k++] = T(v);
    if (k != n)
        throw ConfigError("x file " + path + " holds fewer than N values");
    return x;
}

struct PairSetup {
    PointSet sources;
    PointSet targets;
    QuadTree source_tree;
    QuadTree target_tree;
};

PairSetup make_pair(const ExperimentConfig& cfg) {
    RandomStream rng(cfg.seed, kGeometryStream);
    const int p = cfg.p();
    const Point2D so{0.0, 0.0};
    const Point2D to{cfg.separation(), 0.0};
    auto sources = make_grid_points(p, cfg.L, so, layout_of(cfg), density_of(cfg), rng);
    auto targets = make_grid_points(p, cfg.L, to, layout_of(cfg), density_of(cfg), rng);
    auto st = QuadTree::build(sources, cfg.L, std::min(cfg.p0, p), TreeMode::Grid, so);
    auto tt = QuadTree::build(targets, cfg.L, std::min(cfg.p0, p), TreeMode::Grid, to);
    return {std::move(sources), std::move(targets), std::move(st), std::move(tt)};
}

template <KernelScalar T>
void run_pair(const ExperimentConfig& cfg, const Kernel& kernel, RunRecord& rec) {
    const auto setup = make_pair(cfg);
    const auto x = make_x<T>(cfg, setup.sources.size());
    const auto tcfg = cfg.traversal();

    auto t0 = Clock::now();
    const auto ref = direct_summation<T>(setup.targets, setup.sources, kernel, std::span<const T>(x), false,
                                         cfg.threads);
    rec.t_direct = seconds_since(t0);

    const auto& tt = setup.target_tree;
    const auto& st = setup.source_tree;
    const auto x_tree = st.to_tree_order(std::span<const T>(x));
    std::vector<std::vector<T>> runs;
    t0 = Clock::now();
    for (std::size_t s = 0; s < cfg.realizations; ++s) {
        std::vector<T> y(tt.size(), T(0));
        low_rank_product<T>(kernel, tt, tt.root(), st, st.root(), tcfg, realization_seed(cfg.seed, s), x_tree, y);
        runs.push_back(tt.to_original_order(std::span<const T>(y)));
    }
    rec.t_hrcm = seconds_since(t0) / static_cast<double>(cfg.realizations);
    rec.stats = error_stats(std::span<const T>(ref), runs);
    rec.rows.push_back({setup.sources.size(), cfg.K, rec.stats->mean, rec.stats->variance, rec.t_direct, rec.t_hrcm});
}

template <KernelScalar T>
void run_single(const ExperimentConfig& cfg, const Kernel& kernel, RunRecord& rec) {
    RandomStream rng(cfg.seed, kGeometryStream);
    const int p = cfg.p();
    const auto pts = make_grid_points(p, cfg.L, {0.0, 0.0}, layout_of(cfg), density_of(cfg), rng);
    const auto tree = QuadTree::build(pts, cfg.L, std::min(cfg.p0, p));
    const auto x = make_x<T>(cfg, pts.size());
    const auto tcfg = cfg.traversal();

    auto t0 = Clock::now();
    const auto ref = direct_summation<T>(pts, pts, kernel, std::span<const T>(x), true, cfg.threads);
    rec.t_direct = seconds_since(t0);

    std::vector<std::vector<T>> runs;
    t0 = Clock::now();
    for (std::size_t s = 0; s < cfg.realizations; ++s)
        runs.push_back(hmatrix_product<T>(kernel, tree, tree, std::span<const T>(x), tcfg, realization_seed(cfg.seed, s)));
    rec.t_hrcm = seconds_since(t0) / static_cast<double>(cfg.realizations);
    rec.stats = error_stats(std::span<const T>(ref), runs);
    rec.visited = plan_blocks(tree, tree, tcfg).visited;
    rec.rows.push_back({pts.size(), cfg.K, rec.stats->mean, rec.stats->variance, rec.t_direct, rec.t_hrcm});
}

// Minimum wall time over repeated calls; short runs are repeated up to five
// times to damp scheduler noise.
template <typename F>
double min_time(F&& body) {
    double best = 0.0;
    double total = 0.0;
    for (int rep = 0; rep < 5; ++rep) {
        const auto t0 = Clock::now();
        body();
        const double t = seconds_since(t0);
        best = rep == 0 ? t : std::min(best, t);
        total += t;
        if (total > 1.0)
            break;
    }
    return best;
}

template <KernelScalar T>
void run_timing(const ExperimentConfig& cfg, const Kernel& kernel, RunRecord& rec) {
    std::vector<double> ns_h, th, ns_d, td;
    for (int p = cfg.p_min; p <= cfg.p_max; ++p) {
        RandomStream rng(cfg.seed, kGeometryStream);
        const auto pts = make_grid_points(p, cfg.L, {0.0, 0.0}, layout_of(cfg), density_of(cfg), rng);
        const auto N = pts.size();
        const auto x = make_x<T>(cfg, N);
        std::vector<T> y;
        CsvRow row{N, cfg.K, 0.0, 0.0, -1.0, 0.0};
        row.t_hrcm = min_time([&] {
            const auto tree = QuadTree::build(pts, cfg.L, std::min(cfg.p0, p));
            y = hmatrix_product<T>(kernel, tree, tree, std::span<const T>(x), cfg.traversal(), cfg.seed);
        });
        ns_h.push_back(static_cast<double>(N));
        th.push_back(row.t_hrcm);
        if (N <= cfg.direct_cap) {
            std::vector<T> ref;
            row.t_direct = min_time(
                [&] { ref = direct_summation<T>(pts, pts, kernel, std::span<const T>(x), true, cfg.threads); });
            row.mean = relative_error(std::span<const T>(ref), std::span<const T>(y));
            ns_d.push_back(static_cast<double>(N));
            td.push_back(row.t_direct);
        } else {
            row.mean = std::nan("");
        }
        rec.rows.push_back(row);
    }
    rec.extra["slope_hrcm"] = ns_h.size() >= 2 ? loglog_slope(ns_h, th) : std::nan("");
    rec.extra["slope_direct"] = ns_d.size() >= 2 ? loglog_slope(ns_d, td) : std::nan("");
}

template <KernelScalar T>
void run_svd_decay(const ExperimentConfig& cfg, const Kernel& kernel, RunRecord& rec) {
    constexpr std::size_t kShown = 18;
    const auto setup = make_pair(cfg);
    const auto& tt = setup.target_tree;
    const auto& st = setup.source_tree;
    const KernelBlock<T> block(kernel, tt.points(), st.points(), st.densities());
    Mat<T> A(static_cast<Eigen::Index>(block.rows()), static_cast<Eigen::Index>(block.cols()));
    for (std::size_t i = 0; i < block.rows(); ++i)
        for (std::size_t j = 0; j < block.cols(); ++j)
            A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = block.entry(i, j);
    Eigen::BDCSVD<Mat<T>> svd(A);
    const auto& s = svd.singularValues();
    for (Eigen::Index k = 0; k < s.size() && static_cast<std::size_t>(k) < kShown; ++k)
        rec.sigma_exact.push_back(s(k));

    // Singular values of the sampled core, as seen by the compression.
    const auto tcfg = cfg.traversal();
    const auto seed = realization_seed(cfg.seed, 0);
    auto stream = [&](SamplePurpose purpose) {
        return derive_stream(seed, StreamId{0, block_stream_key(tt.root()), block_stream_key(st.root()),
                                            static_cast<std::uint64_t>(purpose)});
    };
    RandomStream col_rng = stream(SamplePurpose::Columns);
    RandomStream row_rng = stream(SamplePurpose::Rows);
    auto draw = [&](const QuadTree& tree, std::size_t count, RandomStream& rng) {
        return tcfg.sampling == SamplingScheme::StratifiedPath ? stratified_path_sample(tree, tree.root(), count, rng)
                                                               : random_path_sample(tree, tree.root(), count, rng);
    };
    const auto cols = draw(st, cfg.K, col_rng);
    const auto rows = draw(tt, cfg.K, row_rng);
    const auto C = sample_columns(block, std::span<const std::size_t>(cols));
    const auto Cr = sample_rows(C, std::span<const std::size_t>(rows));
    const auto core = svd_small(Cr);
    for (Eigen::Index k = 0; k < core.sigma.size() && static_cast<std::size_t>(k) < kShown; ++k)
        rec.sigma_sampled.push_back(core.sigma(k));
    rec.extra["separation"] = cfg.separation();
    rec.extra["eta"] = cfg.L / cfg.separation();
}

void run_gram_check(const ExperimentConfig& cfg, const Kernel& kernel, RunRecord& rec) {
    constexpr Eigen::Index kSize = 64;
    RandomStream rng(cfg.seed, kGramStream);
    std::normal_distribution<double> normal;
    Mat<double> G(kSize, kSize);
    for (Eigen::Index j = 0; j < kSize; ++j)
        for (Eigen::Index i = 0; i < kSize; ++i)
            G(i, j) = normal(rng);
    const auto probs = optimal_probabilities(G);
    const double closed = gram_error_expectation(G, cfg.gram_c);
    const auto emp = empirical_gram_error(G, cfg.gram_c, std::span<const double>(probs), cfg.gram_trials, rng);
    rec.extra["identity"] = {{"closed_form", closed},
                             {"empirical", emp.mean},
                             {"std_error", emp.std_error},
                             {"relative_gap", std::abs(emp.mean - closed) / closed}};

    // Uniform sampling on a separated 64 x 64 kernel block.
    ExperimentConfig small = cfg;
    small.n = 64;
    const auto setup = make_pair(small);
    const auto& tt = setup.target_tree;
    const auto& st = setup.source_tree;
    const KernelBlock<double> block(kernel, tt.points(), st.points(), st.densities());
    Mat<double> A(kSize, kSize);
    for (Eigen::Index i = 0; i < kSize; ++i)
        for (Eigen::Index j = 0; j < kSize; ++j)
            A(i, j) = block.entry(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
    const auto geom = SeparatedPairGeometry::from(cfg.L, cfg.separation());
    const double beta = beta_ratio(kernel, geom);
    const std::vector<double> uniform(kSize, 1.0 / kSize);
    const auto emp_u = empirical_gram_error(A, cfg.gram_c, std::span<const double>(uniform), cfg.gram_trials, rng);
    const double bound = gram_error_bound(A, cfg.gram_c, beta);
    rec.extra["nearly_optimal"] = {{"beta", beta},
                                   {"bound", bound},
                                   {"empirical", emp_u.mean},
                                   {"std_error", emp_u.std_error},
                                   {"optimal_expectation", gram_error_expectation(A, cfg.gram_c)}};
}

template <KernelScalar T>
void dispatch(const ExperimentConfig& cfg, const Kernel& kernel, RunRecord& rec) {
    switch (cfg.mode) {
    case Mode::Pair: run_pair<T>(cfg, kernel, rec); break;
    case Mode::Single: run_single<T>(cfg, kernel, rec); break;
    case Mode::Timing: run_timing<T>(cfg, kernel, rec); break;
    case Mode::SvdDecay: run_svd_decay<T>(cfg, kernel, rec); break;
    default: break;
    }
}

} // namespace

Mode parse_mode(const std::string& s) {
    if (s == "pair") return Mode::Pair;
    if (s == "single") return Mode::Single;
    if (s == "census") return Mode::Census;
    if (s == "svd-decay") return Mode::SvdDecay;
    if (s == "gram-check") return Mode::GramCheck;
    if (s == "timing") return Mode::Timing;
    throw ConfigError("unknown mode '" + s + "'");
}

std::string to_string(Mode m) {
    switch (m) {
    case Mode::Pair: return "pair";
    case Mode::Single: return "single";
    case Mode::Census: return "census";
    case Mode::SvdDecay: return "svd-decay";
    case Mode::GramCheck: return "gram-check";
    case Mode::Timing: return "timing";
    }
    return "?";
}

int ExperimentConfig::p() const {
    return static_cast<int>(std::countr_zero(n) / 2);
}

double ExperimentConfig::admissibility_eta() const { return eta.value_or(std::sqrt(2.0) / 2.0); }

double ExperimentConfig::separation() const { return eta ? L / *eta : pair_separation; }

TraversalConfig ExperimentConfig::traversal() const {
    TraversalConfig t = default_config(p0, K);
    t.eta = admissibility_eta();
    t.budget.epsilon = epsilon;
    t.sampling = sampling == "iid" ? SamplingScheme::IidPath : SamplingScheme::StratifiedPath;
    t.form = apply == "projector" ? ApplyForm::Projector : ApplyForm::Singular;
    t.threads = threads;
    return t;
}

void ExperimentConfig::validate() const {
    const auto kern = Kernel::parse(kernel);
    if (!is_power_of_four(n))
        throw ConfigError("N must be a power of 4");
    if (!(L > 0.0) || !std::isfinite(L))
        throw ConfigError("L must be positive");
    if (p0 < 0 || p0 > 8)
        throw ConfigError("p0 must lie in [0, 8]");
    if (K == 0)
        throw ConfigError("K must be positive");
    if (!(epsilon > 0.0))
        throw ConfigError("epsilon must be positive");
    if (eta && !(*eta > 0.0))
        throw ConfigError("eta must be positive");
    if (realizations == 0)
        throw ConfigError("realizations must be positive");
    if (!(pair_separation > 0.0))
        throw ConfigError("pair separation must be positive");
    if (x != "ones" && x != "random" && x.rfind("file:", 0) != 0)
        throw ConfigError("x must be ones, random or file:PATH");
    if (density != "ones" && density != "uniform")
        throw ConfigError("density must be ones or uniform");
    if (layout != "jittered" && layout != "center")
        throw ConfigError("layout must be jittered or center");
    if (sampling != "stratified" && sampling != "iid")
        throw ConfigError("sampling must be stratified or iid");
    if (apply != "singular" && apply != "projector")
        throw ConfigError("apply must be singular or projector");
    if (gram_trials == 0 || gram_c == 0)
        throw ConfigError("gram trials and c must be positive");

    switch (mode) {
    case Mode::Pair:
    case Mode::SvdDecay:
        if (!(separation() > L))
            throw ConfigError("the two boxes overlap: separation must exceed L");
        if (mode == Mode::SvdDecay && n > 4096)
            throw ConfigError("svd-decay forms the dense block; N must be at most 4096");
        break;
    case Mode::Single:
        break;
    case Mode::Census:
        if (p() < p0)
            throw ConfigError("census needs N >= 4^p0");
        break;
    case Mode::GramCheck:
        if (kern.is_complex() || !kern.is_radial())
            throw ConfigError("gram-check needs a real radial kernel");
        if (!(separation() > L))
            throw ConfigError("the two boxes overlap: separation must exceed L");
        break;
    case Mode::Timing:
        if (p_min < p0 || p_max < p_min || p_max > 12)
            throw ConfigError("timing sweep needs p0 <= p_min <= p_max <= 12");
        break;
    }
}

RunRecord run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    RunRecord rec;
    rec.config = cfg;
    const auto kernel = Kernel::parse(cfg.kernel);
    if (cfg.mode == Mode::Census) {
        rec.census = block_census(cfg.p(), cfg.p0);
        return rec;
    }
    if (cfg.mode == Mode::GramCheck) {
        run_gram_check(cfg, kernel, rec);
        return rec;
    }
    if (kernel.is_complex())
        dispatch<cplx>(cfg, kernel, rec);
    else
        dispatch<double>(cfg, kernel, rec);
    return rec;
}

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
    nlohmann::json j = {{"mode", to_string(cfg.mode)},
                        {"kernel", cfg.kernel},
                        {"N", cfg.n},
                        {"L", cfg.L},
                        {"p0", cfg.p0},
                        {"K", cfg.K},
                        {"epsilon", cfg.epsilon},
                        {"seed", cfg.seed},
                        {"realizations", cfg.realizations},
                        {"pair_separation", cfg.pair_separation},
                        {"x", cfg.x},
                        {"density", cfg.density},
                        {"layout", cfg.layout},
                        {"sampling", cfg.sampling},
                        {"apply", cfg.apply}};
    j["eta"] = cfg.eta ? nlohmann::json(*cfg.eta) : nlohmann::json(nullptr);
    if (cfg.mode == Mode::Timing) {
        j["p_min"] = cfg.p_min;
        j["p_max"] = cfg.p_max;
        j["direct_cap"] = cfg.direct_cap;
    }
    if (cfg.mode == Mode::GramCheck) {
        j["gram_trials"] = cfg.gram_trials;
        j["gram_c"] = cfg.gram_c;
    }
    return j;
}

nlohmann::json census_to_json(const CensusTable& table) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : table.rows)
        rows.push_back({{"level", r.level},
                        {"S", r.S},
                        {"E", r.E},
                        {"V", r.V},
                        {"LR", r.LR},
                        {"F", r.F},
                        {"lr_covered", r.lr_covered}});
    return {{"levels", rows}, {"direct_work", table.direct_work}, {"lowrank_work", table.lowrank_work}};
}

namespace {

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

} // namespace

nlohmann::json to_json(const RunRecord& rec, bool include_timing) {
    nlohmann::json j;
    j["config"] = config_to_json(rec.config);
    if (rec.stats) {
        j["errors"] = rec.stats->errors;
        j["mean"] = rec.stats->mean;
        j["variance"] = rec.stats->variance;
        j["realizations"] = rec.stats->realizations;
    }
    if (include_timing && rec.t_direct >= 0.0)
        j["t_direct"] = rec.t_direct;
    if (include_timing && rec.t_hrcm >= 0.0)
        j["t_hrcm"] = rec.t_hrcm;
    if (rec.census)
        j["census"] = census_to_json(*rec.census);
    if (rec.visited)
        j["visited"] = census_to_json(*rec.visited);
    if (!rec.sigma_exact.empty())
        j["sigma_exact"] = rec.sigma_exact;
    if (!rec.sigma_sampled.empty())
        j["sigma_sampled"] = rec.sigma_sampled;
    if (rec.config.mode == Mode::Timing) {
        nlohmann::json rows = nlohmann::json::array();
        for (const auto& r : rec.rows) {
            nlohmann::json row = {{"N", r.N}, {"K", r.K}, {"error", number_or_null(r.mean)}};
            if (include_timing) {
                row["t_hrcm"] = r.t_hrcm;
                row["t_direct"] = r.t_direct >= 0.0 ? nlohmann::json(r.t_direct) : nlohmann::json(nullptr);
            }
            rows.push_back(row);
        }
        j["sweep"] = rows;
    }
    for (const auto& [key, value] : rec.extra.items()) {
        if (!include_timing && key.rfind("slope", 0) == 0)
            continue;
        j[key] = value.is_number() ? number_or_null(value.get<double>()) : value;
    }
    return j;
}

std::string to_csv(const RunRecord& rec) {
    std::ostringstream out;
    out << "N,K,mean,variance,t_direct,t_hrcm\n";
    out << std::setprecision(6);
    auto field = [](double v) {
        std::ostringstream f;
        f << std::setprecision(6);
        if (std::isfinite(v) && v >= 0.0)
            f << v;
        return f.str();
    };
    for (const auto& r : rec.rows)
        out << r.N << ',' << r.K << ',' << field(r.mean) << ',' << field(r.variance) << ',' << field(r.t_direct)
            << ',' << field(r.t_hrcm) << '\n';
    return out.str();
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw ConfigError("loglog_slope needs two or more matching points");
    double mx = 0.0, my = 0.0;
    const auto n = static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += std::log(x[i]);
        my += std::log(y[i]);
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = std::log(x[i]) - mx;
        sxy += dx * (std::log(y[i]) - my);
        sxx += dx * dx;
    }
    return sxy / sxx;
}

} // namespace hrcm
