#include "hrcm/hmatrix.hpp"

#include <algorithm>
#include <cstdlib>
#include <string>
#include <thread>

namespace hrcm {

TraversalConfig default_config(int p0, std::size_t K) {
    TraversalConfig cfg;
    cfg.p0 = p0;
    cfg.direct_threshold = std::size_t{1} << (2 * p0);
    cfg.budget.c = K;
    cfg.budget.r = K;
    return cfg;
}

std::uint64_t block_stream_key(const TreeNode& node) {
    return hash_words({static_cast<std::uint64_t>(node.level), node.path});
}

unsigned resolve_threads(unsigned requested) {
    if (requested > 0)
        return requested;
    if (const char* env = std::getenv("HRCM_THREADS")) {
        try {
            const long v = std::stol(env);
            if (v > 0)
                return static_cast<unsigned>(v);
        } catch (const std::exception&) {
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

CensusRow& row_at(CensusTable& table, int level) {
    while (static_cast<int>(table.rows.size()) <= level) {
        CensusRow row;
        row.level = static_cast<int>(table.rows.size());
        table.rows.push_back(row);
    }
    return table.rows[static_cast<std::size_t>(level)];
}

void finish_coverage(CensusTable& table) {
    std::uint64_t prev = 0;
    for (auto& row : table.rows) {
        row.lr_covered = 16 * prev + row.LR;
        prev = row.lr_covered;
    }
}

struct Planner {
    const QuadTree& targets;
    const QuadTree& sources;
    const TraversalConfig& cfg;
    BlockPlan& plan;

    void visit(int tid, int sid) {
        const auto& t = targets.node(tid);
        const auto& s = sources.node(sid);
        const int level = t.level;
        auto& row = row_at(plan.visited, level);
        const bool admissible = is_admissible(t, s, cfg.eta);
        BlockClass cls = admissible ? BlockClass::LR : classify_pair(t, s);
        if (admissible)
            ++row.LR;
        else if (cls == BlockClass::S)
            ++row.S;
        else if (cls == BlockClass::E)
            ++row.E;
        else if (cls == BlockClass::V)
            ++row.V;
        else
            ++row.F;

        const auto largest = std::max(t.count(), s.count());
        if (t.is_leaf() || s.is_leaf() || largest <= cfg.direct_threshold) {
            plan.tasks.push_back({tid, sid, level, cls, Execution::Direct});
            return;
        }
        if (admissible) {
            const auto exec = fits_budget(t, s, cfg.budget) ? Execution::LowRank : Execution::Direct;
            plan.tasks.push_back({tid, sid, level, cls, exec});
            return;
        }
        for (int tc : t.children) {
            if (tc < 0)
                continue;
            for (int sc : s.children)
                if (sc >= 0)
                    visit(tc, sc);
        }
    }
};

} // namespace

BlockPlan plan_blocks(const QuadTree& targets, const QuadTree& sources, const TraversalConfig& cfg) {
    if (!(cfg.eta > 0.0))
        throw ConfigError("eta must be positive");
    if (cfg.budget.c == 0 || cfg.budget.r == 0)
        throw ConfigError("sample budget must be positive");
    BlockPlan plan;
    plan.same_set = &targets == &sources;
    Planner{targets, sources, cfg, plan}.visit(targets.root_id(), sources.root_id());
    finish_coverage(plan.visited);
    return plan;
}

CensusTable block_census(int p, int p0) {
    if (p0 < 0 || p < p0)
        throw ConfigError("block_census needs 0 <= p0 <= p");
    CensusTable table;
    CensusRow row;
    row.S = 1;
    table.rows.push_back(row);
    for (int level = 1; level <= p - p0; ++level) {
        const auto& prev = table.rows.back();
        CensusRow next;
        next.level = level;
        next.S = 4 * prev.S;
        next.E = 8 * prev.S + 2 * prev.E;
        next.V = 4 * prev.S + 2 * prev.E + prev.V;
        next.LR = 12 * prev.E + 15 * prev.V;
        table.rows.push_back(next);
    }
    finish_coverage(table);

    const double leaf_block = std::ldexp(1.0, 4 * p0);
    const auto& leaf = table.rows.back();
    table.direct_work = static_cast<double>(leaf.S + leaf.E + leaf.V + leaf.LR) * leaf_block;
    for (std::size_t l = 0; l + 1 < table.rows.size(); ++l)
        table.lowrank_work += static_cast<double>(table.rows[l].LR) * std::ldexp(1.0, 2 * (p - static_cast<int>(l)));
    return table;
}

std::vector<std::uint32_t> pair_coverage(const BlockPlan& plan, const QuadTree& targets, const QuadTree& sources) {
    const auto M = targets.size();
    const auto N = sources.size();
    std::vector<std::uint32_t> cover(M * N, 0);
    for (const auto& task : plan.tasks) {
        const auto& t = targets.node(task.target_node);
        const auto& s = sources.node(task.source_node);
        for (std::size_t i = t.begin; i < t.end; ++i)
            for (std::size_t j = s.begin; j < s.end; ++j)
                ++cover[i * N + j];
    }
    return cover;
}

namespace detail {

void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& body) {
    const auto workers = static_cast<std::size_t>(std::min<std::size_t>(threads, n));
    if (workers <= 1) {
        for (std::size_t k = 0; k < n; ++k)
            body(k);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t k = w; k < n; k += workers)
                    body(k);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& th : pool)
        th.join();
    for (auto& e : errors)
        if (e)
            std::rethrow_exception(e);
}

} // namespace detail

} // namespace hrcm
