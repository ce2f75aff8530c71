#pragma once
//
// Hierarchical product over target/source quadtrees: direct products for small
// blocks, randomized low-rank products for admissible blocks, recursion over the
// 4 x 4 child pairs otherwise. Also the exact O(MN) reference and the block census.
//

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "hrcm/compress.hpp"
#include "hrcm/geometry.hpp"
#include "hrcm/kernels.hpp"

namespace hrcm {

inline constexpr std::size_t kUnlimited = std::numeric_limits<std::size_t>::max();

enum class SamplingScheme {
    IidPath,        // independent random paths
    StratifiedPath, // budget spread evenly over subtrees, random path below
};

enum class Execution { Direct, LowRank };

struct TraversalConfig {
    double eta = std::sqrt(2.0) / 2.0;
    SampleBudget budget{};
    int p0 = 2;
    // Blocks whose target and source hold at most this many points are summed directly.
    std::size_t direct_threshold = 16;
    SamplingScheme sampling = SamplingScheme::StratifiedPath;
    ApplyForm form = ApplyForm::Singular;
    // 0: use HRCM_THREADS (default: hardware concurrency).
    unsigned threads = 0;
};

// Default config for grid trees with 4^p0-point leaves.
TraversalConfig default_config(int p0, std::size_t K);

struct BlockTask {
    int target_node = 0;
    int source_node = 0;
    int level = 0;
    BlockClass cls = BlockClass::S;
    Execution exec = Execution::Direct;
};

struct CensusRow {
    int level = 0;
    std::uint64_t S = 0;
    std::uint64_t E = 0;
    std::uint64_t V = 0;
    std::uint64_t LR = 0;         // admissible blocks formed at this level
    std::uint64_t F = 0;          // separated but not admissible (eta below sqrt(2)/2)
    std::uint64_t lr_covered = 0; // level-l cell pairs inside admissible blocks of this or coarser levels
};

struct CensusTable {
    std::vector<CensusRow> rows;
    double direct_work = 0.0;  // kernel evaluations in leaf-level direct blocks
    double lowrank_work = 0.0; // sum over LR blocks above the leaves of the block side length 4^(p-l)
};

struct BlockPlan {
    std::vector<BlockTask> tasks; // canonical execution order
    CensusTable visited;          // every visited block, counted by class and level
    bool same_set = false;
};

// Recursion of the hierarchical product without any arithmetic.
BlockPlan plan_blocks(const QuadTree& targets, const QuadTree& sources, const TraversalConfig& cfg);

// Closed-form S/E/V/LR recurrence from a root self-interaction down to level p - p0.
CensusTable block_census(int p, int p0);

// Number of blocks covering each (target, source) pair, row-major in tree order.
std::vector<std::uint32_t> pair_coverage(const BlockPlan& plan, const QuadTree& targets, const QuadTree& sources);

unsigned resolve_threads(unsigned requested);

std::uint64_t block_stream_key(const TreeNode& node);

// Adds sum_j K(r_i, r_j) q_j x_j over the source node into `out` (indexed from
// t.begin). Recurses over child pairs down to the leaves; in single-set mode
// the i == j term is skipped.
template <KernelScalar T>
void direct_product(const Kernel& kernel, const QuadTree& targets, const TreeNode& t, const QuadTree& sources,
                    const TreeNode& s, bool same_set, std::span<const T> x_tree, std::span<T> out) {
    if (t.is_leaf() || s.is_leaf()) {
        const auto pts_t = targets.points();
        const auto pts_s = sources.points();
        const auto q = sources.densities();
        const bool diagonal = same_set && t.begin == s.begin;
        for (std::size_t i = t.begin; i < t.end; ++i) {
            T acc(0);
            for (std::size_t j = s.begin; j < s.end; ++j) {
                if ((diagonal && i == j) || q[j] == 0.0)
                    continue;
                acc += kernel.eval_as<T>(pts_t[i], pts_s[j]) * (q[j] * x_tree[j]);
            }
            out[i - t.begin] += acc;
        }
        return;
    }
    for (int tc : t.children) {
        if (tc < 0)
            continue;
        for (int sc : s.children) {
            if (sc < 0)
                continue;
            const auto& child_t = targets.node(tc);
            direct_product(kernel, targets, child_t, sources, sources.node(sc), same_set, x_tree,
                           out.subspan(child_t.begin - t.begin, child_t.count()));
        }
    }
}

enum class SamplePurpose : std::uint64_t { Columns = 1, Rows = 2, Products = 3 };

// Compresses the (t, s) block with samples drawn along random paths of the two trees.
template <KernelScalar T>
CompressedBlock<T> compress_tree_block(const Kernel& kernel, const QuadTree& targets, const TreeNode& t,
                                       const QuadTree& sources, const TreeNode& s, const TraversalConfig& cfg,
                                       std::uint64_t seed) {
    const KernelBlock<T> block(kernel, targets.points().subspan(t.begin, t.count()),
                               sources.points().subspan(s.begin, s.count()),
                               sources.densities().subspan(s.begin, s.count()));
    auto stream = [&](SamplePurpose purpose) {
        return derive_stream(seed, StreamId{static_cast<std::uint64_t>(t.level), block_stream_key(t),
                                            block_stream_key(s), static_cast<std::uint64_t>(purpose)});
    };
    RandomStream col_rng = stream(SamplePurpose::Columns);
    RandomStream row_rng = stream(SamplePurpose::Rows);
    RandomStream prod_rng = stream(SamplePurpose::Products);
    auto tree_sampler = [&cfg](const QuadTree& tree, const TreeNode& node, RandomStream& rng) -> IndexSampler {
        return [&cfg, &tree, &node, &rng](std::size_t count) {
            auto idx = cfg.sampling == SamplingScheme::StratifiedPath ? stratified_path_sample(tree, node, count, rng)
                                                                      : random_path_sample(tree, node, count, rng);
            for (auto& i : idx)
                i -= node.begin;
            return idx;
        };
    };
    const BlockSamplers samplers{tree_sampler(sources, s, col_rng), tree_sampler(targets, t, row_rng),
                                 tree_sampler(targets, t, prod_rng)};
    return compress_block(block, cfg.budget, samplers, cfg.form);
}

inline bool fits_budget(const TreeNode& t, const TreeNode& s, const SampleBudget& budget) {
    const auto need = std::max(budget.c, budget.r);
    return t.count() > need && s.count() > need;
}

// Low-rank contribution of an admissible block, added into `out` (indexed from t.begin).
// Falls back to the direct product when the block is too small for the budget
// or the sampled core is numerically unusable.
template <KernelScalar T>
void low_rank_product(const Kernel& kernel, const QuadTree& targets, const TreeNode& t, const QuadTree& sources,
                      const TreeNode& s, const TraversalConfig& cfg, std::uint64_t seed, std::span<const T> x_tree,
                      std::span<T> out, const CompressedBlock<T>* cached = nullptr,
                      std::optional<CompressedBlock<T>>* store = nullptr) {
    if (!fits_budget(t, s, cfg.budget)) {
        direct_product(kernel, targets, t, sources, s, false, x_tree, out);
        return;
    }
    std::optional<CompressedBlock<T>> local;
    const CompressedBlock<T>* factors = cached;
    if (factors == nullptr) {
        try {
            local = compress_tree_block<T>(kernel, targets, t, sources, s, cfg, seed);
        } catch (const NumericalError&) {
            direct_product(kernel, targets, t, sources, s, false, x_tree, out);
            return;
        }
        factors = &*local;
    }
    const Eigen::Map<const Vec<T>> xs(x_tree.data() + s.begin, static_cast<Eigen::Index>(s.count()));
    const Vec<T> y = apply_compressed<T>(*factors, xs);
    for (std::size_t i = 0; i < t.count(); ++i)
        out[i] += y(static_cast<Eigen::Index>(i));
    if (store != nullptr && local)
        *store = std::move(local);
}

namespace detail {
// Runs body(k) for k in [0, n) on up to `threads` workers.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& body);
} // namespace detail

// y = A x over two trees. With `cache_factors` the compressed blocks of the first
// apply are kept and reused, otherwise they are rebuilt from the same per-block
// streams on every apply; either way the operator is linear in x for a fixed seed.
template <KernelScalar T>
class HMatrixOperator {
public:
    HMatrixOperator(const Kernel& kernel, const QuadTree& targets, const QuadTree& sources, TraversalConfig cfg,
                    std::uint64_t seed, bool cache_factors = false)
        : kernel_(&kernel), targets_(&targets), sources_(&sources), cfg_(cfg), seed_(seed),
          cache_(cache_factors), plan_(plan_blocks(targets, sources, cfg)) {
        if (kernel.is_complex() && !is_complex_v<T>)
            throw ConfigError("complex kernel needs a complex operator");
        if (cache_)
            factors_.resize(plan_.tasks.size());
    }

    const BlockPlan& plan() const { return plan_; }
    std::size_t rows() const { return targets_->size(); }
    std::size_t cols() const { return sources_->size(); }

    // x and the result are in the original (pre-permutation) point order.
    std::vector<T> apply(std::span<const T> x) {
        if (x.size() != cols())
            throw ConfigError("hmatrix apply: x has the wrong length");
        const auto x_tree = sources_->to_tree_order(x);
        std::vector<T> y_tree(rows(), T(0));
        const auto& tasks = plan_.tasks;
        const unsigned threads = resolve_threads(cfg_.threads);

        // Tasks are evaluated into private buffers and reduced in task order, so
        // the result does not depend on the thread count. Batches bound the memory.
        constexpr std::size_t kBatchRows = std::size_t{1} << 20;
        std::size_t first = 0;
        while (first < tasks.size()) {
            std::size_t last = first;
            std::size_t rows_in_batch = 0;
            while (last < tasks.size() && (last == first || rows_in_batch < kBatchRows)) {
                rows_in_batch += targets_->node(tasks[last].target_node).count();
                ++last;
            }
            std::vector<std::vector<T>> buffers(last - first);
            detail::parallel_for(last - first, threads, [&](std::size_t k) {
                const auto& task = tasks[first + k];
                buffers[k] = run_task(first + k, task, x_tree);
            });
            for (std::size_t k = 0; k < buffers.size(); ++k) {
                const auto& t = targets_->node(tasks[first + k].target_node);
                for (std::size_t i = 0; i < t.count(); ++i)
                    y_tree[t.begin + i] += buffers[k][i];
            }
            first = last;
        }
        return targets_->to_original_order(std::span<const T>(y_tree));
    }

private:
    std::vector<T> run_task(std::size_t index, const BlockTask& task, std::span<const T> x_tree) {
        const auto& t = targets_->node(task.target_node);
        const auto& s = sources_->node(task.source_node);
        std::vector<T> out(t.count(), T(0));
        if (task.exec == Execution::Direct) {
            direct_product<T>(*kernel_, *targets_, t, *sources_, s, plan_.same_set, x_tree, out);
        } else if (cache_) {
            auto& slot = factors_[index];
            low_rank_product<T>(*kernel_, *targets_, t, *sources_, s, cfg_, seed_, x_tree, out,
                                slot ? &*slot : nullptr, slot ? nullptr : &slot);
        } else {
            low_rank_product<T>(*kernel_, *targets_, t, *sources_, s, cfg_, seed_, x_tree, out);
        }
        return out;
    }

    const Kernel* kernel_;
    const QuadTree* targets_;
    const QuadTree* sources_;
    TraversalConfig cfg_;
    std::uint64_t seed_;
    bool cache_;
    BlockPlan plan_;
    std::vector<std::optional<CompressedBlock<T>>> factors_;
};

template <KernelScalar T>
std::vector<T> hmatrix_product(const Kernel& kernel, const QuadTree& targets, const QuadTree& sources,
                               std::span<const T> x, const TraversalConfig& cfg, std::uint64_t seed) {
    HMatrixOperator<T> op(kernel, targets, sources, cfg, seed);
    return op.apply(x);
}

// Exact E_i = sum_j K(r_i, r_j) q_j x_j in the original point order. With
// same_set the i == j terms are skipped.
template <KernelScalar T>
std::vector<T> direct_summation(const PointSet& targets, const PointSet& sources, const Kernel& kernel,
                                std::span<const T> x, bool same_set, unsigned threads = 0) {
    if (kernel.is_complex() && !is_complex_v<T>)
        throw ConfigError("complex kernel needs a complex result type");
    if (x.size() != sources.size())
        throw ConfigError("direct_summation: x has the wrong length");
    if (same_set && targets.size() != sources.size())
        throw ConfigError("direct_summation: single-set mode needs equal sizes");
    std::vector<T> y(targets.size(), T(0));
    constexpr std::size_t kRowsPerTask = 64;
    const std::size_t tasks = (targets.size() + kRowsPerTask - 1) / kRowsPerTask;
    detail::parallel_for(tasks, resolve_threads(threads), [&](std::size_t task) {
        const std::size_t lo = task * kRowsPerTask;
        const std::size_t hi = std::min(targets.size(), lo + kRowsPerTask);
        for (std::size_t i = lo; i < hi; ++i) {
            T acc(0);
            for (std::size_t j = 0; j < sources.size(); ++j) {
                if ((same_set && i == j) || sources.densities[j] == 0.0)
                    continue;
                acc += kernel.eval_as<T>(targets.points[i], sources.points[j]) * (sources.densities[j] * x[j]);
            }
            y[i] = acc;
        }
    });
    return y;
}

} // namespace hrcm
