#include "hrcm/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace hrcm {

namespace {

// Finest resolution used to order points inside leaves (general mode).
constexpr int kMaxCodeLevel = 30;

bool is_power_of_four(std::size_t n, int& p) {
    p = 0;
    while (n > 1) {
        if (n % 4 != 0)
            return false;
        n /= 4;
        ++p;
    }
    return true;
}

std::uint64_t encode_cell(std::uint64_t ix, std::uint64_t iy, int levels) {
    std::uint64_t code = 0;
    for (int k = levels - 1; k >= 0; --k) {
        const int bx = static_cast<int>((ix >> k) & 1u);
        const int by = static_cast<int>((iy >> k) & 1u);
        code = (code << 2) | static_cast<std::uint64_t>(child_index(bx, by));
    }
    return code;
}

void decode_cell(std::uint64_t code, int levels, std::uint64_t& ix, std::uint64_t& iy) {
    ix = iy = 0;
    for (int k = levels - 1; k >= 0; --k) {
        const int digit = static_cast<int>((code >> (2 * k)) & 3u);
        ix = (ix << 1) | static_cast<std::uint64_t>(child_dx(digit));
        iy = (iy << 1) | static_cast<std::uint64_t>(child_dy(digit));
    }
}

bool near_integer(double v, double target) { return std::abs(v - target) < 1e-6; }

} // namespace

void PointSet::validate() const {
    if (points.empty())
        throw ConfigError("point set is empty");
    if (points.size() != densities.size())
        throw ConfigError("point and density counts differ");
    for (const auto& p : points)
        if (!std::isfinite(p.x) || !std::isfinite(p.y))
            throw ConfigError("non-finite point coordinate");
}

PointSet make_grid_points(int p, double L, Point2D origin, GridLayout layout, DensityKind density,
                          RandomStream& rng) {
    if (p < 0 || p > 15)
        throw ConfigError("grid exponent p must lie in [0, 15]");
    if (!(L > 0.0))
        throw ConfigError("domain size must be positive");
    const std::size_t n = std::size_t{1} << (2 * p);
    const double h = L / static_cast<double>(std::size_t{1} << p);
    PointSet ps;
    ps.points.reserve(n);
    ps.densities.reserve(n);
    for (std::uint64_t code = 0; code < n; ++code) {
        std::uint64_t ix, iy;
        decode_cell(code, p, ix, iy);
        double u = 0.5, v = 0.5;
        if (layout == GridLayout::Jittered) {
            u = rng.uniform01();
            v = rng.uniform01();
        }
        ps.points.push_back({origin.x + (static_cast<double>(ix) + u) * h,
                             origin.y + (static_cast<double>(iy) + v) * h});
        ps.densities.push_back(density == DensityKind::Ones ? 1.0 : rng.uniform01());
    }
    return ps;
}

QuadTree QuadTree::build(const PointSet& ps, double L, int p0, TreeMode mode, Point2D origin) {
    ps.validate();
    if (!(L > 0.0))
        throw ConfigError("domain size must be positive");
    if (p0 < 0)
        throw ConfigError("leaf exponent p0 must be non-negative");
    const std::size_t n = ps.size();

    QuadTree tree;
    tree.p0_ = p0;
    tree.L_ = L;
    tree.origin_ = origin;
    tree.mode_ = mode;

    int code_levels = 0;
    if (mode == TreeMode::Grid) {
        int p = 0;
        if (!is_power_of_four(n, p))
            throw ConfigError("grid mode needs N = 4^p points, got " + std::to_string(n));
        if (p < p0)
            throw ConfigError("grid mode needs p >= p0");
        tree.depth_ = p - p0;
        code_levels = p;
    } else {
        const double leaf_capacity = std::pow(4.0, p0);
        int depth = 0;
        while (static_cast<double>(n) / std::pow(4.0, depth) > leaf_capacity && depth < 16)
            ++depth;
        tree.depth_ = depth;
        code_levels = std::min(kMaxCodeLevel, depth + std::max(p0, 8));
    }

    const double cells = std::ldexp(1.0, code_levels);
    const double h = L / cells;
    const double slack = 1e-9 * L;
    std::vector<std::uint64_t> codes(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& pt = ps.points[i];
        const double rx = pt.x - origin.x;
        const double ry = pt.y - origin.y;
        if (rx < -slack || ry < -slack || rx > L + slack || ry > L + slack)
            throw ConfigError("point lies outside the tree domain");
        const double max_cell = cells - 1.0;
        const auto ix = static_cast<std::uint64_t>(std::clamp(std::floor(rx / h), 0.0, max_cell));
        const auto iy = static_cast<std::uint64_t>(std::clamp(std::floor(ry / h), 0.0, max_cell));
        codes[i] = encode_cell(ix, iy, code_levels);
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return codes[a] < codes[b]; });

    tree.perm_ = order;
    tree.points_.resize(n);
    tree.densities_.resize(n);
    std::vector<std::uint64_t> sorted_codes(n);
    for (std::size_t k = 0; k < n; ++k) {
        tree.points_[k] = ps.points[order[k]];
        tree.densities_[k] = ps.densities[order[k]];
        // Keep only the digits down to the leaf level.
        sorted_codes[k] = codes[order[k]] >> (2 * (code_levels - tree.depth_));
    }

    tree.nodes_.reserve(n / std::max<std::size_t>(1, std::size_t{1} << (2 * p0)) * 2 + 1);
    tree.add_subtree(0, 0, 0, 0, 0, n, sorted_codes);

    if (mode == TreeMode::Grid) {
        const std::size_t leaf_points = std::size_t{1} << (2 * p0);
        for (const auto& node : tree.nodes_)
            if (node.is_leaf() && (node.count() != leaf_points || node.level != tree.depth_))
                throw ConfigError("grid mode needs exactly 4^p0 points in every leaf cell");
    }
    return tree;
}

int QuadTree::add_subtree(int level, int alpha, int beta, std::uint64_t path, std::size_t begin, std::size_t end,
                          std::span<const std::uint64_t> codes) {
    const int id = static_cast<int>(nodes_.size());
    TreeNode node;
    node.level = level;
    node.alpha = alpha;
    node.beta = beta;
    node.path = path;
    node.begin = begin;
    node.end = end;
    node.box.side = L_ / std::ldexp(1.0, level);
    node.box.origin = {origin_.x + alpha * node.box.side, origin_.y + beta * node.box.side};
    nodes_.push_back(node);
    if (level == depth_)
        return id;

    const int shift = 2 * (depth_ - level - 1);
    std::size_t lo = begin;
    for (int child = 0; child < 4; ++child) {
        std::size_t hi = lo;
        while (hi < end && static_cast<int>((codes[hi] >> shift) & 3u) == child)
            ++hi;
        if (hi > lo) {
            const int cid = add_subtree(level + 1, 2 * alpha + child_dx(child), 2 * beta + child_dy(child),
                                        path * 4 + static_cast<std::uint64_t>(child), lo, hi, codes);
            nodes_[static_cast<std::size_t>(id)].children[static_cast<std::size_t>(child)] = cid;
        }
        lo = hi;
    }
    return id;
}

double diam(const TreeNode& t) { return t.box.side * std::sqrt(2.0); }

double dist(const TreeNode& t1, const TreeNode& t2) { return distance(t1.box.center(), t2.box.center()); }

bool is_admissible(const TreeNode& t1, const TreeNode& t2, double eta) {
    const double d = dist(t1, t2);
    if (d <= 0.0)
        return false;
    return std::max(diam(t1), diam(t2)) <= eta * d * (1.0 + 1e-12);
}

const char* to_string(BlockClass c) {
    switch (c) {
    case BlockClass::S: return "S";
    case BlockClass::E: return "E";
    case BlockClass::V: return "V";
    case BlockClass::LR: return "LR";
    }
    return "?";
}

BlockClass classify_pair(const TreeNode& t1, const TreeNode& t2) {
    const double side = std::max(t1.box.side, t2.box.side);
    const auto c1 = t1.box.center();
    const auto c2 = t2.box.center();
    const double dx = std::abs(c1.x - c2.x) / side;
    const double dy = std::abs(c1.y - c2.y) / side;
    if (near_integer(dx, 0.0) && near_integer(dy, 0.0))
        return BlockClass::S;
    if ((near_integer(dx, 1.0) && near_integer(dy, 0.0)) || (near_integer(dx, 0.0) && near_integer(dy, 1.0)))
        return BlockClass::E;
    if (near_integer(dx, 1.0) && near_integer(dy, 1.0))
        return BlockClass::V;
    return BlockClass::LR;
}

namespace {

bool balanced_children(const QuadTree& tree, const TreeNode& node) {
    const auto quarter = node.count() / 4;
    if (node.count() % 4 != 0)
        return false;
    for (int c : node.children)
        if (c < 0 || tree.node(c).count() != quarter)
            return false;
    return true;
}

const TreeNode& child_containing(const QuadTree& tree, const TreeNode& node, std::size_t position) {
    for (int c : node.children) {
        if (c < 0)
            continue;
        const auto& child = tree.node(c);
        if (position >= child.begin && position < child.end)
            return child;
    }
    throw DomainError("tree node children do not cover its point range");
}

void stratify(const QuadTree& tree, const TreeNode& node, std::uint64_t k, RandomStream& rng,
              std::vector<std::size_t>& out) {
    if (k == 0)
        return;
    if (node.is_leaf()) {
        for (std::uint64_t t = 0; t < k; ++t)
            out.push_back(node.begin + rng.uniform_index(node.count()));
        return;
    }
    const std::uint64_t n = node.count();
    const std::uint64_t offset = rng.uniform_index(n);
    // Number of systematic points offset + m*n (m >= 0) strictly below x.
    auto below = [&](std::uint64_t x) -> std::uint64_t { return x <= offset ? 0 : (x - offset + n - 1) / n; };
    std::uint64_t cumulative = 0;
    for (int c : node.children) {
        if (c < 0)
            continue;
        const auto& child = tree.node(c);
        const std::uint64_t share = k * child.count();
        const std::uint64_t base = share / n;
        const std::uint64_t frac = share % n;
        const std::uint64_t extra = below(cumulative + frac) - below(cumulative);
        cumulative += frac;
        stratify(tree, child, base + extra, rng, out);
    }
}

} // namespace

std::vector<std::size_t> random_path_sample(const QuadTree& tree, const TreeNode& node, std::size_t count,
                                            RandomStream& rng) {
    if (count == 0)
        throw ConfigError("random_path_sample needs count >= 1");
    if (node.count() == 0)
        throw ConfigError("cannot sample an empty node");
    std::vector<std::size_t> out;
    out.reserve(count);
    for (std::size_t draw = 0; draw < count; ++draw) {
        const TreeNode* cur = &node;
        while (!cur->is_leaf()) {
            if (balanced_children(tree, *cur))
                cur = &tree.node(cur->children[rng.uniform_index(4)]);
            else
                cur = &child_containing(tree, *cur, cur->begin + rng.uniform_index(cur->count()));
        }
        out.push_back(cur->begin + rng.uniform_index(cur->count()));
    }
    return out;
}

std::vector<std::size_t> stratified_path_sample(const QuadTree& tree, const TreeNode& node, std::size_t count,
                                                RandomStream& rng) {
    if (count == 0)
        throw ConfigError("stratified_path_sample needs count >= 1");
    if (node.count() == 0)
        throw ConfigError("cannot sample an empty node");
    std::vector<std::size_t> out;
    out.reserve(count);
    stratify(tree, node, count, rng, out);
    return out;
}

} // namespace hrcm
