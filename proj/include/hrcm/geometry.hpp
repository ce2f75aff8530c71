#pragma once
//
// Point sets, the square-domain quadtree, box diameters/distances,
// admissibility, and random-path index sampling.
//

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "hrcm/random.hpp"
#include "hrcm/types.hpp"

namespace hrcm {

struct PointSet {
    std::vector<Point2D> points;
    std::vector<double> densities;

    std::size_t size() const { return points.size(); }

    // Throws ConfigError unless |points| == |densities| > 0 and coordinates are finite.
    void validate() const;
};

enum class GridLayout {
    CellCenter, // one point at the center of each finest cell
    Jittered,   // one point uniformly distributed inside each finest cell
};

enum class DensityKind {
    Ones,          // q_i = 1
    UniformRandom, // q_i ~ U[0, 1)
};

// 4^p points in [origin, origin + L]^2, one per cell of the 2^p x 2^p grid,
// emitted in quadtree order.
PointSet make_grid_points(int p, double L, Point2D origin, GridLayout layout, DensityKind density,
                          RandomStream& rng);

struct Box {
    Point2D origin;
    double side = 0.0;

    Point2D center() const { return {origin.x + 0.5 * side, origin.y + 0.5 * side}; }
};

// Children are numbered counter-clockwise from the lower-left quadrant:
// 0 = lower-left, 1 = lower-right, 2 = upper-right, 3 = upper-left.
constexpr int child_index(int bx, int by) { return by == 0 ? bx : 3 - bx; }
constexpr int child_dx(int child) { return child == 1 || child == 2 ? 1 : 0; }
constexpr int child_dy(int child) { return child >= 2 ? 1 : 0; }

struct TreeNode {
    int level = 0;
    Box box;
    int alpha = 0; // cell index along x at this level
    int beta = 0;  // cell index along y at this level
    std::uint64_t path = 0; // base-4 child path from the root (counter-clockwise digits)
    std::size_t begin = 0;  // point range [begin, end) in tree order
    std::size_t end = 0;
    std::array<int, 4> children{-1, -1, -1, -1};

    std::size_t count() const { return end - begin; }
    bool is_leaf() const { return children[0] < 0 && children[1] < 0 && children[2] < 0 && children[3] < 0; }
};

enum class TreeMode {
    Grid,    // N = 4^p, every leaf holds exactly 4^p0 points
    General, // arbitrary points bucketed into a fixed-depth tree; empty nodes pruned
};

class QuadTree {
public:
    // Builds a tree over the square [origin, origin + L]^2. In grid mode the
    // depth is p - p0 with N = 4^p; in general mode the depth is the smallest
    // value whose mean leaf occupancy is at most 4^p0.
    static QuadTree build(const PointSet& ps, double L, int p0, TreeMode mode = TreeMode::Grid,
                          Point2D origin = {0.0, 0.0});

    const TreeNode& root() const { return nodes_.front(); }
    const TreeNode& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
    int root_id() const { return 0; }
    std::size_t node_count() const { return nodes_.size(); }
    int depth() const { return depth_; }
    int p0() const { return p0_; }
    double domain_size() const { return L_; }
    Point2D origin() const { return origin_; }
    TreeMode mode() const { return mode_; }

    std::size_t size() const { return points_.size(); }
    // Points and densities in tree order.
    std::span<const Point2D> points() const { return points_; }
    std::span<const double> densities() const { return densities_; }
    // permutation()[k] is the original index of the k-th point in tree order.
    std::span<const std::size_t> permutation() const { return perm_; }

    template <typename T>
    std::vector<T> to_tree_order(std::span<const T> original) const {
        std::vector<T> out(perm_.size());
        for (std::size_t k = 0; k < perm_.size(); ++k)
            out[k] = original[perm_[k]];
        return out;
    }

    template <typename T>
    std::vector<T> to_original_order(std::span<const T> tree_ordered) const {
        std::vector<T> out(perm_.size());
        for (std::size_t k = 0; k < perm_.size(); ++k)
            out[perm_[k]] = tree_ordered[k];
        return out;
    }

private:
    int add_subtree(int level, int alpha, int beta, std::uint64_t path, std::size_t begin, std::size_t end,
                    std::span<const std::uint64_t> codes);

    std::vector<TreeNode> nodes_;
    std::vector<Point2D> points_;
    std::vector<double> densities_;
    std::vector<std::size_t> perm_;
    int depth_ = 0;
    int p0_ = 0;
    double L_ = 0.0;
    Point2D origin_;
    TreeMode mode_ = TreeMode::Grid;
};

double diam(const TreeNode& t);
double dist(const TreeNode& t1, const TreeNode& t2);
// max(diam) <= eta * dist; equality (to relative 1e-12) counts as admissible.
bool is_admissible(const TreeNode& t1, const TreeNode& t2, double eta);

enum class BlockClass { S, E, V, LR };

const char* to_string(BlockClass c);

// Same-level classification by grid adjacency: self, edge contact, vertex contact, or separated.
BlockClass classify_pair(const TreeNode& t1, const TreeNode& t2);

// `count` i.i.d. indices (tree order) from the points under `node`; each draw
// descends one uniformly chosen child per level and ends at a uniform point of the leaf.
std::vector<std::size_t> random_path_sample(const QuadTree& tree, const TreeNode& node, std::size_t count,
                                            RandomStream& rng);

// `count` indices whose expected multiplicities match i.i.d. uniform sampling,
// with the draws spread evenly across subtrees: at each node the budget is split
// over the children in proportion to their point counts (remainders assigned by
// systematic sampling), and leaves draw i.i.d.
std::vector<std::size_t> stratified_path_sample(const QuadTree& tree, const TreeNode& node, std::size_t count,
                                                RandomStream& rng);

} // namespace hrcm
