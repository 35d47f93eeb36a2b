#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <numeric>
#include <vector>

#include "hpn/mesh.hpp"

namespace hpn {

/// Static 3-d tree over a borrowed point list. Queries return indices into it.
class KdTree {
public:
    explicit KdTree(const std::vector<Vec3>& points) : points_(&points) {
        order_.resize(points.size());
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        if (!order_.empty()) root_ = build(0, order_.size(), 0);
    }

    bool empty() const noexcept { return order_.empty(); }

    /// Index of the nearest point and its squared distance. Ties go to the
    /// smaller index so results do not depend on tree layout.
    std::pair<std::size_t, double> nearest(const Vec3& q) const {
        Best best;
        if (root_ >= 0) search(root_, q, best);
        return {best.index, best.dist2};
    }

    /// The k nearest points ordered by (distance, index).
    std::vector<std::pair<std::size_t, double>> k_nearest(const Vec3& q, std::size_t k) const {
        std::vector<std::pair<std::size_t, double>> heap;
        k = std::min(k, order_.size());
        if (k == 0) return heap;
        search_k(root_, q, k, heap);
        std::sort(heap.begin(), heap.end(), closer);
        return heap;
    }

private:
    struct Node {
        std::size_t begin, end;  // range in order_
        int axis;
        double split;
        int left = -1, right = -1;
    };
    struct Best {
        std::size_t index = std::numeric_limits<std::size_t>::max();
        double dist2 = std::numeric_limits<double>::infinity();
    };
    static constexpr std::size_t leaf_size = 8;

    static bool closer(const std::pair<std::size_t, double>& a, const std::pair<std::size_t, double>& b) {
        return a.second < b.second || (a.second == b.second && a.first < b.first);
    }

    int build(std::size_t begin, std::size_t end, int depth) {
        const auto& pts = *points_;
        Node node{begin, end, -1, 0.0};
        if (end - begin > leaf_size) {
            Vec3 lo = pts[order_[begin]], hi = lo;
            for (std::size_t i = begin; i < end; ++i) {
                lo = lo.cwiseMin(pts[order_[i]]);
                hi = hi.cwiseMax(pts[order_[i]]);
            }
            Eigen::Index axis;
            (hi - lo).maxCoeff(&axis);
            const std::size_t mid = begin + (end - begin) / 2;
            std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                             order_.begin() + static_cast<std::ptrdiff_t>(mid),
                             order_.begin() + static_cast<std::ptrdiff_t>(end),
                             [&](std::size_t a, std::size_t b) {
                                 return pts[a][axis] < pts[b][axis] ||
                                        (pts[a][axis] == pts[b][axis] && a < b);
                             });
            node.axis = static_cast<int>(axis);
            node.split = pts[order_[mid]][axis];
            const int id = static_cast<int>(nodes_.size());
            nodes_.push_back(node);
            const int l = build(begin, mid, depth + 1);
            const int r = build(mid, end, depth + 1);
            nodes_[id].left = l;
            nodes_[id].right = r;
            return id;
        }
        nodes_.push_back(node);
        return static_cast<int>(nodes_.size()) - 1;
    }

    void search(int id, const Vec3& q, Best& best) const {
        const Node& node = nodes_[static_cast<std::size_t>(id)];
        if (node.axis < 0) {
            for (std::size_t i = node.begin; i < node.end; ++i) {
                const auto idx = order_[i];
                const double d2 = ((*points_)[idx] - q).squaredNorm();
                if (d2 < best.dist2 || (d2 == best.dist2 && idx < best.index)) best = {idx, d2};
            }
            return;
        }
        const double diff = q[node.axis] - node.split;
        const int first = diff < 0 ? node.left : node.right;
        const int second = diff < 0 ? node.right : node.left;
        search(first, q, best);
        if (diff * diff <= best.dist2) search(second, q, best);
    }

    void search_k(int id, const Vec3& q, std::size_t k, std::vector<std::pair<std::size_t, double>>& heap) const {
        const Node& node = nodes_[static_cast<std::size_t>(id)];
        if (node.axis < 0) {
            for (std::size_t i = node.begin; i < node.end; ++i) {
                const auto idx = order_[i];
                std::pair<std::size_t, double> cand{idx, ((*points_)[idx] - q).squaredNorm()};
                if (heap.size() < k) {
                    heap.push_back(cand);
                    std::push_heap(heap.begin(), heap.end(), closer);
                } else if (closer(cand, heap.front())) {
                    std::pop_heap(heap.begin(), heap.end(), closer);
                    heap.back() = cand;
                    std::push_heap(heap.begin(), heap.end(), closer);
                }
            }
            return;
        }
        const double diff = q[node.axis] - node.split;
        const int first = diff < 0 ? node.left : node.right;
        const int second = diff < 0 ? node.right : node.left;
        search_k(first, q, k, heap);
        if (heap.size() < k || diff * diff <= heap.front().second) search_k(second, q, k, heap);
    }

    const std::vector<Vec3>* points_;
    std::vector<std::size_t> order_;
    std::vector<Node> nodes_;
    int root_ = -1;
};

}  // namespace hpn
