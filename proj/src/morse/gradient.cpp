#include <algorithm>

#include "msp/morse.hpp"

namespace msp::morse {

namespace {

// Lower star of one vertex: up to 6 edges and 6 triangles. Local indices
// 0..5 are edges, 6..11 triangles.
struct LowerStar {
    std::array<CellId, 12> cell{};
    std::array<Key, 12> key{};
    std::array<std::array<int, 2>, 6> tri_edges{};  // local edge indices of each triangle's two lower-star faces
    std::array<bool, 12> assigned{};
    int edges = 0;
    int tris = 0;

    int unpaired_faces(int t) const {
        const auto& f = tri_edges[static_cast<std::size_t>(t - 6)];
        return (assigned[static_cast<std::size_t>(f[0])] ? 0 : 1) + (assigned[static_cast<std::size_t>(f[1])] ? 0 : 1);
    }
    int unpaired_face(int t) const {
        const auto& f = tri_edges[static_cast<std::size_t>(t - 6)];
        return assigned[static_cast<std::size_t>(f[0])] ? f[1] : f[0];
    }
    bool has_face(int t, int e) const {
        const auto& f = tri_edges[static_cast<std::size_t>(t - 6)];
        return f[0] == e || f[1] == e;
    }
};

// Small priority queue: linear scan over at most 12 entries.
class SmallQueue {
public:
    void push(int i) {
        for (int k = 0; k < n_; ++k)
            if (items_[static_cast<std::size_t>(k)] == i) return;
        items_[static_cast<std::size_t>(n_++)] = i;
    }
    void erase(int i) {
        for (int k = 0; k < n_; ++k) {
            if (items_[static_cast<std::size_t>(k)] == i) {
                items_[static_cast<std::size_t>(k)] = items_[static_cast<std::size_t>(--n_)];
                return;
            }
        }
    }
    bool empty() const { return n_ == 0; }
    int pop_min(const LowerStar& ls) {
        int best = 0;
        for (int k = 1; k < n_; ++k) {
            if (ls.key[static_cast<std::size_t>(items_[static_cast<std::size_t>(k)])] <
                ls.key[static_cast<std::size_t>(items_[static_cast<std::size_t>(best)])])
                best = k;
        }
        const int out = items_[static_cast<std::size_t>(best)];
        items_[static_cast<std::size_t>(best)] = items_[static_cast<std::size_t>(--n_)];
        return out;
    }

private:
    std::array<int, 24> items_{};
    int n_ = 0;
};

void process_lower_star(const TriangulatedGrid& grid, CellId v, DiscreteGradient& g) {
    const auto& order = grid.order();
    const std::int32_t r = order.rank(v);
    LowerStar ls;

    std::array<CellId, 6> around;
    const int ne = grid.cofaces(v, around);
    for (int i = 0; i < ne; ++i) {
        const CellId e = around[static_cast<std::size_t>(i)];
        if (order.rank(grid.other_vertex(e, v)) < r) {
            ls.cell[static_cast<std::size_t>(ls.edges)] = e;
            ls.key[static_cast<std::size_t>(ls.edges)] = grid.key(e);
            ++ls.edges;
        }
    }
    if (ls.edges == 0) return;  // local minimum: v stays critical

    const int nt = grid.vertex_triangles(v, around);
    for (int i = 0; i < nt; ++i) {
        const CellId t = around[static_cast<std::size_t>(i)];
        std::array<CellId, 3> vs;
        grid.vertices(t, vs);
        bool lower = true;
        for (CellId u : vs)
            if (u != v && order.rank(u) > r) lower = false;
        if (!lower) continue;
        std::array<CellId, 3> fs;
        grid.faces(t, fs);
        const int slot = 6 + ls.tris;
        int found = 0;
        for (CellId f : fs) {
            for (int k = 0; k < ls.edges; ++k) {
                if (ls.cell[static_cast<std::size_t>(k)] == f) {
                    ls.tri_edges[static_cast<std::size_t>(ls.tris)][static_cast<std::size_t>(found++)] = k;
                }
            }
        }
        ls.cell[static_cast<std::size_t>(slot)] = t;
        ls.key[static_cast<std::size_t>(slot)] = grid.key(t);
        ++ls.tris;
    }

    auto push_cofaces = [&](SmallQueue& pq_one, int e) {
        for (int t = 6; t < 6 + ls.tris; ++t) {
            if (!ls.assigned[static_cast<std::size_t>(t)] && ls.has_face(t, e) && ls.unpaired_faces(t) == 1) {
                pq_one.push(t);
            }
        }
    };

    int delta = 0;
    for (int k = 1; k < ls.edges; ++k)
        if (ls.key[static_cast<std::size_t>(k)] < ls.key[static_cast<std::size_t>(delta)]) delta = k;
    g.pair(v, ls.cell[static_cast<std::size_t>(delta)]);
    ls.assigned[static_cast<std::size_t>(delta)] = true;

    SmallQueue pq_zero, pq_one;
    for (int k = 0; k < ls.edges; ++k)
        if (k != delta) pq_zero.push(k);
    push_cofaces(pq_one, delta);

    while (!pq_one.empty() || !pq_zero.empty()) {
        while (!pq_one.empty()) {
            const int a = pq_one.pop_min(ls);
            if (ls.assigned[static_cast<std::size_t>(a)]) continue;
            if (ls.unpaired_faces(a) == 0) {
                pq_zero.push(a);
                continue;
            }
            const int f = ls.unpaired_face(a);
            g.pair(ls.cell[static_cast<std::size_t>(f)], ls.cell[static_cast<std::size_t>(a)]);
            ls.assigned[static_cast<std::size_t>(f)] = true;
            ls.assigned[static_cast<std::size_t>(a)] = true;
            pq_zero.erase(f);
            push_cofaces(pq_one, f);
        }
        if (!pq_zero.empty()) {
            const int c = pq_zero.pop_min(ls);
            if (ls.assigned[static_cast<std::size_t>(c)]) continue;
            ls.assigned[static_cast<std::size_t>(c)] = true;  // critical
            if (c < 6) push_cofaces(pq_one, c);
        }
    }
}

}  // namespace

DiscreteGradient compute_gradient(const TriangulatedGrid& grid) {
    DiscreteGradient g(grid.id_space());
    const auto n = static_cast<CellId>(grid.num_vertices());
    for (CellId v = 0; v < n; ++v) process_lower_star(grid, v, g);
    return g;
}

std::vector<CriticalCell> critical_cells(const DiscreteGradient& g, const TriangulatedGrid& grid) {
    std::vector<CriticalCell> out;
    const auto n = static_cast<CellId>(grid.id_space());
    for (CellId c = 0; c < n; ++c) {
        if (g.is_paired(c) || !grid.valid(c)) continue;
        const CellId top = grid.top_vertex(c);
        out.push_back({c, grid.dim(c), top, grid.values()[top]});
    }
    return out;
}

std::array<std::size_t, 3> critical_counts(const DiscreteGradient& g, const TriangulatedGrid& grid) {
    std::array<std::size_t, 3> m{0, 0, 0};
    const auto n = static_cast<CellId>(grid.id_space());
    for (CellId c = 0; c < n; ++c) {
        if (!g.is_paired(c) && grid.valid(c)) ++m[static_cast<std::size_t>(grid.dim(c))];
    }
    return m;
}

}  // namespace msp::morse
