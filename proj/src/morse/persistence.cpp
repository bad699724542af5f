#include <algorithm>
#include <cmath>
#include <numeric>

#include "msp/error.hpp"
#include "msp/morse.hpp"
#include "paths.hpp"

namespace msp::morse {

namespace {

using detail::kOutside;

// Union-find over an id space plus one extra slot standing for the outside.
class UnionFind {
public:
    explicit UnionFind(std::size_t n) : parent_(n + 1) { std::iota(parent_.begin(), parent_.end(), CellId{0}); }

    std::size_t slot(CellId c) const { return c == kOutside ? parent_.size() - 1 : c; }

    CellId find(CellId c) {
        std::size_t i = slot(c);
        while (parent_[i] != parent_[parent_[i]]) parent_[i] = parent_[parent_[i]];
        const CellId root = parent_[i];
        return root == parent_.size() - 1 ? kOutside : root;
    }
    void attach(CellId child_root, CellId parent_root) { parent_[slot(child_root)] = static_cast<CellId>(slot(parent_root)); }

private:
    std::vector<CellId> parent_;
};

CriticalCell make_cell(const TriangulatedGrid& grid, CellId c) {
    const CellId top = grid.top_vertex(c);
    return {c, grid.dim(c), top, grid.values()[top]};
}

PersistencePair make_pair(const TriangulatedGrid& grid, CellId birth, CellId death) {
    PersistencePair p{make_cell(grid, birth), make_cell(grid, death), 0.0};
    p.persistence = std::abs(p.death.value - p.birth.value);
    return p;
}

}  // namespace

std::vector<PersistencePair> compute_persistence_pairs(const DiscreteGradient& g, const TriangulatedGrid& grid) {
    std::vector<CellId> saddles;
    const auto n = static_cast<CellId>(grid.id_space());
    for (CellId c = static_cast<CellId>(grid.num_vertices()); c < 4 * grid.num_vertices(); ++c) {
        if (grid.valid(c) && !g.is_paired(c)) saddles.push_back(c);
    }
    std::vector<Key> saddle_keys(saddles.size());
    for (std::size_t i = 0; i < saddles.size(); ++i) saddle_keys[i] = grid.key(saddles[i]);
    std::vector<std::size_t> order(saddles.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return saddle_keys[a] < saddle_keys[b]; });

    std::vector<PersistencePair> pairs;

    // Sublevel components: each saddle joins the minima its two descending paths reach.
    UnionFind minima(n);
    const auto& ord = grid.order();
    for (std::size_t k : order) {
        const CellId e = saddles[k];
        std::array<CellId, 3> vs;
        grid.vertices(e, vs);
        const CellId ra = minima.find(detail::descend(grid, g, vs[0]));
        const CellId rb = minima.find(detail::descend(grid, g, vs[1]));
        if (ra == rb) continue;
        const bool a_younger = ord.rank(ra) > ord.rank(rb);
        const CellId young = a_younger ? ra : rb;
        minima.attach(young, a_younger ? rb : ra);
        pairs.push_back(make_pair(grid, young, e));
    }

    // Superlevel components: each saddle joins the maxima (or the boundary)
    // its two ascending paths reach. The boundary is older than any maximum.
    UnionFind maxima(n);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const CellId e = saddles[*it];
        const auto ends = detail::ascending_ends(grid, g, e);
        const CellId ra = maxima.find(ends[0]);
        const CellId rb = maxima.find(ends[1]);
        if (ra == rb) continue;
        bool a_younger;
        if (ra == kOutside) {
            a_younger = false;
        } else if (rb == kOutside) {
            a_younger = true;
        } else {
            a_younger = grid.key(ra) < grid.key(rb);
        }
        const CellId young = a_younger ? ra : rb;
        maxima.attach(young, a_younger ? rb : ra);
        pairs.push_back(make_pair(grid, e, young));
    }
    return pairs;
}

namespace {

bool try_cancel(const PersistencePair& p, const TriangulatedGrid& grid, DiscreteGradient& g) {
    const CellId b = p.birth.cell, d = p.death.cell;
    if (g.is_paired(b) || g.is_paired(d)) return false;

    if (p.birth.index == 0) {
        // (minimum b, saddle d): reverse the unique descending path from d to b.
        std::array<CellId, 3> vs;
        grid.vertices(d, vs);
        const CellId end0 = detail::descend(grid, g, vs[0]);
        const CellId end1 = detail::descend(grid, g, vs[1]);
        if ((end0 == b) == (end1 == b)) return false;
        CellId u = end0 == b ? vs[0] : vs[1];
        CellId prev_edge = d;
        while (true) {
            const CellId next_edge = g.is_paired(u) ? g.partner(u) : kNoCell;
            g.pair(u, prev_edge);
            if (next_edge == kNoCell) break;
            prev_edge = next_edge;
            u = grid.other_vertex(next_edge, u);
        }
        return true;
    }

    // (saddle b, maximum d): reverse the unique ascending path from b to d.
    std::array<CellId, 6> cf;
    const int n = grid.cofaces(b, cf);
    int hits = 0;
    CellId start = kNoCell;
    for (int i = 0; i < n; ++i) {
        if (detail::ascend(grid, g, cf[static_cast<std::size_t>(i)]) == d) {
            ++hits;
            start = cf[static_cast<std::size_t>(i)];
        }
    }
    if (hits != 1) return false;
    CellId prev_edge = b;
    CellId t = start;
    while (true) {
        const CellId next_edge = g.is_paired(t) ? g.partner(t) : kNoCell;
        g.pair(prev_edge, t);
        if (next_edge == kNoCell) break;
        prev_edge = next_edge;
        t = detail::other_coface(grid, next_edge, t);
    }
    return true;
}

}  // namespace

DiscreteGradient simplify(const DiscreteGradient& g, const TriangulatedGrid& grid, double threshold,
                          SimplifyStats* stats) {
    if (!(threshold >= 0.0)) throw ParameterError("simplification threshold must be >= 0");
    DiscreteGradient out = g;
    SimplifyStats local;
    SimplifyStats& st = stats ? *stats : local;
    st = SimplifyStats{};

    std::vector<PersistencePair> pending;
    for (auto& p : compute_persistence_pairs(g, grid))
        if (p.persistence < threshold) pending.push_back(p);
    std::stable_sort(pending.begin(), pending.end(), [&](const PersistencePair& a, const PersistencePair& b) {
        if (a.persistence != b.persistence) return a.persistence < b.persistence;
        return grid.key(a.death.cell) < grid.key(b.death.cell);
    });

    bool first_pass = true;
    std::size_t retried_ok = 0;
    while (!pending.empty()) {
        std::vector<PersistencePair> next;
        for (const auto& p : pending) {
            if (try_cancel(p, grid, out)) {
                ++st.cancelled;
                if (!first_pass) ++retried_ok;
            } else {
                next.push_back(p);
            }
        }
        const bool progress = next.size() < pending.size();
        pending = std::move(next);
        first_pass = false;
        if (!progress) break;
    }
    st.deferred = retried_ok;
    st.blocked = std::move(pending);
    return out;
}

}  // namespace msp::morse
