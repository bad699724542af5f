#pragma once

// V-path tracing shared by persistence, simplification and arc extraction.

#include <stdexcept>

#include "msp/morse.hpp"

namespace msp::morse::detail {

inline constexpr CellId kOutside = kNoCell;

/// Follows vertex->edge pairs downward from vertex u to a critical vertex.
/// visit(edge, next_vertex) is called for every step.
template <class Visit>
CellId descend(const TriangulatedGrid& grid, const DiscreteGradient& g, CellId u, Visit&& visit) {
    std::size_t guard = grid.num_vertices() + 1;
    while (g.is_paired(u)) {
        const CellId e = g.partner(u);
        u = grid.other_vertex(e, u);
        visit(e, u);
        if (--guard == 0) throw std::logic_error("cyclic descending V-path");
    }
    return u;
}

inline CellId descend(const TriangulatedGrid& grid, const DiscreteGradient& g, CellId u) {
    return descend(grid, g, u, [](CellId, CellId) {});
}

inline CellId other_coface(const TriangulatedGrid& grid, CellId e, CellId t) {
    std::array<CellId, 6> cf;
    const int n = grid.cofaces(e, cf);
    for (int i = 0; i < n; ++i)
        if (cf[static_cast<std::size_t>(i)] != t) return cf[static_cast<std::size_t>(i)];
    return kOutside;
}

/// Follows edge->triangle pairs upward starting at triangle t (entered from
/// an edge) until a critical triangle, or kOutside when the path leaves
/// through a boundary edge. visit(triangle) and visit_edge(edge) are called
/// in path order.
template <class VisitTri, class VisitEdge>
CellId ascend(const TriangulatedGrid& grid, const DiscreteGradient& g, CellId t, VisitTri&& visit_tri,
              VisitEdge&& visit_edge) {
    std::size_t guard = grid.num_triangles() + 1;
    while (true) {
        visit_tri(t);
        if (!g.is_paired(t)) return t;
        const CellId e = g.partner(t);
        visit_edge(e);
        const CellId next = other_coface(grid, e, t);
        if (next == kOutside) return kOutside;
        t = next;
        if (--guard == 0) throw std::logic_error("cyclic ascending V-path");
    }
}

inline CellId ascend(const TriangulatedGrid& grid, const DiscreteGradient& g, CellId t) {
    return ascend(grid, g, t, [](CellId) {}, [](CellId) {});
}

/// The two ends of an edge's ascending paths; one slot is kOutside for a
/// boundary edge.
inline std::array<CellId, 2> ascending_ends(const TriangulatedGrid& grid, const DiscreteGradient& g, CellId e) {
    std::array<CellId, 6> cf;
    const int n = grid.cofaces(e, cf);
    std::array<CellId, 2> ends{kOutside, kOutside};
    for (int i = 0; i < n; ++i) ends[static_cast<std::size_t>(i)] = ascend(grid, g, cf[static_cast<std::size_t>(i)]);
    return ends;
}

}  // namespace msp::morse::detail
