#pragma once

// Discrete Morse theory on a Freudenthal-triangulated grid.
//
// Every grid quad (x, y)-(x+1, y+1) is split along the diagonal from its
// lower-left to its upper-right corner. Simplices share one id space:
//
//   vertex   v            -> v                       v = y * width + x
//   edge     (v, kind)    -> V + 3 * v + kind        kind: 0 = +x, 1 = +y, 2 = +x+y
//   triangle (v, side)    -> 4 * V + 2 * v + side    side 0 = {v, v+1, v+w+1},
//                                                    side 1 = {v, v+w, v+w+1}
//
// where V = width * height. Ids that fall outside the grid are invalid.
//
// The discrete gradient is built from lower stars of a strict vertex order
// (value, vertex index), so V-paths follow the order and are acyclic.
// Persistence is computed on the Morse complex of the gradient with the grid
// treated as a disk: minima are paired through sublevel merges, maxima through
// superlevel merges where the domain boundary acts as an ever-present
// component.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "msp/field.hpp"

namespace msp::morse {

using CellId = std::uint32_t;
inline constexpr CellId kNoCell = 0xffffffffu;

/// Sorted-descending vertex ranks of a simplex, padded with -1. Lexicographic
/// comparison orders simplices by their lower-star filtration.
using Key = std::array<std::int32_t, 3>;

struct Point2 {
    double x = 0;
    double y = 0;
    friend bool operator==(const Point2&, const Point2&) = default;
};

/// Injective vertex ranking by (value, vertex index).
class TotalOrder {
public:
    TotalOrder() = default;
    explicit TotalOrder(std::span<const double> values);

    std::int32_t rank(CellId v) const { return rank_[v]; }
    CellId vertex_at(std::int32_t r) const { return by_rank_[static_cast<std::size_t>(r)]; }
    std::size_t size() const noexcept { return rank_.size(); }

private:
    std::vector<std::int32_t> rank_;
    std::vector<CellId> by_rank_;
};

class TriangulatedGrid {
public:
    /// Throws ParameterError for grids smaller than 2x2.
    explicit TriangulatedGrid(const field::ScalarField2D& field);

    std::size_t width() const noexcept { return w_; }
    std::size_t height() const noexcept { return h_; }
    std::size_t num_vertices() const noexcept { return w_ * h_; }
    std::size_t num_edges() const noexcept { return w_ * (h_ - 1) + h_ * (w_ - 1) + (w_ - 1) * (h_ - 1); }
    std::size_t num_triangles() const noexcept { return 2 * (w_ - 1) * (h_ - 1); }
    /// Size of the shared id space (includes invalid ids).
    std::size_t id_space() const noexcept { return 6 * w_ * h_; }

    const std::vector<double>& values() const noexcept { return values_; }
    const TotalOrder& order() const noexcept { return order_; }

    int dim(CellId c) const noexcept { return c < vbase_e() ? 0 : (c < vbase_t() ? 1 : 2); }
    bool valid(CellId c) const noexcept;

    CellId edge_id(CellId v, int kind) const noexcept { return static_cast<CellId>(vbase_e() + 3 * v + kind); }
    CellId triangle_id(CellId v, int side) const noexcept { return static_cast<CellId>(vbase_t() + 2 * v + side); }

    /// Vertices of a simplex; returns the count (1..3).
    int vertices(CellId c, std::array<CellId, 3>& out) const noexcept;
    /// Edges of a triangle or vertices of an edge; returns the count.
    int faces(CellId c, std::array<CellId, 3>& out) const noexcept;
    /// Edges around a vertex (<= 6) or triangles around an edge (<= 2).
    int cofaces(CellId c, std::array<CellId, 6>& out) const noexcept;
    /// Triangles around a vertex (<= 6).
    int vertex_triangles(CellId v, std::array<CellId, 6>& out) const noexcept;

    /// Endpoint of edge `e` other than `v`.
    CellId other_vertex(CellId e, CellId v) const noexcept;
    bool on_boundary(CellId edge) const noexcept;

    Key key(CellId c) const noexcept;
    /// Vertex with the highest rank; the cell's value is this vertex's value.
    CellId top_vertex(CellId c) const noexcept;
    double value(CellId c) const noexcept { return values_[top_vertex(c)]; }

    /// Vertex position, edge midpoint or triangle barycenter, in field coordinates.
    Point2 position(CellId c) const noexcept;

private:
    std::size_t vbase_e() const noexcept { return w_ * h_; }
    std::size_t vbase_t() const noexcept { return 4 * w_ * h_; }

    std::size_t w_, h_;
    std::vector<double> values_;
    TotalOrder order_;
};

TriangulatedGrid build_complex(const field::ScalarField2D& field);

struct CriticalCell {
    CellId cell = kNoCell;
    int index = 0;  ///< 0 minimum, 1 saddle, 2 maximum; equals the simplex dimension
    CellId vertex = kNoCell;  ///< representative (highest-ranked) vertex
    double value = 0;
    friend bool operator==(const CriticalCell&, const CriticalCell&) = default;
};

/// Pairing of simplices with a coface or face. Unpaired valid simplices are critical.
class DiscreteGradient {
public:
    DiscreteGradient() = default;
    explicit DiscreteGradient(std::size_t id_space) : partner_(id_space, kNoCell) {}

    CellId partner(CellId c) const { return partner_[c]; }
    bool is_paired(CellId c) const { return partner_[c] != kNoCell; }
    void pair(CellId a, CellId b) {
        partner_[a] = b;
        partner_[b] = a;
    }
    void unpair(CellId c) { partner_[c] = kNoCell; }

    const std::vector<CellId>& partners() const noexcept { return partner_; }
    friend bool operator==(const DiscreteGradient&, const DiscreteGradient&) = default;

private:
    std::vector<CellId> partner_;
};

DiscreteGradient compute_gradient(const TriangulatedGrid& grid);

std::vector<CriticalCell> critical_cells(const DiscreteGradient& g, const TriangulatedGrid& grid);

/// {m0, m1, m2}
std::array<std::size_t, 3> critical_counts(const DiscreteGradient& g, const TriangulatedGrid& grid);

struct PersistencePair {
    CriticalCell birth;
    CriticalCell death;
    double persistence = 0;
};

/// Finite pairs: (minimum, saddle) and (saddle, maximum). On a disk one
/// minimum stays unpaired; every maximum and every saddle is paired.
std::vector<PersistencePair> compute_persistence_pairs(const DiscreteGradient& g, const TriangulatedGrid& grid);

struct SimplifyStats {
    std::size_t cancelled = 0;
    std::size_t deferred = 0;                  ///< skipped on first attempt, cancelled on a retry
    std::vector<PersistencePair> blocked;      ///< never cancellable
};

/// Cancels every pair with persistence < threshold by V-path reversal, in
/// increasing order of persistence. A pair whose critical cells are not joined
/// by exactly one V-path is retried after the others and reported if it stays
/// blocked.
DiscreteGradient simplify(const DiscreteGradient& g, const TriangulatedGrid& grid, double threshold,
                          SimplifyStats* stats = nullptr);

enum class ArcKind {
    descending,  ///< saddle -> minimum; boundaries of descending manifolds
    ascending,   ///< saddle -> maximum (or the domain boundary)
};

struct SeparatrixArc {
    std::vector<Point2> points;
    CellId saddle = kNoCell;
    /// Critical vertex (descending) or critical triangle (ascending); kNoCell
    /// when an ascending path leaves through the domain boundary.
    CellId destination = kNoCell;
    std::vector<CellId> simplices;
};

std::vector<SeparatrixArc> extract_arcs(const DiscreteGradient& g, const TriangulatedGrid& grid,
                                        ArcKind kind = ArcKind::descending);

/// Debug/UI export: [{"saddle":[x,y],"min":[x,y],"points":[[x,y],...]}, ...].
/// Ascending arcs use "max" in place of "min".
std::string arcs_to_json(std::span<const SeparatrixArc> arcs, ArcKind kind = ArcKind::descending);

/// Convenience: field -> gradient -> simplify(threshold) -> arcs.
std::vector<SeparatrixArc> field_arcs(const field::ScalarField2D& field, double threshold,
                                      ArcKind kind = ArcKind::descending, SimplifyStats* stats = nullptr);

}  // namespace msp::morse
