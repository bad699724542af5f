#include <algorithm>
#include <numeric>

#include "msp/error.hpp"
#include "msp/morse.hpp"

namespace msp::morse {

TotalOrder::TotalOrder(std::span<const double> values) : rank_(values.size()), by_rank_(values.size()) {
    std::iota(by_rank_.begin(), by_rank_.end(), CellId{0});
    std::sort(by_rank_.begin(), by_rank_.end(), [&](CellId a, CellId b) {
        return values[a] < values[b] || (values[a] == values[b] && a < b);
    });
    for (std::size_t r = 0; r < by_rank_.size(); ++r) rank_[by_rank_[r]] = static_cast<std::int32_t>(r);
}

TriangulatedGrid::TriangulatedGrid(const field::ScalarField2D& field)
    : w_(field.width()), h_(field.height()), values_(field.values()) {
    if (w_ < 2 || h_ < 2) throw ParameterError("triangulation needs a grid of at least 2x2");
    if (6 * w_ * h_ >= kNoCell) throw ParameterError("grid too large for 32-bit simplex ids");
    order_ = TotalOrder(values_);
}

TriangulatedGrid build_complex(const field::ScalarField2D& field) { return TriangulatedGrid(field); }

bool TriangulatedGrid::valid(CellId c) const noexcept {
    const std::size_t V = w_ * h_;
    if (c < V) return true;
    if (c < 4 * V) {
        const std::size_t i = c - V, v = i / 3, x = v % w_, y = v / w_;
        switch (i % 3) {
        case 0: return x + 1 < w_;
        case 1: return y + 1 < h_;
        default: return x + 1 < w_ && y + 1 < h_;
        }
    }
    if (c < 6 * V) {
        const std::size_t v = (c - 4 * V) / 2, x = v % w_, y = v / w_;
        return x + 1 < w_ && y + 1 < h_;
    }
    return false;
}

int TriangulatedGrid::vertices(CellId c, std::array<CellId, 3>& out) const noexcept {
    const auto w = static_cast<CellId>(w_);
    const auto V = static_cast<CellId>(w_ * h_);
    if (c < V) {
        out[0] = c;
        return 1;
    }
    if (c < 4 * V) {
        const CellId i = c - V, v = i / 3;
        out[0] = v;
        switch (i % 3) {
        case 0: out[1] = v + 1; break;
        case 1: out[1] = v + w; break;
        default: out[1] = v + w + 1; break;
        }
        return 2;
    }
    const CellId i = c - 4 * V, v = i / 2;
    out[0] = v;
    out[1] = (i % 2 == 0) ? v + 1 : v + w;
    out[2] = v + w + 1;
    return 3;
}

int TriangulatedGrid::faces(CellId c, std::array<CellId, 3>& out) const noexcept {
    const auto V = static_cast<CellId>(w_ * h_);
    const auto w = static_cast<CellId>(w_);
    if (c < V) return 0;
    if (c < 4 * V) return vertices(c, out);
    const CellId i = c - 4 * V, v = i / 2;
    if (i % 2 == 0) {
        out[0] = edge_id(v, 0);
        out[1] = edge_id(v + 1, 1);
    } else {
        out[0] = edge_id(v, 1);
        out[1] = edge_id(v + w, 0);
    }
    out[2] = edge_id(v, 2);
    return 3;
}

int TriangulatedGrid::cofaces(CellId c, std::array<CellId, 6>& out) const noexcept {
    const auto V = static_cast<CellId>(w_ * h_);
    const auto w = static_cast<CellId>(w_);
    int n = 0;
    if (c < V) {
        const std::size_t x = c % w_, y = c / w_;
        if (x + 1 < w_) out[n++] = edge_id(c, 0);
        if (x > 0) out[n++] = edge_id(c - 1, 0);
        if (y + 1 < h_) out[n++] = edge_id(c, 1);
        if (y > 0) out[n++] = edge_id(c - w, 1);
        if (x + 1 < w_ && y + 1 < h_) out[n++] = edge_id(c, 2);
        if (x > 0 && y > 0) out[n++] = edge_id(c - w - 1, 2);
        return n;
    }
    if (c < 4 * V) {
        const CellId i = c - V, v = i / 3;
        const std::size_t x = v % w_, y = v / w_;
        switch (i % 3) {
        case 0:
            if (y + 1 < h_) out[n++] = triangle_id(v, 0);
            if (y > 0) out[n++] = triangle_id(v - w, 1);
            break;
        case 1:
            if (x + 1 < w_) out[n++] = triangle_id(v, 1);
            if (x > 0) out[n++] = triangle_id(v - 1, 0);
            break;
        default:
            out[n++] = triangle_id(v, 0);
            out[n++] = triangle_id(v, 1);
            break;
        }
        return n;
    }
    return 0;
}

int TriangulatedGrid::vertex_triangles(CellId v, std::array<CellId, 6>& out) const noexcept {
    const auto w = static_cast<CellId>(w_);
    const std::size_t x = v % w_, y = v / w_;
    int n = 0;
    if (x + 1 < w_ && y + 1 < h_) {
        out[n++] = triangle_id(v, 0);
        out[n++] = triangle_id(v, 1);
    }
    if (x > 0 && y + 1 < h_) out[n++] = triangle_id(v - 1, 0);
    if (x + 1 < w_ && y > 0) out[n++] = triangle_id(v - w, 1);
    if (x > 0 && y > 0) {
        out[n++] = triangle_id(v - w - 1, 0);
        out[n++] = triangle_id(v - w - 1, 1);
    }
    return n;
}

CellId TriangulatedGrid::other_vertex(CellId e, CellId v) const noexcept {
    std::array<CellId, 3> vs{};
    vertices(e, vs);
    return vs[0] == v ? vs[1] : vs[0];
}

bool TriangulatedGrid::on_boundary(CellId edge) const noexcept {
    std::array<CellId, 6> cf;
    return cofaces(edge, cf) == 1;
}

Key TriangulatedGrid::key(CellId c) const noexcept {
    std::array<CellId, 3> vs;
    const int n = vertices(c, vs);
    Key k{-1, -1, -1};
    for (int i = 0; i < n; ++i) k[static_cast<std::size_t>(i)] = order_.rank(vs[static_cast<std::size_t>(i)]);
    std::sort(k.begin(), k.begin() + n, std::greater<>());
    return k;
}

CellId TriangulatedGrid::top_vertex(CellId c) const noexcept {
    std::array<CellId, 3> vs;
    const int n = vertices(c, vs);
    CellId best = vs[0];
    for (int i = 1; i < n; ++i) {
        if (order_.rank(vs[static_cast<std::size_t>(i)]) > order_.rank(best)) best = vs[static_cast<std::size_t>(i)];
    }
    return best;
}

Point2 TriangulatedGrid::position(CellId c) const noexcept {
    std::array<CellId, 3> vs;
    const int n = vertices(c, vs);
    Point2 p;
    for (int i = 0; i < n; ++i) {
        p.x += static_cast<double>(vs[static_cast<std::size_t>(i)] % w_);
        p.y += static_cast<double>(vs[static_cast<std::size_t>(i)] / w_);
    }
    p.x /= n;
    p.y /= n;
    return p;
}

}  // namespace msp::morse
