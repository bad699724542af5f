#include "json.hpp"

#include "msp/morse.hpp"
#include "paths.hpp"

namespace msp::morse {

std::vector<SeparatrixArc> extract_arcs(const DiscreteGradient& g, const TriangulatedGrid& grid, ArcKind kind) {
    std::vector<SeparatrixArc> arcs;
    const auto V = static_cast<CellId>(grid.num_vertices());
    for (CellId e = V; e < 4 * V; ++e) {
        if (!grid.valid(e) || g.is_paired(e)) continue;
        const Point2 mid = grid.position(e);
        if (kind == ArcKind::descending) {
            std::array<CellId, 3> vs;
            grid.vertices(e, vs);
            for (int side = 0; side < 2; ++side) {
                SeparatrixArc arc;
                arc.saddle = e;
                arc.points.push_back(mid);
                arc.simplices.push_back(e);
                const CellId start = vs[static_cast<std::size_t>(side)];
                arc.points.push_back(grid.position(start));
                arc.simplices.push_back(start);
                arc.destination = detail::descend(grid, g, start, [&](CellId edge, CellId v) {
                    arc.simplices.push_back(edge);
                    arc.simplices.push_back(v);
                    arc.points.push_back(grid.position(v));
                });
                arcs.push_back(std::move(arc));
            }
        } else {
            std::array<CellId, 6> cf;
            const int n = grid.cofaces(e, cf);
            for (int side = 0; side < n; ++side) {
                SeparatrixArc arc;
                arc.saddle = e;
                arc.points.push_back(mid);
                arc.simplices.push_back(e);
                arc.destination = detail::ascend(
                    grid, g, cf[static_cast<std::size_t>(side)],
                    [&](CellId t) {
                        arc.simplices.push_back(t);
                        arc.points.push_back(grid.position(t));
                    },
                    [&](CellId edge) {
                        arc.simplices.push_back(edge);
                        arc.points.push_back(grid.position(edge));
                    });
                arcs.push_back(std::move(arc));
            }
        }
    }
    return arcs;
}

std::string arcs_to_json(std::span<const SeparatrixArc> arcs, ArcKind kind) {
    auto pt = [](const Point2& p) { return nlohmann::json::array({p.x, p.y}); };
    nlohmann::json out = nlohmann::json::array();
    for (const auto& a : arcs) {
        nlohmann::json j;
        j["saddle"] = pt(a.points.front());
        j[kind == ArcKind::descending ? "min" : "max"] = pt(a.points.back());
        nlohmann::json pts = nlohmann::json::array();
        for (const auto& p : a.points) pts.push_back(pt(p));
        j["points"] = std::move(pts);
        out.push_back(std::move(j));
    }
    return out.dump();
}

std::vector<SeparatrixArc> field_arcs(const field::ScalarField2D& field, double threshold, ArcKind kind,
                                      SimplifyStats* stats) {
    const TriangulatedGrid grid(field);
    const DiscreteGradient g = compute_gradient(grid);
    return extract_arcs(simplify(g, grid, threshold, stats), grid, kind);
}

}  // namespace msp::morse
