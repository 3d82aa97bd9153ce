#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <utility>
#include <variant>
#include <vector>

#include "netpatch/errors.hpp"
#include "netpatch/linalg.hpp"
#include "netpatch/network.hpp"
#include "netpatch/tolerances.hpp"

namespace netpatch {

/// Input-space line segment from start to end, parameterized by t in [0, 1].
class Segment {
public:
    Segment(Vec start, Vec end) : start_(std::move(start)), end_(std::move(end)) {
        if (start_.size() != end_.size()) throw InputError("Segment: endpoint dimensions differ");
        if (start_.empty()) throw InputError("Segment: empty endpoints");
        if (!all_finite(start_) || !all_finite(end_))
            throw InputError("Segment: endpoints must be finite");
        if (start_ == end_) throw InputError("Segment: zero-length segment");
    }

    const Vec& start() const { return start_; }
    const Vec& end() const { return end_; }
    std::size_t dim() const { return start_.size(); }

    Vec point_at(double t) const {
        Vec p(start_.size());
        for (std::size_t i = 0; i < p.size(); ++i) p[i] = start_[i] + t * (end_[i] - start_[i]);
        return p;
    }

    double length() const {
        double acc = 0.0;
        for (std::size_t i = 0; i < start_.size(); ++i) {
            const double d = end_[i] - start_[i];
            acc += d * d;
        }
        return std::sqrt(acc);
    }

private:
    Vec start_;
    Vec end_;
};

using Param2 = std::array<double, 2>;

namespace detail {

inline double polygon_area(const std::vector<Param2>& poly) {
    double acc = 0.0;
    for (std::size_t i = 0; i < poly.size(); ++i) {
        const Param2& a = poly[i];
        const Param2& b = poly[(i + 1) % poly.size()];
        acc += a[0] * b[1] - b[0] * a[1];
    }
    return 0.5 * acc;
}

inline Param2 polygon_centroid(const std::vector<Param2>& poly) {
    const double area = polygon_area(poly);
    if (std::abs(area) < tol::kMinPolygonArea) {
        Param2 mean{0.0, 0.0};
        for (const Param2& p : poly) {
            mean[0] += p[0];
            mean[1] += p[1];
        }
        mean[0] /= static_cast<double>(poly.size());
        mean[1] /= static_cast<double>(poly.size());
        return mean;
    }
    double cx = 0.0, cy = 0.0;
    for (std::size_t i = 0; i < poly.size(); ++i) {
        const Param2& a = poly[i];
        const Param2& b = poly[(i + 1) % poly.size()];
        const double w = a[0] * b[1] - b[0] * a[1];
        cx += (a[0] + b[0]) * w;
        cy += (a[1] + b[1]) * w;
    }
    return {cx / (6.0 * area), cy / (6.0 * area)};
}

} // namespace detail

/// Convex polygon given by counter-clockwise input-space vertices lying in a
/// common 2-D affine subspace. The internal parameterization takes the first
/// vertex as origin and an orthonormal basis from Gram-Schmidt on the edges.
class Polygon2D {
public:
    explicit Polygon2D(std::vector<Vec> vertices) : vertices_(std::move(vertices)) {
        if (vertices_.size() < 3) throw InputError("Polygon2D: at least 3 vertices required");
        const std::size_t d = vertices_[0].size();
        if (d < 2) throw InputError("Polygon2D: vertices must have dimension >= 2");
        for (const Vec& v : vertices_) {
            if (v.size() != d) throw InputError("Polygon2D: vertex dimensions differ");
            if (!all_finite(v)) throw InputError("Polygon2D: vertices must be finite");
        }
        build_basis();
        validate_geometry();
    }

    const std::vector<Vec>& vertices() const { return vertices_; }
    const std::vector<Param2>& param_vertices() const { return param_vertices_; }
    std::size_t dim() const { return vertices_[0].size(); }

    /// Maps parameter-space coordinates back into the input space.
    Vec to_input(const Param2& p) const {
        Vec out = vertices_[0];
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] += p[0] * basis_u_[i] + p[1] * basis_v_[i];
        return out;
    }

    double area() const { return detail::polygon_area(param_vertices_); }

private:
    void build_basis() {
        const Vec& origin = vertices_[0];
        // First basis vector: the first nonzero edge from the origin.
        std::size_t first = 1;
        double len = 0.0;
        for (; first < vertices_.size(); ++first) {
            len = 0.0;
            for (std::size_t i = 0; i < origin.size(); ++i) {
                const double d = vertices_[first][i] - origin[i];
                len += d * d;
            }
            len = std::sqrt(len);
            if (len > tol::kCoplanarity) break;
        }
        if (first == vertices_.size()) throw InputError("Polygon2D: degenerate vertex set");
        basis_u_.assign(origin.size(), 0.0);
        for (std::size_t i = 0; i < origin.size(); ++i)
            basis_u_[i] = (vertices_[first][i] - origin[i]) / len;

        // Second basis vector: orthogonal component of a later edge.
        basis_v_.assign(origin.size(), 0.0);
        bool found = false;
        for (std::size_t k = first + 1; k < vertices_.size() && !found; ++k) {
            Vec e(origin.size());
            for (std::size_t i = 0; i < origin.size(); ++i) e[i] = vertices_[k][i] - origin[i];
            const double proj = dot(e, basis_u_);
            for (std::size_t i = 0; i < e.size(); ++i) e[i] -= proj * basis_u_[i];
            const double n = std::sqrt(dot(e, e));
            if (n > tol::kCoplanarity) {
                for (std::size_t i = 0; i < e.size(); ++i) basis_v_[i] = e[i] / n;
                found = true;
            }
        }
        if (!found) throw InputError("Polygon2D: vertices are collinear");

        project_vertices();
        const double area = detail::polygon_area(param_vertices_);
        if (area < 0.0) {
            if (vertices_[0].size() == 2)
                throw InputError("Polygon2D: vertices must be ordered counter-clockwise");
            // For embedded polygons the basis handedness is ours to pick.
            for (double& c : basis_v_) c = -c;
            project_vertices();
        }
    }

    void project_vertices() {
        param_vertices_.clear();
        const Vec& origin = vertices_[0];
        for (const Vec& v : vertices_) {
            Vec e(origin.size());
            for (std::size_t i = 0; i < origin.size(); ++i) e[i] = v[i] - origin[i];
            param_vertices_.push_back({dot(e, basis_u_), dot(e, basis_v_)});
        }
    }

    void validate_geometry() const {
        // Coplanarity: every vertex must be reproduced by its projection.
        for (std::size_t k = 0; k < vertices_.size(); ++k) {
            const Vec back = to_input(param_vertices_[k]);
            double residual = 0.0;
            for (std::size_t i = 0; i < back.size(); ++i) {
                const double d = back[i] - vertices_[k][i];
                residual += d * d;
            }
            if (std::sqrt(residual) > tol::kCoplanarity)
                throw InputError("Polygon2D: vertices do not lie in a common 2-D subspace");
        }
        if (detail::polygon_area(param_vertices_) <= tol::kMinPolygonArea)
            throw InputError("Polygon2D: degenerate area");
        // Convexity: all turns counter-clockwise (collinear vertices allowed).
        const std::size_t n = param_vertices_.size();
        for (std::size_t i = 0; i < n; ++i) {
            const Param2& a = param_vertices_[i];
            const Param2& b = param_vertices_[(i + 1) % n];
            const Param2& c = param_vertices_[(i + 2) % n];
            const double ux = b[0] - a[0], uy = b[1] - a[1];
            const double vx = c[0] - b[0], vy = c[1] - b[1];
            const double lu = std::hypot(ux, uy), lv = std::hypot(vx, vy);
            if (lu == 0.0 || lv == 0.0) continue;
            if ((ux * vy - uy * vx) / (lu * lv) < -tol::kVertexSide)
                throw InputError("Polygon2D: vertices are not convex");
        }
    }

    std::vector<Vec> vertices_;
    std::vector<Param2> param_vertices_;
    Vec basis_u_;
    Vec basis_v_;
};

using InputPolytope = std::variant<Segment, Polygon2D>;

/// Maximal sub-interval of a segment on which one activation pattern holds.
struct SegmentPiece {
    double t_begin;
    double t_end;
    ActivationPattern pattern;
};

struct SegmentPartition {
    Segment segment;
    std::vector<SegmentPiece> pieces;
};

/// Convex sub-polygon of the input polygon with a fixed activation pattern.
struct PolygonPiece {
    std::vector<Param2> param_vertices;
    std::vector<Vec> vertices; // same vertices mapped to input space
    ActivationPattern pattern;
};

struct PolygonPartition {
    Polygon2D polygon;
    std::vector<PolygonPiece> pieces;
};

using RegionPartition = std::variant<SegmentPartition, PolygonPartition>;

/// A vertex of a linear region restricted to a specification polytope, tagged
/// with the owning region's pattern. A geometric point shared by k regions
/// appears k times with k patterns.
struct KeyPoint {
    Vec point;
    ActivationPattern pattern;
    std::size_t source_polytope;
};

namespace detail {

// Piecewise state while sweeping a segment through the layers: on [t0, t1]
// the processed prefix of the network maps t to off + slope * t.
struct LinePiece {
    double t0;
    double t1;
    Vec off;
    Vec slope;
};

// Polygon analog: on `poly` the processed prefix maps params p to
// off + lin * p.
struct PlanePiece {
    std::vector<Param2> poly;
    Vec off;
    Mat lin; // width-2 matrix
};

inline void drop_duplicate_vertices(std::vector<Param2>& poly) {
    std::vector<Param2> out;
    for (const Param2& p : poly) {
        if (!out.empty() && std::abs(out.back()[0] - p[0]) <= tol::kCrossingMargin &&
            std::abs(out.back()[1] - p[1]) <= tol::kCrossingMargin)
            continue;
        out.push_back(p);
    }
    while (out.size() > 1 && std::abs(out.front()[0] - out.back()[0]) <= tol::kCrossingMargin &&
           std::abs(out.front()[1] - out.back()[1]) <= tol::kCrossingMargin)
        out.pop_back();
    poly = std::move(out);
}

/// Clips a convex polygon against the line g(p) = c + a.p, returning the
/// g >= 0 and g <= 0 sides. Slivers below the minimum area stay attached to
/// the dominant side instead of becoming their own piece.
inline std::pair<std::vector<Param2>, std::vector<Param2>>
split_polygon(const std::vector<Param2>& poly, const Param2& a, double c) {
    std::vector<double> g(poly.size());
    bool any_plus = false, any_minus = false;
    for (std::size_t i = 0; i < poly.size(); ++i) {
        g[i] = c + a[0] * poly[i][0] + a[1] * poly[i][1];
        if (g[i] > tol::kVertexSide) any_plus = true;
        if (g[i] < -tol::kVertexSide) any_minus = true;
    }
    if (!any_minus) return {poly, {}};
    if (!any_plus) return {{}, poly};

    std::vector<Param2> plus, minus;
    const std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = (i + 1) % n;
        const Param2& p = poly[i];
        const Param2& q = poly[j];
        if (g[i] >= 0.0) plus.push_back(p);
        if (g[i] <= 0.0) minus.push_back(p);
        if ((g[i] > 0.0 && g[j] < 0.0) || (g[i] < 0.0 && g[j] > 0.0)) {
            const double t = g[i] / (g[i] - g[j]);
            const Param2 cut{p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])};
            plus.push_back(cut);
            minus.push_back(cut);
        }
    }
    drop_duplicate_vertices(plus);
    drop_duplicate_vertices(minus);
    if (plus.size() < 3 || std::abs(polygon_area(plus)) < tol::kMinPolygonArea)
        return {{}, poly};
    if (minus.size() < 3 || std::abs(polygon_area(minus)) < tol::kMinPolygonArea)
        return {poly, {}};
    return {plus, minus};
}

} // namespace detail

/// Exact linear-region partition of a PWL network restricted to a segment.
/// Sweeps the layers, inserting a breakpoint at each in-piece Relu zero
/// crossing; pre-activations are affine in t on every current piece, so
/// crossings are exact up to float rounding.
inline SegmentPartition exactline(const Dnn& dnn, const Segment& seg) {
    if (!is_pwl(dnn)) throw UnsupportedActivationError("exactline: network is not PWL");
    if (seg.dim() != dnn.input_dim()) throw InputError("exactline: segment dimension mismatch");

    std::vector<detail::LinePiece> pieces;
    pieces.push_back({0.0, 1.0, seg.start(), sub(seg.end(), seg.start())});

    for (const Layer& layer : dnn.layers()) {
        std::vector<detail::LinePiece> next;
        for (const detail::LinePiece& piece : pieces) {
            const Vec pre_off = add(matvec(layer.weights(), piece.off), layer.bias());
            const Vec pre_slope = matvec(layer.weights(), piece.slope);

            std::vector<double> cuts;
            if (layer.activation() == ActivationKind::Relu) {
                for (std::size_t j = 0; j < pre_off.size(); ++j) {
                    if (pre_slope[j] == 0.0) continue;
                    const double tc = -pre_off[j] / pre_slope[j];
                    if (tc > piece.t0 + tol::kCrossingMargin &&
                        tc < piece.t1 - tol::kCrossingMargin)
                        cuts.push_back(tc);
                }
                std::sort(cuts.begin(), cuts.end());
                cuts.erase(std::unique(cuts.begin(), cuts.end(),
                                       [](double a, double b) {
                                           return b - a < tol::kCrossingMargin;
                                       }),
                           cuts.end());
            }

            std::vector<double> bounds;
            bounds.push_back(piece.t0);
            bounds.insert(bounds.end(), cuts.begin(), cuts.end());
            bounds.push_back(piece.t1);
            for (std::size_t k = 0; k + 1 < bounds.size(); ++k) {
                detail::LinePiece sub_piece;
                sub_piece.t0 = bounds[k];
                sub_piece.t1 = bounds[k + 1];
                const double mid = 0.5 * (sub_piece.t0 + sub_piece.t1);
                sub_piece.off = pre_off;
                sub_piece.slope = pre_slope;
                if (layer.activation() == ActivationKind::Relu) {
                    for (std::size_t j = 0; j < pre_off.size(); ++j) {
                        if (pre_off[j] + pre_slope[j] * mid < 0.0) {
                            sub_piece.off[j] = 0.0;
                            sub_piece.slope[j] = 0.0;
                        }
                    }
                }
                next.push_back(std::move(sub_piece));
            }
        }
        pieces = std::move(next);
    }

    SegmentPartition partition{seg, {}};
    for (const detail::LinePiece& piece : pieces) {
        const double mid = 0.5 * (piece.t0 + piece.t1);
        partition.pieces.push_back(
            {piece.t0, piece.t1, activation_pattern(dnn, seg.point_at(mid))});
    }
    return partition;
}

/// Exact linear-region partition of a PWL network restricted to a convex
/// polygon. Works in the polygon's 2-D parameterization: each current piece
/// carries the affine map from parameters to the current layer input, and is
/// split by the zero line of every Relu neuron before masking.
inline PolygonPartition plane_transfer(const Dnn& dnn, const Polygon2D& poly) {
    if (!is_pwl(dnn)) throw UnsupportedActivationError("plane_transfer: network is not PWL");
    if (poly.dim() != dnn.input_dim())
        throw InputError("plane_transfer: polygon dimension mismatch");

    detail::PlanePiece initial;
    initial.poly = poly.param_vertices();
    initial.off = poly.vertices()[0];
    initial.lin = Mat(poly.dim(), 2);
    {
        const Vec du = sub(poly.to_input({1.0, 0.0}), poly.vertices()[0]);
        const Vec dv = sub(poly.to_input({0.0, 1.0}), poly.vertices()[0]);
        for (std::size_t i = 0; i < poly.dim(); ++i) {
            initial.lin(i, 0) = du[i];
            initial.lin(i, 1) = dv[i];
        }
    }

    std::vector<detail::PlanePiece> pieces{std::move(initial)};
    for (const Layer& layer : dnn.layers()) {
        std::vector<detail::PlanePiece> next;
        for (const detail::PlanePiece& piece : pieces) {
            const Vec pre_off = add(matvec(layer.weights(), piece.off), layer.bias());
            const Mat pre_lin = matmul(layer.weights(), piece.lin);

            std::vector<std::vector<Param2>> polys{piece.poly};
            if (layer.activation() == ActivationKind::Relu) {
                for (std::size_t j = 0; j < pre_off.size(); ++j) {
                    const Param2 a{pre_lin(j, 0), pre_lin(j, 1)};
                    std::vector<std::vector<Param2>> split;
                    for (const std::vector<Param2>& p : polys) {
                        auto [plus, minus] = detail::split_polygon(p, a, pre_off[j]);
                        if (!plus.empty()) split.push_back(std::move(plus));
                        if (!minus.empty()) split.push_back(std::move(minus));
                    }
                    polys = std::move(split);
                }
            }

            for (std::vector<Param2>& p : polys) {
                detail::PlanePiece sub_piece;
                const Param2 bary = detail::polygon_centroid(p);
                sub_piece.poly = std::move(p);
                sub_piece.off = pre_off;
                sub_piece.lin = pre_lin;
                if (layer.activation() == ActivationKind::Relu) {
                    for (std::size_t j = 0; j < pre_off.size(); ++j) {
                        const double g =
                            pre_off[j] + pre_lin(j, 0) * bary[0] + pre_lin(j, 1) * bary[1];
                        if (g < 0.0) {
                            sub_piece.off[j] = 0.0;
                            sub_piece.lin(j, 0) = 0.0;
                            sub_piece.lin(j, 1) = 0.0;
                        }
                    }
                }
                next.push_back(std::move(sub_piece));
            }
        }
        pieces = std::move(next);
    }

    PolygonPartition partition{poly, {}};
    for (const detail::PlanePiece& piece : pieces) {
        PolygonPiece out;
        out.param_vertices = piece.poly;
        for (const Param2& p : piece.poly) out.vertices.push_back(poly.to_input(p));
        out.pattern = activation_pattern(dnn, poly.to_input(detail::polygon_centroid(piece.poly)));
        partition.pieces.push_back(std::move(out));
    }
    return partition;
}

inline RegionPartition partition_polytope(const Dnn& dnn, const InputPolytope& polytope) {
    if (std::holds_alternative<Segment>(polytope))
        return exactline(dnn, std::get<Segment>(polytope));
    return plane_transfer(dnn, std::get<Polygon2D>(polytope));
}

/// Every vertex of every linear region of every polytope, tagged with the
/// owning region's pattern and the polytope it came from (Alg. 2's reduction
/// of polytope repair to point repair).
inline std::vector<KeyPoint> key_points(const Dnn& dnn,
                                        const std::vector<InputPolytope>& polytopes) {
    std::vector<KeyPoint> points;
    for (std::size_t idx = 0; idx < polytopes.size(); ++idx) {
        if (std::holds_alternative<Segment>(polytopes[idx])) {
            const Segment& seg = std::get<Segment>(polytopes[idx]);
            const SegmentPartition part = exactline(dnn, seg);
            for (const SegmentPiece& piece : part.pieces) {
                points.push_back({seg.point_at(piece.t_begin), piece.pattern, idx});
                points.push_back({seg.point_at(piece.t_end), piece.pattern, idx});
            }
        } else {
            const Polygon2D& poly = std::get<Polygon2D>(polytopes[idx]);
            const PolygonPartition part = plane_transfer(dnn, poly);
            for (const PolygonPiece& piece : part.pieces)
                for (const Vec& v : piece.vertices) points.push_back({v, piece.pattern, idx});
        }
    }
    return points;
}

} // namespace netpatch
