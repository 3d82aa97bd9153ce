#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <random>
#include <variant>
#include <vector>

#include "netpatch/ddnn.hpp"
#include "netpatch/errors.hpp"
#include "netpatch/repair.hpp"
#include "netpatch/tolerances.hpp"

namespace netpatch {

struct LabeledPoint {
    Vec x;
    std::size_t label = 0;
};

struct LabeledSet {
    std::vector<LabeledPoint> points;
};

/// Index of the largest output component; ties break toward the lowest index.
inline std::size_t argmax_label(const Vec& y) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < y.size(); ++i)
        if (y[i] > y[best]) best = i;
    return best;
}

/// Fraction of points whose argmax output equals the label.
inline double accuracy(const AnyNet& net, const LabeledSet& set) {
    if (set.points.empty()) return 0.0;
    const std::size_t out_dim = net_output_dim(net);
    std::size_t correct = 0;
    for (const LabeledPoint& point : set.points) {
        if (point.label >= out_dim)
            throw InputError("accuracy: label exceeds network output dimension");
        if (argmax_label(eval_net(net, point.x)) == point.label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(set.points.size());
}

/// Accuracy lost on the drawdown set: buggy minus repaired. Lower is better.
inline double drawdown(const AnyNet& buggy, const AnyNet& repaired, const LabeledSet& dset) {
    return accuracy(buggy, dset) - accuracy(repaired, dset);
}

/// Accuracy gained on the generalization set: repaired minus buggy.
inline double generalization(const AnyNet& buggy, const AnyNet& repaired,
                             const LabeledSet& gset) {
    return accuracy(repaired, gset) - accuracy(buggy, gset);
}

struct MetricsReport {
    std::optional<double> efficacy; // accuracy of the repaired net on the repair set
    double drawdown = 0.0;
    double generalization = 0.0;
    std::size_t repair_count = 0;
    std::size_t drawdown_count = 0;
    std::size_t generalization_count = 0;
};

inline MetricsReport compute_metrics(const AnyNet& buggy, const AnyNet& repaired,
                                     const std::optional<LabeledSet>& repair_set,
                                     const LabeledSet& dset, const LabeledSet& gset) {
    MetricsReport report;
    if (repair_set.has_value()) {
        report.efficacy = accuracy(repaired, *repair_set);
        report.repair_count = repair_set->points.size();
    }
    report.drawdown = drawdown(buggy, repaired, dset);
    report.generalization = generalization(buggy, repaired, gset);
    report.drawdown_count = dset.points.size();
    report.generalization_count = gset.points.size();
    return report;
}

struct SampledSpecCheck {
    bool pass = false;
    double worst_residual = 0.0;
    std::size_t samples = 0;
};

namespace detail {

inline Vec sample_polytope_point(const InputPolytope& polytope, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    if (std::holds_alternative<Segment>(polytope))
        return std::get<Segment>(polytope).point_at(unit(rng));

    const Polygon2D& poly = std::get<Polygon2D>(polytope);
    const std::vector<Param2>& v = poly.param_vertices();
    // Area-weighted fan triangle, then uniform barycentric coordinates.
    std::vector<double> cumulative;
    double total = 0.0;
    for (std::size_t i = 1; i + 1 < v.size(); ++i) {
        const double a2 = std::abs((v[i][0] - v[0][0]) * (v[i + 1][1] - v[0][1]) -
                                   (v[i + 1][0] - v[0][0]) * (v[i][1] - v[0][1]));
        total += a2;
        cumulative.push_back(total);
    }
    const double pick = unit(rng) * total;
    std::size_t tri = 0;
    while (tri + 1 < cumulative.size() && cumulative[tri] < pick) ++tri;
    const Param2& a = v[0];
    const Param2& b = v[tri + 1];
    const Param2& c = v[tri + 2];
    const double r1 = std::sqrt(unit(rng));
    const double r2 = unit(rng);
    const Param2 p{(1.0 - r1) * a[0] + r1 * (1.0 - r2) * b[0] + r1 * r2 * c[0],
                   (1.0 - r1) * a[1] + r1 * (1.0 - r2) * b[1] + r1 * r2 * c[1]};
    return poly.to_input(p);
}

} // namespace detail

/// Empirical witness that a polytope specification holds: deterministic
/// seeded uniform samples from every polytope, pass iff the worst residual
/// A^P y - b^P stays within the LP feasibility tolerance.
inline SampledSpecCheck check_polytope_spec_sampled(const AnyNet& net, const PolytopeSpec& spec,
                                                    std::size_t samples_per_polytope = 1000,
                                                    std::uint64_t seed = 0) {
    SampledSpecCheck check;
    check.worst_residual = -std::numeric_limits<double>::infinity();
    std::mt19937_64 rng(seed);
    const std::size_t out_dim = net_output_dim(net);
    for (const PolytopeSpecItem& item : spec.items) {
        item.constraint.validate(out_dim);
        for (std::size_t s = 0; s < samples_per_polytope; ++s) {
            const Vec x = detail::sample_polytope_point(item.polytope, rng);
            const Vec lhs = matvec(item.constraint.a, eval_net(net, x));
            for (std::size_t r = 0; r < lhs.size(); ++r)
                check.worst_residual = std::max(check.worst_residual, lhs[r] - item.constraint.b[r]);
            ++check.samples;
        }
    }
    if (check.samples == 0) check.worst_residual = 0.0;
    check.pass = check.worst_residual <= tol::kFeasibility;
    return check;
}

} // namespace netpatch
