#pragma once

#include <chrono>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "netpatch/ddnn.hpp"
#include "netpatch/errors.hpp"
#include "netpatch/jacobian.hpp"
#include "netpatch/linalg.hpp"
#include "netpatch/lp.hpp"
#include "netpatch/network.hpp"
#include "netpatch/regions.hpp"
#include "netpatch/tolerances.hpp"

namespace netpatch {

/// Output-space halfspace system A y <= b.
struct OutputConstraint {
    Mat a;
    Vec b;

    void validate(std::size_t output_dim) const {
        if (a.rows != b.size())
            throw InputError("constraint: A row count does not equal b length");
        if (a.cols != output_dim)
            throw InputError("constraint: A column count does not equal network output dim");
        if (!all_finite(a) || !all_finite(b))
            throw InputError("constraint: entries must be finite");
    }
};

/// Rows encoding "output component `label` is larger than all others by at
/// least `margin`": (e_j - e_label) . y <= -margin for every j != label.
/// LPs cannot express strict inequalities, hence the margin.
inline OutputConstraint classification_constraint(std::size_t label, std::size_t output_dim,
                                                  double margin = tol::kDefaultClassifyMargin) {
    if (label >= output_dim) throw InputError("classification: label out of range");
    OutputConstraint out;
    out.a = Mat(output_dim - 1, output_dim);
    out.b.assign(output_dim - 1, -margin);
    std::size_t row = 0;
    for (std::size_t j = 0; j < output_dim; ++j) {
        if (j == label) continue;
        out.a(row, j) = 1.0;
        out.a(row, label) = -1.0;
        ++row;
    }
    return out;
}

struct PointSpecItem {
    Vec x;
    OutputConstraint constraint;
};

struct PointSpec {
    std::vector<PointSpecItem> items;
};

struct PolytopeSpecItem {
    InputPolytope polytope;
    OutputConstraint constraint;
};

struct PolytopeSpec {
    std::vector<PolytopeSpecItem> items;
};

/// Wall-clock budget for a whole repair pipeline. Default: no limit.
class Deadline {
public:
    Deadline() = default;

    static Deadline after_seconds(double seconds) {
        Deadline d;
        d.at_ = std::chrono::steady_clock::now() +
                std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                    std::chrono::duration<double>(seconds));
        return d;
    }

    bool expired() const { return at_.has_value() && std::chrono::steady_clock::now() > *at_; }

    void check(const char* where) const {
        if (expired()) throw TimeoutError(std::string("timeout during ") + where);
    }

private:
    std::optional<std::chrono::steady_clock::time_point> at_;
};

struct SpecCheck {
    bool satisfied = false;
    double worst_residual = 0.0; // max over constraints of (A y - b)

    explicit operator bool() const { return satisfied; }
};

/// Checks A^x N(x) <= b^x for every point, within `slack`.
inline SpecCheck satisfies_points(const AnyNet& net, const PointSpec& spec,
                                  double slack = tol::kDefaultSpecSlack) {
    const std::size_t out_dim = net_output_dim(net);
    SpecCheck check;
    check.worst_residual = -std::numeric_limits<double>::infinity();
    for (const PointSpecItem& item : spec.items) {
        item.constraint.validate(out_dim);
        const Vec y = eval_net(net, item.x);
        const Vec lhs = matvec(item.constraint.a, y);
        for (std::size_t r = 0; r < lhs.size(); ++r)
            check.worst_residual = std::max(check.worst_residual, lhs[r] - item.constraint.b[r]);
    }
    if (spec.items.empty()) check.worst_residual = 0.0; // vacuous
    check.satisfied = check.worst_residual <= slack;
    return check;
}

enum class RepairStatus { Repaired, Infeasible };

inline std::string to_string(RepairStatus status) {
    return status == RepairStatus::Repaired ? "repaired" : "infeasible";
}

struct RepairTimings {
    double regions_seconds = 0.0;
    double jacobians_seconds = 0.0;
    double lp_seconds = 0.0;
    double total_seconds = 0.0;
};

struct RepairResult {
    RepairStatus status = RepairStatus::Infeasible;
    std::optional<Ddnn> repaired;   // set when Repaired
    Vec delta;                      // target-layer parameter delta, Jacobian column order
    double norm_value = 0.0;        // chosen norm of delta
    NormObjective norm = NormObjective::L1;
    std::size_t layer = 0;
    std::size_t key_point_count = 0;
    RepairTimings timings;

    bool ok() const { return status == RepairStatus::Repaired; }
};

inline double norm_of(NormObjective norm, const Vec& v) {
    return norm == NormObjective::L1 ? norm_l1(v) : norm_linf(v);
}

namespace detail {

inline Ddnn to_ddnn(const AnyNet& net) {
    if (std::holds_alternative<Dnn>(net)) return decouple(std::get<Dnn>(net));
    return std::get<Ddnn>(net);
}

inline double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

} // namespace detail

/// The LP whose solution is the minimal single-layer repair: one block of
/// rows A^x J^x <= b^x - A^x N(x) per specification point, min-norm encoded.
/// Exposed separately so the LP can be dumped or cross-checked.
inline LinearProgram build_point_repair_lp(const Ddnn& ddnn, std::size_t layer,
                                           const PointSpec& spec, NormObjective norm,
                                           const std::optional<std::vector<bool>>& mask = {},
                                           const std::vector<ActivationPattern>* patterns = nullptr,
                                           const Deadline& deadline = {},
                                           RepairTimings* timings = nullptr) {
    if (layer < 1 || layer > ddnn.num_layers())
        throw InputError("point_repair: layer index out of range");
    if (patterns != nullptr && patterns->size() != spec.items.size())
        throw InputError("point_repair: one pattern per specification point required");
    const std::size_t p = layer_param_count(ddnn, layer);
    if (mask.has_value() && mask->size() != p)
        throw InputError("point_repair: mask length does not match layer parameter count");

    const auto t_start = std::chrono::steady_clock::now();
    std::vector<std::pair<Vec, double>> rows;
    for (std::size_t i = 0; i < spec.items.size(); ++i) {
        deadline.check("jacobian assembly");
        const PointSpecItem& item = spec.items[i];
        item.constraint.validate(ddnn.output_dim());
        const ActivationPattern* override_pattern =
            patterns != nullptr ? &(*patterns)[i] : nullptr;
        const ParamJacobian jac = param_jacobian(ddnn, layer, item.x, override_pattern);
        const Vec base_lhs = matvec(item.constraint.a, jac.base);
        for (std::size_t r = 0; r < item.constraint.a.rows; ++r) {
            Vec coeff(p, 0.0);
            for (std::size_t col = 0; col < p; ++col) {
                double acc = 0.0;
                for (std::size_t out = 0; out < ddnn.output_dim(); ++out)
                    acc += item.constraint.a(r, out) * jac.matrix(out, col);
                coeff[col] = acc;
            }
            rows.push_back({std::move(coeff), item.constraint.b[r] - base_lhs[r]});
        }
    }
    if (timings != nullptr) timings->jacobians_seconds += detail::seconds_since(t_start);
    return encode_min_norm(rows, p, norm, mask.has_value() ? &*mask : nullptr);
}

/// Provable point repair of one value layer. Returns the repaired DDNN with
/// the minimal delta (in the chosen norm), or Infeasible, which certifies --
/// within solver tolerance -- that no single-layer repair of this layer
/// exists. When `patterns` is given, point i's Jacobian and base use that
/// pattern's linearizations (the key-point boundary rule).
inline RepairResult point_repair(const AnyNet& net, std::size_t layer, const PointSpec& spec,
                                 NormObjective norm,
                                 const std::optional<std::vector<bool>>& mask = {},
                                 const std::vector<ActivationPattern>* patterns = nullptr,
                                 const LpSolveFn& solver = {},
                                 const Deadline& deadline = {}) {
    const auto t_start = std::chrono::steady_clock::now();
    const Ddnn ddnn = detail::to_ddnn(net);
    if (patterns != nullptr && !is_pwl(ddnn))
        throw UnsupportedActivationError(
            "point_repair: pattern overrides require a PWL activation channel");

    RepairResult result;
    result.norm = norm;
    result.layer = layer;
    result.key_point_count = spec.items.size();

    const LinearProgram lp =
        build_point_repair_lp(ddnn, layer, spec, norm, mask, patterns, deadline, &result.timings);

    const auto t_lp = std::chrono::steady_clock::now();
    LpOutcome outcome;
    if (solver) {
        outcome = solver(lp);
    } else {
        outcome = solve(lp, [&deadline] { deadline.check("lp solve"); });
    }
    result.timings.lp_seconds = detail::seconds_since(t_lp);

    switch (outcome.status) {
        case LpOutcome::Status::Optimal: {
            const std::size_t p = layer_param_count(ddnn, layer);
            result.delta.assign(outcome.x.begin(), outcome.x.begin() + static_cast<long>(p));
            result.repaired = apply_value_delta(ddnn, layer, result.delta);
            result.norm_value = norm_of(norm, result.delta);
            result.status = RepairStatus::Repaired;
            break;
        }
        case LpOutcome::Status::Infeasible:
            result.status = RepairStatus::Infeasible;
            break;
        case LpOutcome::Status::Unbounded:
            throw SolverProtocolError("min-norm repair LP reported unbounded");
    }
    result.timings.total_seconds = detail::seconds_since(t_start);
    return result;
}

/// The equivalent point specification of a polytope specification: every key
/// point asserts its source polytope's halfspace system under its owning
/// region's pattern.
struct PointReduction {
    PointSpec spec;
    std::vector<ActivationPattern> patterns;
    std::size_t key_point_count = 0;
};

inline PointReduction reduce_to_points(const Dnn& net, const PolytopeSpec& spec,
                                       const Deadline& deadline = {}) {
    if (!is_pwl(net))
        throw UnsupportedActivationError("polytope repair: network is not PWL");
    std::vector<InputPolytope> polytopes;
    polytopes.reserve(spec.items.size());
    for (const PolytopeSpecItem& item : spec.items) {
        item.constraint.validate(net.output_dim());
        polytopes.push_back(item.polytope);
        deadline.check("region enumeration");
    }
    const std::vector<KeyPoint> kps = key_points(net, polytopes);
    deadline.check("region enumeration");

    PointReduction reduction;
    reduction.key_point_count = kps.size();
    reduction.spec.items.reserve(kps.size());
    reduction.patterns.reserve(kps.size());
    for (const KeyPoint& kp : kps) {
        reduction.spec.items.push_back({kp.point, spec.items[kp.source_polytope].constraint});
        reduction.patterns.push_back(kp.pattern);
    }
    return reduction;
}

/// Provable polytope repair: reduces each polytope to the vertices of its
/// linear regions (key points, each carrying its owning region's pattern)
/// and delegates to point repair. Requires a PWL network.
inline RepairResult polytope_repair(const Dnn& net, std::size_t layer, const PolytopeSpec& spec,
                                    NormObjective norm,
                                    const std::optional<std::vector<bool>>& mask = {},
                                    const LpSolveFn& solver = {},
                                    const Deadline& deadline = {}) {
    const auto t_start = std::chrono::steady_clock::now();
    const PointReduction reduction = reduce_to_points(net, spec, deadline);
    const double regions_seconds = detail::seconds_since(t_start);

    RepairResult result = point_repair(AnyNet(net), layer, reduction.spec, norm, mask,
                                       &reduction.patterns, solver, deadline);
    result.key_point_count = reduction.key_point_count;
    result.timings.regions_seconds = regions_seconds;
    result.timings.total_seconds = detail::seconds_since(t_start);
    return result;
}

// ---------------------------------------------------------------------------
// Named repair masks

/// One repairable parameter: layer is 1-based, (row, col) index the weight
/// matrix, or row indexes the bias when is_bias is set.
struct MaskEntry {
    std::size_t layer = 0;
    bool is_bias = false;
    std::size_t row = 0;
    std::size_t col = 0;
};

struct NamedMask {
    std::vector<MaskEntry> entries;
};

/// Parses "L<i>.w[r][c]" / "L<i>.b[r]" items (comma separated). The literal
/// "paper4" expands to the four drawn-edge parameters of the 1-3-1 worked
/// example: L1.w[0][0], L1.w[1][0], L1.w[2][0], L1.b[2].
inline NamedMask parse_mask(const std::string& text) {
    NamedMask mask;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t comma = text.find(',', pos);
        if (comma == std::string::npos) comma = text.size();
        std::string item = text.substr(pos, comma - pos);
        pos = comma + 1;
        while (!item.empty() && item.front() == ' ') item.erase(item.begin());
        while (!item.empty() && item.back() == ' ') item.pop_back();
        if (item.empty()) continue;
        if (item == "paper4") {
            mask.entries.push_back({1, false, 0, 0});
            mask.entries.push_back({1, false, 1, 0});
            mask.entries.push_back({1, false, 2, 0});
            mask.entries.push_back({1, true, 2, 0});
            continue;
        }
        const auto fail = [&item]() -> std::size_t {
            throw InputError("mask: cannot parse item '" + item + "'");
        };
        if (item.size() < 4 || item[0] != 'L') fail();
        std::size_t i = 1;
        const auto read_number = [&](char until) {
            std::size_t value = 0;
            bool any = false;
            while (i < item.size() && item[i] >= '0' && item[i] <= '9') {
                value = value * 10 + static_cast<std::size_t>(item[i] - '0');
                ++i;
                any = true;
            }
            if (!any || i >= item.size() || item[i] != until) fail();
            ++i;
            return value;
        };
        MaskEntry entry;
        entry.layer = read_number('.');
        if (entry.layer == 0) fail();
        if (i >= item.size()) fail();
        const char kind = item[i++];
        if (i >= item.size() || item[i] != '[') fail();
        ++i;
        if (kind == 'w') {
            entry.is_bias = false;
            entry.row = read_number(']');
            if (i >= item.size() || item[i] != '[') fail();
            ++i;
            entry.col = read_number(']');
        } else if (kind == 'b') {
            entry.is_bias = true;
            entry.row = read_number(']');
        } else {
            fail();
        }
        if (i != item.size()) fail();
        mask.entries.push_back(entry);
    }
    if (mask.entries.empty()) throw InputError("mask: no entries");
    return mask;
}

/// Boolean mask over layer `layer`'s parameters. Entries naming other layers
/// are ignored; if no entry names this layer, every parameter stays free.
inline std::optional<std::vector<bool>> resolve_mask(const NamedMask& mask, const Ddnn& ddnn,
                                                     std::size_t layer) {
    if (layer < 1 || layer > ddnn.num_layers())
        throw InputError("resolve_mask: layer index out of range");
    const Layer& target = ddnn.val_layers()[layer - 1];
    const std::size_t in = target.in_dim();
    const std::size_t out = target.out_dim();
    std::vector<bool> flags(out * (in + 1), false);
    bool any = false;
    for (const MaskEntry& entry : mask.entries) {
        if (entry.layer != layer) continue;
        any = true;
        if (entry.is_bias) {
            if (entry.row >= out) throw InputError("mask: bias index out of range");
            flags[out * in + entry.row] = true;
        } else {
            if (entry.row >= out || entry.col >= in)
                throw InputError("mask: weight index out of range");
            flags[entry.row * in + entry.col] = true;
        }
    }
    if (!any) return std::nullopt;
    return flags;
}

// ---------------------------------------------------------------------------
// Per-layer sweep

/// One layer's result in a repair-every-layer sweep; `error` is set when the
/// layer's repair threw instead of completing.
struct LayerRepairOutcome {
    std::size_t layer = 0;
    std::optional<RepairResult> result;
    std::string error;
};

inline std::vector<LayerRepairOutcome> repair_all_layers(const AnyNet& net, const PointSpec& spec,
                                                         NormObjective norm,
                                                         const NamedMask* mask = nullptr,
                                                         const Deadline& deadline = {}) {
    const Ddnn ddnn = detail::to_ddnn(net);
    std::vector<LayerRepairOutcome> outcomes;
    for (std::size_t layer = 1; layer <= ddnn.num_layers(); ++layer) {
        LayerRepairOutcome out;
        out.layer = layer;
        try {
            const auto layer_mask =
                mask != nullptr ? resolve_mask(*mask, ddnn, layer) : std::nullopt;
            out.result = point_repair(AnyNet(ddnn), layer, spec, norm, layer_mask, nullptr, {},
                                      deadline);
        } catch (const std::exception& e) {
            out.error = e.what();
        }
        outcomes.push_back(std::move(out));
    }
    return outcomes;
}

inline std::vector<LayerRepairOutcome> repair_all_layers(const Dnn& net, const PolytopeSpec& spec,
                                                         NormObjective norm,
                                                         const NamedMask* mask = nullptr,
                                                         const Deadline& deadline = {}) {
    std::vector<LayerRepairOutcome> outcomes;
    for (std::size_t layer = 1; layer <= net.num_layers(); ++layer) {
        LayerRepairOutcome out;
        out.layer = layer;
        try {
            const auto layer_mask =
                mask != nullptr ? resolve_mask(*mask, decouple(net), layer) : std::nullopt;
            out.result = polytope_repair(net, layer, spec, norm, layer_mask, {}, deadline);
        } catch (const std::exception& e) {
            out.error = e.what();
        }
        outcomes.push_back(std::move(out));
    }
    return outcomes;
}

} // namespace netpatch
