#pragma once

#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "netpatch/errors.hpp"
#include "netpatch/linalg.hpp"
#include "netpatch/tolerances.hpp"

namespace netpatch {

/// min c.x subject to a x <= b and the optional per-variable bounds.
/// Variables are free unless a bound is set.
struct LinearProgram {
    Mat a;  // n rows x m variables
    Vec b;  // n
    Vec c;  // m
    std::vector<std::optional<double>> lower; // per variable, empty = unbounded
    std::vector<std::optional<double>> upper;

    std::size_t num_vars() const { return c.size(); }
    std::size_t num_rows() const { return b.size(); }

    void validate() const {
        if (a.rows != b.size() || a.cols != c.size())
            throw InputError("LinearProgram: inconsistent dimensions");
        if (!lower.empty() && lower.size() != c.size())
            throw InputError("LinearProgram: lower bound count mismatch");
        if (!upper.empty() && upper.size() != c.size())
            throw InputError("LinearProgram: upper bound count mismatch");
        if (!all_finite(a) || !all_finite(b) || !all_finite(c))
            throw InputError("LinearProgram: entries must be finite");
    }

    std::optional<double> lower_of(std::size_t j) const {
        return lower.empty() ? std::nullopt : lower[j];
    }
    std::optional<double> upper_of(std::size_t j) const {
        return upper.empty() ? std::nullopt : upper[j];
    }
};

enum class NormObjective { L1, Linf };

inline std::string to_string(NormObjective norm) {
    return norm == NormObjective::L1 ? "l1" : "linf";
}

struct LpOutcome {
    enum class Status { Optimal, Infeasible, Unbounded };
    Status status = Status::Infeasible;
    Vec x;                  // only meaningful when Optimal
    double objective = 0.0; // only meaningful when Optimal

    bool optimal() const { return status == Status::Optimal; }
};

inline std::string to_string(LpOutcome::Status status) {
    switch (status) {
        case LpOutcome::Status::Optimal: return "optimal";
        case LpOutcome::Status::Infeasible: return "infeasible";
        case LpOutcome::Status::Unbounded: return "unbounded";
    }
    return "?";
}

/// Worst constraint violation of x against the LP's rows and bounds
/// (positive = violated by that amount).
inline double max_violation(const LinearProgram& lp, const Vec& x) {
    double worst = 0.0;
    for (std::size_t r = 0; r < lp.num_rows(); ++r) {
        double lhs = 0.0;
        for (std::size_t j = 0; j < lp.num_vars(); ++j) lhs += lp.a(r, j) * x[j];
        worst = std::max(worst, lhs - lp.b[r]);
    }
    for (std::size_t j = 0; j < lp.num_vars(); ++j) {
        if (auto lo = lp.lower_of(j)) worst = std::max(worst, *lo - x[j]);
        if (auto up = lp.upper_of(j)) worst = std::max(worst, x[j] - *up);
    }
    return worst;
}

/// Builds the min-norm LP over the parameter delta: the specification rows
/// are included verbatim, masked-out deltas are pinned to zero via paired
/// inequalities, and auxiliary variables encode the chosen norm (one t per
/// free delta for L1, a single t for Linf). Delta variables come first, so
/// the delta sub-vector of any solution is x[0..num_deltas).
inline LinearProgram encode_min_norm(const std::vector<std::pair<Vec, double>>& rows,
                                     std::size_t num_deltas, NormObjective norm,
                                     const std::vector<bool>* mask = nullptr) {
    if (mask != nullptr && mask->size() != num_deltas)
        throw InputError("encode_min_norm: mask length must equal delta count");
    for (const auto& [coeff, rhs] : rows)
        if (coeff.size() != num_deltas)
            throw InputError("encode_min_norm: row coefficient length mismatch");

    std::vector<std::size_t> free_deltas;
    for (std::size_t k = 0; k < num_deltas; ++k)
        if (mask == nullptr || (*mask)[k]) free_deltas.push_back(k);

    const std::size_t num_aux = norm == NormObjective::L1 ? free_deltas.size() : 1;
    const std::size_t num_vars = num_deltas + num_aux;
    const std::size_t num_pinned = num_deltas - free_deltas.size();
    const std::size_t num_rows = rows.size() + 2 * free_deltas.size() + 2 * num_pinned;

    LinearProgram lp;
    lp.a = Mat(num_rows, num_vars);
    lp.b.assign(num_rows, 0.0);
    lp.c.assign(num_vars, 0.0);
    lp.lower.assign(num_vars, std::nullopt);
    lp.upper.assign(num_vars, std::nullopt);

    std::size_t row = 0;
    for (const auto& [coeff, rhs] : rows) {
        for (std::size_t k = 0; k < num_deltas; ++k) lp.a(row, k) = coeff[k];
        lp.b[row] = rhs;
        ++row;
    }
    for (std::size_t i = 0; i < free_deltas.size(); ++i) {
        const std::size_t k = free_deltas[i];
        const std::size_t aux = num_deltas + (norm == NormObjective::L1 ? i : 0);
        lp.a(row, k) = 1.0;
        lp.a(row, aux) = -1.0; // delta_k - t <= 0
        ++row;
        lp.a(row, k) = -1.0;
        lp.a(row, aux) = -1.0; // -delta_k - t <= 0
        ++row;
    }
    for (std::size_t k = 0; k < num_deltas; ++k) {
        if (mask != nullptr && !(*mask)[k]) {
            lp.a(row, k) = 1.0; // delta_k <= 0
            ++row;
            lp.a(row, k) = -1.0; // -delta_k <= 0
            ++row;
        }
    }
    for (std::size_t i = 0; i < num_aux; ++i) {
        lp.c[num_deltas + i] = 1.0;
        lp.lower[num_deltas + i] = 0.0;
    }
    return lp;
}

namespace detail {

// Dense tableau for the two-phase primal simplex. Bland's rule throughout;
// robustness over speed at this scale.
struct Tableau {
    Mat t;                  // rows+1 x cols+1; last row objective, last col rhs
    std::vector<std::size_t> basis;
    std::size_t rows = 0;
    std::size_t cols = 0;

    void pivot(std::size_t pr, std::size_t pc) {
        const double inv = 1.0 / t(pr, pc);
        for (std::size_t c = 0; c <= cols; ++c) t(pr, c) *= inv;
        t(pr, pc) = 1.0;
        for (std::size_t r = 0; r <= rows; ++r) {
            if (r == pr) continue;
            const double factor = t(r, pc);
            if (factor == 0.0) continue;
            for (std::size_t c = 0; c <= cols; ++c) t(r, c) -= factor * t(pr, c);
            t(r, pc) = 0.0;
        }
        basis[pr] = pc;
    }

    // Returns true on optimal, false on unbounded.
    bool iterate(long& pivots_left, const std::function<void()>& tick) {
        for (;;) {
            if (tick) tick();
            std::size_t enter = cols;
            for (std::size_t c = 0; c < cols; ++c) {
                if (t(rows, c) < -tol::kPivot) {
                    enter = c;
                    break;
                }
            }
            if (enter == cols) return true;
            std::size_t leave = rows;
            double best_ratio = std::numeric_limits<double>::infinity();
            for (std::size_t r = 0; r < rows; ++r) {
                if (t(r, enter) > tol::kPivot) {
                    const double ratio = t(r, cols) / t(r, enter);
                    if (ratio < best_ratio - tol::kPivot ||
                        (ratio < best_ratio + tol::kPivot &&
                         (leave == rows || basis[r] < basis[leave]))) {
                        best_ratio = ratio;
                        leave = r;
                    }
                }
            }
            if (leave == rows) return false;
            pivot(leave, enter);
            if (--pivots_left <= 0)
                throw IterationLimitError("simplex: pivot cap exceeded");
        }
    }
};

// Standard-form problem: min cost.y s.t. eq_a y = eq_b, y >= 0, plus the
// recipe for mapping y back to the original variables.
struct StandardForm {
    Mat eq_a;
    Vec eq_b;
    Vec cost;
    // x_j = shift[j] + sign[j] * y[pos[j]] (+ y[neg[j]] handling for free vars)
    struct VarMap {
        std::size_t pos = 0;
        std::size_t neg = 0; // used only when split
        bool split = false;
        double shift = 0.0;
        double sign = 1.0;
    };
    std::vector<VarMap> var_map;
    std::size_t num_std_vars = 0;
};

inline StandardForm to_standard_form(const LinearProgram& lp) {
    StandardForm sf;
    const std::size_t m = lp.num_vars();
    sf.var_map.resize(m);

    std::size_t next = 0;
    std::vector<std::pair<std::size_t, double>> upper_rows; // (std var, bound) extra rows
    for (std::size_t j = 0; j < m; ++j) {
        const auto lo = lp.lower_of(j);
        const auto up = lp.upper_of(j);
        auto& vm = sf.var_map[j];
        if (lo.has_value()) {
            vm.pos = next++;
            vm.shift = *lo;
            vm.sign = 1.0;
            if (up.has_value()) {
                if (*up < *lo) throw InputError("LinearProgram: upper bound below lower bound");
                upper_rows.push_back({vm.pos, *up - *lo});
            }
        } else if (up.has_value()) {
            vm.pos = next++;
            vm.shift = *up;
            vm.sign = -1.0;
        } else {
            vm.split = true;
            vm.pos = next++;
            vm.neg = next++;
        }
    }

    const std::size_t rows = lp.num_rows() + upper_rows.size();
    const std::size_t slacks = rows;
    sf.num_std_vars = next + slacks;
    sf.eq_a = Mat(rows, sf.num_std_vars);
    sf.eq_b.assign(rows, 0.0);
    sf.cost.assign(sf.num_std_vars, 0.0);

    for (std::size_t r = 0; r < lp.num_rows(); ++r) {
        double rhs = lp.b[r];
        for (std::size_t j = 0; j < m; ++j) {
            const double coeff = lp.a(r, j);
            if (coeff == 0.0) continue;
            const auto& vm = sf.var_map[j];
            if (vm.split) {
                sf.eq_a(r, vm.pos) += coeff;
                sf.eq_a(r, vm.neg) -= coeff;
            } else {
                sf.eq_a(r, vm.pos) += coeff * vm.sign;
                rhs -= coeff * vm.shift;
            }
        }
        sf.eq_b[r] = rhs;
        sf.eq_a(r, next + r) = 1.0; // slack
    }
    for (std::size_t k = 0; k < upper_rows.size(); ++k) {
        const std::size_t r = lp.num_rows() + k;
        sf.eq_a(r, upper_rows[k].first) = 1.0;
        sf.eq_b[r] = upper_rows[k].second;
        sf.eq_a(r, next + r) = 1.0;
    }

    for (std::size_t j = 0; j < m; ++j) {
        const double coeff = lp.c[j];
        if (coeff == 0.0) continue;
        const auto& vm = sf.var_map[j];
        if (vm.split) {
            sf.cost[vm.pos] += coeff;
            sf.cost[vm.neg] -= coeff;
        } else {
            sf.cost[vm.pos] += coeff * vm.sign;
        }
    }
    return sf;
}

} // namespace detail

/// Two-phase primal simplex with Bland's rule. Deterministic: identical LPs
/// produce identical outcomes. Throws IterationLimitError past the pivot cap
/// and TimeoutError when the optional tick callback does.
inline LpOutcome solve(const LinearProgram& lp, const std::function<void()>& tick = {}) {
    lp.validate();
    detail::StandardForm sf = detail::to_standard_form(lp);
    const std::size_t rows = sf.eq_b.size();
    const std::size_t n = sf.num_std_vars;
    long pivots_left = tol::kMaxPivots;

    // Phase 1: slacks of nonnegative-rhs rows start basic; negated rows get
    // artificial variables.
    constexpr std::size_t kNone = static_cast<std::size_t>(-1);
    std::vector<std::size_t> artificial_of_row(rows, kNone);
    std::size_t num_artificial = 0;
    for (std::size_t r = 0; r < rows; ++r) {
        if (sf.eq_b[r] < 0.0) {
            for (std::size_t c = 0; c < n; ++c) sf.eq_a(r, c) = -sf.eq_a(r, c);
            sf.eq_b[r] = -sf.eq_b[r];
            artificial_of_row[r] = n + num_artificial++;
        }
    }

    detail::Tableau tab;
    tab.rows = rows;
    tab.cols = n + num_artificial;
    tab.t = Mat(rows + 1, tab.cols + 1);
    tab.basis.assign(rows, 0);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < n; ++c) tab.t(r, c) = sf.eq_a(r, c);
        tab.t(r, tab.cols) = sf.eq_b[r];
        if (artificial_of_row[r] != kNone) {
            tab.t(r, artificial_of_row[r]) = 1.0;
            tab.basis[r] = artificial_of_row[r];
        } else {
            // This row's own slack (column n - rows + r) has coefficient +1
            // and the rhs is nonnegative, so it can start basic.
            tab.basis[r] = n - rows + r;
        }
    }

    if (num_artificial > 0) {
        for (std::size_t r = 0; r < rows; ++r) {
            if (tab.basis[r] < n) continue;
            for (std::size_t c = 0; c <= tab.cols; ++c) tab.t(rows, c) -= tab.t(r, c);
        }
        for (std::size_t r = 0; r < rows; ++r)
            if (tab.basis[r] >= n) tab.t(rows, tab.basis[r]) = 0.0;
        if (!tab.iterate(pivots_left, tick))
            throw IterationLimitError("simplex: phase 1 unbounded (internal error)");
        if (-tab.t(rows, tab.cols) > tol::kFeasibility) return {LpOutcome::Status::Infeasible, {}, 0.0};

        // Drive remaining artificials out of the basis; rows that cannot
        // pivot are redundant and dropped.
        std::vector<bool> drop_row(rows, false);
        for (std::size_t r = 0; r < rows; ++r) {
            if (tab.basis[r] < n) continue;
            std::size_t enter = n;
            for (std::size_t c = 0; c < n; ++c) {
                if (std::abs(tab.t(r, c)) > tol::kPivot) {
                    enter = c;
                    break;
                }
            }
            if (enter < n) tab.pivot(r, enter);
            else drop_row[r] = true;
        }

        detail::Tableau clean;
        clean.rows = 0;
        clean.cols = n;
        std::vector<std::size_t> kept;
        for (std::size_t r = 0; r < rows; ++r)
            if (!drop_row[r]) kept.push_back(r);
        clean.rows = kept.size();
        clean.t = Mat(clean.rows + 1, n + 1);
        clean.basis.resize(clean.rows);
        for (std::size_t i = 0; i < kept.size(); ++i) {
            for (std::size_t c = 0; c < n; ++c) clean.t(i, c) = tab.t(kept[i], c);
            clean.t(i, n) = tab.t(kept[i], tab.cols);
            clean.basis[i] = tab.basis[kept[i]];
        }
        tab = std::move(clean);
    }

    // Phase 2: install the real objective and zero it on the basic columns.
    for (std::size_t c = 0; c < n; ++c) tab.t(tab.rows, c) = sf.cost[c];
    tab.t(tab.rows, n) = 0.0;
    for (std::size_t r = 0; r < tab.rows; ++r) {
        const double coeff = tab.t(tab.rows, tab.basis[r]);
        if (coeff == 0.0) continue;
        for (std::size_t c = 0; c <= n; ++c) tab.t(tab.rows, c) -= coeff * tab.t(r, c);
    }
    if (!tab.iterate(pivots_left, tick)) return {LpOutcome::Status::Unbounded, {}, 0.0};

    Vec std_x(n, 0.0);
    for (std::size_t r = 0; r < tab.rows; ++r)
        if (tab.basis[r] < n) std_x[tab.basis[r]] = tab.t(r, n);

    LpOutcome outcome;
    outcome.status = LpOutcome::Status::Optimal;
    outcome.x.resize(lp.num_vars());
    for (std::size_t j = 0; j < lp.num_vars(); ++j) {
        const auto& vm = sf.var_map[j];
        outcome.x[j] = vm.split ? std_x[vm.pos] - std_x[vm.neg]
                                : vm.shift + vm.sign * std_x[vm.pos];
    }
    outcome.objective = dot(lp.c, outcome.x);
    return outcome;
}

// ---------------------------------------------------------------------------
// External solver contract

using LpSolveFn = std::function<LpOutcome(const LinearProgram&)>;

namespace detail {
inline std::map<std::string, LpSolveFn>& solver_registry() {
    static std::map<std::string, LpSolveFn> registry;
    return registry;
}
inline std::mutex& solver_registry_mutex() {
    static std::mutex m;
    return m;
}
} // namespace detail

inline void register_external_solver(const std::string& name, LpSolveFn fn) {
    std::lock_guard<std::mutex> lock(detail::solver_registry_mutex());
    detail::solver_registry()[name] = std::move(fn);
}

/// Runs a registered external solver under the builtin solver's contract;
/// an Optimal answer violating the feasibility tolerance is a protocol error.
inline LpOutcome solve_external(const LinearProgram& lp, const std::string& solver) {
    LpSolveFn fn;
    {
        std::lock_guard<std::mutex> lock(detail::solver_registry_mutex());
        auto it = detail::solver_registry().find(solver);
        if (it == detail::solver_registry().end())
            throw SolverUnavailableError("no external solver registered as '" + solver + "'");
        fn = it->second;
    }
    lp.validate();
    LpOutcome outcome = fn(lp);
    if (outcome.optimal()) {
        if (outcome.x.size() != lp.num_vars())
            throw SolverProtocolError("external solver returned wrong variable count");
        if (max_violation(lp, outcome.x) > tol::kFeasibility)
            throw SolverProtocolError("external solver returned an infeasible optimum");
    }
    return outcome;
}

// ---------------------------------------------------------------------------
// LP dump format (external solvers and debugging)

namespace detail {
inline std::string format_g17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}
} // namespace detail

/// Plain-text dump: first line "m n" (variables, constraints), then the m
/// objective coefficients, then one "a_1 ... a_m <= b" line per constraint.
/// Variable bounds are folded into extra constraint rows so the format stays
/// self-contained. 17 significant digits, so values round-trip exactly.
inline std::string dump_lp(const LinearProgram& lp) {
    lp.validate();
    const std::size_t m = lp.num_vars();
    std::vector<std::pair<Vec, double>> rows;
    for (std::size_t r = 0; r < lp.num_rows(); ++r) {
        Vec coeff(m);
        for (std::size_t j = 0; j < m; ++j) coeff[j] = lp.a(r, j);
        rows.push_back({std::move(coeff), lp.b[r]});
    }
    for (std::size_t j = 0; j < m; ++j) {
        if (auto up = lp.upper_of(j)) {
            Vec coeff(m, 0.0);
            coeff[j] = 1.0;
            rows.push_back({std::move(coeff), *up});
        }
        if (auto lo = lp.lower_of(j)) {
            Vec coeff(m, 0.0);
            coeff[j] = -1.0;
            rows.push_back({std::move(coeff), -*lo});
        }
    }

    std::string out = std::to_string(m) + " " + std::to_string(rows.size()) + "\n";
    for (std::size_t j = 0; j < m; ++j) {
        if (j > 0) out += " ";
        out += detail::format_g17(lp.c[j]);
    }
    out += "\n";
    for (const auto& [coeff, rhs] : rows) {
        for (std::size_t j = 0; j < m; ++j) {
            if (j > 0) out += " ";
            out += detail::format_g17(coeff[j]);
        }
        out += " <= " + detail::format_g17(rhs) + "\n";
    }
    return out;
}

} // namespace netpatch
