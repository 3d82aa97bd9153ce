#pragma once

// Numeric tolerances used across the library. These are part of the observable
// contract (reports and infeasibility claims are stated relative to them), so
// they live in one place and are never configured per call site.

namespace netpatch::tol {

/// LP feasibility: a point is feasible when every row's slack is >= -kFeasibility.
inline constexpr double kFeasibility = 1e-7;

/// Simplex pivot threshold: reduced costs / pivot elements below this are
/// treated as zero.
inline constexpr double kPivot = 1e-9;

/// Simplex pivot cap before giving up with an iteration-limit error.
inline constexpr long kMaxPivots = 1'000'000;

/// A neuron zero crossing is inserted only if it lies inside the open piece
/// with this margin; pieces shorter than this are merged into a neighbor.
inline constexpr double kCrossingMargin = 1e-12;

/// Sub-polygons with parameter-space area below this are merged into the
/// neighboring piece instead of being split off.
inline constexpr double kMinPolygonArea = 1e-18;

/// Vertex sign classification tolerance for half-plane clipping.
inline constexpr double kVertexSide = 1e-10;

/// Maximum residual of polygon vertices from their fitted 2-D affine subspace.
inline constexpr double kCoplanarity = 1e-9;

/// Default slack when checking whether a network satisfies a specification.
inline constexpr double kDefaultSpecSlack = 1e-9;

/// Default margin for "classify as label l" constraints (LPs cannot express
/// strict inequalities).
inline constexpr double kDefaultClassifyMargin = 1e-6;

} // namespace netpatch::tol
