#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "netpatch/ddnn.hpp"
#include "netpatch/errors.hpp"
#include "netpatch/linalg.hpp"
#include "netpatch/network.hpp"

namespace netpatch {

/// Exact first-order model of a DDNN output as a function of one value
/// layer's parameters at a fixed input: out(delta) = base + matrix * delta.
/// Because the output is an affine function of a single value layer's
/// parameters, the model has no approximation error beyond float rounding.
///
/// Columns are ordered weights row-major then biases, i.e. delta index
/// r*in_dim + c is weight (r, c) and out_dim*in_dim + r is bias r. This
/// order is fixed so LP variable indices and repair masks are stable.
struct ParamJacobian {
    Vec base;   // network output at delta = 0
    Mat matrix; // out_dim x (target-layer out*(in+1))

    std::size_t num_params() const { return matrix.cols; }
};

/// Number of repairable parameters of layer `layer` (1-based) of a DDNN's
/// value channel: out_dim * (in_dim + 1).
inline std::size_t layer_param_count(const Ddnn& ddnn, std::size_t layer) {
    if (layer < 1 || layer > ddnn.num_layers())
        throw InputError("layer_param_count: layer index out of range");
    const Layer& l = ddnn.val_layers()[layer - 1];
    return l.out_dim() * (l.in_dim() + 1);
}

/// Jacobian of the DDNN output with respect to value layer `layer`'s
/// parameters at input x. When `pattern_override` is given, the Relu
/// linearizations come from the pattern instead of the activation channel's
/// signs at x (the boundary rule for key points: never silently infer a
/// pattern at a boundary point).
///
/// Assembled from one forward pass and one backward composition of the
/// frozen downstream linear maps; no numeric differentiation.
inline ParamJacobian param_jacobian(const Ddnn& ddnn, std::size_t layer, const Vec& x,
                                    const ActivationPattern* pattern_override = nullptr) {
    if (layer < 1 || layer > ddnn.num_layers())
        throw InputError("param_jacobian: layer index out of range");
    if (x.size() != ddnn.input_dim())
        throw InputError("param_jacobian: input dimension mismatch");

    const std::vector<Linearization> lins =
        detail::channel_linearizations(ddnn, x, pattern_override);
    std::vector<Vec> value_inputs;
    ParamJacobian jac;
    jac.base = detail::eval_value_channel(ddnn, x, lins, &value_inputs);

    const std::size_t li = layer - 1;
    const Layer& target = ddnn.val_layers()[li];
    const std::size_t in = target.in_dim();
    const std::size_t out = target.out_dim();
    const std::size_t m = ddnn.output_dim();
    const Vec& v = value_inputs[li];       // value-channel input to the target layer
    const Vec& s = lins[li].slope;         // frozen linearization slope at the target layer

    // Affine map from the target layer's post-linearization output to the
    // network output under the frozen downstream linearizations.
    Mat downstream = Mat::identity(m);
    for (std::size_t k = ddnn.num_layers(); k > layer; --k) {
        const Layer& val = ddnn.val_layers()[k - 1];
        Mat scaled = val.weights();
        for (std::size_t r = 0; r < scaled.rows; ++r) {
            const double sr = lins[k - 1].slope[r];
            for (std::size_t c = 0; c < scaled.cols; ++c) scaled(r, c) *= sr;
        }
        downstream = matmul(downstream, scaled);
    }

    jac.matrix = Mat(m, out * (in + 1));
    for (std::size_t r = 0; r < out; ++r) {
        for (std::size_t c = 0; c < in; ++c) {
            const std::size_t col = r * in + c;
            const double factor = s[r] * v[c];
            for (std::size_t row = 0; row < m; ++row)
                jac.matrix(row, col) = downstream(row, r) * factor;
        }
        const std::size_t col = out * in + r;
        for (std::size_t row = 0; row < m; ++row)
            jac.matrix(row, col) = downstream(row, r) * s[r];
    }
    return jac;
}

/// Applies a parameter delta (in ParamJacobian column order) to value layer
/// `layer` and returns the edited network.
inline Ddnn apply_value_delta(const Ddnn& ddnn, std::size_t layer, const Vec& delta) {
    if (layer < 1 || layer > ddnn.num_layers())
        throw InputError("apply_value_delta: layer index out of range");
    const Layer& target = ddnn.val_layers()[layer - 1];
    const std::size_t in = target.in_dim();
    const std::size_t out = target.out_dim();
    if (delta.size() != out * (in + 1))
        throw InputError("apply_value_delta: delta length does not match layer parameters");
    Mat weights = target.weights();
    Vec bias = target.bias();
    for (std::size_t r = 0; r < out; ++r) {
        for (std::size_t c = 0; c < in; ++c) weights(r, c) += delta[r * in + c];
        bias[r] += delta[out * in + r];
    }
    return set_value_layer(ddnn, layer, std::move(weights), std::move(bias));
}

/// Validation harness: max over parameters and outputs of the difference
/// between a central finite difference and the assembled Jacobian entry.
inline double finite_difference_check(const Ddnn& ddnn, std::size_t layer, const Vec& x,
                                      double h) {
    if (h <= 0.0) throw InputError("finite_difference_check: h must be positive");
    const ParamJacobian jac = param_jacobian(ddnn, layer, x);
    const std::size_t p = jac.num_params();
    double worst = 0.0;
    for (std::size_t k = 0; k < p; ++k) {
        Vec delta(p, 0.0);
        delta[k] = h;
        const Vec plus = eval_ddnn(apply_value_delta(ddnn, layer, delta), x);
        delta[k] = -h;
        const Vec minus = eval_ddnn(apply_value_delta(ddnn, layer, delta), x);
        for (std::size_t row = 0; row < plus.size(); ++row) {
            const double fd = (plus[row] - minus[row]) / (2.0 * h);
            worst = std::max(worst, std::abs(fd - jac.matrix(row, k)));
        }
    }
    return worst;
}

} // namespace netpatch
