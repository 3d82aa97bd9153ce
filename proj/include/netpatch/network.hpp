#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "netpatch/errors.hpp"
#include "netpatch/linalg.hpp"

namespace netpatch {

enum class ActivationKind { Relu, Tanh, Identity };

/// Relu and Identity are piecewise-linear; Tanh is not.
inline bool is_pwl(ActivationKind kind) { return kind != ActivationKind::Tanh; }

inline std::string to_string(ActivationKind kind) {
    switch (kind) {
        case ActivationKind::Relu: return "relu";
        case ActivationKind::Tanh: return "tanh";
        case ActivationKind::Identity: return "identity";
    }
    return "?";
}

/// One dense layer: y = activation(W x + b). Immutable after construction.
class Layer {
public:
    Layer(Mat weights, Vec bias, ActivationKind activation)
        : weights_(std::move(weights)), bias_(std::move(bias)), activation_(activation) {
        if (weights_.rows == 0 || weights_.cols == 0)
            throw InputError("Layer: out_dim and in_dim must be >= 1");
        if (bias_.size() != weights_.rows)
            throw InputError("Layer: bias length must equal weight row count");
        if (!all_finite(weights_) || !all_finite(bias_))
            throw InputError("Layer: weights and bias must be finite");
    }

    const Mat& weights() const { return weights_; }
    const Vec& bias() const { return bias_; }
    ActivationKind activation() const { return activation_; }
    std::size_t in_dim() const { return weights_.cols; }
    std::size_t out_dim() const { return weights_.rows; }

    bool operator==(const Layer& other) const = default;

private:
    Mat weights_;
    Vec bias_;
    ActivationKind activation_;
};

/// Feed-forward network: an ordered list of dense layers with matching
/// interior dimensions. Layer indices throughout the library are 1-based,
/// matching the usual layer numbering of network diagrams.
class Dnn {
public:
    explicit Dnn(std::vector<Layer> layers) : layers_(std::move(layers)) {
        if (layers_.empty()) throw InputError("Dnn: at least one layer required");
        for (std::size_t i = 1; i < layers_.size(); ++i) {
            if (layers_[i].in_dim() != layers_[i - 1].out_dim())
                throw InputError("Dnn: layer " + std::to_string(i + 1) +
                                 " input dim does not match layer " + std::to_string(i) +
                                 " output dim");
        }
    }

    const std::vector<Layer>& layers() const { return layers_; }
    std::size_t num_layers() const { return layers_.size(); }
    std::size_t input_dim() const { return layers_.front().in_dim(); }
    std::size_t output_dim() const { return layers_.back().out_dim(); }

    bool operator==(const Dnn& other) const = default;

private:
    std::vector<Layer> layers_;
};

inline bool is_pwl(const Dnn& dnn) {
    for (const Layer& l : dnn.layers())
        if (!is_pwl(l.activation())) return false;
    return true;
}

/// Per-neuron linear-piece assignment for the Relu layers of a PWL network.
/// tags[i] is empty for Identity layers and has one entry per neuron for Relu
/// layers (true = NonNegative piece, false = Negative piece). Tanh layers are
/// not representable.
struct ActivationPattern {
    std::vector<std::vector<bool>> tags;

    bool operator==(const ActivationPattern& other) const = default;

    /// True when this pattern's shape matches the given layer list.
    template <typename LayerList>
    bool shape_matches(const LayerList& layers) const {
        if (tags.size() != layers.size()) return false;
        for (std::size_t i = 0; i < layers.size(); ++i) {
            const std::size_t want =
                layers[i].activation() == ActivationKind::Relu ? layers[i].out_dim() : 0;
            if (tags[i].size() != want) return false;
        }
        return true;
    }
};

/// Per-layer pre- and post-activation vectors from one evaluation.
struct EvalTrace {
    Vec input;
    std::vector<Vec> pre;  // W^(i) v^(i-1) + b^(i)
    std::vector<Vec> post; // v^(i)
};

namespace detail {

inline Vec apply_activation(ActivationKind kind, const Vec& z) {
    Vec out(z.size());
    switch (kind) {
        case ActivationKind::Relu:
            for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] >= 0.0 ? z[i] : 0.0;
            break;
        case ActivationKind::Tanh:
            for (std::size_t i = 0; i < z.size(); ++i) out[i] = std::tanh(z[i]);
            break;
        case ActivationKind::Identity:
            out = z;
            break;
    }
    return out;
}

} // namespace detail

/// Full forward pass keeping all intermediates.
inline EvalTrace eval_trace(const Dnn& dnn, const Vec& x) {
    if (x.size() != dnn.input_dim()) throw InputError("eval: input dimension mismatch");
    if (!all_finite(x)) throw InputError("eval: input must be finite");
    EvalTrace trace;
    trace.input = x;
    Vec v = x;
    for (const Layer& layer : dnn.layers()) {
        Vec z = add(matvec(layer.weights(), v), layer.bias());
        v = detail::apply_activation(layer.activation(), z);
        trace.pre.push_back(std::move(z));
        trace.post.push_back(v);
    }
    return trace;
}

inline Vec eval(const Dnn& dnn, const Vec& x) {
    if (x.size() != dnn.input_dim()) throw InputError("eval: input dimension mismatch");
    if (!all_finite(x)) throw InputError("eval: input must be finite");
    Vec v = x;
    for (const Layer& layer : dnn.layers())
        v = detail::apply_activation(layer.activation(), add(matvec(layer.weights(), v), layer.bias()));
    return v;
}

/// Activation pattern at x. A Relu neuron is tagged NonNegative iff its
/// pre-activation is >= 0; note the value-channel linearization at exactly
/// zero is nevertheless the zero function (see linearize in ddnn.hpp).
inline ActivationPattern activation_pattern(const Dnn& dnn, const Vec& x) {
    if (!is_pwl(dnn))
        throw UnsupportedActivationError("activation_pattern: network contains a non-PWL layer");
    if (x.size() != dnn.input_dim())
        throw InputError("activation_pattern: input dimension mismatch");
    ActivationPattern pattern;
    Vec v = x;
    for (const Layer& layer : dnn.layers()) {
        Vec z = add(matvec(layer.weights(), v), layer.bias());
        std::vector<bool> layer_tags;
        if (layer.activation() == ActivationKind::Relu) {
            layer_tags.resize(z.size());
            for (std::size_t i = 0; i < z.size(); ++i) layer_tags[i] = z[i] >= 0.0;
        }
        pattern.tags.push_back(std::move(layer_tags));
        v = detail::apply_activation(layer.activation(), z);
    }
    return pattern;
}

/// Evaluate with each Relu replaced by identity (NonNegative tag) or zero
/// (Negative tag), ignoring the actual pre-activation signs. With the true
/// pattern of x this performs exactly the float operations of eval.
inline Vec eval_with_pattern(const Dnn& dnn, const Vec& x, const ActivationPattern& pattern) {
    if (!is_pwl(dnn))
        throw UnsupportedActivationError("eval_with_pattern: network contains a non-PWL layer");
    if (x.size() != dnn.input_dim())
        throw InputError("eval_with_pattern: input dimension mismatch");
    if (!pattern.shape_matches(dnn.layers()))
        throw InputError("eval_with_pattern: pattern shape does not match network");
    Vec v = x;
    for (std::size_t li = 0; li < dnn.num_layers(); ++li) {
        const Layer& layer = dnn.layers()[li];
        Vec z = add(matvec(layer.weights(), v), layer.bias());
        if (layer.activation() == ActivationKind::Relu) {
            for (std::size_t i = 0; i < z.size(); ++i)
                if (!pattern.tags[li][i]) z[i] = 0.0;
        }
        v = std::move(z);
    }
    return v;
}

} // namespace netpatch
