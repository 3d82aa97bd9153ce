#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "netpatch/errors.hpp"
#include "netpatch/linalg.hpp"
#include "netpatch/network.hpp"

namespace netpatch {

/// Per-coordinate affine map slope*z + intercept. All supported activations
/// act coordinate-wise, so a diagonal slope vector is enough.
struct Linearization {
    Vec slope;
    Vec intercept;

    Vec apply(const Vec& z) const {
        if (z.size() != slope.size()) throw InputError("Linearization: dimension mismatch");
        Vec out(z.size());
        for (std::size_t i = 0; i < z.size(); ++i) out[i] = slope[i] * z[i] + intercept[i];
        return out;
    }
};

/// First-order linearization of the activation around z, exact at z itself.
/// Relu at exactly zero linearizes to the zero function.
inline Linearization linearize(ActivationKind kind, const Vec& z) {
    if (!all_finite(z)) throw InputError("linearize: center must be finite");
    Linearization lin;
    lin.slope.resize(z.size());
    lin.intercept.assign(z.size(), 0.0);
    switch (kind) {
        case ActivationKind::Relu:
            for (std::size_t i = 0; i < z.size(); ++i) lin.slope[i] = z[i] > 0.0 ? 1.0 : 0.0;
            break;
        case ActivationKind::Tanh:
            for (std::size_t i = 0; i < z.size(); ++i) {
                const double t = std::tanh(z[i]);
                lin.slope[i] = 1.0 - t * t;
                lin.intercept[i] = t - lin.slope[i] * z[i];
            }
            break;
        case ActivationKind::Identity:
            for (std::size_t i = 0; i < z.size(); ++i) lin.slope[i] = 1.0;
            break;
    }
    return lin;
}

/// Decoupled network: the activation channel fixes the per-layer
/// linearizations, the value channel computes the output through them.
/// Channels have identical shapes and activation kinds layer-by-layer;
/// weights and biases may differ.
class Ddnn {
public:
    Ddnn(std::vector<Layer> act_layers, std::vector<Layer> val_layers)
        : act_(std::move(act_layers)), val_(std::move(val_layers)) {
        if (act_.empty()) throw InputError("Ddnn: at least one layer required");
        if (act_.size() != val_.size())
            throw InputError("Ddnn: channel layer counts differ");
        for (std::size_t i = 0; i < act_.size(); ++i) {
            if (act_[i].in_dim() != val_[i].in_dim() || act_[i].out_dim() != val_[i].out_dim())
                throw InputError("Ddnn: channel shapes differ at layer " + std::to_string(i + 1));
            if (act_[i].activation() != val_[i].activation())
                throw InputError("Ddnn: activation kinds differ at layer " + std::to_string(i + 1));
            if (i > 0 && act_[i].in_dim() != act_[i - 1].out_dim())
                throw InputError("Ddnn: layer " + std::to_string(i + 1) +
                                 " input dim does not match layer " + std::to_string(i) +
                                 " output dim");
        }
    }

    const std::vector<Layer>& act_layers() const { return act_; }
    const std::vector<Layer>& val_layers() const { return val_; }
    std::size_t num_layers() const { return act_.size(); }
    std::size_t input_dim() const { return act_.front().in_dim(); }
    std::size_t output_dim() const { return act_.back().out_dim(); }

    /// The activation channel viewed as a plain network. Region enumeration
    /// consults only this channel.
    Dnn activation_network() const { return Dnn(act_); }

    bool operator==(const Ddnn& other) const = default;

private:
    std::vector<Layer> act_;
    std::vector<Layer> val_;
};

inline bool is_pwl(const Ddnn& ddnn) {
    for (const Layer& l : ddnn.act_layers())
        if (!is_pwl(l.activation())) return false;
    return true;
}

/// Trivial exact conversion: both channels carry copies of the network's
/// layers, so the decoupled network computes the same function.
inline Ddnn decouple(const Dnn& dnn) { return Ddnn(dnn.layers(), dnn.layers()); }

/// Returns a copy with only value layer `layer` (1-based) replaced. The
/// activation channel is untouched, so linear regions are preserved.
inline Ddnn set_value_layer(const Ddnn& ddnn, std::size_t layer, Mat weights, Vec bias) {
    if (layer < 1 || layer > ddnn.num_layers())
        throw InputError("set_value_layer: layer index out of range");
    const Layer& old = ddnn.val_layers()[layer - 1];
    if (weights.rows != old.out_dim() || weights.cols != old.in_dim() ||
        bias.size() != old.out_dim())
        throw InputError("set_value_layer: shape mismatch for layer " + std::to_string(layer));
    std::vector<Layer> val = ddnn.val_layers();
    val[layer - 1] = Layer(std::move(weights), std::move(bias), old.activation());
    return Ddnn(ddnn.act_layers(), std::move(val));
}

namespace detail {

/// Linearizations per layer, either from the activation channel at x or
/// overridden by an activation pattern (Appendix-style boundary rule: a key
/// point is evaluated as if its owning region extended to the boundary).
inline std::vector<Linearization> channel_linearizations(const Ddnn& ddnn, const Vec& x,
                                                         const ActivationPattern* override_pattern) {
    if (override_pattern != nullptr) {
        if (!is_pwl(ddnn))
            throw UnsupportedActivationError(
                "pattern override requires a PWL activation channel");
        if (!override_pattern->shape_matches(ddnn.act_layers()))
            throw InputError("pattern override shape does not match network");
    }
    std::vector<Linearization> lins;
    lins.reserve(ddnn.num_layers());
    Vec va = x;
    for (std::size_t li = 0; li < ddnn.num_layers(); ++li) {
        const Layer& act = ddnn.act_layers()[li];
        Vec za = add(matvec(act.weights(), va), act.bias());
        Linearization lin;
        if (override_pattern != nullptr && act.activation() == ActivationKind::Relu) {
            lin.slope.resize(za.size());
            lin.intercept.assign(za.size(), 0.0);
            for (std::size_t i = 0; i < za.size(); ++i)
                lin.slope[i] = override_pattern->tags[li][i] ? 1.0 : 0.0;
        } else {
            lin = linearize(act.activation(), za);
        }
        lins.push_back(std::move(lin));
        va = apply_activation(act.activation(), za);
    }
    return lins;
}

inline Vec eval_value_channel(const Ddnn& ddnn, const Vec& x,
                              const std::vector<Linearization>& lins,
                              std::vector<Vec>* value_inputs = nullptr) {
    Vec vv = x;
    for (std::size_t li = 0; li < ddnn.num_layers(); ++li) {
        if (value_inputs != nullptr) value_inputs->push_back(vv);
        const Layer& val = ddnn.val_layers()[li];
        vv = lins[li].apply(add(matvec(val.weights(), vv), val.bias()));
    }
    return vv;
}

} // namespace detail

/// DDNN semantics: the activation channel runs as a plain network and fixes
/// a linearization of each activation; the value channel runs through those
/// frozen linearizations and produces the output.
inline Vec eval_ddnn(const Ddnn& ddnn, const Vec& x) {
    if (x.size() != ddnn.input_dim()) throw InputError("eval_ddnn: input dimension mismatch");
    if (!all_finite(x)) throw InputError("eval_ddnn: input must be finite");
    return detail::eval_value_channel(ddnn, x, detail::channel_linearizations(ddnn, x, nullptr));
}

/// eval_ddnn with the Relu linearizations dictated by `pattern` instead of
/// the activation channel's signs at x.
inline Vec eval_ddnn_with_pattern(const Ddnn& ddnn, const Vec& x, const ActivationPattern& pattern) {
    if (x.size() != ddnn.input_dim()) throw InputError("eval_ddnn: input dimension mismatch");
    return detail::eval_value_channel(ddnn, x, detail::channel_linearizations(ddnn, x, &pattern));
}

/// Either network form; repair and metrics accept both.
using AnyNet = std::variant<Dnn, Ddnn>;

inline Vec eval_net(const AnyNet& net, const Vec& x) {
    return std::visit([&](const auto& n) {
        if constexpr (std::is_same_v<std::decay_t<decltype(n)>, Dnn>) return eval(n, x);
        else return eval_ddnn(n, x);
    }, net);
}

inline std::size_t net_input_dim(const AnyNet& net) {
    return std::visit([](const auto& n) { return n.input_dim(); }, net);
}

inline std::size_t net_output_dim(const AnyNet& net) {
    return std::visit([](const auto& n) { return n.output_dim(); }, net);
}

} // namespace netpatch
