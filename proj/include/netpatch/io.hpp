#pragma once

#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "netpatch/ddnn.hpp"
#include "netpatch/errors.hpp"
#include "netpatch/metrics.hpp"
#include "netpatch/network.hpp"
#include "netpatch/regions.hpp"
#include "netpatch/repair.hpp"

namespace netpatch {

namespace detail {

using nlohmann::json;

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write '" + path + "'");
    out << text;
}

inline json parse_json(const std::string& text, const std::string& context) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(context + ": " + e.what());
    }
}

/// Unknown fields are rejected; missing required fields are reported by name.
inline void check_keys(const json& j, const std::string& context,
                       const std::vector<std::string>& allowed,
                       const std::vector<std::string>& required) {
    if (!j.is_object()) throw ParseError(context + ": expected an object");
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const std::string& a : allowed) ok = ok || key == a;
        if (!ok) throw ParseError(context + ": unknown field '" + key + "'");
    }
    for (const std::string& r : required)
        if (!j.contains(r)) throw ParseError(context + ": missing field '" + r + "'");
}

inline double get_number(const json& j, const std::string& context) {
    if (!j.is_number()) throw ParseError(context + ": expected a number");
    return j.get<double>();
}

inline Vec get_vector(const json& j, const std::string& context) {
    if (!j.is_array()) throw ParseError(context + ": expected an array of numbers");
    Vec out;
    out.reserve(j.size());
    for (std::size_t i = 0; i < j.size(); ++i)
        out.push_back(get_number(j[i], context + "[" + std::to_string(i) + "]"));
    return out;
}

inline Mat get_matrix(const json& j, const std::string& context) {
    if (!j.is_array() || j.empty())
        throw ParseError(context + ": expected a non-empty 2-D array");
    std::vector<Vec> rows;
    for (std::size_t r = 0; r < j.size(); ++r) {
        rows.push_back(get_vector(j[r], context + "[" + std::to_string(r) + "]"));
        if (rows.back().size() != rows.front().size())
            throw ParseError(context + ": ragged rows");
    }
    Mat m(rows.size(), rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows[r].size(); ++c) m(r, c) = rows[r][c];
    return m;
}

inline ActivationKind parse_activation(const json& j, const std::string& context) {
    if (!j.is_string()) throw ParseError(context + ": expected a string");
    const std::string s = j.get<std::string>();
    if (s == "relu") return ActivationKind::Relu;
    if (s == "tanh") return ActivationKind::Tanh;
    if (s == "identity") return ActivationKind::Identity;
    throw ParseError(context + ": unknown activation '" + s + "'");
}

inline Layer parse_layer(const json& j, const std::string& context) {
    check_keys(j, context, {"weights", "bias", "activation"}, {"weights", "bias", "activation"});
    try {
        return Layer(get_matrix(j["weights"], context + ".weights"),
                     get_vector(j["bias"], context + ".bias"),
                     parse_activation(j["activation"], context + ".activation"));
    } catch (const ParseError&) {
        throw;
    } catch (const InputError& e) {
        throw ParseError(context + ": " + e.what());
    }
}

inline std::vector<Layer> parse_layers(const json& j, const std::string& context) {
    if (!j.is_array() || j.empty())
        throw ParseError(context + ": expected a non-empty array of layers");
    std::vector<Layer> layers;
    for (std::size_t i = 0; i < j.size(); ++i)
        layers.push_back(parse_layer(j[i], context + "[" + std::to_string(i) + "]"));
    return layers;
}

inline void append_g17(std::string& out, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out += buf;
}

inline void append_vector(std::string& out, const Vec& v) {
    out += "[";
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i > 0) out += ", ";
        append_g17(out, v[i]);
    }
    out += "]";
}

inline void append_layer(std::string& out, const Layer& layer, const std::string& indent) {
    out += indent + "{\n";
    out += indent + "  \"weights\": [";
    for (std::size_t r = 0; r < layer.weights().rows; ++r) {
        if (r > 0) out += ", ";
        Vec row(layer.weights().cols);
        for (std::size_t c = 0; c < row.size(); ++c) row[c] = layer.weights()(r, c);
        append_vector(out, row);
    }
    out += "],\n";
    out += indent + "  \"bias\": ";
    append_vector(out, layer.bias());
    out += ",\n";
    out += indent + "  \"activation\": \"" + to_string(layer.activation()) + "\"\n";
    out += indent + "}";
}

inline void append_layers(std::string& out, const std::vector<Layer>& layers) {
    out += "[\n";
    for (std::size_t i = 0; i < layers.size(); ++i) {
        append_layer(out, layers[i], "    ");
        if (i + 1 < layers.size()) out += ",";
        out += "\n";
    }
    out += "  ]";
}

} // namespace detail

// ---------------------------------------------------------------------------
// Network files

/// Serializes a network with 17-significant-digit decimal floats, so that
/// parse(print(x)) reproduces x bit-exactly.
inline std::string network_to_text(const AnyNet& net) {
    std::string out = "{\n";
    if (std::holds_alternative<Dnn>(net)) {
        out += "  \"kind\": \"dnn\",\n  \"layers\": ";
        detail::append_layers(out, std::get<Dnn>(net).layers());
        out += "\n";
    } else {
        const Ddnn& ddnn = std::get<Ddnn>(net);
        out += "  \"kind\": \"ddnn\",\n  \"activation_layers\": ";
        detail::append_layers(out, ddnn.act_layers());
        out += ",\n  \"value_layers\": ";
        detail::append_layers(out, ddnn.val_layers());
        out += "\n";
    }
    out += "}\n";
    return out;
}

inline AnyNet network_from_text(const std::string& text, const std::string& context) {
    const detail::json j = detail::parse_json(text, context);
    detail::check_keys(j, context, {"kind", "layers", "activation_layers", "value_layers"},
                       {"kind"});
    if (!j["kind"].is_string()) throw ParseError(context + ".kind: expected a string");
    const std::string kind = j["kind"].get<std::string>();
    try {
        if (kind == "dnn") {
            detail::check_keys(j, context, {"kind", "layers"}, {"kind", "layers"});
            return Dnn(detail::parse_layers(j["layers"], context + ".layers"));
        }
        if (kind == "ddnn") {
            detail::check_keys(j, context, {"kind", "activation_layers", "value_layers"},
                               {"kind", "activation_layers", "value_layers"});
            return Ddnn(
                detail::parse_layers(j["activation_layers"], context + ".activation_layers"),
                detail::parse_layers(j["value_layers"], context + ".value_layers"));
        }
    } catch (const ParseError&) {
        throw;
    } catch (const InputError& e) {
        throw ParseError(context + ": " + e.what());
    }
    throw ParseError(context + ".kind: expected \"dnn\" or \"ddnn\"");
}

inline AnyNet load_network(const std::string& path) {
    return network_from_text(detail::read_file(path), path);
}

inline void save_network(const AnyNet& net, const std::string& path) {
    detail::write_file(path, network_to_text(net));
}

// ---------------------------------------------------------------------------
// Specification files

struct LoadedSpec {
    PointSpec points;
    PolytopeSpec polytopes;
};

namespace detail {

/// "constraints": {"A": ..., "b": ...} or "classify_as": label with optional
/// "margin". Exactly one of the two forms must be present.
inline OutputConstraint parse_constraint_fields(const json& j, const std::string& context,
                                                std::size_t output_dim_hint) {
    const bool has_constraints = j.contains("constraints");
    const bool has_classify = j.contains("classify_as");
    if (has_constraints == has_classify)
        throw ParseError(context + ": exactly one of 'constraints' or 'classify_as' required");
    if (has_constraints) {
        if (j.contains("margin"))
            throw ParseError(context + ": 'margin' is only valid with 'classify_as'");
        const json& c = j["constraints"];
        check_keys(c, context + ".constraints", {"A", "b"}, {"A", "b"});
        OutputConstraint out{get_matrix(c["A"], context + ".constraints.A"),
                             get_vector(c["b"], context + ".constraints.b")};
        return out;
    }
    if (!j["classify_as"].is_number_unsigned())
        throw ParseError(context + ".classify_as: expected a nonnegative integer");
    double margin = tol::kDefaultClassifyMargin;
    if (j.contains("margin")) margin = get_number(j["margin"], context + ".margin");
    if (output_dim_hint == 0)
        throw ParseError(context + ": classify_as requires a known output dimension");
    return classification_constraint(j["classify_as"].get<std::size_t>(), output_dim_hint,
                                     margin);
}

} // namespace detail

/// Loads a specification file. `output_dim` is needed to expand classify_as
/// entries into halfspace rows; pass the target network's output dimension.
inline LoadedSpec parse_spec(const std::string& text, const std::string& context,
                             std::size_t output_dim) {
    const detail::json j = detail::parse_json(text, context);
    detail::check_keys(j, context, {"points", "polytopes"}, {});
    LoadedSpec spec;
    if (j.contains("points")) {
        const detail::json& pts = j["points"];
        if (!pts.is_array()) throw ParseError(context + ".points: expected an array");
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const std::string ctx = context + ".points[" + std::to_string(i) + "]";
            detail::check_keys(pts[i], ctx, {"point", "constraints", "classify_as", "margin"},
                               {"point"});
            PointSpecItem item{detail::get_vector(pts[i]["point"], ctx + ".point"),
                               detail::parse_constraint_fields(pts[i], ctx, output_dim)};
            spec.points.items.push_back(std::move(item));
        }
    }
    if (j.contains("polytopes")) {
        const detail::json& polys = j["polytopes"];
        if (!polys.is_array()) throw ParseError(context + ".polytopes: expected an array");
        for (std::size_t i = 0; i < polys.size(); ++i) {
            const std::string ctx = context + ".polytopes[" + std::to_string(i) + "]";
            detail::check_keys(polys[i], ctx,
                               {"segment", "polygon", "constraints", "classify_as", "margin"},
                               {});
            const bool has_segment = polys[i].contains("segment");
            const bool has_polygon = polys[i].contains("polygon");
            if (has_segment == has_polygon)
                throw ParseError(ctx + ": exactly one of 'segment' or 'polygon' required");
            try {
                std::optional<InputPolytope> polytope;
                if (has_segment) {
                    const detail::json& s = polys[i]["segment"];
                    detail::check_keys(s, ctx + ".segment", {"start", "end"}, {"start", "end"});
                    polytope = Segment(detail::get_vector(s["start"], ctx + ".segment.start"),
                                       detail::get_vector(s["end"], ctx + ".segment.end"));
                } else {
                    const detail::json& p = polys[i]["polygon"];
                    detail::check_keys(p, ctx + ".polygon", {"vertices"}, {"vertices"});
                    if (!p["vertices"].is_array())
                        throw ParseError(ctx + ".polygon.vertices: expected an array");
                    std::vector<Vec> vertices;
                    for (std::size_t v = 0; v < p["vertices"].size(); ++v)
                        vertices.push_back(detail::get_vector(
                            p["vertices"][v],
                            ctx + ".polygon.vertices[" + std::to_string(v) + "]"));
                    polytope = Polygon2D(std::move(vertices));
                }
                PolytopeSpecItem item{std::move(*polytope),
                                      detail::parse_constraint_fields(polys[i], ctx, output_dim)};
                spec.polytopes.items.push_back(std::move(item));
            } catch (const ParseError&) {
                throw;
            } catch (const InputError& e) {
                throw ParseError(ctx + ": " + e.what());
            }
        }
    }
    return spec;
}

inline LoadedSpec load_spec(const std::string& path, std::size_t output_dim) {
    return parse_spec(detail::read_file(path), path, output_dim);
}

// ---------------------------------------------------------------------------
// Labeled CSV datasets: one row per point, features then integer label.

inline LabeledSet parse_labeled_csv(const std::string& text, const std::string& context) {
    LabeledSet set;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<double> values;
        std::istringstream fields(line);
        std::string field;
        while (std::getline(fields, field, ',')) {
            try {
                std::size_t used = 0;
                values.push_back(std::stod(field, &used));
                while (used < field.size() && (field[used] == ' ' || field[used] == '\t')) ++used;
                if (used != field.size()) throw std::invalid_argument(field);
            } catch (const std::exception&) {
                throw ParseError(context + ":" + std::to_string(line_no) +
                                 ": cannot parse field '" + field + "'");
            }
        }
        if (values.size() < 2)
            throw ParseError(context + ":" + std::to_string(line_no) +
                             ": need at least one feature and a label");
        const double label = values.back();
        values.pop_back();
        if (label < 0.0 || label != std::floor(label))
            throw ParseError(context + ":" + std::to_string(line_no) +
                             ": label must be a nonnegative integer");
        set.points.push_back({std::move(values), static_cast<std::size_t>(label)});
        if (set.points.size() > 1 &&
            set.points.back().x.size() != set.points.front().x.size())
            throw ParseError(context + ":" + std::to_string(line_no) +
                             ": inconsistent feature count");
    }
    return set;
}

inline LabeledSet load_labeled_csv(const std::string& path) {
    return parse_labeled_csv(detail::read_file(path), path);
}

// ---------------------------------------------------------------------------
// Region CSV export

/// Pattern bits as one group of 0/1 characters per layer, joined with '|'
/// (Identity layers contribute empty groups).
inline std::string pattern_bits(const ActivationPattern& pattern) {
    std::string out;
    for (std::size_t li = 0; li < pattern.tags.size(); ++li) {
        if (li > 0) out += "|";
        for (bool tag : pattern.tags[li]) out += tag ? '1' : '0';
    }
    return out;
}

inline std::string region_csv(const RegionPartition& partition) {
    std::string out;
    if (std::holds_alternative<SegmentPartition>(partition)) {
        const SegmentPartition& part = std::get<SegmentPartition>(partition);
        out += "piece,t_begin,t_end,pattern\n";
        for (std::size_t i = 0; i < part.pieces.size(); ++i) {
            const SegmentPiece& piece = part.pieces[i];
            out += std::to_string(i) + ",";
            detail::append_g17(out, piece.t_begin);
            out += ",";
            detail::append_g17(out, piece.t_end);
            out += "," + pattern_bits(piece.pattern) + "\n";
        }
    } else {
        const PolygonPartition& part = std::get<PolygonPartition>(partition);
        out += "piece,num_vertices,vertices,pattern\n";
        for (std::size_t i = 0; i < part.pieces.size(); ++i) {
            const PolygonPiece& piece = part.pieces[i];
            out += std::to_string(i) + "," + std::to_string(piece.vertices.size()) + ",\"";
            for (std::size_t v = 0; v < piece.vertices.size(); ++v) {
                if (v > 0) out += ";";
                for (std::size_t d = 0; d < piece.vertices[v].size(); ++d) {
                    if (d > 0) out += " ";
                    detail::append_g17(out, piece.vertices[v][d]);
                }
            }
            out += "\"," + pattern_bits(piece.pattern) + "\n";
        }
    }
    return out;
}

/// Sample rows (t, input coords, output coords) along a segment for external
/// plotting.
inline std::string plot_csv(const AnyNet& net, const Segment& seg, std::size_t samples) {
    if (samples < 2) throw InputError("plot: at least 2 samples required");
    std::string out = "t";
    for (std::size_t d = 0; d < seg.dim(); ++d) out += ",x" + std::to_string(d);
    for (std::size_t d = 0; d < net_output_dim(net); ++d) out += ",y" + std::to_string(d);
    out += "\n";
    for (std::size_t s = 0; s < samples; ++s) {
        const double t = static_cast<double>(s) / static_cast<double>(samples - 1);
        const Vec x = seg.point_at(t);
        const Vec y = eval_net(net, x);
        detail::append_g17(out, t);
        for (double v : x) {
            out += ",";
            detail::append_g17(out, v);
        }
        for (double v : y) {
            out += ",";
            detail::append_g17(out, v);
        }
        out += "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Machine-readable reports

/// Repair report. Timing fields are the only part that varies between
/// identical runs.
inline std::string repair_report_json(const RepairResult& result) {
    std::string out = "{\n";
    out += "  \"status\": \"" + to_string(result.status) + "\",\n";
    out += "  \"layer\": " + std::to_string(result.layer) + ",\n";
    out += "  \"norm\": \"" + to_string(result.norm) + "\",\n";
    out += "  \"norm_value\": ";
    detail::append_g17(out, result.norm_value);
    out += ",\n  \"key_point_count\": " + std::to_string(result.key_point_count) + ",\n";
    std::size_t nonzero = 0;
    for (double d : result.delta)
        if (d != 0.0) ++nonzero;
    out += "  \"delta\": {\"size\": " + std::to_string(result.delta.size()) +
           ", \"nonzero\": " + std::to_string(nonzero) + ", \"l1\": ";
    detail::append_g17(out, norm_l1(result.delta));
    out += ", \"linf\": ";
    detail::append_g17(out, norm_linf(result.delta));
    out += "},\n";
    out += "  \"timings\": {\"regions_seconds\": ";
    detail::append_g17(out, result.timings.regions_seconds);
    out += ", \"jacobians_seconds\": ";
    detail::append_g17(out, result.timings.jacobians_seconds);
    out += ", \"lp_seconds\": ";
    detail::append_g17(out, result.timings.lp_seconds);
    out += ", \"total_seconds\": ";
    detail::append_g17(out, result.timings.total_seconds);
    out += "}\n}\n";
    return out;
}

inline std::string metrics_report_json(const MetricsReport& report) {
    std::string out = "{\n";
    if (report.efficacy.has_value()) {
        out += "  \"efficacy\": ";
        detail::append_g17(out, *report.efficacy);
        out += ",\n";
    }
    out += "  \"drawdown\": ";
    detail::append_g17(out, report.drawdown);
    out += ",\n  \"generalization\": ";
    detail::append_g17(out, report.generalization);
    out += ",\n  \"counts\": {";
    bool first = true;
    if (report.efficacy.has_value()) {
        out += "\"repair_set\": " + std::to_string(report.repair_count);
        first = false;
    }
    if (!first) out += ", ";
    out += "\"drawdown_set\": " + std::to_string(report.drawdown_count);
    out += ", \"generalization_set\": " + std::to_string(report.generalization_count);
    out += "}\n}\n";
    return out;
}

// ---------------------------------------------------------------------------
// Small CLI helpers

/// Parses "v1,v2,..." into a vector.
inline Vec parse_vector_arg(const std::string& text) {
    Vec out;
    std::istringstream in(text);
    std::string field;
    while (std::getline(in, field, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(field, &used));
            while (used < field.size() && field[used] == ' ') ++used;
            if (used != field.size()) throw std::invalid_argument(field);
        } catch (const std::exception&) {
            throw InputError("cannot parse number '" + field + "'");
        }
    }
    if (out.empty()) throw InputError("empty vector argument");
    return out;
}

/// Parses "s1,s2,...;e1,e2,..." into a segment.
inline Segment parse_segment_arg(const std::string& text) {
    const std::size_t semi = text.find(';');
    if (semi == std::string::npos)
        throw InputError("segment argument must be 'start;end' with ';' separator");
    return Segment(parse_vector_arg(text.substr(0, semi)),
                   parse_vector_arg(text.substr(semi + 1)));
}

} // namespace netpatch
