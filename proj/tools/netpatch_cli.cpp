// Command-line front end: evaluation, region enumeration, provable repair,
// metrics, and plot emission over the JSON/CSV file formats.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <variant>

#include <CLI11.hpp>

#include "netpatch/netpatch.hpp"

namespace {

using namespace netpatch;

constexpr int kExitOk = 0;
constexpr int kExitInfeasible = 1;
constexpr int kExitInvalidInput = 2;
constexpr int kExitResourceLimit = 3;

std::string format_vector(const Vec& v) {
    std::string out;
    char buf[64];
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i > 0) out += ",";
        std::snprintf(buf, sizeof(buf), "%.17g", v[i]);
        out += buf;
    }
    return out;
}

NormObjective parse_norm(const std::string& s) {
    if (s == "l1") return NormObjective::L1;
    if (s == "linf") return NormObjective::Linf;
    throw InputError("--norm must be 'l1' or 'linf'");
}

struct RepairArgs {
    std::string net_path;
    std::string spec_path;
    std::size_t layer = 1;
    std::string norm = "l1";
    std::string mask;
    std::string solver = "builtin";
    std::string out_path;
    std::string report_path;
    std::string dump_lp_path;
    double timeout_seconds = 0.0;
};

void add_repair_options(CLI::App* cmd, RepairArgs& args, bool polytopes) {
    cmd->add_option("net", args.net_path, "network file")->required();
    cmd->add_option("spec", args.spec_path, "specification file")->required();
    cmd->add_option("--layer", args.layer, "1-based layer to repair")->required();
    cmd->add_option("--norm", args.norm, "delta norm to minimize: l1 or linf")->required();
    cmd->add_option("--mask", args.mask,
                    "repairable parameters, e.g. \"L1.w[0][2],L1.b[2]\" or \"paper4\"");
    cmd->add_option("--solver", args.solver, "LP solver: builtin or external");
    cmd->add_option("--out", args.out_path, "write the repaired network here");
    cmd->add_option("--report", args.report_path, "write a JSON repair report here");
    cmd->add_option("--dump-lp", args.dump_lp_path, "write the encoded LP here");
    if (polytopes)
        cmd->add_option("--timeout-seconds", args.timeout_seconds,
                        "wall-clock budget for the whole pipeline");
}

LpSolveFn make_solver(const std::string& choice) {
    if (choice == "builtin") return {};
    if (choice == "external")
        return [](const LinearProgram& lp) { return solve_external(lp, "external"); };
    throw InputError("--solver must be 'builtin' or 'external'");
}

int finish_repair(const RepairArgs& args, const RepairResult& result) {
    if (!args.report_path.empty())
        detail::write_file(args.report_path, repair_report_json(result));
    if (result.ok() && !args.out_path.empty())
        save_network(AnyNet(*result.repaired), args.out_path);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", result.norm_value);
    std::cout << to_string(result.status) << " layer=" << result.layer
              << " norm=" << to_string(result.norm)
              << " norm_value=" << (result.ok() ? buf : "-")
              << " key_points=" << result.key_point_count << "\n";
    return result.ok() ? kExitOk : kExitInfeasible;
}

int run(int argc, char** argv) {
    CLI::App app{"provable single-layer repair of feed-forward networks"};
    app.require_subcommand(1);

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a network on one input");
    std::string eval_net_path, eval_input;
    eval_cmd->add_option("net", eval_net_path, "network file")->required();
    eval_cmd->add_option("--input", eval_input, "comma-separated input vector")->required();

    // regions
    auto* regions_cmd = app.add_subcommand("regions", "enumerate linear regions on a polytope");
    std::string regions_net_path, regions_segment, regions_polygon_file, regions_csv;
    regions_cmd->add_option("net", regions_net_path, "network file")->required();
    regions_cmd->add_option("--segment", regions_segment, "segment as \"start;end\"");
    regions_cmd->add_option("--polygon-file", regions_polygon_file,
                            "JSON file {\"vertices\": [[...], ...]}");
    regions_cmd->add_option("--csv", regions_csv, "write the partition CSV here");

    // repair-points / repair-polytopes
    RepairArgs point_args, poly_args;
    auto* points_cmd = app.add_subcommand("repair-points", "provable point repair of one layer");
    add_repair_options(points_cmd, point_args, false);
    auto* polys_cmd =
        app.add_subcommand("repair-polytopes", "provable polytope repair of one layer");
    add_repair_options(polys_cmd, poly_args, true);

    // metrics
    auto* metrics_cmd = app.add_subcommand("metrics", "drawdown/generalization of a repair");
    std::string buggy_path, repaired_path, dset_path, gset_path, rset_path, metrics_report_path;
    metrics_cmd->add_option("buggy", buggy_path, "buggy network file")->required();
    metrics_cmd->add_option("repaired", repaired_path, "repaired network file")->required();
    metrics_cmd->add_option("--drawdown-set", dset_path, "labeled CSV")->required();
    metrics_cmd->add_option("--generalization-set", gset_path, "labeled CSV")->required();
    metrics_cmd->add_option("--repair-set", rset_path, "labeled CSV (enables efficacy)");
    metrics_cmd->add_option("--report", metrics_report_path, "write a JSON report here");

    // plot
    auto* plot_cmd = app.add_subcommand("plot", "sample a network along a segment");
    std::string plot_net_path, plot_segment, plot_csv_path;
    std::size_t plot_samples = 101;
    plot_cmd->add_option("net", plot_net_path, "network file")->required();
    plot_cmd->add_option("--segment", plot_segment, "segment as \"start;end\"")->required();
    plot_cmd->add_option("--samples", plot_samples, "number of samples (default 101)");
    plot_cmd->add_option("--csv", plot_csv_path, "output CSV path")->required();

    CLI11_PARSE(app, argc, argv);

    if (eval_cmd->parsed()) {
        const AnyNet net = load_network(eval_net_path);
        std::cout << format_vector(eval_net(net, parse_vector_arg(eval_input))) << "\n";
        return kExitOk;
    }

    if (regions_cmd->parsed()) {
        const AnyNet net = load_network(regions_net_path);
        if (regions_segment.empty() == regions_polygon_file.empty())
            throw InputError("regions: exactly one of --segment or --polygon-file required");
        const Dnn dnn = std::holds_alternative<Dnn>(net)
                            ? std::get<Dnn>(net)
                            : std::get<Ddnn>(net).activation_network();
        std::optional<RegionPartition> partition;
        std::size_t count = 0;
        if (!regions_segment.empty()) {
            SegmentPartition part = exactline(dnn, parse_segment_arg(regions_segment));
            count = part.pieces.size();
            partition = std::move(part);
        } else {
            const detail::json j = detail::parse_json(detail::read_file(regions_polygon_file),
                                                      regions_polygon_file);
            detail::check_keys(j, regions_polygon_file, {"vertices"}, {"vertices"});
            if (!j["vertices"].is_array())
                throw ParseError(regions_polygon_file + ".vertices: expected an array");
            std::vector<Vec> vertices;
            for (std::size_t v = 0; v < j["vertices"].size(); ++v)
                vertices.push_back(detail::get_vector(
                    j["vertices"][v],
                    regions_polygon_file + ".vertices[" + std::to_string(v) + "]"));
            PolygonPartition part = plane_transfer(dnn, Polygon2D(std::move(vertices)));
            count = part.pieces.size();
            partition = std::move(part);
        }
        const std::string csv = region_csv(*partition);
        if (regions_csv.empty()) {
            std::cout << csv;
        } else {
            detail::write_file(regions_csv, csv);
            std::cout << "pieces=" << count << "\n";
        }
        return kExitOk;
    }

    if (points_cmd->parsed()) {
        const AnyNet net = load_network(point_args.net_path);
        const LoadedSpec spec = load_spec(point_args.spec_path, net_output_dim(net));
        if (spec.points.items.empty())
            throw InputError("repair-points: specification has no points");
        const Ddnn ddnn = std::holds_alternative<Dnn>(net) ? decouple(std::get<Dnn>(net))
                                                           : std::get<Ddnn>(net);
        std::optional<std::vector<bool>> mask;
        if (!point_args.mask.empty()) {
            mask = resolve_mask(parse_mask(point_args.mask), ddnn, point_args.layer);
            if (!mask.has_value())
                throw InputError("mask names no parameters of layer " +
                                 std::to_string(point_args.layer));
        }
        const NormObjective norm = parse_norm(point_args.norm);
        if (!point_args.dump_lp_path.empty())
            detail::write_file(point_args.dump_lp_path,
                               dump_lp(build_point_repair_lp(ddnn, point_args.layer, spec.points,
                                                             norm, mask)));
        const RepairResult result = point_repair(AnyNet(ddnn), point_args.layer, spec.points,
                                                 norm, mask, nullptr,
                                                 make_solver(point_args.solver));
        return finish_repair(point_args, result);
    }

    if (polys_cmd->parsed()) {
        const AnyNet net = load_network(poly_args.net_path);
        if (!std::holds_alternative<Dnn>(net))
            throw InputError("repair-polytopes: expected a plain dnn network file");
        const Dnn& dnn = std::get<Dnn>(net);
        const LoadedSpec spec = load_spec(poly_args.spec_path, dnn.output_dim());
        if (spec.polytopes.items.empty())
            throw InputError("repair-polytopes: specification has no polytopes");
        std::optional<std::vector<bool>> mask;
        if (!poly_args.mask.empty()) {
            mask = resolve_mask(parse_mask(poly_args.mask), decouple(dnn), poly_args.layer);
            if (!mask.has_value())
                throw InputError("mask names no parameters of layer " +
                                 std::to_string(poly_args.layer));
        }
        const NormObjective norm = parse_norm(poly_args.norm);
        const Deadline deadline = poly_args.timeout_seconds > 0.0
                                      ? Deadline::after_seconds(poly_args.timeout_seconds)
                                      : Deadline();
        if (!poly_args.dump_lp_path.empty()) {
            const PointReduction reduction = reduce_to_points(dnn, spec.polytopes, deadline);
            detail::write_file(
                poly_args.dump_lp_path,
                dump_lp(build_point_repair_lp(decouple(dnn), poly_args.layer, reduction.spec,
                                              norm, mask, &reduction.patterns, deadline)));
        }
        const RepairResult result = polytope_repair(dnn, poly_args.layer, spec.polytopes, norm,
                                                    mask, make_solver(poly_args.solver), deadline);
        return finish_repair(poly_args, result);
    }

    if (metrics_cmd->parsed()) {
        const AnyNet buggy = load_network(buggy_path);
        const AnyNet repaired = load_network(repaired_path);
        std::optional<LabeledSet> repair_set;
        if (!rset_path.empty()) repair_set = load_labeled_csv(rset_path);
        const MetricsReport report =
            compute_metrics(buggy, repaired, repair_set, load_labeled_csv(dset_path),
                            load_labeled_csv(gset_path));
        const std::string text = metrics_report_json(report);
        if (!metrics_report_path.empty()) detail::write_file(metrics_report_path, text);
        std::cout << text;
        return kExitOk;
    }

    if (plot_cmd->parsed()) {
        const AnyNet net = load_network(plot_net_path);
        detail::write_file(plot_csv_path,
                           plot_csv(net, parse_segment_arg(plot_segment), plot_samples));
        return kExitOk;
    }

    return kExitInvalidInput;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const netpatch::TimeoutError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitResourceLimit;
    } catch (const netpatch::IterationLimitError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitResourceLimit;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInvalidInput;
    }
}
