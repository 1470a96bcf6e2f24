// dipanet: evaluate network representations, run the discretization and
// homogenization transforms, sweep convergence orders and verify invariants.
// Exit codes: 0 ok, 1 selftest failure, 2 config error, 3 numerical
// divergence, 4 resource budget.
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "dipanet/harness.hpp"
#include "dipanet/io.hpp"
#include "dipanet/selftest.hpp"

namespace {

using dipanet::Json;

constexpr int kExitOk = 0;
constexpr int kExitSelftest = 1;
constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitBudget = 4;

struct CommonArgs {
    std::string config_path;
    std::string out_path;
    std::optional<std::uint64_t> seed;
    unsigned threads = 1;
    bool timings = false;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write file: " + path);
    out << content;
}

std::size_t byte_to_line(const std::string& text, std::size_t byte) {
    std::size_t line = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i)
        if (text[i] == '\n') ++line;
    return line;
}

Json parse_json_text(const std::string& text, const std::string& origin) {
    try {
        return Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw ConfigError(origin + ":" + std::to_string(byte_to_line(text, e.byte)) +
                          ": JSON parse error: " + e.what());
    }
}

Json load_config(const CommonArgs& args) {
    if (args.config_path.empty()) throw ConfigError("missing --config <path>");
    return parse_json_text(read_file(args.config_path), args.config_path);
}

// Architecture source: inline {"type","params"}, {"file": path} or
// {"random": {...}}.
dipanet::ParamsVariant load_architecture(const Json& j, const CommonArgs& args, Json& resolved) {
    if (!j.is_object()) throw ConfigError("architecture: expected an object");
    if (j.contains("file")) {
        dipanet::reject_unknown_keys(j, {"file"}, "architecture");
        const std::string path = j["file"].get<std::string>();
        const Json inner = parse_json_text(read_file(path), path);
        resolved = inner;
        return dipanet::params_from_json(inner);
    }
    if (j.contains("random")) {
        dipanet::reject_unknown_keys(j, {"random"}, "architecture");
        const Json& r = j["random"];
        dipanet::reject_unknown_keys(r,
                                     {"seed", "architecture", "p", "q", "n", "ell", "T", "amplitude",
                                      "families", "activation"},
                                     "random architecture");
        dipanet::RandomSpec spec;
        spec.architecture = r.value("architecture", std::string("deepnet"));
        spec.p = r.value("p", 1u);
        spec.q = r.value("q", 1u);
        spec.n = r.value("n", 4u);
        spec.ell = r.value("ell", 2u);
        spec.T = r.value("T", 1.0);
        spec.amplitude = r.value("amplitude", 1.0);
        if (r.contains("families")) spec.families = r["families"].get<std::vector<std::string>>();
        spec.activation = r.value("activation", std::string("tanh"));
        const std::uint64_t seed = args.seed ? *args.seed : r.value("seed", 0ULL);
        auto params = dipanet::random_params(seed, spec);
        resolved = dipanet::params_to_json(params);
        resolved["provenance"] = Json{{"random_seed", seed}, {"random_spec", r}};
        return params;
    }
    resolved = j;
    return dipanet::params_from_json(j);
}

std::vector<dipanet::Vec> load_inputs(const Json& config, std::size_t dim, const CommonArgs& args,
                                      Json& resolved) {
    if (config.contains("input")) {
        const auto x = config["input"].get<dipanet::Vec>();
        resolved["input"] = x;
        return {x};
    }
    if (config.contains("inputs_file")) {
        const std::string path = config["inputs_file"].get<std::string>();
        std::istringstream in(read_file(path));
        std::vector<dipanet::Vec> xs;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::istringstream row(line);
            dipanet::Vec x;
            double v;
            while (row >> v) x.push_back(v);
            if (!x.empty()) xs.push_back(std::move(x));
        }
        if (xs.empty()) throw ConfigError("inputs_file: no input rows in " + path);
        resolved["inputs_file"] = path;
        return xs;
    }
    if (config.contains("inputs")) {
        const Json& spec = config["inputs"];
        dipanet::reject_unknown_keys(spec, {"count", "radius", "seed"}, "inputs");
        const std::size_t count = spec.value("count", 20u);
        const double radius = spec.value("radius", 1.0);
        const std::uint64_t seed = args.seed ? *args.seed : spec.value("seed", 2024ULL);
        resolved["inputs"] = Json{{"count", count}, {"radius", radius}, {"seed", seed}};
        return dipanet::sphere_inputs(dim, count, radius, seed);
    }
    throw ConfigError("config: provide \"input\", \"inputs\" or \"inputs_file\"");
}

dipanet::Solver load_solver(const Json& config, const char* key, dipanet::Solver fallback,
                            Json& resolved) {
    dipanet::Solver s = fallback;
    if (config.contains(key)) s = dipanet::solver_from_json(config[key]);
    resolved[key] = dipanet::to_json(s);
    return s;
}

void emit(const std::string& text, const CommonArgs& args) {
    std::cout << text;
    if (!args.out_path.empty()) write_file(args.out_path, text);
}

std::string sidecar_path(const std::string& csv_path) {
    const auto dot = csv_path.find_last_of('.');
    if (dot == std::string::npos) return csv_path + ".json";
    return csv_path.substr(0, dot) + ".json";
}

// ----------------------------------- eval ---------------------------------

int cmd_eval(const CommonArgs& args) {
    const Json config = load_config(args);
    dipanet::reject_unknown_keys(
        config, {"command", "architecture", "input", "inputs", "inputs_file", "m", "solver", "trace"},
        "eval config");
    Json resolved;
    resolved["command"] = "eval";

    dipanet::EvalOptions opts;
    opts.threads = args.threads;

    Json arch_echo;
    const auto params = load_architecture(config.at("architecture"), args, arch_echo);
    resolved["architecture"] = arch_echo;

    std::size_t dim = 0;
    std::visit([&dim](const auto& p) { dim = p.input_dim(); }, params);
    const auto xs = load_inputs(config, dim, args, resolved);

    const std::size_t m = config.value("m", 256u);
    resolved["m"] = m;
    const dipanet::Solver solver = load_solver(config, "solver", dipanet::Solver::euler(256), resolved);
    const bool want_trace = config.value("trace", false);
    resolved["trace"] = want_trace;

    Json out;
    out["config"] = resolved;
    Json ys = Json::array();
    Json traces = Json::array();
    for (const auto& x : xs) {
        dipanet::Vec y;
        if (const auto* f = std::get_if<dipanet::FiniteNetParams>(&params)) {
            dipanet::Trace trace;
            y = dipanet::eval_finite(*f, x, want_trace ? &trace : nullptr);
            if (want_trace) {
                Json jt = Json::array();
                for (const auto& z : trace) jt.push_back(z);
                traces.push_back(std::move(jt));
            }
        } else if (const auto* c = std::get_if<dipanet::ContinuumNetParams>(&params)) {
            y = dipanet::eval_deepcnn_batch(*c, {&x, 1}, m, opts).front();
        } else if (const auto* o = std::get_if<dipanet::OdeNetParams>(&params)) {
            y = dipanet::eval_neuralode(*o, x, solver, opts);
        } else {
            y = dipanet::eval_dipanet(std::get<dipanet::DipanetParams>(params), x, m, solver, opts);
        }
        ys.push_back(y);
    }
    out["Y"] = xs.size() == 1 ? ys[0] : ys;
    if (want_trace && !traces.empty()) out["trace"] = xs.size() == 1 ? traces[0] : traces;
    emit(dipanet::dump_json(out), args);
    return kExitOk;
}

// -------------------------------- discretize -------------------------------

int cmd_discretize(const CommonArgs& args) {
    const Json config = load_config(args);
    dipanet::reject_unknown_keys(config, {"command", "architecture", "transform", "resolution"},
                                 "discretize config");
    Json arch_echo;
    const auto params = load_architecture(config.at("architecture"), args, arch_echo);
    const std::string transform = config.at("transform").get<std::string>();
    const std::size_t resolution = config.at("resolution").get<std::size_t>();

    dipanet::ParamsVariant result;
    if (transform == "width")
        result = dipanet::discretize_width(dipanet::as_continuum(params), resolution);
    else if (transform == "depth")
        result = dipanet::discretize_depth(dipanet::as_ode(params), resolution);
    else if (transform == "dipanet_width")
        result = dipanet::discretize_dipanet_width(dipanet::as_dipanet(params), resolution);
    else if (transform == "dipanet_depth")
        result = dipanet::discretize_dipanet_depth(dipanet::as_dipanet(params), resolution);
    else
        throw ConfigError("discretize: unknown transform '" + transform + "'");

    Json out = dipanet::params_to_json(result);
    out["provenance"] = Json{{"source_architecture", dipanet::architecture_tag(params)},
                             {"transform", transform},
                             {"resolution", resolution}};
    emit(dipanet::dump_json(out), args);
    return kExitOk;
}

// -------------------------------- homogenize -------------------------------

dipanet::GapProbeOptions load_probe(const Json& config, const CommonArgs& args, Json& resolved) {
    dipanet::GapProbeOptions probe;
    if (config.contains("probe")) {
        const Json& p = config["probe"];
        dipanet::reject_unknown_keys(p, {"inputs", "radius", "seed", "eval_m", "ref_multiplier"},
                                     "probe");
        probe.input_count = p.value("inputs", probe.input_count);
        probe.radius = p.value("radius", probe.radius);
        probe.seed = p.value("seed", probe.seed);
        probe.eval_m = p.value("eval_m", probe.eval_m);
        probe.ref_multiplier = p.value("ref_multiplier", probe.ref_multiplier);
    }
    if (args.seed) probe.seed = *args.seed;
    probe.threads = args.threads;
    resolved["probe"] = Json{{"inputs", probe.input_count},
                             {"radius", probe.radius},
                             {"seed", probe.seed},
                             {"eval_m", probe.eval_m},
                             {"ref_multiplier", probe.ref_multiplier}};
    return probe;
}

int cmd_homogenize(const CommonArgs& args) {
    const Json config = load_config(args);
    dipanet::reject_unknown_keys(
        config, {"command", "mode", "family", "eps", "n_max", "nets", "T", "probe"},
        "homogenize config");
    Json resolved;
    resolved["command"] = "homogenize";
    const dipanet::GapProbeOptions probe = load_probe(config, args, resolved);
    const std::string mode = config.at("mode").get<std::string>();
    resolved["mode"] = mode;

    Json out;
    if (mode == "width") {
        const Json& fam = config.at("family");
        dipanet::reject_unknown_keys(
            fam, {"kind", "layers", "p", "q", "seed", "amplitude", "activation"}, "family");
        const std::uint64_t seed = args.seed ? *args.seed : fam.value("seed", 1ULL);
        const dipanet::MatrixFamily family = dipanet::builtin_family(
            fam.value("kind", std::string("geometric")), fam.value("layers", 1u), fam.value("p", 1u),
            fam.value("q", 1u), seed, fam.value("amplitude", 1.0),
            dipanet::act_kind_from_string(fam.value("activation", std::string("relu"))));
        const double eps = config.value("eps", 1e-2);
        const std::size_t n_max = config.value("n_max", 16u);
        resolved["family"] = fam;
        resolved["eps"] = eps;
        resolved["n_max"] = n_max;
        const auto res = dipanet::homogenize_width(family, eps, n_max, probe);
        out = dipanet::params_to_json(dipanet::ParamsVariant(res.params));
        out["provenance"] = Json{{"transform", "homogenize_width"}, {"config", resolved}};
        out["certificate_n"] = res.certificate_n;
        out["max_gap"] = res.max_gap;
        Json gaps = Json::array();
        for (const auto& [n, g] : res.gaps) gaps.push_back(Json{{"n", n}, {"gap", g}});
        out["gaps"] = std::move(gaps);
    } else if (mode == "depth" || mode == "rescnn_depth") {
        const double T = config.value("T", 1.0);
        resolved["T"] = T;
        if (!config.contains("nets") || !config["nets"].is_array() || config["nets"].empty())
            throw ConfigError("homogenize: \"nets\" must be a nonempty array");
        Json nets_echo = Json::array();
        if (mode == "depth") {
            std::vector<dipanet::FiniteNetParams> nets;
            for (const Json& jn : config["nets"]) {
                Json echo;
                nets.push_back(dipanet::as_finite(load_architecture(jn, args, echo)));
                nets_echo.push_back(std::move(echo));
            }
            resolved["nets"] = std::move(nets_echo);
            const auto res = dipanet::homogenize_depth(nets, T, probe);
            out = dipanet::params_to_json(dipanet::ParamsVariant(res.ode));
            out["provenance"] = Json{{"transform", "homogenize_depth"}, {"config", resolved}};
            Json gaps = Json::array();
            for (const auto& [ell, g] : res.gaps) gaps.push_back(Json{{"ell", ell}, {"gap", g}});
            out["gaps"] = std::move(gaps);
        } else {
            std::vector<dipanet::ContinuumNetParams> nets;
            for (const Json& jn : config["nets"]) {
                Json echo;
                nets.push_back(dipanet::as_continuum(load_architecture(jn, args, echo)));
                nets_echo.push_back(std::move(echo));
            }
            resolved["nets"] = std::move(nets_echo);
            const auto res = dipanet::homogenize_rescnn_depth(nets, T, probe);
            out = dipanet::params_to_json(dipanet::ParamsVariant(res.params));
            out["provenance"] = Json{{"transform", "homogenize_rescnn_depth"}, {"config", resolved}};
            Json gaps = Json::array();
            for (const auto& [ell, g] : res.gaps) gaps.push_back(Json{{"ell", ell}, {"gap", g}});
            out["gaps"] = std::move(gaps);
        }
    } else {
        throw ConfigError("homogenize: unknown mode '" + mode + "'");
    }
    emit(dipanet::dump_json(out), args);
    return kExitOk;
}

// ---------------------------------- sweep ---------------------------------

int cmd_sweep(const CommonArgs& args) {
    const Json config = load_config(args);
    dipanet::reject_unknown_keys(
        config, {"command", "sweep", "architecture", "resolutions", "inputs", "reference"},
        "sweep config");
    Json resolved;
    resolved["command"] = "sweep";
    const std::string kind = config.at("sweep").get<std::string>();
    resolved["sweep"] = kind;

    Json arch_echo;
    const auto params = load_architecture(config.at("architecture"), args, arch_echo);
    resolved["architecture"] = arch_echo;

    const auto resolutions = config.at("resolutions").get<std::vector<std::size_t>>();
    resolved["resolutions"] = resolutions;

    std::size_t dim = 0;
    std::visit([&dim](const auto& p) { dim = p.input_dim(); }, params);
    const auto inputs = load_inputs(config, dim, args, resolved);

    dipanet::EvalOptions opts;
    opts.threads = args.threads;

    dipanet::SweepReport report;
    if (kind == "depth") {
        const dipanet::Solver ref = load_solver(
            config, "reference", dipanet::Solver::rk4(16 * resolutions.back()), resolved);
        report = dipanet::sweep_depth(dipanet::as_ode(params), resolutions, inputs, ref, opts);
    } else if (kind == "width") {
        std::size_t ref_m = 4 * resolutions.back();
        if (config.contains("reference")) {
            dipanet::reject_unknown_keys(config["reference"], {"m"}, "width reference");
            ref_m = config["reference"].value("m", ref_m);
        }
        resolved["reference"] = Json{{"m", ref_m}};
        report = dipanet::sweep_width(dipanet::as_continuum(params), resolutions, inputs, ref_m, opts);
    } else {
        throw ConfigError("sweep: unknown kind '" + kind + "' (expected \"depth\" or \"width\")");
    }

    const std::string csv = dipanet::sweep_csv(report, args.timings);
    const std::string out_path = args.out_path.empty() ? "sweep.csv" : args.out_path;
    write_file(out_path, csv);
    Json sidecar;
    sidecar["config"] = resolved;
    sidecar["report"] = dipanet::to_json(report, args.timings);
    write_file(sidecar_path(out_path), dipanet::dump_json(sidecar));
    std::cout << csv;
    if (report.fitted_order)
        std::cerr << "fitted order: " << *report.fitted_order << "\n";
    else
        std::cerr << "fitted order: degenerate (errors at reference accuracy)\n";
    return kExitOk;
}

// -------------------------------- roundtrip --------------------------------

int cmd_roundtrip(const CommonArgs& args) {
    const Json config = load_config(args);
    dipanet::reject_unknown_keys(config,
                                 {"command", "architecture", "sizes", "inputs", "reference"},
                                 "roundtrip config");
    Json resolved;
    resolved["command"] = "roundtrip";

    Json arch_echo;
    const auto params = load_architecture(config.at("architecture"), args, arch_echo);
    resolved["architecture"] = arch_echo;
    const auto& dipa = dipanet::as_dipanet(params);

    std::vector<std::pair<std::size_t, std::size_t>> sizes;
    for (const Json& js : config.at("sizes")) {
        if (js.is_array() && js.size() == 2)
            sizes.emplace_back(js[0].get<std::size_t>(), js[1].get<std::size_t>());
        else if (js.is_number())
            sizes.emplace_back(js.get<std::size_t>(), js.get<std::size_t>());
        else
            throw ConfigError("roundtrip: sizes entries must be [n, ell] pairs or single integers");
    }
    resolved["sizes"] = config["sizes"];

    const auto inputs = load_inputs(config, dipa.input_dim(), args, resolved);

    std::size_t ref_m = 1024;
    dipanet::Solver ref_solver = dipanet::Solver::rk4(4096);
    if (config.contains("reference")) {
        const Json& r = config["reference"];
        dipanet::reject_unknown_keys(r, {"m", "solver"}, "roundtrip reference");
        ref_m = r.value("m", ref_m);
        if (r.contains("solver")) ref_solver = dipanet::solver_from_json(r["solver"]);
    }
    resolved["reference"] = Json{{"m", ref_m}, {"solver", dipanet::to_json(ref_solver)}};

    dipanet::EvalOptions opts;
    opts.threads = args.threads;
    const dipanet::TwoRouteReport report =
        dipanet::two_route_check(dipa, sizes, inputs, ref_m, ref_solver, opts);

    const std::string csv = dipanet::two_route_csv(report, args.timings);
    const std::string out_path = args.out_path.empty() ? "roundtrip.csv" : args.out_path;
    write_file(out_path, csv);
    Json sidecar;
    sidecar["config"] = resolved;
    sidecar["report"] = dipanet::to_json(report, args.timings);
    write_file(sidecar_path(out_path), dipanet::dump_json(sidecar));
    std::cout << csv;
    return kExitOk;
}

int run(int argc, char** argv) {
    CLI::App app{"dipanet: unified network representations, transforms and convergence harness"};
    app.require_subcommand(1);

    CommonArgs args;
    auto add_common = [&args](CLI::App* cmd, bool needs_config) {
        auto* c = cmd->add_option("--config", args.config_path, "JSON config path");
        if (needs_config) c->required();
        cmd->add_option("--out", args.out_path, "output path");
        cmd->add_option("--seed", args.seed, "override config seeds");
        cmd->add_option("--threads", args.threads, "worker threads for row-parallel evaluation");
        cmd->add_flag("--timings", args.timings, "include measured runtimes in artifacts "
                                                 "(breaks bitwise reproducibility)");
    };

    auto* eval = app.add_subcommand("eval", "evaluate an architecture on inputs");
    add_common(eval, true);
    auto* disc = app.add_subcommand("discretize", "width/depth discretization transforms");
    add_common(disc, true);
    auto* homog = app.add_subcommand("homogenize", "family/net homogenization transforms");
    add_common(homog, true);
    auto* sweep = app.add_subcommand("sweep", "convergence sweep, CSV + JSON sidecar");
    add_common(sweep, true);
    auto* round = app.add_subcommand("roundtrip", "two-route discretization comparison");
    add_common(round, true);
    auto* self = app.add_subcommand("selftest", "run the library invariant suite");
    add_common(self, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (eval->parsed()) return cmd_eval(args);
        if (disc->parsed()) return cmd_discretize(args);
        if (homog->parsed()) return cmd_homogenize(args);
        if (sweep->parsed()) return cmd_sweep(args);
        if (round->parsed()) return cmd_roundtrip(args);
        return dipanet::run_selftest(std::cout) ? kExitOk : kExitSelftest;
    } catch (const dipanet::DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const dipanet::ResourceBudgetError& e) {
        std::cerr << "resource budget: " << e.what() << "\n";
        return kExitBudget;
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    }
}

} // namespace

int main(int argc, char** argv) { return run(argc, argv); }
