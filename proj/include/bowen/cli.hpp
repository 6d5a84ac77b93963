#pragma once

// Command-line application: subcommands preimages, pressure, dim, sweep, classify,
// continue-orbit and expansion. Values come from defaults, then an optional config file
// (--config, key = value), then flags; later sources win.
//
// Needs CLI11 (vendor/CLI11.hpp) and nlohmann/json on the include path.

#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "bowen/dimension.hpp"
#include "bowen/io.hpp"
#include "bowen/map.hpp"
#include "bowen/parameter.hpp"
#include "bowen/periodic.hpp"
#include "bowen/preimages.hpp"
#include "bowen/transfer.hpp"

namespace bowen {

/// Every tunable of the command line. Defaults here are the documented ones.
struct RunConfig {
    int ell = 2;
    std::string c = "2+0i";
    double t = 1.5;
    /// Lift half-width; 0 means the subcommand default (50 for preimages, 4 otherwise).
    int K = 0;
    int n = 4;
    double prune = 1e-14;
    double tol = 1e-11;
    double accuracy = 5e-3;
    std::size_t budget = 5'000'000;
    /// 0 means BOWEN_DIM_THREADS, else the machine's parallelism.
    int threads = 0;
    double spacing = 0.5;
    double c_geo = 2.0;
    std::string output;
    std::string format = "csv";
    // preimages
    std::string w;
    // pressure / dim / sweep
    std::string tail = "quadrature";
    int nodes = 8;
    std::string method = "ratio";
    std::string base;
    // sweep
    std::string re = "1.6:2.4";
    std::string im = "-0.4:0.4";
    int nx = 5;
    int ny = 5;
    // classify
    std::string window = "-6:6";
    std::string res = "600x600";
    int max_iter = 200;
    // continue-orbit
    std::string to = "2+0.3i";
    int steps = 20;
    int lift = 1;
    std::string d1f = "exact";
    // expansion
    double radius = 0.1;
    int samples = 50;
    int n_max = 10;
    std::uint64_t seed = 20240601;
};

namespace detail {

template <class T>
T parse_value(const std::string& key, const std::string& text) {
    try {
        std::size_t used = 0;
        T v{};
        if constexpr (std::is_same_v<T, int>) v = std::stoi(text, &used);
        else if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) v = static_cast<T>(std::stoull(text, &used));
        else v = std::stod(text, &used);
        if (used != text.size()) throw InvalidArgument("");
        return v;
    } catch (const std::exception&) {
        throw InvalidArgument("config key '" + key + "': cannot parse '" + text + "'");
    }
}

/// Binds every config key to its field.
inline std::map<std::string, std::function<void(const std::string&)>> config_setters(RunConfig& rc) {
    std::map<std::string, std::function<void(const std::string&)>> s;
    auto num = [&s](const std::string& key, auto& field) {
        s[key] = [&field, key](const std::string& v) { field = parse_value<std::decay_t<decltype(field)>>(key, v); };
    };
    auto str = [&s](const std::string& key, std::string& field) {
        s[key] = [&field](const std::string& v) { field = v; };
    };
    num("ell", rc.ell);
    str("c", rc.c);
    num("t", rc.t);
    num("K", rc.K);
    num("n", rc.n);
    num("prune", rc.prune);
    num("tol", rc.tol);
    num("accuracy", rc.accuracy);
    num("budget", rc.budget);
    num("threads", rc.threads);
    num("spacing", rc.spacing);
    num("c-geo", rc.c_geo);
    str("output", rc.output);
    str("format", rc.format);
    str("w", rc.w);
    str("tail", rc.tail);
    num("nodes", rc.nodes);
    str("method", rc.method);
    str("base", rc.base);
    str("re", rc.re);
    str("im", rc.im);
    num("nx", rc.nx);
    num("ny", rc.ny);
    str("window", rc.window);
    str("res", rc.res);
    num("max-iter", rc.max_iter);
    str("to", rc.to);
    num("steps", rc.steps);
    num("lift", rc.lift);
    str("d1f", rc.d1f);
    num("radius", rc.radius);
    num("samples", rc.samples);
    num("n-max", rc.n_max);
    num("seed", rc.seed);
    return s;
}

}  // namespace detail

/// Applies config-file entries; unknown keys are usage errors.
inline void apply_config(RunConfig& rc, const std::map<std::string, std::string>& entries) {
    auto setters = detail::config_setters(rc);
    for (const auto& [k, v] : entries) {
        const auto it = setters.find(k);
        if (it == setters.end()) throw InvalidArgument("unknown config key '" + k + "'");
        it->second(v);
    }
}

inline TailModel parse_tail(const std::string& s) {
    if (s == "quadrature") return TailModel::Quadrature;
    if (s == "bound") return TailModel::Bound;
    throw InvalidArgument("--tail must be 'quadrature' or 'bound'");
}

inline MapParams params_of(const RunConfig& rc) { return MapParams(rc.ell, parse_complex(rc.c)); }

inline TransferOptions transfer_options_of(const RunConfig& rc) {
    TransferOptions o;
    o.tail = parse_tail(rc.tail);
    o.quadrature_nodes = rc.nodes;
    o.node_budget = rc.budget;
    o.threads = rc.threads;
    o.tol = rc.tol;
    o.c_geo = rc.c_geo;
    return o;
}

inline DimensionOptions dimension_options_of(const RunConfig& rc) {
    DimensionOptions o;
    o.pressure.transfer = transfer_options_of(rc);
    o.pressure.prune = rc.prune;
    if (!rc.base.empty()) o.pressure.base = CylinderPoint(parse_complex(rc.base));
    if (rc.K > 0) {
        o.scan.K = o.bisect.K = o.escalated.K = rc.K;
        for (auto& s : o.pressure.ladder) s.K = rc.K;
    }
    return o;
}

namespace detail {

struct Emitter {
    const RunConfig& rc;
    std::ostream& out;
    std::ostream& err;

    void artifact(const std::string& bytes) const {
        if (rc.output.empty()) out << bytes;
        else write_file(rc.output, bytes);
    }
    /// Summary goes to stdout unless stdout carries the artifact.
    std::ostream& summary() const { return rc.output.empty() ? err : out; }
};

inline int run_preimages(const RunConfig& rc, const Emitter& em) {
    const MapParams p = params_of(rc);
    const CylinderPoint w = rc.w.empty() ? CylinderPoint(p.log_c()) : CylinderPoint(parse_complex(rc.w));
    PreimageOptions po;
    po.tol = rc.tol;
    po.grid_spacing = rc.spacing;
    po.c_geo = rc.c_geo;
    const int K = rc.K > 0 ? rc.K : 50;
    const PreimageSet set = preimages(p, w, K, po);
    if (rc.format == "json") {
        json rows = json::array();
        for (const auto& b : set.branches)
            rows.push_back({{"k", b.k}, {"re", b.x.re()}, {"im", b.x.im()}, {"deriv_re", b.deriv.real()},
                            {"deriv_im", b.deriv.imag()}, {"residual", b.residual}});
        em.artifact(rows.dump(2) + "\n");
    } else if (rc.format == "csv") {
        em.artifact(preimages_csv(set));
    } else {
        throw InvalidArgument("--format must be csv or json");
    }
    em.summary() << "preimages: " << set.branches.size() << " branches for |k| <= " << K
                 << ", misses " << set.branch_misses.size() << "\n";
    return 0;
}

inline int run_pressure(const RunConfig& rc, const Emitter& em) {
    const MapParams p = params_of(rc);
    const TransferOptions opt = transfer_options_of(rc);
    const int K = rc.K > 0 ? rc.K : 4;
    PressureEstimate e;
    if (rc.method == "ratio") {
        const CylinderPoint base = rc.base.empty() ? default_base_point(p, rc.tol).point : CylinderPoint(parse_complex(rc.base));
        e = pressure_ratio(p, rc.t, base, rc.n, K, rc.prune, opt);
    } else if (rc.method == "zeta") {
        e = zeta_pressure(p, rc.t, rc.n, K, opt).estimate;
    } else {
        throw InvalidArgument("--method must be ratio or zeta");
    }
    em.artifact(pressure_json(e).dump(2) + "\n");
    em.summary() << "pressure: P(" << format_number(rc.t) << ") = " << format_number(e.value) << " +- "
                 << format_number(e.uncertainty) << "\n";
    return 0;
}

inline int run_dim(const RunConfig& rc, const Emitter& em) {
    const MapParams p = params_of(rc);
    const DimensionOptions opt = dimension_options_of(rc);
    const DimensionRecord r = bowen_dimension(p, rc.accuracy, opt);
    em.artifact(dimension_json(p, r, opt).dump(2) + "\n");
    em.summary() << "dim: t* = " << format_number(r.t_star) << " +- " << format_number(r.uncertainty) << "\n";
    return 0;
}

inline int run_sweep(const RunConfig& rc, const Emitter& em) {
    const auto [re_lo, re_hi] = parse_range(rc.re);
    const auto [im_lo, im_hi] = parse_range(rc.im);
    if (rc.nx < 1 || rc.ny < 1) throw InvalidArgument("--nx and --ny must be >= 1");
    GridSpec g;
    for (int i = 0; i < rc.nx; ++i) g.re.push_back(rc.nx == 1 ? 0.5 * (re_lo + re_hi) : re_lo + (re_hi - re_lo) * i / (rc.nx - 1));
    for (int i = 0; i < rc.ny; ++i) g.im.push_back(rc.ny == 1 ? 0.5 * (im_lo + im_hi) : im_lo + (im_hi - im_lo) * i / (rc.ny - 1));
    const SweepGrid grid = sweep_dimension(rc.ell, g, rc.accuracy, dimension_options_of(rc));
    em.artifact(sweep_csv(grid));
    em.summary() << "sweep: " << grid.records.size() << " cells, " << grid.failures.size() << " failed\n";
    return 0;
}

inline int run_classify(const RunConfig& rc, const Emitter& em) {
    const MapParams p = params_of(rc);
    const auto [lo, hi] = parse_range(rc.window);
    const auto [nx, ny] = parse_resolution(rc.res);
    if (rc.max_iter < 1) throw InvalidArgument("--max-iter must be >= 1");
    const ClassificationGrid g = classify_grid(p, lo, hi, nx, ny, rc.max_iter, rc.threads);
    em.artifact(pgm_bytes(g));
    std::size_t unresolved = 0;
    for (OrbitTag t : g.cells) unresolved += t == OrbitTag::Unresolved;
    em.summary() << "classify: " << nx << "x" << ny << ", unresolved fraction "
                 << format_number(static_cast<double>(unresolved) / g.cells.size()) << "\n";
    return 0;
}

inline int run_continue(const RunConfig& rc, const Emitter& em) {
    const MapParams p = params_of(rc);
    std::optional<PeriodicPoint> start;
    for (const auto& fp : fixed_points(p, rc.lift, rc.lift, rc.tol).points)
        if (fp.repelling()) {
            start = fp;
            break;
        }
    if (!start) throw NumericalFailure("no repelling fixed point on lift " + std::to_string(rc.lift));
    ContinuationOptions co;
    if (rc.d1f == "unit") co.d1f = ParamDerivativeMode::Unit;
    else if (rc.d1f != "exact") throw InvalidArgument("--d1f must be exact or unit");
    const ContinuationTrack tr = continue_periodic(p, *start, straight_path(p.c(), parse_complex(rc.to), rc.steps), co);
    em.artifact(continuation_csv(tr));
    const auto& last = tr.path.back();
    em.summary() << "continue-orbit: " << tr.path.size() << " entries, final |multiplier| = "
                 << format_number(std::abs(last.multiplier)) << (tr.aborted ? " (aborted: " + tr.report + ")" : "")
                 << "\n";
    return tr.aborted ? 3 : 0;
}

inline int run_expansion(const RunConfig& rc, const Emitter& em) {
    const MapParams p = params_of(rc);
    ExpansionOptions eo;
    eo.seed = rc.seed;
    eo.tol = rc.tol;
    const ExpansionEstimate e = expansion_constants(p, rc.radius, rc.samples, rc.n_max, eo);
    em.artifact(expansion_json(e).dump(2) + "\n");
    em.summary() << "expansion: kappa = " << format_number(e.kappa) << ", L = " << format_number(e.L) << "\n";
    return 0;
}

/// Value of --config in args, if present.
inline std::optional<std::string> find_config_flag(const std::vector<std::string>& args) {
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) return args[i + 1];
        if (args[i].rfind("--config=", 0) == 0) return args[i].substr(9);
    }
    return std::nullopt;
}

}  // namespace detail

/// Runs the application on args (without the program name). Exit codes: 0 success,
/// 2 usage error, 3 numerical failure. `resolved` receives the merged configuration.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
                   RunConfig* resolved = nullptr) {
    RunConfig rc;
    CLI::App app{"Bowen-formula dimension engine for the family l z + c - (l - 1) log c - e^z", "bowen-dim"};
    app.require_subcommand(1);
    std::string config_path;

    struct Sub {
        const char* name;
        const char* help;
        int (*run)(const RunConfig&, const detail::Emitter&);
    };
    const std::vector<Sub> subs{
        {"preimages", "Validated preimages of a point (CSV)", detail::run_preimages},
        {"pressure", "Pressure at one t (JSON)", detail::run_pressure},
        {"dim", "Bowen zero t* (JSON)", detail::run_dim},
        {"sweep", "Dimension over a parameter grid (CSV)", detail::run_sweep},
        {"classify", "Orbit classification grid (PGM)", detail::run_classify},
        {"continue-orbit", "Continue a repelling fixed point in c (CSV)", detail::run_continue},
        {"expansion", "Uniform expansion constants (JSON)", detail::run_expansion},
    };
    std::map<std::string, CLI::App*> handles;
    for (const Sub& s : subs) {
        CLI::App* sub = app.add_subcommand(s.name, s.help);
        handles[s.name] = sub;
        sub->add_option("--config", config_path, "key = value file, overridden by flags");
        sub->add_option("--ell", rc.ell, "Degree l >= 2");
        sub->add_option("--c", rc.c, "Parameter c as a+bi");
        sub->add_option("--tol", rc.tol, "Residual tolerance");
        sub->add_option("--threads", rc.threads, "Worker threads (1 = sequential)");
        sub->add_option("--output,-o", rc.output, "Artifact path (stdout when empty)");
        sub->add_option("--budget", rc.budget, "Node budget of preimage trees");
        sub->add_option("--K", rc.K, "Lift half-width");
        sub->add_option("--c-geo", rc.c_geo, "Geometric constant of the tail bound");
    }
    auto* pre = handles["preimages"];
    pre->add_option("--w", rc.w, "Target point a+bi (default log c)");
    pre->add_option("--spacing", rc.spacing, "Seed-grid spacing");
    pre->add_option("--format", rc.format, "csv or json");
    for (const char* name : {"pressure", "dim", "sweep"}) {
        auto* sub = handles[name];
        sub->add_option("--prune", rc.prune, "Relative pruning threshold per tree level");
        sub->add_option("--tail", rc.tail, "Omitted-branch model: quadrature or bound");
        sub->add_option("--nodes", rc.nodes, "Laguerre nodes of the tail quadrature");
        sub->add_option("--base", rc.base, "Tree base point a+bi (default repelling fixed point)");
    }
    auto* pr = handles["pressure"];
    pr->add_option("--t", rc.t, "Exponent t > 1");
    pr->add_option("--n", rc.n, "Tree depth or period");
    pr->add_option("--method", rc.method, "ratio or zeta");
    for (const char* name : {"dim", "sweep"}) handles[name]->add_option("--accuracy", rc.accuracy, "Bracket width in t");
    auto* sw = handles["sweep"];
    sw->add_option("--re", rc.re, "Re c range lo:hi");
    sw->add_option("--im", rc.im, "Im c range lo:hi");
    sw->add_option("--nx", rc.nx, "Points along Re c");
    sw->add_option("--ny", rc.ny, "Points along Im c");
    auto* cl = handles["classify"];
    cl->add_option("--window", rc.window, "Re z window lo:hi");
    cl->add_option("--res", rc.res, "Resolution NxM");
    cl->add_option("--max-iter", rc.max_iter, "Iteration budget per cell");
    auto* co = handles["continue-orbit"];
    co->add_option("--to", rc.to, "Final parameter a+bi");
    co->add_option("--steps", rc.steps, "Number of equal steps");
    co->add_option("--lift", rc.lift, "Lift index of the starting fixed point");
    co->add_option("--d1f", rc.d1f, "Parameter derivative: exact or unit");
    auto* ex = handles["expansion"];
    ex->add_option("--radius", rc.radius, "Parameter window radius");
    ex->add_option("--samples", rc.samples, "Sampled words per parameter");
    ex->add_option("--n-max", rc.n_max, "Longest word");
    ex->add_option("--seed", rc.seed, "Random seed");

    try {
        if (auto path = detail::find_config_flag(args)) apply_config(rc, read_config_file(*path));
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        err << "usage error: " << e.what() << "\n";
        return 2;
    }
    if (resolved) *resolved = rc;

    const detail::Emitter em{rc, out, err};
    try {
        for (const Sub& s : subs)
            if (handles[s.name]->parsed()) return s.run(rc, em);
    } catch (const NoBracket& e) {
        err << json{{"error", e.what()}, {"trace", trace_json(e.trace())}}.dump() << "\n";
        return 3;
    } catch (const AccuracyNotReached& e) {
        err << json{{"error", e.what()}, {"partial", pressure_json(e.partial())}}.dump() << "\n";
        return 3;
    } catch (const BudgetExceeded& e) {
        err << json{{"error", e.what()}, {"partial_value", json_number(e.partial_value())}}.dump() << "\n";
        return 3;
    } catch (const NumericalFailure& e) {
        err << json{{"error", e.what()}}.dump() << "\n";
        return 3;
    } catch (const TNotSummable& e) {
        err << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        err << "usage error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}

}  // namespace bowen
