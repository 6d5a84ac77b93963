#pragma once

// Text and image formats: complex-number flags, key = value config files, CSV/JSON
// tables with 17 significant digits, and P5 graymaps of the orbit classification.
//
// JSON support needs nlohmann/json (vendor/json.hpp) on the include path.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "bowen/cylinder.hpp"
#include "bowen/dimension.hpp"
#include "bowen/errors.hpp"
#include "bowen/map.hpp"
#include "bowen/parallel.hpp"
#include "bowen/parameter.hpp"
#include "bowen/preimages.hpp"
#include "bowen/transfer.hpp"

namespace bowen {

using json = nlohmann::json;

class IoError : public Error {
public:
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Numbers

/// Round-trip decimal form: 17 significant digits; "nan", "inf", "-inf" otherwise.
inline std::string format_number(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline std::string format_complex(cplx z) {
    std::string im = format_number(z.imag());
    if (im.front() != '-') im = "+" + im;
    return format_number(z.real()) + im + "i";
}

/// Parses "a+bi", "a-bi", "a", "bi" (no spaces).
inline cplx parse_complex(const std::string& s) {
    static const std::string num = R"([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)";
    static const std::regex both("^(" + num + R"()([+-](?:(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)?)i$)");
    static const std::regex real_only("^(" + num + ")$");
    static const std::regex imag_only("^(" + num + ")i$");
    std::smatch m;
    try {
        if (std::regex_match(s, m, both)) {
            const std::string im = m[2].str();
            return {std::stod(m[1].str()), im.size() == 1 ? (im == "-" ? -1.0 : 1.0) : std::stod(im)};
        }
        if (std::regex_match(s, m, real_only)) return {std::stod(m[1].str()), 0.0};
        if (std::regex_match(s, m, imag_only)) return {0.0, std::stod(m[1].str())};
    } catch (const std::out_of_range&) {
    }
    throw InvalidArgument("cannot parse complex number '" + s + "' (expected a+bi)");
}

/// "lo:hi" with lo < hi.
inline std::pair<double, double> parse_range(const std::string& s) {
    const auto colon = s.find(':');
    if (colon == std::string::npos) throw InvalidArgument("expected lo:hi, got '" + s + "'");
    try {
        std::size_t a = 0, b = 0;
        const double lo = std::stod(s.substr(0, colon), &a);
        const double hi = std::stod(s.substr(colon + 1), &b);
        if (a != colon || b != s.size() - colon - 1 || !(lo < hi)) throw InvalidArgument("");
        return {lo, hi};
    } catch (const std::exception&) {
        throw InvalidArgument("expected lo:hi with lo < hi, got '" + s + "'");
    }
}

/// "NxM" with N, M >= 1.
inline std::pair<int, int> parse_resolution(const std::string& s) {
    static const std::regex re(R"(^(\d+)x(\d+)$)");
    std::smatch m;
    if (!std::regex_match(s, m, re)) throw InvalidArgument("expected NxM, got '" + s + "'");
    const int nx = std::stoi(m[1].str()), ny = std::stoi(m[2].str());
    if (nx < 1 || ny < 1) throw InvalidArgument("resolution must be at least 1x1");
    return {nx, ny};
}

// ---------------------------------------------------------------------------
// Config files

/// Flat `key = value` lines; `#` starts a comment; blank lines ignored.
inline std::map<std::string, std::string> parse_config_text(const std::string& text) {
    std::map<std::string, std::string> out;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return std::string();
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    };
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw InvalidArgument("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) throw InvalidArgument("config line " + std::to_string(lineno) + ": empty key");
        out[key] = trim(line.substr(eq + 1));
    }
    return out;
}

inline std::map<std::string, std::string> read_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config_text(ss.str());
}

// ---------------------------------------------------------------------------
// Tables

inline std::string preimages_csv(const PreimageSet& set) {
    std::string out = "k,re,im,deriv_re,deriv_im,residual\n";
    for (const auto& b : set.branches) {
        out += std::to_string(b.k) + ',' + format_number(b.x.re()) + ',' + format_number(b.x.im()) + ',' +
               format_number(b.deriv.real()) + ',' + format_number(b.deriv.imag()) + ',' +
               format_number(b.residual) + '\n';
    }
    return out;
}

inline std::string continuation_csv(const ContinuationTrack& track) {
    std::string out = "c_re,c_im,z_re,z_im,mult_abs,residual\n";
    for (const auto& e : track.path) {
        out += format_number(e.c.real()) + ',' + format_number(e.c.imag()) + ',' + format_number(e.z.re()) +
               ',' + format_number(e.z.im()) + ',' + format_number(std::abs(e.multiplier)) + ',' +
               format_number(e.residual) + '\n';
    }
    return out;
}

inline std::string sweep_csv(const SweepGrid& g) {
    std::string out = "c_re,c_im,t_star,uncertainty,t_lo,t_hi,grad_re,grad_im,fit_residual,sym_defect\n";
    auto diag = [](const DimensionRecord& r, const char* key) {
        const auto it = r.diagnostics.find(key);
        return it == r.diagnostics.end() ? std::numeric_limits<double>::quiet_NaN() : it->second;
    };
    for (const auto& r : g.records) {
        out += format_number(r.c.real()) + ',' + format_number(r.c.imag()) + ',' + format_number(r.t_star) + ',' +
               format_number(r.uncertainty) + ',' + format_number(r.t_lo) + ',' + format_number(r.t_hi) + ',' +
               format_number(diag(r, "grad_re")) + ',' + format_number(diag(r, "grad_im")) + ',' +
               format_number(diag(r, "fit_residual")) + ',' + format_number(diag(r, "sym_defect")) + '\n';
    }
    return out;
}

/// Splits CSV text into rows of fields (no quoting is ever produced here).
inline std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> row;
        std::string field;
        std::istringstream ls(line);
        while (std::getline(ls, field, ',')) row.push_back(field);
        rows.push_back(row);
    }
    return rows;
}

/// Finite numbers as JSON numbers, everything else as null.
inline json json_number(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

inline json pressure_json(const PressureEstimate& e) {
    return json{{"t", json_number(e.t)},
                {"value", json_number(e.value)},
                {"error", json_number(e.uncertainty)},
                {"n", e.n},
                {"K", e.K},
                {"prune", json_number(e.prune)},
                {"base", {{"re", json_number(e.base.re())}, {"im", json_number(e.base.im())}}},
                {"method", to_string(e.method)},
                {"tail", to_string(e.tail)},
                {"interval", json_number(e.interval)},
                {"drift", json_number(e.drift)},
                {"drift_is_heuristic", true}};
}

inline json dimension_json(const MapParams& p, const DimensionRecord& r, const DimensionOptions& opt) {
    json diag = json::object();
    for (const auto& [k, v] : r.diagnostics) diag[k] = json_number(v);
    auto setting = [](const TreeSetting& s) { return json{{"n", s.n}, {"K", s.K}}; };
    return json{{"ell", p.ell()},
                {"c_re", json_number(p.c().real())},
                {"c_im", json_number(p.c().imag())},
                {"t_star", json_number(r.t_star)},
                {"uncertainty", json_number(r.uncertainty)},
                {"t_lo", json_number(r.t_lo)},
                {"t_hi", json_number(r.t_hi)},
                {"evaluations", r.evaluations},
                {"method_params",
                 {{"method", "ratio"},
                  {"tail", to_string(opt.pressure.transfer.tail)},
                  {"quadrature_nodes", opt.pressure.transfer.quadrature_nodes},
                  {"prune", json_number(opt.pressure.prune)},
                  {"scan", setting(opt.scan)},
                  {"bisect", setting(opt.bisect)},
                  {"escalated", setting(opt.escalated)},
                  {"node_budget", opt.pressure.transfer.node_budget}}},
                {"limited_by_truncation", r.limited_by_truncation},
                {"outside_unit_interval", r.outside_unit_interval},
                {"diagnostics", diag}};
}

inline json trace_json(const std::vector<PressureEstimate>& trace) {
    json out = json::array();
    for (const auto& e : trace) out.push_back(pressure_json(e));
    return out;
}

inline json expansion_json(const ExpansionEstimate& e) {
    return json{{"L", json_number(e.L)},
                {"kappa", json_number(e.kappa)},
                {"L_inv", json_number(e.L_inv)},
                {"beta", json_number(e.beta)},
                {"samples", e.samples},
                {"n_max", e.n_max},
                {"c_re", json_number(e.center.real())},
                {"c_im", json_number(e.center.imag())},
                {"radius", json_number(e.radius)},
                {"observations", e.observations.size()},
                {"certifies_expansion", e.certifies_expansion()}};
}

// ---------------------------------------------------------------------------
// Orbit classification grids

struct ClassificationGrid {
    double re_min = -6.0;
    double re_max = 6.0;
    int nx = 0;
    int ny = 0;
    /// Row-major, row 0 at the top (Im near pi).
    std::vector<OrbitTag> cells;

    OrbitTag at(int ix, int iy) const { return cells[static_cast<std::size_t>(iy) * nx + ix]; }
};

/// Cell center of (ix, iy): Re across [re_min, re_max], Im down the full strip.
inline CylinderPoint grid_cell_center(const ClassificationGrid& g, int ix, int iy) {
    const double re = g.re_min + (ix + 0.5) * (g.re_max - g.re_min) / g.nx;
    const double im = pi - (iy + 0.5) * two_pi / g.ny;
    return {re, im};
}

inline ClassificationGrid classify_grid(const MapParams& p, double re_min, double re_max, int nx, int ny,
                                        int max_iter, int threads = 1) {
    if (!(re_min < re_max)) throw InvalidArgument("classification window needs re_min < re_max");
    if (nx < 1 || ny < 1) throw InvalidArgument("classification grid needs at least 1x1 cells");
    ClassificationGrid g;
    g.re_min = re_min;
    g.re_max = re_max;
    g.nx = nx;
    g.ny = ny;
    g.cells.assign(static_cast<std::size_t>(nx) * ny, OrbitTag::Unresolved);
    const double radius = default_attraction_radius(p);
    parallel_for(static_cast<std::size_t>(ny), resolve_threads(threads), [&](std::size_t iy) {
        for (int ix = 0; ix < nx; ++ix)
            g.cells[iy * nx + ix] = classify_orbit(p, grid_cell_center(g, ix, static_cast<int>(iy)), max_iter, radius).tag;
    });
    return g;
}

inline std::uint8_t gray_level(OrbitTag tag) noexcept {
    switch (tag) {
        case OrbitTag::AttractedToLogC: return 220;
        case OrbitTag::BakerEscape: return 160;
        case OrbitTag::EscapePlusInfinity: return 90;
        case OrbitTag::Unresolved: return 0;
    }
    return 0;
}

/// Binary P5 graymap, maxval 255.
inline std::string pgm_bytes(const ClassificationGrid& g) {
    if (g.nx < 1 || g.ny < 1 || g.cells.size() != static_cast<std::size_t>(g.nx) * g.ny)
        throw InvalidArgument("classification grid is malformed");
    std::string out = "P5\n" + std::to_string(g.nx) + " " + std::to_string(g.ny) + "\n255\n";
    out.reserve(out.size() + g.cells.size());
    for (OrbitTag t : g.cells) out.push_back(static_cast<char>(gray_level(t)));
    return out;
}

inline void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write to '" + path + "' failed");
}

inline void render_grid(const ClassificationGrid& g, const std::string& path) { write_file(path, pgm_bytes(g)); }

inline std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

}  // namespace bowen
