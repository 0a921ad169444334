#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "warpflow/bohm.hpp"

namespace warpflow {

// configuration problem: reported as "path: reason", mapped to exit code 1
class config_error : public std::runtime_error {
public:
    explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

// Batch run configuration. Every option defaults; unknown keys are rejected
// with their path.
struct RunConfig {
    BohmOptions bohm;

    struct Spectral {
        int modes = 6;
        double refine_L = 400.0;
        std::size_t refine_grid = 4096;
        bool study = true;           // run the L/grid refinement table
        double count_window = 1.0;   // interval [-count_window, 0] for the shadow count
    } spectral;

    struct Flow {
        double eps = 1e-3;
        int mode = 0;
        double t_final = 1.0;
        int snapshots = 50;
        double cfl = 0.2;
    } flow;

    struct Manifold {
        std::string map = "toy-quadratic";  // toy-quadratic | toy-cubic | toy-linear | flow
        double v = 0.1;
        int depth = 30;
        double damping = 0.5;
        int dim_s = 2;
        int dim_u = 1;
        double dt = 1.0;
    } manifold;

    std::string output_dir = "out";

    static RunConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
    void apply_override(const std::string& dotted_key, const std::string& value);
    void validate() const;
};

namespace detail {

template <typename T>
void take(const nlohmann::json& j, const std::string& section, const std::string& key, T& out)
{
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw config_error(section + "." + key + ": wrong type (" + e.what() + ")");
    }
}

inline void reject_unknown(const nlohmann::json& j, const std::string& section,
                           const std::vector<std::string>& known)
{
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (const auto& k : known)
            if (k == key) ok = true;
        if (!ok) throw config_error((section.empty() ? key : section + "." + key) + ": unknown key");
    }
}

} // namespace detail

inline RunConfig RunConfig::from_json(const nlohmann::json& j)
{
    if (!j.is_object()) throw config_error("(root): config must be a JSON object");
    detail::reject_unknown(j, "", {"bohm", "spectral", "flow", "manifold", "output_dir"});
    RunConfig c;
    if (j.contains("bohm")) {
        const auto& b = j.at("bohm");
        if (!b.is_object()) throw config_error("bohm: must be an object");
        detail::reject_unknown(b, "bohm",
                               {"n1", "n2", "c", "x_start", "L", "rk_tol", "series_order", "grid_points"});
        detail::take(b, "bohm", "n1", c.bohm.n1);
        detail::take(b, "bohm", "n2", c.bohm.n2);
        detail::take(b, "bohm", "c", c.bohm.c);
        detail::take(b, "bohm", "x_start", c.bohm.x_start);
        detail::take(b, "bohm", "L", c.bohm.L);
        detail::take(b, "bohm", "rk_tol", c.bohm.rk_tol);
        detail::take(b, "bohm", "series_order", c.bohm.series_order);
        detail::take(b, "bohm", "grid_points", c.bohm.grid_points);
    }
    if (j.contains("spectral")) {
        const auto& s = j.at("spectral");
        if (!s.is_object()) throw config_error("spectral: must be an object");
        detail::reject_unknown(s, "spectral", {"modes", "refine_L", "refine_grid", "study", "count_window"});
        detail::take(s, "spectral", "modes", c.spectral.modes);
        detail::take(s, "spectral", "refine_L", c.spectral.refine_L);
        detail::take(s, "spectral", "refine_grid", c.spectral.refine_grid);
        detail::take(s, "spectral", "study", c.spectral.study);
        detail::take(s, "spectral", "count_window", c.spectral.count_window);
    }
    if (j.contains("flow")) {
        const auto& f = j.at("flow");
        if (!f.is_object()) throw config_error("flow: must be an object");
        detail::reject_unknown(f, "flow", {"eps", "mode", "t_final", "snapshots", "cfl"});
        detail::take(f, "flow", "eps", c.flow.eps);
        detail::take(f, "flow", "mode", c.flow.mode);
        detail::take(f, "flow", "t_final", c.flow.t_final);
        detail::take(f, "flow", "snapshots", c.flow.snapshots);
        detail::take(f, "flow", "cfl", c.flow.cfl);
    }
    if (j.contains("manifold")) {
        const auto& m = j.at("manifold");
        if (!m.is_object()) throw config_error("manifold: must be an object");
        detail::reject_unknown(m, "manifold", {"map", "v", "depth", "damping", "dim_s", "dim_u", "dt"});
        detail::take(m, "manifold", "map", c.manifold.map);
        detail::take(m, "manifold", "v", c.manifold.v);
        detail::take(m, "manifold", "depth", c.manifold.depth);
        detail::take(m, "manifold", "damping", c.manifold.damping);
        detail::take(m, "manifold", "dim_s", c.manifold.dim_s);
        detail::take(m, "manifold", "dim_u", c.manifold.dim_u);
        detail::take(m, "manifold", "dt", c.manifold.dt);
    }
    detail::take(j, "", "output_dir", c.output_dir);
    return c;
}

inline nlohmann::json RunConfig::to_json() const
{
    nlohmann::json j;
    j["bohm"] = {{"n1", bohm.n1},       {"n2", bohm.n2},
                 {"c", bohm.c},         {"x_start", bohm.x_start},
                 {"L", bohm.L},         {"rk_tol", bohm.rk_tol},
                 {"series_order", bohm.series_order}, {"grid_points", bohm.grid_points}};
    j["spectral"] = {{"modes", spectral.modes},
                     {"refine_L", spectral.refine_L},
                     {"refine_grid", spectral.refine_grid},
                     {"study", spectral.study},
                     {"count_window", spectral.count_window}};
    j["flow"] = {{"eps", flow.eps},
                 {"mode", flow.mode},
                 {"t_final", flow.t_final},
                 {"snapshots", flow.snapshots},
                 {"cfl", flow.cfl}};
    j["manifold"] = {{"map", manifold.map}, {"v", manifold.v},         {"depth", manifold.depth},
                     {"damping", manifold.damping}, {"dim_s", manifold.dim_s}, {"dim_u", manifold.dim_u},
                     {"dt", manifold.dt}};
    j["output_dir"] = output_dir;
    return j;
}

inline void RunConfig::apply_override(const std::string& dotted_key, const std::string& value)
{
    const auto dot = dotted_key.find('.');
    nlohmann::json parsed;
    try {
        parsed = nlohmann::json::parse(value);
    } catch (const nlohmann::json::exception&) {
        parsed = value;  // bare string
    }
    nlohmann::json patch = to_json();
    if (dot == std::string::npos) {
        patch[dotted_key] = parsed;
    } else {
        const std::string section = dotted_key.substr(0, dot);
        const std::string key = dotted_key.substr(dot + 1);
        if (!patch.contains(section)) throw config_error(section + ": unknown section in override");
        patch[section][key] = parsed;
    }
    *this = from_json(patch);
}

inline void RunConfig::validate() const
{
    try {
        bohm.validate();
    } catch (const std::invalid_argument& e) {
        throw config_error(std::string("bohm: ") + e.what());
    }
    if (spectral.modes < 1) throw config_error("spectral.modes: must be >= 1");
    if (spectral.refine_grid < 16) throw config_error("spectral.refine_grid: must be >= 16");
    if (!(spectral.count_window > 0)) throw config_error("spectral.count_window: must be > 0");
    if (!(flow.t_final > 0)) throw config_error("flow.t_final: must be > 0");
    if (flow.snapshots < 3) throw config_error("flow.snapshots: must be >= 3");
    if (!(flow.cfl > 0) || flow.cfl > 1.0) throw config_error("flow.cfl: must lie in (0, 1]");
    if (flow.mode < 0) throw config_error("flow.mode: must be >= 0");
    if (manifold.depth < 2) throw config_error("manifold.depth: must be >= 2");
    if (!(manifold.damping > 0) || manifold.damping > 1.0)
        throw config_error("manifold.damping: must lie in (0, 1]");
    if (manifold.dim_u < 1) throw config_error("manifold.dim_u: must be >= 1");
    if (manifold.dim_s < 0) throw config_error("manifold.dim_s: must be >= 0");
    if (!(manifold.dt > 0)) throw config_error("manifold.dt: must be > 0");
    if (manifold.map != "toy-quadratic" && manifold.map != "toy-cubic" && manifold.map != "toy-linear" &&
        manifold.map != "flow")
        throw config_error("manifold.map: unknown map '" + manifold.map + "'");
    if (output_dir.empty()) throw config_error("output_dir: must not be empty");
}

} // namespace warpflow
