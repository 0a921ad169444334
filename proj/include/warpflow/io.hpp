#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "warpflow/bohm.hpp"
#include "warpflow/flow.hpp"
#include "warpflow/profile.hpp"
#include "warpflow/spectrum.hpp"
#include "warpflow/version.hpp"

namespace warpflow {

class missing_artifact_error : public std::runtime_error {
public:
    explicit missing_artifact_error(const std::string& what) : std::runtime_error(what) {}
};

namespace io {

using nlohmann::json;

// shortest-exact float formatting, locale independent
inline std::string fmt(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::uint64_t fnv1a(const std::string& s)
{
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string hash_hex(const std::string& s)
{
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a(s)));
    return buf;
}

inline void write_text(const std::filesystem::path& path, const std::string& text)
{
    std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out << text;
}

inline std::string read_text(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw missing_artifact_error("missing artifact: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// profile CSV: header x,v0,v1,v2,v0x,v1x,v2x,v1xx,v2xx, one row per grid point
inline void write_profile_csv(const std::filesystem::path& path, const WarpedProfile& p)
{
    std::ostringstream out;
    out << "x,v0,v1,v2,v0x,v1x,v2x,v1xx,v2xx\n";
    for (std::size_t i = 0; i < p.size(); ++i)
        out << fmt(p.grid[i]) << ',' << fmt(p.v0[i]) << ',' << fmt(p.v1[i]) << ',' << fmt(p.v2[i]) << ','
            << fmt(p.v0x[i]) << ',' << fmt(p.v1x[i]) << ',' << fmt(p.v2x[i]) << ',' << fmt(p.v1xx[i])
            << ',' << fmt(p.v2xx[i]) << '\n';
    write_text(path, out.str());
}

// JSON sidecar: fiber dimensions and origin series (odd/even coefficient lists)
inline void write_profile_sidecar(const std::filesystem::path& path, const WarpedProfile& p)
{
    json j;
    j["n1"] = p.n1;
    j["n2"] = p.n2;
    j["origin_series"]["v1_odd"] = p.origin.v1_odd();
    j["origin_series"]["v2_even"] = p.origin.v2_even();
    write_text(path, j.dump(2) + "\n");
}

inline WarpedProfile read_profile(const std::filesystem::path& csv_path, const std::filesystem::path& sidecar_path)
{
    const std::string text = read_text(csv_path);
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty profile CSV: " + csv_path.string());
    if (line != "x,v0,v1,v2,v0x,v1x,v2x,v1xx,v2xx")
        throw std::runtime_error("unexpected profile CSV header in " + csv_path.string());
    WarpedProfile p;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        double vals[9];
        char comma;
        for (int c = 0; c < 9; ++c) {
            if (!(row >> vals[c])) throw std::runtime_error("bad profile CSV row: " + line);
            if (c < 8 && !(row >> comma)) throw std::runtime_error("bad profile CSV row: " + line);
        }
        p.grid.push_back(vals[0]);
        p.v0.push_back(vals[1]);
        p.v1.push_back(vals[2]);
        p.v2.push_back(vals[3]);
        p.v0x.push_back(vals[4]);
        p.v1x.push_back(vals[5]);
        p.v2x.push_back(vals[6]);
        p.v1xx.push_back(vals[7]);
        p.v2xx.push_back(vals[8]);
    }
    const json j = json::parse(read_text(sidecar_path));
    p.n1 = j.at("n1").get<int>();
    p.n2 = j.at("n2").get<int>();
    if (j.contains("origin_series")) {
        p.origin = OriginSeries::from_parity_lists(
            j["origin_series"].value("v1_odd", std::vector<double>{}),
            j["origin_series"].value("v2_even", std::vector<double>{}));
    }
    p.validate();
    return p;
}

inline void write_tensor_csv(const std::filesystem::path& path, const Field& grid, const TensorPerturbation& t)
{
    std::ostringstream out;
    out << "x,eta0,eta1,eta2\n";
    for (std::size_t i = 0; i < t.size(); ++i)
        out << fmt(grid[i]) << ',' << fmt(t.eta0[i]) << ',' << fmt(t.eta1[i]) << ',' << fmt(t.eta2[i]) << '\n';
    write_text(path, out.str());
}

inline TensorPerturbation read_tensor_csv(const std::filesystem::path& path, std::size_t expected_size)
{
    const std::string text = read_text(path);
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    if (line != "x,eta0,eta1,eta2") throw std::runtime_error("unexpected tensor CSV header in " + path.string());
    TensorPerturbation t;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        double x, e0, e1, e2;
        char c;
        if (!(row >> x >> c >> e0 >> c >> e1 >> c >> e2)) throw std::runtime_error("bad tensor CSV row: " + line);
        t.eta0.push_back(e0);
        t.eta1.push_back(e1);
        t.eta2.push_back(e2);
    }
    if (expected_size && t.size() != expected_size)
        throw std::runtime_error("tensor CSV size mismatch in " + path.string());
    return t;
}

inline json cone_fit_json(const ConeFit& f)
{
    json j;
    j["c1_hat"] = f.c1_hat;
    j["c2_hat"] = f.c2_hat;
    j["rel_err1"] = f.rel_err1;
    j["rel_err2"] = f.rel_err2;
    j["rate_estimate"] = f.rate_estimate;
    j["fit_warning"] = f.fit_warning;
    if (f.fit_warning) j["warning"] = f.warning;
    return j;
}

inline json spectrum_json(const std::vector<EigenPair>& modes)
{
    json j;
    j["lambdas"] = json::array();
    j["residuals"] = json::array();
    j["decay_thetas"] = json::array();
    j["gaps"] = json::array();
    for (const EigenPair& m : modes) {
        j["lambdas"].push_back(m.lambda);
        j["residuals"].push_back(m.residual);
        j["decay_thetas"].push_back(m.decay_theta);
        j["gaps"].push_back(m.multiplicity_gap);
    }
    return j;
}

inline void write_flow_snapshot_csv(const std::filesystem::path& path, const FlowState& s)
{
    std::ostringstream out;
    out << "x,w0,w1,w2\n";
    const Field& x = s.background->grid;
    for (std::size_t i = 0; i < s.size(); ++i)
        out << fmt(x[i]) << ',' << fmt(s.w0[i]) << ',' << fmt(s.w1[i]) << ',' << fmt(s.w2[i]) << '\n';
    write_text(path, out.str());
}

inline json flow_manifest_json(const FlowTrajectory& traj, double rate_estimate)
{
    json j;
    j["times"] = traj.times;
    j["zero_counts"] = traj.zero_counts;
    j["norms"] = traj.norms;
    j["rate_estimate"] = rate_estimate;
    j["dt"] = traj.dt_used;
    j["status"] = traj.status;
    return j;
}

// run manifest: config hash, versions, tolerances in force, warnings
inline void write_manifest(const std::filesystem::path& dir, const std::string& command,
                           const json& canonical_config, const json& tolerances,
                           const std::vector<std::string>& warnings)
{
    json j;
    j["command"] = command;
    j["config_hash"] = hash_hex(canonical_config.dump());
    j["config"] = canonical_config;
    j["versions"]["warpflow"] = version_string();
    j["tolerances"] = tolerances;
    j["warnings"] = warnings;
    write_text(dir / "manifest.json", j.dump(2) + "\n");
}

} // namespace io
} // namespace warpflow
