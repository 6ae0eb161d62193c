#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "bandlab/graph.hpp"
#include "bandlab/profile.hpp"

namespace bandlab {

using nlohmann::json;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// write-then-rename so readers never observe a half-written file
inline void atomic_write_text(const std::filesystem::path& path, const std::string& text) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("atomic_write_text: cannot open " + tmp.string());
        out << text;
        if (!out) throw std::runtime_error("atomic_write_text: write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline std::string format_g17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                      const std::vector<std::vector<double>>& rows,
                      const std::string& preamble = "") {
    std::string text;
    if (!preamble.empty()) text += "# " + preamble + "\n";
    for (size_t i = 0; i < header.size(); ++i) {
        if (i) text += ',';
        text += header[i];
    }
    text += '\n';
    for (const auto& row : rows) {
        if (row.size() != header.size())
            throw std::invalid_argument("write_csv: row width does not match header");
        for (size_t i = 0; i < row.size(); ++i) {
            if (i) text += ',';
            text += format_g17(row[i]);
        }
        text += '\n';
    }
    atomic_write_text(path, text);
}

inline void write_json(const std::filesystem::path& path, const json& j) {
    atomic_write_text(path, j.dump(2) + "\n");
}

// bare two-column numeric series for plotting tools
inline void write_plotdata(const std::filesystem::path& path, const std::vector<double>& xs,
                           const std::vector<double>& ys) {
    if (xs.size() != ys.size())
        throw std::invalid_argument("write_plotdata: column lengths differ");
    std::string text;
    for (size_t i = 0; i < xs.size(); ++i)
        text += format_g17(xs[i]) + "," + format_g17(ys[i]) + "\n";
    atomic_write_text(path, text);
}

inline json load_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_json: cannot open " + path.string());
    json j;
    in >> j;
    return j;
}

// ---- graph serialization ------------------------------------------------

inline EdgeKind edge_kind_from_string(const std::string& s) {
    if (s == "Gplus") return EdgeKind::Gplus;
    if (s == "Gminus") return EdgeKind::Gminus;
    if (s == "S") return EdgeKind::S;
    if (s == "Splus") return EdgeKind::Splus;
    if (s == "Sminus") return EdgeKind::Sminus;
    if (s == "Theta") return EdgeKind::Theta;
    if (s == "LabelledTheta") return EdgeKind::LabelledTheta;
    if (s == "Dotted") return EdgeKind::Dotted;
    if (s == "CrossDotted") return EdgeKind::CrossDotted;
    if (s == "P" || s == "Q")
        throw UnsupportedLabel("edge kind " + s + " (conditioning labels) is not representable");
    throw std::invalid_argument("unknown edge kind " + s);
}

inline json graph_to_json(const AtomicGraph& g) {
    json j;
    j["name"] = g.name;
    j["atoms"] = json::array();
    for (const Atom& a : g.atoms) j["atoms"].push_back({{"id", a.id}, {"external", a.external}});
    j["edges"] = json::array();
    for (const GraphEdge& e : g.edges) {
        json je = {{"a", e.a}, {"b", e.b}, {"kind", edge_kind_name(e.kind)}};
        if (e.kind == EdgeKind::LabelledTheta) je["label_order"] = e.label_order;
        j["edges"].push_back(je);
    }
    j["weights"] = json::array();
    for (const GraphWeight& w : g.weights)
        j["weights"].push_back({{"atom", w.atom}, {"charge", w.charge}, {"light", w.light}});
    j["coeff"] = {{"scalar_re", g.coeff.scalar.real()},
                  {"scalar_im", g.coeff.scalar.imag()},
                  {"pow_m", g.coeff.pow_m},
                  {"pow_mbar", g.coeff.pow_mbar},
                  {"inv_one_minus_m2", g.coeff.inv_one_minus_m2},
                  {"inv_one_minus_mbar2", g.coeff.inv_one_minus_mbar2},
                  {"inv_one_minus_abs2", g.coeff.inv_one_minus_abs2},
                  {"placeholder", g.coeff.placeholder}};
    return j;
}

inline AtomicGraph graph_from_json(const json& j) {
    AtomicGraph g;
    g.name = j.at("name").get<std::string>();
    for (const json& ja : j.at("atoms"))
        g.atoms.push_back({ja.at("id").get<int>(), ja.at("external").get<bool>()});
    for (const json& je : j.at("edges")) {
        GraphEdge e;
        e.a = je.at("a").get<int>();
        e.b = je.at("b").get<int>();
        e.kind = edge_kind_from_string(je.at("kind").get<std::string>());
        e.label_order = je.value("label_order", 0);
        g.edges.push_back(e);
    }
    if (j.contains("weights"))
        for (const json& jw : j.at("weights"))
            g.weights.push_back({jw.at("atom").get<int>(), jw.at("charge").get<int>(),
                                 jw.at("light").get<bool>()});
    if (j.contains("coeff")) {
        const json& jc = j.at("coeff");
        g.coeff.scalar = cplx(jc.value("scalar_re", 1.0), jc.value("scalar_im", 0.0));
        g.coeff.pow_m = jc.value("pow_m", 0);
        g.coeff.pow_mbar = jc.value("pow_mbar", 0);
        g.coeff.inv_one_minus_m2 = jc.value("inv_one_minus_m2", 0);
        g.coeff.inv_one_minus_mbar2 = jc.value("inv_one_minus_mbar2", 0);
        g.coeff.inv_one_minus_abs2 = jc.value("inv_one_minus_abs2", 0);
        g.coeff.placeholder = jc.value("placeholder", false);
    }
    validate_graph(g);
    return g;
}

// ---- run configuration --------------------------------------------------

struct RunConfig {
    int d = 1;
    int L = 32;
    int W = 4;
    std::string family = "gaussian";
    double shape = 1.0;
    double c_psi = 0.3;
    double E = 0.0;
    double eta = 0.5;
    std::uint64_t seed = 1;
    int samples = 100;
    int threads = 1;
    int order = 2;
    int pairs = 10;
    int steps = 100;
    std::string tag = "A2";
    std::string out;

    ProfileSpec profile_spec() const {
        ProfileSpec spec;
        spec.family = family == "bump" ? ProfileFamily::bump : ProfileFamily::gaussian;
        spec.shape = shape;
        spec.c_psi = c_psi;
        spec.W = W;
        return spec;
    }
    TorusLattice lattice() const { return TorusLattice(d, L); }
    cplx z() const { return cplx(E, eta); }
};

inline RunConfig parse_run_config(const json& j) {
    RunConfig cfg;
    auto take_int = [&](const char* key, int& dst) {
        if (!j.contains(key)) return;
        if (!j.at(key).is_number_integer())
            throw ConfigError(std::string("config key '") + key + "' must be an integer");
        dst = j.at(key).get<int>();
    };
    auto take_num = [&](const char* key, double& dst) {
        if (!j.contains(key)) return;
        if (!j.at(key).is_number())
            throw ConfigError(std::string("config key '") + key + "' must be a number");
        dst = j.at(key).get<double>();
    };
    auto take_str = [&](const char* key, std::string& dst) {
        if (!j.contains(key)) return;
        if (!j.at(key).is_string())
            throw ConfigError(std::string("config key '") + key + "' must be a string");
        dst = j.at(key).get<std::string>();
    };
    static const char* known[] = {"d",     "L",       "W",       "family", "shape", "c_psi",
                                  "E",     "eta",     "seed",    "samples", "threads", "order",
                                  "pairs", "steps",   "tag",     "out"};
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : known) ok = ok || it.key() == k;
        if (!ok) throw ConfigError("unknown config key '" + it.key() + "'");
    }
    take_int("d", cfg.d);
    take_int("L", cfg.L);
    take_int("W", cfg.W);
    take_str("family", cfg.family);
    take_num("shape", cfg.shape);
    take_num("c_psi", cfg.c_psi);
    take_num("E", cfg.E);
    take_num("eta", cfg.eta);
    if (j.contains("seed")) {
        if (!j.at("seed").is_number_integer())
            throw ConfigError("config key 'seed' must be an integer");
        cfg.seed = j.at("seed").get<std::uint64_t>();
    }
    take_int("samples", cfg.samples);
    take_int("threads", cfg.threads);
    take_int("order", cfg.order);
    take_int("pairs", cfg.pairs);
    take_int("steps", cfg.steps);
    take_str("tag", cfg.tag);
    take_str("out", cfg.out);
    if (cfg.family != "gaussian" && cfg.family != "bump")
        throw ConfigError("config key 'family' must be 'gaussian' or 'bump'");
    if (cfg.d < 1 || cfg.L < 2 || cfg.W < 1 || cfg.W > cfg.L)
        throw ConfigError("config requires d >= 1, L >= 2, 1 <= W <= L");
    if (cfg.samples < 1 || cfg.threads < 1)
        throw ConfigError("config requires samples >= 1 and threads >= 1");
    return cfg;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    return parse_run_config(load_json(path));
}

// ---- binary matrix dump -------------------------------------------------

// native little-endian layout: magic, d, L, W, z, dimensions, then row-major
// re/im pairs
inline void dump_matrix(const std::filesystem::path& path, int d, int L, int W, cplx z,
                        const Eigen::MatrixXcd& mat) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("dump_matrix: cannot open " + tmp.string());
        const char magic[4] = {'B', 'L', 'A', 'B'};
        out.write(magic, 4);
        std::int32_t dims[3] = {std::int32_t(d), std::int32_t(L), std::int32_t(W)};
        out.write(reinterpret_cast<const char*>(dims), sizeof dims);
        double zz[2] = {z.real(), z.imag()};
        out.write(reinterpret_cast<const char*>(zz), sizeof zz);
        std::int64_t shape[2] = {mat.rows(), mat.cols()};
        out.write(reinterpret_cast<const char*>(shape), sizeof shape);
        for (Eigen::Index r = 0; r < mat.rows(); ++r)
            for (Eigen::Index c = 0; c < mat.cols(); ++c) {
                double v[2] = {mat(r, c).real(), mat(r, c).imag()};
                out.write(reinterpret_cast<const char*>(v), sizeof v);
            }
        if (!out) throw std::runtime_error("dump_matrix: write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

struct MatrixDump {
    int d = 0, L = 0, W = 0;
    cplx z{0, 0};
    Eigen::MatrixXcd mat;
};

inline MatrixDump load_matrix(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_matrix: cannot open " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || magic[0] != 'B' || magic[1] != 'L' || magic[2] != 'A' || magic[3] != 'B')
        throw std::runtime_error("load_matrix: bad magic in " + path.string());
    std::int32_t dims[3];
    in.read(reinterpret_cast<char*>(dims), sizeof dims);
    double zz[2];
    in.read(reinterpret_cast<char*>(zz), sizeof zz);
    std::int64_t shape[2];
    in.read(reinterpret_cast<char*>(shape), sizeof shape);
    if (!in || shape[0] < 0 || shape[1] < 0)
        throw std::runtime_error("load_matrix: truncated header in " + path.string());
    MatrixDump md;
    md.d = dims[0];
    md.L = dims[1];
    md.W = dims[2];
    md.z = cplx(zz[0], zz[1]);
    md.mat.resize(shape[0], shape[1]);
    for (std::int64_t r = 0; r < shape[0]; ++r)
        for (std::int64_t c = 0; c < shape[1]; ++c) {
            double v[2];
            in.read(reinterpret_cast<char*>(v), sizeof v);
            md.mat(r, c) = cplx(v[0], v[1]);
        }
    if (!in) throw std::runtime_error("load_matrix: truncated payload in " + path.string());
    return md;
}

} // namespace bandlab
