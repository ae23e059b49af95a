#pragma once

#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nlsys/gnineq.hpp"
#include "nlsys/initial_data.hpp"
#include "nlsys/integrator.hpp"
#include "nlsys/morawetz.hpp"

namespace nlsys {

using json = nlohmann::ordered_json;

/// Every problem found while reading a configuration, reported together.
class ConfigError : public UsageError {
public:
    explicit ConfigError(std::vector<std::string> problems)
        : UsageError(join(problems)), problems_(std::move(problems)) {}
    const std::vector<std::string>& problems() const { return problems_; }

private:
    static std::string join(const std::vector<std::string>& p) {
        std::string s = "invalid configuration (" + std::to_string(p.size()) + " problem" + (p.size() == 1 ? "" : "s") + "):";
        for (const auto& x : p) s += "\n  " + x;
        return s;
    }
    std::vector<std::string> problems_;
};

enum class KeyType { integer, number, boolean, string, numbers, vectors };

struct ConfigKey {
    std::string name;
    KeyType type;
    json fallback;
    std::string help;
};

/// The flat key table. Flags are the key names with '_' replaced by '-'.
inline const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys = {
        {"experiment", KeyType::string, "simulate", "simulate | verify-identities | scatter | wave-op | gn-check"},
        {"d", KeyType::integer, 1, "spatial dimension (1, 2 or 3)"},
        {"n_components", KeyType::integer, 1, "number of coupled components N"},
        {"p", KeyType::number, 1.0, "nonlinearity exponent"},
        {"beta", KeyType::numbers, json::array(), "coupling matrix, N*N row-major; one value b means b*identity; empty means identity"},
        {"grid_m", KeyType::integer, 256, "grid points per axis (even, >= 8)"},
        {"box_l", KeyType::number, 32.0, "box half-width L, the box is [-L, L)^d"},
        {"dt", KeyType::number, 1e-3, "time step"},
        {"t_final", KeyType::number, 1.0, "final time T"},
        {"snapshot_stride", KeyType::integer, 10, "steps between diagnostic rows"},
        {"dealias", KeyType::boolean, false, "apply the 2/3 rule after each nonlinear substep"},
        {"boundary_threshold", KeyType::number, 1e-6, "largest admissible mass fraction in the outer 10% shell"},
        {"family", KeyType::string, "gaussian", "gaussian | multi-bump | plane-modulated | random-band-limited"},
        {"amplitude", KeyType::numbers, json::array({1.0}), "per-component amplitude (one value is broadcast)"},
        {"width", KeyType::numbers, json::array({1.0}), "per-component Gaussian width"},
        {"center", KeyType::vectors, json::array({json::array({0.0})}), "per-component center"},
        {"velocity", KeyType::vectors, json::array({json::array({0.0})}), "per-component group velocity"},
        {"bumps", KeyType::integer, 2, "multi-bump: bumps per component"},
        {"separation", KeyType::number, 4.0, "multi-bump: bump spacing along the first axis"},
        {"modulation", KeyType::number, 1.0, "plane-modulated: carrier wavenumber"},
        {"band_limit", KeyType::number, 2.0, "random-band-limited: largest |k|"},
        {"seed", KeyType::integer, 1, "64-bit seed for all randomness"},
        {"weight", KeyType::string, "abs", "abs | quadratic | bracket | erf | constant"},
        {"weight_epsilon", KeyType::number, 0.5, "erf weight smoothing length"},
        {"out_dir", KeyType::string, "", "output directory (default: $NLSYS_OUT_DIR or ./nlsys_out)"},
        {"tol", KeyType::number, 1e-6, "fixed-point / profile tolerance"},
        {"mass_tol", KeyType::number, 1e-10, "simulate: relative per-component mass drift bound"},
        {"energy_tol", KeyType::number, 1e-6, "simulate: relative energy drift bound"},
        {"calibrate", KeyType::boolean, true, "verify-identities: calibrate C_fd from a run at 2*dt"},
        {"quadrature_nodes", KeyType::integer, 1200, "wave-op: time nodes on [0, T]"},
        {"max_iter", KeyType::integer, 30, "wave-op: iteration cap"},
        {"tail_start", KeyType::number, 0.0, "scatter: first snapshot time used for the profile"},
        {"gn_samples", KeyType::integer, 500, "gn-check: corpus size"},
        {"gn_variant", KeyType::string, "main", "gn-check: main | cubic"},
        {"gn_generator", KeyType::string, "mixed", "gn-check: band-limited | bumps | trains | mixed"},
        {"gn_components", KeyType::integer, 2, "gn-check: components per sample"},
    };
    return keys;
}

inline const ConfigKey* find_key(const std::string& name) {
    for (const auto& k : config_keys())
        if (k.name == name) return &k;
    return nullptr;
}

inline std::string flag_name(const std::string& key) {
    std::string f = key;
    for (auto& c : f)
        if (c == '_') c = '-';
    return f;
}

inline const char* type_name(KeyType t) {
    switch (t) {
    case KeyType::integer: return "an integer";
    case KeyType::number: return "a number";
    case KeyType::boolean: return "a boolean";
    case KeyType::string: return "a string";
    case KeyType::numbers: return "a number or list of numbers";
    default: return "a list of coordinate lists";
    }
}

namespace detail {

/// Accepts the JSON value if it matches the key type; numbers lists may be scalars, vectors may be one flat list.
inline bool normalize_value(KeyType t, json& v) {
    switch (t) {
    case KeyType::integer: return v.is_number_integer();
    case KeyType::number:
        if (!v.is_number()) return false;
        v = v.get<double>();
        return true;
    case KeyType::boolean: return v.is_boolean();
    case KeyType::string: return v.is_string();
    case KeyType::numbers:
        if (v.is_number()) v = json::array({v.get<double>()});
        if (!v.is_array()) return false;
        if (!v.empty() && v.front().is_array()) {
            // Nested rows are flattened (beta as a matrix).
            json flat = json::array();
            for (const auto& row : v) {
                if (!row.is_array()) return false;
                for (const auto& x : row) flat.push_back(x);
            }
            v = flat;
        }
        for (auto& x : v) {
            if (!x.is_number()) return false;
            x = x.get<double>();
        }
        return true;
    case KeyType::vectors:
        if (!v.is_array() || v.empty()) return false;
        if (v.front().is_number()) v = json::array({v});
        for (auto& row : v) {
            if (!row.is_array() || row.empty() || row.size() > 3) return false;
            for (auto& x : row) {
                if (!x.is_number()) return false;
                x = x.get<double>();
            }
        }
        return true;
    }
    return false;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) out.push_back(cur);
    if (!s.empty() && s.back() == sep) out.emplace_back();
    return out;
}

inline bool parse_double(const std::string& s, double& out) {
    try {
        std::size_t pos = 0;
        out = std::stod(s, &pos);
        while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
        return pos == s.size();
    } catch (const std::exception&) {
        return false;
    }
}

/// Flag text to a JSON value: lists use ',' between numbers and ';' between vectors.
inline bool flag_to_json(KeyType t, const std::string& text, json& v) {
    switch (t) {
    case KeyType::integer:
        try {
            std::size_t pos = 0;
            const long long x = std::stoll(text, &pos);
            if (pos != text.size()) return false;
            v = x;
            return true;
        } catch (const std::exception&) {
            return false;
        }
    case KeyType::number: {
        double x;
        if (!parse_double(text, x)) return false;
        v = x;
        return true;
    }
    case KeyType::boolean:
        if (text == "true" || text == "1") v = true;
        else if (text == "false" || text == "0") v = false;
        else return false;
        return true;
    case KeyType::string: v = text; return true;
    case KeyType::numbers: {
        v = json::array();
        if (text.empty()) return true;
        for (const auto& part : split(text, ',')) {
            double x;
            if (!parse_double(part, x)) return false;
            v.push_back(x);
        }
        return true;
    }
    case KeyType::vectors: {
        v = json::array();
        for (const auto& row : split(text, ';')) {
            json r = json::array();
            for (const auto& part : split(row, ',')) {
                double x;
                if (!parse_double(part, x)) return false;
                r.push_back(x);
            }
            v.push_back(r);
        }
        return normalize_value(t, v);
    }
    }
    return false;
}

} // namespace detail

/// Typed, cross-validated run configuration.
struct RunConfig {
    std::string experiment = "simulate";
    GridSpec grid;
    CouplingSpec coupling;
    InitialDataSpec data;
    StepParams step;
    std::string weight = "abs";
    double weight_epsilon = 0.5;
    std::string out_dir;
    double tol = 1e-6;
    double mass_tol = 1e-10;
    double energy_tol = 1e-6;
    bool calibrate = true;
    int quadrature_nodes = 1200;
    int max_iter = 30;
    double tail_start = 0.0;
    int gn_samples = 500;
    GNVariant gn_variant = GNVariant::main;
    CorpusGenerator gn_generator = CorpusGenerator::mixed;
    int gn_components = 2;
    /// Merged key-value document after defaults, file and flags; echoed into the run summary.
    json effective;

    MorawetzWeight make_weight() const {
        if (weight == "abs") return MorawetzWeight::abs_distance();
        if (weight == "quadratic") return MorawetzWeight::quadratic();
        if (weight == "bracket") return MorawetzWeight::bracket();
        if (weight == "erf") return MorawetzWeight::erf_smoothed(weight_epsilon);
        return MorawetzWeight::constant();
    }
};

inline const std::vector<std::string>& experiments() {
    static const std::vector<std::string> e = {"simulate", "verify-identities", "scatter", "wave-op", "gn-check"};
    return e;
}

/**
 * Builds a RunConfig from defaults, then `file` keys, then `overrides`
 * (already typed JSON values). Unknown keys, type mismatches and
 * cross-field violations are collected and thrown as one ConfigError.
 */
inline RunConfig build_config(const json& file, const json& overrides) {
    std::vector<std::string> errs;
    json merged = json::object();
    for (const auto& k : config_keys()) merged[k.name] = k.fallback;
    if (const char* env = std::getenv("NLSYS_OUT_DIR"); env && *env) merged["out_dir"] = env;
    else merged["out_dir"] = "nlsys_out";

    auto absorb = [&](const json& src, const std::string& origin) {
        if (src.is_null()) return;
        if (!src.is_object()) {
            errs.push_back(origin + ": expected a flat object of key-value pairs");
            return;
        }
        for (const auto& [name, value] : src.items()) {
            const auto* key = find_key(name);
            if (!key) {
                errs.push_back(origin + "." + name + ": unknown key");
                continue;
            }
            json v = value;
            if (!detail::normalize_value(key->type, v)) {
                errs.push_back(origin + "." + name + ": expected " + type_name(key->type));
                continue;
            }
            merged[name] = v;
        }
    };
    absorb(file, "config");
    absorb(overrides, "flags");
    // wave-op defaults to small data: amplitude 0.2 on unit Gaussians.
    const bool amplitude_given = (file.is_object() && file.contains("amplitude")) ||
                                 (overrides.is_object() && overrides.contains("amplitude"));
    if (merged["experiment"] == "wave-op" && !amplitude_given) merged["amplitude"] = json::array({0.2});
    if (!errs.empty()) throw ConfigError(errs);

    RunConfig c;
    c.effective = merged;
    auto num = [&](const char* k) { return merged[k].get<double>(); };
    auto integer = [&](const char* k) { return merged[k].get<long long>(); };
    auto str = [&](const char* k) { return merged[k].get<std::string>(); };
    auto nums = [&](const char* k) { return merged[k].get<std::vector<double>>(); };

    c.experiment = str("experiment");
    if (std::find(experiments().begin(), experiments().end(), c.experiment) == experiments().end())
        errs.push_back("experiment: unknown experiment '" + c.experiment + "'");

    const long long d = integer("d");
    const long long n = integer("n_components");
    if (d < 1 || d > 3) errs.push_back("d must be 1, 2 or 3");
    if (n < 1 || n > 64) errs.push_back("n_components must be in [1, 64]");
    const int di = static_cast<int>(std::clamp(d, 1LL, 3LL));
    const int ni = static_cast<int>(std::clamp(n, 1LL, 64LL));

    c.grid = GridSpec{di, static_cast<int>(integer("grid_m")), num("box_l")};
    if (c.grid.points < 8 || c.grid.points % 2 != 0) errs.push_back("grid_m must be even and >= 8");
    if (!(c.grid.half_width > 0.0)) errs.push_back("box_l must be > 0");
    else if (2.0 * c.grid.half_width < 1.0) errs.push_back("box_l: the unit cube does not fit in the box (need 2L >= 1)");
    else if (c.grid.points >= 8 && static_cast<double>(c.grid.points) / (2.0 * c.grid.half_width) < 1.0)
        errs.push_back("grid_m: spacing exceeds the unit cube side (need M >= 2L)");

    c.coupling.components = ni;
    c.coupling.dim = di;
    c.coupling.exponent = num("p");
    auto beta = nums("beta");
    if (beta.empty()) beta = {1.0};
    if (beta.size() == 1) {
        const double b = beta.front();
        beta.assign(static_cast<std::size_t>(ni * ni), 0.0);
        for (int mu = 0; mu < ni; ++mu) beta[static_cast<std::size_t>(mu * ni + mu)] = b;
    }
    c.coupling.beta = beta;
    for (const auto& pr : c.coupling.problems()) errs.push_back("beta/p: " + pr);

    c.step.dt = num("dt");
    c.step.t_final = num("t_final");
    c.step.snapshot_stride = static_cast<int>(integer("snapshot_stride"));
    c.step.dealias = merged["dealias"].get<bool>();
    c.step.boundary_threshold = num("boundary_threshold");
    if (!(c.step.dt > 0.0) || !std::isfinite(c.step.dt)) errs.push_back("dt must be > 0");
    if (!(c.step.t_final >= 0.0) || !std::isfinite(c.step.t_final)) errs.push_back("t_final must be >= 0");
    if (c.step.snapshot_stride < 1) errs.push_back("snapshot_stride must be >= 1");
    if (!(c.step.boundary_threshold > 0.0)) errs.push_back("boundary_threshold must be > 0");

    try {
        c.data.family = parse_family(str("family"));
    } catch (const UsageError& e) {
        errs.push_back(std::string("family: ") + e.what());
    }
    auto per_component = [&](const char* k) {
        const auto v = nums(k);
        if (v.size() != 1 && v.size() != static_cast<std::size_t>(ni))
            errs.push_back(std::string(k) + ": needs 1 or n_components values (got " + std::to_string(v.size()) + ")");
        return v;
    };
    c.data.amplitude = per_component("amplitude");
    c.data.width = per_component("width");
    for (double w : c.data.width)
        if (!(w > 0.0)) errs.push_back("width must be > 0");
    for (double a : c.data.amplitude)
        if (!std::isfinite(a)) errs.push_back("amplitude must be finite");
    auto vectors = [&](const char* k) {
        std::vector<Vec3> out;
        for (const auto& row : merged[k]) {
            if (row.size() > static_cast<std::size_t>(di))
                errs.push_back(std::string(k) + ": coordinate list longer than d");
            Vec3 v{0, 0, 0};
            for (std::size_t a = 0; a < std::min<std::size_t>(row.size(), 3); ++a) v[a] = row[a].get<double>();
            out.push_back(v);
        }
        if (out.size() != 1 && out.size() != static_cast<std::size_t>(ni))
            errs.push_back(std::string(k) + ": needs 1 or n_components entries");
        return out;
    };
    c.data.center = vectors("center");
    c.data.velocity = vectors("velocity");
    c.data.bumps = static_cast<int>(integer("bumps"));
    c.data.separation = num("separation");
    c.data.modulation = num("modulation");
    c.data.band_limit = num("band_limit");
    c.data.seed = static_cast<std::uint64_t>(integer("seed"));
    if (c.data.bumps < 1) errs.push_back("bumps must be >= 1");
    if (!(c.data.band_limit > 0.0)) errs.push_back("band_limit must be > 0");

    c.weight = str("weight");
    c.weight_epsilon = num("weight_epsilon");
    if (c.weight != "abs" && c.weight != "quadratic" && c.weight != "bracket" && c.weight != "erf" &&
        c.weight != "constant")
        errs.push_back("weight: unknown weight '" + c.weight + "'");
    if (c.weight == "erf" && di != 1) errs.push_back("weight: erf is provided for d = 1 only");
    if (c.weight == "erf" && !(c.weight_epsilon > 0.0)) errs.push_back("weight_epsilon must be > 0");

    c.out_dir = str("out_dir");
    if (c.out_dir.empty()) errs.push_back("out_dir must not be empty");
    c.tol = num("tol");
    c.mass_tol = num("mass_tol");
    c.energy_tol = num("energy_tol");
    if (!(c.tol > 0.0)) errs.push_back("tol must be > 0");
    if (!(c.mass_tol > 0.0)) errs.push_back("mass_tol must be > 0");
    if (!(c.energy_tol > 0.0)) errs.push_back("energy_tol must be > 0");
    c.calibrate = merged["calibrate"].get<bool>();
    c.quadrature_nodes = static_cast<int>(integer("quadrature_nodes"));
    c.max_iter = static_cast<int>(integer("max_iter"));
    c.tail_start = num("tail_start");
    if (c.quadrature_nodes < 1) errs.push_back("quadrature_nodes must be >= 1");
    if (c.max_iter < 1) errs.push_back("max_iter must be >= 1");

    c.gn_samples = static_cast<int>(integer("gn_samples"));
    c.gn_components = static_cast<int>(integer("gn_components"));
    if (c.gn_samples < 1) errs.push_back("gn_samples must be >= 1");
    if (c.gn_components < 1) errs.push_back("gn_components must be >= 1");
    try {
        c.gn_variant = parse_variant(str("gn_variant"));
    } catch (const UsageError& e) {
        errs.push_back(std::string("gn_variant: ") + e.what());
    }
    try {
        c.gn_generator = parse_generator(str("gn_generator"));
    } catch (const UsageError& e) {
        errs.push_back(std::string("gn_generator: ") + e.what());
    }

    // Experiment-specific requirements.
    if (c.experiment == "wave-op" && !(c.step.t_final > 0.0)) errs.push_back("t_final must be > 0 for wave-op");

    if (!errs.empty()) throw ConfigError(errs);
    return c;
}

inline json read_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError({"config: cannot open '" + path + "'"});
    try {
        return json::parse(in, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::parse_error& e) {
        throw ConfigError({"config: '" + path + "' is not valid JSON: " + e.what()});
    }
}

/// Converts textual flag values (key -> text) into typed overrides, aggregating errors.
inline json overrides_from_flags(const std::map<std::string, std::string>& flags) {
    std::vector<std::string> errs;
    json out = json::object();
    for (const auto& [name, text] : flags) {
        const auto* key = find_key(name);
        if (!key) {
            errs.push_back("--" + flag_name(name) + ": unknown flag");
            continue;
        }
        json v;
        if (!detail::flag_to_json(key->type, text, v)) {
            errs.push_back("--" + flag_name(name) + ": expected " + type_name(key->type) + ", got '" + text + "'");
            continue;
        }
        out[name] = v;
    }
    if (!errs.empty()) throw ConfigError(errs);
    return out;
}

} // namespace nlsys
