#include "config.hpp"

#include <concepts>
#include <fstream>
#include <set>

#include <fmt/format.h>

#include "saapde/errors.hpp"

namespace saapde::cli {

using nlohmann::json;

namespace {

const char* type_name(const json& j) { return j.type_name(); }

/// Reads keys from one JSON object and remembers which were consumed so that
/// leftovers can be reported as unknown.
class ObjectReader {
public:
    ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ValidationError(fmt::format("{} must be a JSON object", label()));
    }

    void get(const char* key, double& out) {
        if (const json* v = find(key)) {
            if (!v->is_number()) throw type_error(key, "a number", *v);
            out = v->get<double>();
        }
    }
    void get(const char* key, bool& out) {
        if (const json* v = find(key)) {
            if (!v->is_boolean()) throw type_error(key, "a boolean", *v);
            out = v->get<bool>();
        }
    }
    void get(const char* key, std::string& out) {
        if (const json* v = find(key)) {
            if (!v->is_string()) throw type_error(key, "a string", *v);
            out = v->get<std::string>();
        }
    }
    void get(const char* key, int& out) {
        if (const json* v = find(key)) {
            if (!v->is_number_integer()) throw type_error(key, "an integer", *v);
            out = v->get<int>();
        }
    }
    template <std::unsigned_integral T>
    void get(const char* key, T& out) {
        if (const json* v = find(key)) out = static_cast<T>(unsigned_value(key, *v));
    }
    void get(const char* key, std::vector<double>& out) {
        if (const json* v = find(key)) {
            if (!v->is_array()) throw type_error(key, "an array of numbers", *v);
            out.clear();
            for (const json& x : *v) {
                if (!x.is_number()) throw type_error(key, "an array of numbers", *v);
                out.push_back(x.get<double>());
            }
        }
    }
    void get(const char* key, std::vector<std::size_t>& out) {
        if (const json* v = find(key)) {
            if (!v->is_array()) throw type_error(key, "an array of non-negative integers", *v);
            out.clear();
            for (const json& x : *v) out.push_back(unsigned_value(key, x));
        }
    }
    void get(const char* key, std::vector<int>& out) {
        if (const json* v = find(key)) {
            if (!v->is_array()) throw type_error(key, "an array of integers", *v);
            out.clear();
            for (const json& x : *v) {
                if (!x.is_number_integer()) throw type_error(key, "an array of integers", *v);
                out.push_back(x.get<int>());
            }
        }
    }
    bool has(const char* key) const { return j_.contains(key); }
    const json* raw(const char* key) { return find(key); }

    ObjectReader child(const char* key) {
        static const json empty = json::object();
        const json* v = find(key);
        return ObjectReader(v ? *v : empty, path_.empty() ? key : path_ + "." + key);
    }

    void finish() const {
        std::vector<std::string> unknown;
        for (const auto& [k, v] : j_.items())
            if (!used_.contains(k)) unknown.push_back(path_.empty() ? k : path_ + "." + k);
        if (!unknown.empty()) throw ValidationError(fmt::format("unknown config key(s): {}", fmt::join(unknown, ", ")));
    }

private:
    std::string label() const { return path_.empty() ? std::string("config") : "config key '" + path_ + "'"; }

    const json* find(const char* key) {
        used_.insert(key);
        const auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    ValidationError type_error(const char* key, const char* expected, const json& v) const {
        const std::string where = path_.empty() ? key : path_ + "." + key;
        return ValidationError(fmt::format("config key '{}' must be {}, got {}", where, expected, type_name(v)));
    }

    std::uint64_t unsigned_value(const char* key, const json& v) const {
        if (!v.is_number_unsigned()) throw type_error(key, "a non-negative integer", v);
        return v.get<std::uint64_t>();
    }

    const json& j_;
    std::string path_;
    std::set<std::string> used_;
};

LinearSolver parse_linear_solver(const std::string& s) {
    if (s == "cholesky") return LinearSolver::BandedCholesky;
    if (s == "cg") return LinearSolver::ConjugateGradient;
    throw ValidationError(fmt::format("linear_solver.method must be 'cholesky' or 'cg', got '{}'", s));
}

TUpdate parse_t_update(const std::string& s) {
    if (s == "exact") return TUpdate::Exact;
    if (s == "joint") return TUpdate::JointProx;
    throw ValidationError(fmt::format("solver.t_update must be 'exact' or 'joint', got '{}'", s));
}

}  // namespace

void RunConfig::validate() const {
    model.validate();
    solver.validate();
    sweep.validate();
    gradcheck.validate();
    if (threads && *threads == 0) throw ValidationError("threads must be positive");
    if (output.directory.empty()) throw ValidationError("output.directory must not be empty");
}

RunConfig config_from_json(const json& j) {
    RunConfig c;
    ObjectReader root(j, "");
    int version = 0;
    if (!root.has("schema_version")) throw ValidationError("config lacks schema_version");
    root.get("schema_version", version);
    if (version != kSchemaVersion)
        throw ValidationError(fmt::format("unsupported schema_version {} (this build reads {})", version, kSchemaVersion));

    if (const json* t = root.raw("threads"); t && !t->is_null()) {
        if (!t->is_number_unsigned()) throw ValidationError("config key 'threads' must be a positive integer or null");
        c.threads = t->get<std::size_t>();
    }

    {
        ObjectReader r = root.child("grid");
        r.get("n", c.model.n);
        r.finish();
    }
    {
        ObjectReader r = root.child("fields");
        FieldSpec& f = c.model.fields;
        std::size_t m_xi = f.m_xi;
        double load_peak = f.load_peak;
        double load_fraction = 0.25;
        r.get("m_xi", m_xi);
        r.get("load_peak", load_peak);
        r.get("load_fraction", load_fraction);
        if (m_xi == 0) throw ValidationError("fields.m_xi must be positive");
        if (r.has("load_fraction") && r.has("load_amplitudes"))
            throw ValidationError("give either fields.load_fraction or fields.load_amplitudes, not both");
        f = FieldSpec::defaults(m_xi, load_peak, load_fraction);
        r.get("kappa0", f.kappa0);
        r.get("kappa_amplitudes", f.kappa_amplitudes);
        r.get("g0", f.g0);
        r.get("g_amplitudes", f.g_amplitudes);
        r.get("load_amplitudes", f.load_amplitudes);
        r.finish();
    }
    {
        ObjectReader r = root.child("semilinear");
        SemilinearSettings& s = c.model.semilinear;
        r.get("target_amplitude", s.target_amplitude);
        r.get("lower", s.lower);
        r.get("upper", s.upper);
        r.get("alpha", s.alpha);
        r.get("beta", s.avar.beta);
        r.get("kink_tol_rel", s.avar.kink_tol_rel);
        r.get("newton_tol", s.newton.tol);
        r.get("newton_max_iterations", s.newton.max_iterations);
        r.get("newton_backtrack", s.newton.backtrack_factor);
        r.get("newton_min_damping", s.newton.min_damping);
        r.get("newton_polish", s.newton.polish);
        r.finish();
    }
    {
        ObjectReader r = root.child("bilinear");
        BilinearSettings& b = c.model.bilinear;
        r.get("target_amplitude", b.target_amplitude);
        r.get("cap", b.cap);
        r.get("alpha", b.alpha);
        r.get("guard_safety", b.guard_safety);
        r.finish();
    }
    {
        ObjectReader r = root.child("linear_solver");
        std::string method = c.model.linear.method == LinearSolver::BandedCholesky ? "cholesky" : "cg";
        r.get("method", method);
        c.model.linear.method = parse_linear_solver(method);
        r.get("tol", c.model.linear.tol);
        r.get("max_iterations", c.model.linear.max_iterations);
        r.finish();
    }
    {
        ObjectReader r = root.child("solver");
        SolverSettings& s = c.solver;
        std::string t_update = s.t_update == TUpdate::Exact ? "exact" : "joint";
        r.get("max_iterations", s.max_iterations);
        r.get("t_update", t_update);
        s.t_update = parse_t_update(t_update);
        r.get("lipschitz_scenarios", s.lipschitz_scenarios);
        r.get("power_iterations", s.power_iterations);
        r.get("lipschitz_seed", s.lipschitz_seed);
        r.get("step", s.step);
        r.finish();
    }
    {
        ObjectReader r = root.child("sweep");
        SweepSettings& s = c.sweep;
        r.get("sample_sizes", s.sample_sizes);
        r.get("seeds", s.seeds);
        r.get("seed_base", s.seed_base);
        r.get("eps0", s.eps0);
        r.get("reference_n", s.reference_n);
        r.get("reference_seed", s.reference_seed);
        r.get("reference_eps", s.reference_eps);
        r.get("reference_starts", s.reference_starts);
        r.get("start_seed", s.start_seed);
        r.get("cluster_tol", s.cluster_tol);
        r.get("quadrature_levels", s.quadrature_levels);
        r.get("bootstrap_resamples", s.bootstrap_resamples);
        r.get("bootstrap_seed", s.bootstrap_seed);
        r.finish();
    }
    {
        ObjectReader r = root.child("gradcheck");
        GradcheckSettings& g = c.gradcheck;
        r.get("n", g.n);
        r.get("directions", g.directions);
        r.get("scenarios", g.scenarios);
        r.get("points", g.points);
        r.get("step", g.step);
        r.get("threshold", g.threshold);
        r.get("seed", g.seed);
        r.get("step_sweep", g.step_sweep);
        r.finish();
    }
    {
        ObjectReader r = root.child("output");
        r.get("directory", c.output.directory);
        r.get("emit_wall_time", c.output.emit_wall_time);
        c.sweep.emit_wall_time = c.output.emit_wall_time;
        r.finish();
    }
    root.finish();
    c.validate();
    return c;
}

json config_to_json(const RunConfig& c) {
    const FieldSpec& f = c.model.fields;
    const SemilinearSettings& s = c.model.semilinear;
    const BilinearSettings& b = c.model.bilinear;
    json j;
    j["schema_version"] = kSchemaVersion;
    j["threads"] = c.threads ? json(*c.threads) : json(nullptr);
    j["grid"] = {{"n", c.model.n}};
    j["fields"] = {{"m_xi", f.m_xi},
                   {"kappa0", f.kappa0},
                   {"kappa_amplitudes", f.kappa_amplitudes},
                   {"g0", f.g0},
                   {"g_amplitudes", f.g_amplitudes},
                   {"load_peak", f.load_peak},
                   {"load_amplitudes", f.load_amplitudes}};
    j["semilinear"] = {{"target_amplitude", s.target_amplitude},
                       {"lower", s.lower},
                       {"upper", s.upper},
                       {"alpha", s.alpha},
                       {"beta", s.avar.beta},
                       {"kink_tol_rel", s.avar.kink_tol_rel},
                       {"newton_tol", s.newton.tol},
                       {"newton_max_iterations", s.newton.max_iterations},
                       {"newton_backtrack", s.newton.backtrack_factor},
                       {"newton_min_damping", s.newton.min_damping},
                       {"newton_polish", s.newton.polish}};
    j["bilinear"] = {{"target_amplitude", b.target_amplitude},
                     {"cap", b.cap},
                     {"alpha", b.alpha},
                     {"guard_safety", b.guard_safety}};
    j["linear_solver"] = {{"method", c.model.linear.method == LinearSolver::BandedCholesky ? "cholesky" : "cg"},
                          {"tol", c.model.linear.tol},
                          {"max_iterations", c.model.linear.max_iterations}};
    j["solver"] = {{"max_iterations", c.solver.max_iterations},
                   {"t_update", c.solver.t_update == TUpdate::Exact ? "exact" : "joint"},
                   {"lipschitz_scenarios", c.solver.lipschitz_scenarios},
                   {"power_iterations", c.solver.power_iterations},
                   {"lipschitz_seed", c.solver.lipschitz_seed},
                   {"step", c.solver.step}};
    const SweepSettings& w = c.sweep;
    j["sweep"] = {{"sample_sizes", w.sample_sizes},
                  {"seeds", w.seeds},
                  {"seed_base", w.seed_base},
                  {"eps0", w.eps0},
                  {"reference_n", w.reference_n},
                  {"reference_seed", w.reference_seed},
                  {"reference_eps", w.reference_eps},
                  {"reference_starts", w.reference_starts},
                  {"start_seed", w.start_seed},
                  {"cluster_tol", w.cluster_tol},
                  {"quadrature_levels", w.quadrature_levels},
                  {"bootstrap_resamples", w.bootstrap_resamples},
                  {"bootstrap_seed", w.bootstrap_seed}};
    const GradcheckSettings& g = c.gradcheck;
    j["gradcheck"] = {{"n", g.n},
                      {"directions", g.directions},
                      {"scenarios", g.scenarios},
                      {"points", g.points},
                      {"step", g.step},
                      {"threshold", g.threshold},
                      {"seed", g.seed},
                      {"step_sweep", g.step_sweep}};
    j["output"] = {{"directory", c.output.directory}, {"emit_wall_time", c.output.emit_wall_time}};
    return j;
}

void apply_override(json& j, std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos || eq == 0)
        throw ValidationError(fmt::format("override '{}' is not of the form key.path=value", assignment));
    const std::string key(assignment.substr(0, eq));
    const std::string text(assignment.substr(eq + 1));
    json value;
    try {
        value = json::parse(text);
    } catch (const json::parse_error&) {
        value = text;
    }
    json* node = &j;
    std::size_t start = 0;
    for (;;) {
        const std::size_t dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (!node->is_object() || !node->contains(part))
            throw ValidationError(fmt::format("override names unknown config key '{}'", key));
        node = &(*node)[part];
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    *node = std::move(value);
}

RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
    json j = config_to_json(RunConfig{});
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw ValidationError(fmt::format("cannot open config file '{}'", path));
        json file;
        try {
            file = json::parse(in);
        } catch (const json::parse_error& e) {
            throw ValidationError(fmt::format("config file '{}' is not valid JSON: {}", path, e.what()));
        }
        // Validate the file as written (unknown keys, schema), then layer
        // overrides on its canonical form.
        j = config_to_json(config_from_json(file));
    }
    for (const auto& o : overrides) {
        // Amplitude arrays follow load_peak and m_xi unless set explicitly.
        if (o.starts_with("fields.m_xi=") || o.starts_with("fields.load_peak=")) {
            j["fields"].erase("kappa_amplitudes");
            j["fields"].erase("g_amplitudes");
            j["fields"].erase("load_amplitudes");
            j["fields"]["m_xi"] = j["fields"].value("m_xi", std::size_t{4});
            j["fields"]["load_peak"] = j["fields"].value("load_peak", 50.0);
        }
        apply_override(j, o);
    }
    return config_from_json(j);
}

std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string config_hash(const RunConfig& cfg) {
    json j = config_to_json(cfg);
    // Neither the worker count nor the output location changes any result.
    j.erase("threads");
    j["output"].erase("directory");
    return fmt::format("{:016x}", fnv1a64(j.dump()));
}

}  // namespace saapde::cli
