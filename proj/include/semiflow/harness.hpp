#pragma once

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace semiflow {

inline constexpr const char* kVersion = "semiflow 0.1.0";

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& field, const std::string& what)
        : std::runtime_error(field + ": " + what) {}
};

/// Experiment description: equation kind, discretization, noise, reaction,
/// seeds and the checks to run. Serialized as versioned JSON.
struct ExperimentConfig {
    int schema_version = 1;
    std::string equation = "linear";  // linear | semilinear | reaction_diffusion | burgers

    int n_modes = 16;
    int grid_points = 64;
    double viscosity = 0.5;

    int k_modes = 4;
    double dt = 1e-3;
    double horizon = 1.0;
    double sigma_amplitude = 0.3;
    int sigma_modes = 4;
    double lambda_amplitude = 1.0;
    double lambda_power = 2.0;
    int smoothing_n = 16;
    int chaos_order = 12;

    std::string nonlinearity = "sine";  // zero | linear | sine | cubic | contracting | power_law
    double nonlinearity_rate = 0.8;     // for "linear"
    double alpha = 1.0;                 // for "power_law"
    double picard_tol = 1e-12;

    int mc_paths = 200;
    int refinement_paths = 5;

    std::vector<std::uint64_t> seeds{1};
    std::vector<std::string> checks;

    std::string out_dir = "out";
    std::string format = "csv";  // csv | json

    int steps() const { return static_cast<int>(std::lround(horizon / dt)); }
};

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
    j = nlohmann::json{{"schema_version", c.schema_version},
                       {"equation", c.equation},
                       {"basis", {{"n_modes", c.n_modes},
                                  {"grid_points", c.grid_points},
                                  {"viscosity", c.viscosity}}},
                       {"noise", {{"k_modes", c.k_modes},
                                  {"dt", c.dt},
                                  {"horizon", c.horizon},
                                  {"sigma_amplitude", c.sigma_amplitude},
                                  {"sigma_modes", c.sigma_modes},
                                  {"lambda_amplitude", c.lambda_amplitude},
                                  {"lambda_power", c.lambda_power},
                                  {"smoothing_n", c.smoothing_n},
                                  {"chaos_order", c.chaos_order}}},
                       {"nonlinearity", {{"name", c.nonlinearity},
                                         {"rate", c.nonlinearity_rate},
                                         {"alpha", c.alpha}}},
                       {"picard_tol", c.picard_tol},
                       {"mc_paths", c.mc_paths},
                       {"refinement_paths", c.refinement_paths},
                       {"seeds", c.seeds},
                       {"checks", c.checks},
                       {"output", {{"dir", c.out_dir}, {"format", c.format}}}};
}

inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
    auto get_to = [](const nlohmann::json& node, const char* field, auto& out,
                     const std::string& path) {
        if (!node.contains(field)) throw ConfigError(path + field, "missing field");
        try {
            node.at(field).get_to(out);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(path + field, e.what());
        }
    };
    get_to(j, "schema_version", c.schema_version, "");
    if (c.schema_version != 1)
        throw ConfigError("schema_version", "unsupported version " + std::to_string(c.schema_version));
    get_to(j, "equation", c.equation, "");
    if (j.contains("basis")) {
        const auto& b = j.at("basis");
        get_to(b, "n_modes", c.n_modes, "basis.");
        get_to(b, "grid_points", c.grid_points, "basis.");
        get_to(b, "viscosity", c.viscosity, "basis.");
    }
    if (j.contains("noise")) {
        const auto& n = j.at("noise");
        get_to(n, "k_modes", c.k_modes, "noise.");
        get_to(n, "dt", c.dt, "noise.");
        get_to(n, "horizon", c.horizon, "noise.");
        if (n.contains("sigma_amplitude")) n.at("sigma_amplitude").get_to(c.sigma_amplitude);
        if (n.contains("sigma_modes")) n.at("sigma_modes").get_to(c.sigma_modes);
        if (n.contains("lambda_amplitude")) n.at("lambda_amplitude").get_to(c.lambda_amplitude);
        if (n.contains("lambda_power")) n.at("lambda_power").get_to(c.lambda_power);
        if (n.contains("smoothing_n")) n.at("smoothing_n").get_to(c.smoothing_n);
        if (n.contains("chaos_order")) n.at("chaos_order").get_to(c.chaos_order);
    }
    if (j.contains("nonlinearity")) {
        const auto& f = j.at("nonlinearity");
        get_to(f, "name", c.nonlinearity, "nonlinearity.");
        if (f.contains("rate")) f.at("rate").get_to(c.nonlinearity_rate);
        if (f.contains("alpha")) f.at("alpha").get_to(c.alpha);
    }
    if (j.contains("picard_tol")) j.at("picard_tol").get_to(c.picard_tol);
    if (j.contains("mc_paths")) j.at("mc_paths").get_to(c.mc_paths);
    if (j.contains("refinement_paths")) j.at("refinement_paths").get_to(c.refinement_paths);
    get_to(j, "seeds", c.seeds, "");
    get_to(j, "checks", c.checks, "");
    if (j.contains("output")) {
        const auto& o = j.at("output");
        if (o.contains("dir")) o.at("dir").get_to(c.out_dir);
        if (o.contains("format")) o.at("format").get_to(c.format);
    }
}

/// One named scalar outcome with an optional tolerance verdict.
struct ScalarResult {
    std::string name;
    double value = 0.0;
    double tolerance = std::numeric_limits<double>::quiet_NaN();  // NaN: informational
    bool pass = true;
};

struct CheckOutcome {
    std::vector<ScalarResult> scalars;
    bool passed = true;
    std::string detail;

    void add(const std::string& name, double value) { scalars.push_back({name, value}); }
    void require(const std::string& name, double value, double tolerance, bool ok) {
        scalars.push_back({name, value, tolerance, ok});
        passed = passed && ok;
    }
};

struct CheckContext {
    const ExperimentConfig* config;
    std::uint64_t seed;
};

using CheckFn = std::function<CheckOutcome(const CheckContext&)>;

/// ordered registry of named checks; populated in checks.hpp
std::map<std::string, CheckFn>& check_registry();

inline std::vector<std::string> list_checks() {
    std::vector<std::string> names;
    for (const auto& [name, fn] : check_registry()) names.push_back(name);
    return names;
}

inline void validate(const ExperimentConfig& c) {
    if (c.n_modes < 1) throw ConfigError("basis.n_modes", "must be >= 1");
    if (c.grid_points < 2 * c.n_modes + 1)
        throw ConfigError("basis.grid_points", "must be >= 2 * n_modes + 1");
    if (c.viscosity <= 0.0) throw ConfigError("basis.viscosity", "must be positive");
    if (c.k_modes < 1) throw ConfigError("noise.k_modes", "must be >= 1");
    if (c.k_modes > c.n_modes) throw ConfigError("noise.k_modes", "must be <= n_modes");
    if (c.dt <= 0.0) throw ConfigError("noise.dt", "must be positive");
    if (c.horizon <= 0.0) throw ConfigError("noise.horizon", "must be positive");
    const double ratio = c.horizon / c.dt;
    if (std::abs(ratio - std::lround(ratio)) > 1e-9 * ratio)
        throw ConfigError("noise.dt", "must divide the horizon");
    if (c.equation != "linear" && c.equation != "semilinear" &&
        c.equation != "reaction_diffusion" && c.equation != "burgers")
        throw ConfigError("equation", "unknown kind '" + c.equation + "'");
    if (c.seeds.empty()) throw ConfigError("seeds", "must be non-empty");
    if (c.format != "csv" && c.format != "json")
        throw ConfigError("output.format", "must be csv or json");
    const auto& reg = check_registry();
    for (const auto& name : c.checks)
        if (reg.find(name) == reg.end())
            throw ConfigError("checks", "unknown check '" + name + "'");
}

struct CheckRun {
    std::string check;
    std::uint64_t seed = 0;
    std::vector<ScalarResult> scalars;
    bool passed = true;
    std::string detail;
    double wall_seconds = 0.0;
};

struct RunReport {
    std::string version;
    std::string config_hash;
    std::vector<CheckRun> runs;

    bool all_passed() const {
        for (const auto& r : runs)
            if (!r.passed) return false;
        return true;
    }
};

inline std::string config_hash(const ExperimentConfig& c) {
    const std::string dump = nlohmann::json(c).dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : dump) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

/// Executes every requested check for every seed. Tasks are distributed
/// over `workers` threads; results land in slots indexed by task, so the
/// report is identical for any worker count.
inline RunReport run(const ExperimentConfig& config, int workers = 1) {
    validate(config);
    RunReport report;
    report.version = kVersion;
    report.config_hash = config_hash(config);

    struct Task {
        std::string check;
        std::uint64_t seed;
    };
    std::vector<Task> tasks;
    for (const auto& name : config.checks)
        for (auto seed : config.seeds) tasks.push_back({name, seed});
    report.runs.resize(tasks.size());

    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        const auto& registry = check_registry();
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= tasks.size()) return;
            const auto t0 = std::chrono::steady_clock::now();
            CheckRun run_result;
            run_result.check = tasks[i].check;
            run_result.seed = tasks[i].seed;
            try {
                CheckOutcome outcome =
                    registry.at(tasks[i].check)({&config, tasks[i].seed});
                run_result.scalars = std::move(outcome.scalars);
                run_result.passed = outcome.passed;
                run_result.detail = std::move(outcome.detail);
            } catch (const std::exception& e) {
                run_result.passed = false;
                run_result.detail = std::string("error (seed ") +
                                    std::to_string(tasks[i].seed) + "): " + e.what();
            }
            run_result.wall_seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            report.runs[i] = std::move(run_result);
        }
    };

    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    return report;
}

namespace detail {

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace detail

/// CSV per check: a header of scalar names, one row per seed, then
/// aggregate mean / stderr rows. Timings are reported in JSON only, so the
/// CSV bytes are reproducible.
inline std::string to_csv(const RunReport& report, const std::string& check) {
    std::vector<const CheckRun*> rows;
    for (const auto& r : report.runs)
        if (r.check == check) rows.push_back(&r);

    std::string out = "seed";
    if (!rows.empty())
        for (const auto& s : rows.front()->scalars) out += "," + s.name;
    out += ",passed\n";
    if (rows.empty()) return out;

    const std::size_t n_scalars = rows.front()->scalars.size();
    std::vector<double> sum(n_scalars, 0.0), sumsq(n_scalars, 0.0);
    for (const auto* r : rows) {
        out += std::to_string(r->seed);
        for (std::size_t i = 0; i < n_scalars; ++i) {
            const double v = r->scalars[i].value;
            out += "," + detail::format_double(v);
            sum[i] += v;
            sumsq[i] += v * v;
        }
        out += r->passed ? ",1\n" : ",0\n";
    }
    const double n = static_cast<double>(rows.size());
    out += "mean";
    for (std::size_t i = 0; i < n_scalars; ++i) out += "," + detail::format_double(sum[i] / n);
    out += ",\nstderr";
    for (std::size_t i = 0; i < n_scalars; ++i) {
        const double mean = sum[i] / n;
        const double var = n > 1 ? std::max(0.0, (sumsq[i] - n * mean * mean) / (n - 1)) : 0.0;
        out += "," + detail::format_double(n > 1 ? std::sqrt(var / n) : 0.0);
    }
    out += ",\n";
    return out;
}

inline void to_json(nlohmann::json& j, const ScalarResult& s) {
    j = nlohmann::json{{"name", s.name}, {"value", s.value}, {"pass", s.pass}};
    if (!std::isnan(s.tolerance)) j["tolerance"] = s.tolerance;
}

inline void from_json(const nlohmann::json& j, ScalarResult& s) {
    j.at("name").get_to(s.name);
    j.at("value").get_to(s.value);
    j.at("pass").get_to(s.pass);
    s.tolerance = j.contains("tolerance") ? j.at("tolerance").get<double>()
                                          : std::numeric_limits<double>::quiet_NaN();
}

inline void to_json(nlohmann::json& j, const CheckRun& r) {
    j = nlohmann::json{{"check", r.check},         {"seed", r.seed},
                       {"scalars", r.scalars},     {"passed", r.passed},
                       {"detail", r.detail},       {"wall_seconds", r.wall_seconds}};
}

inline void from_json(const nlohmann::json& j, CheckRun& r) {
    j.at("check").get_to(r.check);
    j.at("seed").get_to(r.seed);
    j.at("scalars").get_to(r.scalars);
    j.at("passed").get_to(r.passed);
    j.at("detail").get_to(r.detail);
    j.at("wall_seconds").get_to(r.wall_seconds);
}

inline void to_json(nlohmann::json& j, const RunReport& r) {
    j = nlohmann::json{{"version", r.version}, {"config_hash", r.config_hash}, {"runs", r.runs}};
}

inline void from_json(const nlohmann::json& j, RunReport& r) {
    j.at("version").get_to(r.version);
    j.at("config_hash").get_to(r.config_hash);
    j.at("runs").get_to(r.runs);
}

/// Writes one CSV per check (or one JSON for the whole report) under dir.
/// Returns the written paths.
inline std::vector<std::string> export_report(const RunReport& report,
                                              const ExperimentConfig& config,
                                              const std::string& dir, const std::string& format) {
    std::filesystem::create_directories(dir);
    std::vector<std::string> written;
    if (format == "json") {
        const std::string path = dir + "/report.json";
        std::ofstream out(path);
        if (!out) throw std::runtime_error("export: cannot open " + path);
        out << nlohmann::json(report).dump(2) << "\n";
        written.push_back(path);
        return written;
    }
    if (format != "csv") throw std::runtime_error("export: unknown format " + format);
    for (const auto& name : config.checks) {
        std::string file = name;
        for (auto& ch : file)
            if (ch == '.' || ch == '/') ch = '_';
        const std::string path = dir + "/" + file + ".csv";
        std::ofstream out(path);
        if (!out) throw std::runtime_error("export: cannot open " + path);
        out << to_csv(report, name);
        written.push_back(path);
    }
    return written;
}

} // namespace semiflow
