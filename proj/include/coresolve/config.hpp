#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "coresolve/common.hpp"
#include "coresolve/trainer.hpp"

namespace cores {

using json = nlohmann::json;

inline constexpr int kSummarySchemaVersion = 1;

// ---- strict schema ------------------------------------------------------------
//
// One JSON document with sections {problem, model, kernel, sampling,
// optimizer, experiment} (+ inverse for the inverse driver). Unknown keys are
// hard errors so a config can never silently drift.

namespace detail {

inline void check_keys(const json& obj, const std::string& path,
                       const std::set<std::string>& allowed) {
    if (!obj.is_object()) throw ConfigInvalid("config section " + path + " must be an object");
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key()))
            throw ConfigInvalid("unknown config key: " + path + "." + it.key());
}

template <typename T>
T get_or(const json& obj, const std::string& key, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigInvalid("config key has wrong type: " + key);
    }
}

} // namespace detail

struct ExperimentConfig {
    TrainRun run;
    std::string output_dir = "out";
    std::string tag;
    int grid_points = 201;  // prediction grid per axis
    // omega sweep
    double omega_min = -2.0, omega_max = 6.0;
    int omega_count = 200;
    std::vector<std::size_t> n_train_list = {10, 20, 40, 80, 160};
    bool sweep_train_stage_b = false;
    int stage_b_count = 9;
    // noise study
    std::vector<double> noise_levels = {0.0, 0.005, 0.01};
    // gp demo
    std::vector<double> demo_frequencies = {1.0, 2.0, 4.0};
    std::size_t demo_n_train = 100;
    double demo_omega = 2.0;
    json raw;  // canonical echo for hashing / manifests
};

inline ExperimentConfig parse_config_json(const json& cfg, bool require_problem = true) {
    detail::check_keys(cfg, "$",
                       {"problem", "model", "kernel", "sampling", "optimizer", "experiment",
                        "inverse"});
    ExperimentConfig out;
    out.raw = cfg;
    TrainRun& run = out.run;

    if (cfg.contains("problem")) {
        const json& p = cfg.at("problem");
        detail::check_keys(p, "problem",
                           {"name", "nu", "alpha", "epsilon", "A", "rho", "a1", "a2", "k1"});
        if (!p.contains("name")) throw ConfigInvalid("problem.name is required");
        const std::string name = p.at("name").get<std::string>();
        PdeParams params;
        params.nu = detail::get_or(p, "nu", name == "ldc" ? 0.01 : 0.02 / kPi);
        params.alpha = detail::get_or(p, "alpha", 30.0);
        params.epsilon = detail::get_or(p, "epsilon", 0.05);
        params.A = detail::get_or(p, "A", 3.0);
        params.rho = detail::get_or(p, "rho", 1.0);
        params.a1 = detail::get_or(p, "a1", 1.0);
        params.a2 = detail::get_or(p, "a2", 4.0);
        params.k1 = detail::get_or(p, "k1", 0.2);
        try {
            run.problem = make_problem(name, params);
        } catch (const Error& e) {
            throw ConfigInvalid(std::string("problem: ") + e.what());
        }
    } else if (require_problem) {
        throw ConfigInvalid("config needs a problem section");
    }

    if (cfg.contains("model")) {
        const json& m = cfg.at("model");
        detail::check_keys(m, "model", {"kind", "hidden"});
        const std::string kind = detail::get_or<std::string>(m, "kind", "nn-cores");
        try {
            run.kind = model_kind_from_string(kind);
        } catch (const Error& e) {
            throw ConfigInvalid(std::string("model.kind: ") + e.what());
        }
        run.hidden = detail::get_or(m, "hidden", std::vector<int>{20, 20, 20, 20});
        if (run.hidden.empty()) throw ConfigInvalid("model.hidden must be non-empty");
    }

    if (cfg.contains("kernel")) {
        const json& k = cfg.at("kernel");
        detail::check_keys(k, "kernel", {"omega", "sigma2", "kappa_max"});
        run.omega = detail::get_or(k, "omega", 2.0);
        run.sigma2 = detail::get_or(k, "sigma2", 1.0);
        run.kappa_max = detail::get_or(k, "kappa_max", 1e6);
        if (run.kappa_max <= 1.0) throw ConfigInvalid("kernel.kappa_max must be > 1");
    }

    if (cfg.contains("sampling")) {
        const json& s = cfg.at("sampling");
        detail::check_keys(s, "sampling",
                           {"n_boundary", "n_collocation", "n_test", "noise_level",
                            "n_data_baseline"});
        run.plan.n_bc_per_segment = detail::get_or<std::size_t>(s, "n_boundary", 40);
        run.plan.n_pde = detail::get_or<std::size_t>(s, "n_collocation", 10000);
        run.n_test = detail::get_or<std::size_t>(s, "n_test", 10000);
        run.noise_level = detail::get_or(s, "noise_level", 0.0);
        run.n_data_baseline = detail::get_or<std::size_t>(s, "n_data_baseline", 1000);
        if (run.plan.n_pde < 1) throw ConfigInvalid("sampling.n_collocation must be >= 1");
    }

    if (cfg.contains("optimizer")) {
        const json& o = cfg.at("optimizer");
        detail::check_keys(o, "optimizer",
                           {"method", "learning_rate", "epochs", "history", "beta1", "beta2",
                            "adam_epsilon", "wolfe_c1", "wolfe_c2", "max_line_search"});
        const std::string method = detail::get_or<std::string>(o, "method", "lbfgs");
        if (method == "adam")
            run.optim = OptimConfig::adam(detail::get_or(o, "learning_rate", 1e-3));
        else if (method == "lbfgs")
            run.optim = OptimConfig::lbfgs(detail::get_or(o, "learning_rate", 1e-2));
        else
            throw ConfigInvalid("optimizer.method must be adam or lbfgs");
        const int default_epochs =
            run.problem.num_outputs() > 1 ? 2000 : 1000;  // paper's single/multi-output budgets
        run.optim.epochs = detail::get_or(o, "epochs", default_epochs);
        if (run.optim.epochs < 1) throw ConfigInvalid("optimizer.epochs must be >= 1");
        run.optim.history = detail::get_or(o, "history", 10);
        run.optim.beta1 = detail::get_or(o, "beta1", 0.9);
        run.optim.beta2 = detail::get_or(o, "beta2", 0.999);
        run.optim.eps = detail::get_or(o, "adam_epsilon", 1e-8);
        run.optim.wolfe_c1 = detail::get_or(o, "wolfe_c1", 1e-4);
        run.optim.wolfe_c2 = detail::get_or(o, "wolfe_c2", 0.9);
        run.optim.max_line_search = detail::get_or(o, "max_line_search", 25);
        if (!(run.optim.wolfe_c1 > 0 && run.optim.wolfe_c1 < run.optim.wolfe_c2 &&
              run.optim.wolfe_c2 < 1))
            throw ConfigInvalid("optimizer: need 0 < wolfe_c1 < wolfe_c2 < 1");
    } else {
        run.optim.epochs = run.problem.num_outputs() > 1 ? 2000 : 1000;
    }

    if (cfg.contains("experiment")) {
        const json& e = cfg.at("experiment");
        detail::check_keys(e, "experiment",
                           {"seed", "output_dir", "tag", "metrics_every", "grid_points",
                            "omega_min", "omega_max", "omega_count", "n_train_list",
                            "sweep_train_stage_b", "stage_b_count", "noise_levels",
                            "demo_frequencies", "demo_n_train", "demo_omega", "use_lambda",
                            "use_rh", "w_pde", "w_rh", "n_rh", "eikonal_grid", "lw_grid_nx",
                            "lw_cfl", "quad_nodes"});
        run.seed = detail::get_or<std::uint64_t>(e, "seed", 0);
        out.output_dir = detail::get_or<std::string>(e, "output_dir", "out");
        out.tag = detail::get_or<std::string>(e, "tag", "");
        run.metrics_every = detail::get_or(e, "metrics_every", 1);
        out.grid_points = detail::get_or(e, "grid_points", 201);
        out.omega_min = detail::get_or(e, "omega_min", -2.0);
        out.omega_max = detail::get_or(e, "omega_max", 6.0);
        out.omega_count = detail::get_or(e, "omega_count", 200);
        out.n_train_list =
            detail::get_or(e, "n_train_list", std::vector<std::size_t>{10, 20, 40, 80, 160});
        out.sweep_train_stage_b = detail::get_or(e, "sweep_train_stage_b", false);
        out.stage_b_count = detail::get_or(e, "stage_b_count", 9);
        out.noise_levels = detail::get_or(e, "noise_levels", std::vector<double>{0.0, 0.005, 0.01});
        out.demo_frequencies =
            detail::get_or(e, "demo_frequencies", std::vector<double>{1.0, 2.0, 4.0});
        out.demo_n_train = detail::get_or<std::size_t>(e, "demo_n_train", 100);
        out.demo_omega = detail::get_or(e, "demo_omega", 2.0);
        run.use_lambda = detail::get_or(e, "use_lambda", true);
        run.use_rh = detail::get_or(e, "use_rh", true);
        run.w_pde = detail::get_or(e, "w_pde", 1.0);
        run.w_rh = detail::get_or(e, "w_rh", 1.0);
        run.n_rh = detail::get_or<std::size_t>(e, "n_rh", 64);
        run.ref_options.eikonal_grid = detail::get_or(e, "eikonal_grid", 512);
        run.ref_options.lw_grid_nx = detail::get_or(e, "lw_grid_nx", 2001);
        run.ref_options.lw_cfl = detail::get_or(e, "lw_cfl", 0.4);
        run.ref_options.quad_nodes = detail::get_or(e, "quad_nodes", 100);
    }

    if (cfg.contains("inverse")) {
        const json& iv = cfg.at("inverse");
        detail::check_keys(iv, "inverse",
                           {"unknown", "initial_guess", "n_observations", "observation_noise"});
        run.inverse.unknown = detail::get_or<std::string>(iv, "unknown", "nu");
        run.inverse.initial_guess = detail::get_or(iv, "initial_guess", 0.01);
        run.inverse.n_obs = detail::get_or<std::size_t>(iv, "n_observations", 200);
        run.inverse.obs_noise = detail::get_or(iv, "observation_noise", 0.0);
    }

    // environment override for the output directory
    if (const char* env = std::getenv("CORESOLVE_OUTDIR")) out.output_dir = env;
    return out;
}

inline ExperimentConfig load_config(const std::string& path, bool require_problem = true) {
    std::ifstream in(path);
    if (!in) throw ConfigInvalid("cannot open config file: " + path);
    json cfg;
    try {
        cfg = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigInvalid(std::string("config parse error: ") + e.what());
    }
    return parse_config_json(cfg, require_problem);
}

// ---- manifest -------------------------------------------------------------------

inline std::string fnv1a64_hex(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    char buf[19];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

struct RunManifest {
    json config_echo;
    std::string config_hash;
    std::uint64_t seed = 0;
    std::string started_utc, finished_utc;
    std::vector<std::string> outputs;
    std::string status = "ok";
    std::string error;

    json to_json() const {
        json j;
        j["config"] = config_echo;
        j["config_hash"] = config_hash;
        j["seed"] = seed;
        j["started_utc"] = started_utc;
        j["finished_utc"] = finished_utc;
        j["outputs"] = outputs;
        j["status"] = status;
        if (!error.empty()) j["error"] = error;
        return j;
    }

    void write(const std::string& path) {
        outputs.push_back(path);
        std::ofstream out(path, std::ios::binary);
        if (!out) throw Error("cannot write manifest: " + path);
        out << to_json().dump(2) << "\n";
    }
};

inline RunManifest make_manifest(const ExperimentConfig& cfg) {
    RunManifest m;
    m.config_echo = cfg.raw;
    m.config_hash = fnv1a64_hex(cfg.raw.dump());
    m.seed = cfg.run.seed;
    m.started_utc = utc_timestamp();
    return m;
}

// Versioned summary reader: unknown versions are rejected loudly.
inline json read_summary(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open summary: " + path);
    json j = json::parse(in);
    if (!j.contains("schema_version") || j.at("schema_version").get<int>() != kSummarySchemaVersion)
        throw Error("unsupported summary schema version in " + path);
    return j;
}

} // namespace cores
