#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "coresolve/config.hpp"
#include "coresolve/io.hpp"
#include "coresolve/trainer.hpp"

namespace cores {

namespace fs = std::filesystem;

namespace detail {

inline std::string out_path(const ExperimentConfig& cfg, const std::string& name) {
    fs::create_directories(cfg.output_dir);
    return (fs::path(cfg.output_dir) / name).string();
}

// Equispaced prediction grid over the problem box, with reference and error
// columns per output.
inline void write_prediction_grid(const std::string& path, const ExperimentConfig& cfg,
                                  const std::function<void(const std::vector<double>&, std::size_t,
                                                           std::vector<double>&)>& predict,
                                  const ReferenceOracle& oracle) {
    const PdeProblem& p = cfg.run.problem;
    const int g = cfg.grid_points;
    const int q = p.num_outputs();
    std::vector<double> pts;
    pts.reserve(static_cast<std::size_t>(g) * g * p.d);
    for (int i = 0; i < g; ++i)
        for (int j = 0; j < g; ++j) {
            pts.push_back(p.box_lo[0] + (p.box_hi[0] - p.box_lo[0]) * i / double(g - 1));
            pts.push_back(p.box_lo[1] + (p.box_hi[1] - p.box_lo[1]) * j / double(g - 1));
        }
    const std::size_t n = static_cast<std::size_t>(g) * g;
    std::vector<double> pred;
    predict(pts, n, pred);

    CsvTable t;
    t.header = {"x1", "x2"};
    for (int o = 0; o < q; ++o) t.header.push_back("pred_" + p.outputs[o]);
    for (int o = 0; o < q; ++o) t.header.push_back("ref_" + p.outputs[o]);
    for (int o = 0; o < q; ++o) t.header.push_back("abs_err_" + p.outputs[o]);
    t.rows.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::string> row;
        row.push_back(fmt_double(pts[i * 2]));
        row.push_back(fmt_double(pts[i * 2 + 1]));
        std::vector<double> ref(q, std::numeric_limits<double>::quiet_NaN());
        if (oracle.available)
            for (int o = 0; o < q; ++o) ref[o] = oracle(pts.data() + i * 2, o);
        for (int o = 0; o < q; ++o) row.push_back(fmt_double(pred[i * q + o]));
        for (int o = 0; o < q; ++o) row.push_back(fmt_double(ref[o]));
        for (int o = 0; o < q; ++o) row.push_back(fmt_double(std::abs(pred[i * q + o] - ref[o])));
        t.rows.push_back(std::move(row));
    }
    t.write(path);
}

inline json base_summary(const ExperimentConfig& cfg, const std::string& experiment) {
    json s;
    s["schema_version"] = kSummarySchemaVersion;
    s["experiment"] = experiment;
    s["problem"] = cfg.run.problem.name;
    s["model"] = to_string(cfg.run.kind);
    s["seed"] = cfg.run.seed;
    return s;
}

inline void write_summary(RunManifest& manifest, const std::string& path, const json& summary) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write summary: " + path);
    out << summary.dump(2) << "\n";
    manifest.outputs.push_back(path);
}

inline void finish_solve_outputs(const ExperimentConfig& cfg, RunManifest& manifest,
                                 const TrainResult& result, const ReferenceOracle& oracle,
                                 const std::function<void(const std::vector<double>&, std::size_t,
                                                          std::vector<double>&)>& predict,
                                 json& summary) {
    const std::string loss_csv = out_path(cfg, "loss_report.csv");
    write_loss_report_csv(loss_csv, result.report);
    manifest.outputs.push_back(loss_csv);

    const std::string grid_csv = out_path(cfg, "prediction_grid.csv");
    write_prediction_grid(grid_csv, cfg, predict, oracle);
    manifest.outputs.push_back(grid_csv);

    const std::string hist_csv = out_path(cfg, "gradient_histogram.csv");
    write_histogram_csv(hist_csv, gradient_histogram(result.final_grad, 56));
    manifest.outputs.push_back(hist_csv);

    summary["final_loss"] = result.report.final_loss;
    summary["l2e_domain"] = result.report.final_l2e_domain;
    summary["l2e_boundary"] = result.report.final_l2e_boundary;
    summary["l2e_mean_only"] = result.report.final_l2e_mean_only;
    summary["boundary_max_err"] = result.report.final_boundary_max;
    summary["initial_boundary_max_err"] = result.report.initial_boundary_max;
    summary["epochs_run"] = result.trace.loss.size();
    summary["function_evals"] = result.trace.function_evals;
    summary["block_kappa"] = result.report.block_kappa;
    summary["block_delta"] = result.report.block_delta;
}

} // namespace detail

// ---- solve -------------------------------------------------------------------------

inline RunManifest run_solve(const std::string& config_path) {
    ExperimentConfig cfg = load_config(config_path);
    RunManifest manifest = make_manifest(cfg);
    try {
        const TrainRun& run = cfg.run;
        const ReferenceOracle oracle = build_reference(run.problem, run.ref_options);
        json summary = detail::base_summary(cfg, "solve");
        TrainResult result;

        if (run.kind == ModelKind::NnCores) {
            CoResField field = module_one(run);
            result = module_two(field, run, &oracle);
            const std::string net_path = detail::out_path(cfg, "network.txt");
            save_network(field.mean(), net_path);
            manifest.outputs.push_back(net_path);
            detail::finish_solve_outputs(
                cfg, manifest, result, oracle,
                [&](const std::vector<double>& pts, std::size_t n, std::vector<double>& out) {
                    out = field.predict_values(pts, n);
                },
                summary);
        } else {
            auto [net, res] = run.kind == ModelKind::Pinn ? train_pinn(run, &oracle)
                                                          : train_pinn_hc(run, &oracle);
            result = std::move(res);
            const std::string net_path = detail::out_path(cfg, "network.txt");
            save_network(net, net_path);
            manifest.outputs.push_back(net_path);
            const bool hc = run.kind == ModelKind::PinnHc;
            const PdeProblem& p = run.problem;
            detail::finish_solve_outputs(
                cfg, manifest, result, oracle,
                [&](const std::vector<double>& pts, std::size_t n, std::vector<double>& out) {
                    const int q = p.num_outputs();
                    out.assign(n * q, 0.0);
                    JetEvaluator ev(net, ChannelSet::value_only(p.d));
                    JetWorkspace ws;
                    ev.init_workspace(ws);
                    std::vector<double> m(q);
                    double gauge = 0.0;
                    if (hc && hc_pressure_gauge(p)) {
                        const double origin[2] = {0.0, 0.0};
                        ev.forward(ws, origin, m.data());
                        gauge = m[2];
                    }
                    for (std::size_t i = 0; i < n; ++i) {
                        ev.forward(ws, pts.data() + i * p.d, m.data());
                        for (int o = 0; o < q; ++o) {
                            double v = m[o];
                            if (hc) {
                                double a1, b1;
                                hc_transform(p, o, pts.data() + i * p.d,
                                             ChannelSet::value_only(p.d), &a1, &b1);
                                v = a1 * v + b1;
                                if (o == 2 && hc_pressure_gauge(p)) v -= gauge;
                            }
                            out[i * q + o] = v;
                        }
                    }
                },
                summary);
        }
        detail::write_summary(manifest, detail::out_path(cfg, "summary.json"), summary);
    } catch (...) {
        manifest.status = "failed";
        manifest.finished_utc = utc_timestamp();
        try {
            manifest.write(detail::out_path(cfg, "manifest.json"));
        } catch (...) {}
        throw;
    }
    manifest.finished_utc = utc_timestamp();
    manifest.write(detail::out_path(cfg, "manifest.json"));
    return manifest;
}

// ---- inverse -------------------------------------------------------------------------

inline RunManifest run_inverse(const std::string& config_path) {
    ExperimentConfig cfg = load_config(config_path);
    if (cfg.run.inverse.unknown.empty())
        throw ConfigInvalid("inverse driver needs an inverse section with an unknown");
    RunManifest manifest = make_manifest(cfg);
    try {
        const TrainRun& run = cfg.run;
        const ReferenceOracle oracle = build_reference(run.problem, run.ref_options);
        InverseResult inv = train_inverse(run, &oracle);

        json summary = detail::base_summary(cfg, "inverse");
        summary["unknown"] = run.inverse.unknown;
        summary["n_observations"] = run.inverse.n_obs;
        double truth = 0.0;
        if (run.inverse.unknown == "nu") truth = run.problem.params.nu;
        else if (run.inverse.unknown == "alpha") truth = run.problem.params.alpha;
        else if (run.inverse.unknown == "epsilon") truth = run.problem.params.epsilon;
        summary["true_value"] = truth;
        summary["recovered_value"] = inv.train.unknown_final;
        summary["relative_error"] = std::abs(inv.train.unknown_final - truth) / std::abs(truth);

        CsvTable trace;
        trace.header = {"epoch", "unknown_value", "loss"};
        for (std::size_t e = 0; e < inv.train.unknown_trace.size(); ++e)
            trace.rows.push_back({std::to_string(e + 1), fmt_double(inv.train.unknown_trace[e]),
                                  fmt_double(inv.train.trace.loss[e])});
        const std::string trace_csv = detail::out_path(cfg, "inverse_trace.csv");
        trace.write(trace_csv);
        manifest.outputs.push_back(trace_csv);

        detail::finish_solve_outputs(
            cfg, manifest, inv.train, oracle,
            [&](const std::vector<double>& pts, std::size_t n, std::vector<double>& out) {
                out = inv.field.predict_values(pts, n);
            },
            summary);
        detail::write_summary(manifest, detail::out_path(cfg, "summary.json"), summary);
    } catch (...) {
        manifest.status = "failed";
        manifest.finished_utc = utc_timestamp();
        try {
            manifest.write(detail::out_path(cfg, "manifest.json"));
        } catch (...) {}
        throw;
    }
    manifest.finished_utc = utc_timestamp();
    manifest.write(detail::out_path(cfg, "manifest.json"));
    return manifest;
}

// ---- omega sweep -----------------------------------------------------------------------
//
// Stage A rebuilds the untrained composite field for every (omega, n_train)
// pair and records held-out boundary errors; none of the GPs is trained, so
// the sweep stays cheap. Stage B (optional) runs the full two-module training
// on a coarse omega grid.

inline RunManifest run_sweep_omega(const std::string& config_path) {
    ExperimentConfig cfg = load_config(config_path);
    RunManifest manifest = make_manifest(cfg);
    try {
        const TrainRun& base = cfg.run;
        if (cfg.omega_count < 1) throw ConfigInvalid("experiment.omega_count must be >= 1");
        const RunSeeds seeds(base.seed);
        MeanNetwork net(base.widths(), seeds.net);  // frozen random mean, shared by all GPs

        const std::size_t n_held = base.n_test;
        std::vector<double> bpts =
            detail::sample_boundary_points(base.problem, n_held, seeds.btest);
        const int q = base.problem.num_outputs();
        std::vector<double> bexact(n_held * q);
        for (std::size_t i = 0; i < n_held; ++i)
            for (int o = 0; o < q; ++o)
                bexact[i * q + o] = boundary_value(base.problem, o, bpts.data() + i * 2);
        const ReferenceOracle oracle = build_reference(base.problem, base.ref_options);
        const double range = solution_range(base.problem, oracle);

        CsvTable t;
        t.header = {"omega",   "n_train",     "max_err", "rms_err",
                    "max_err_rel", "rms_err_rel", "kappa",   "delta"};
        for (std::size_t in = 0; in < cfg.n_train_list.size(); ++in) {
            const std::size_t ntr = cfg.n_train_list[in];
            SamplePlan plan = base.plan;
            plan.n_bc_per_segment = ntr;
            std::vector<BoundaryDataset> data = sample_boundary(base.problem, plan);
            for (int iw = 0; iw < cfg.omega_count; ++iw) {
                const double omega =
                    cfg.omega_count == 1
                        ? cfg.omega_min
                        : cfg.omega_min +
                              (cfg.omega_max - cfg.omega_min) * iw / double(cfg.omega_count - 1);
                KernelConfig kc = KernelConfig::iso(base.problem.d, omega);
                kc.sigma2 = base.sigma2;
                kc.kappa_max = base.kappa_max;
                std::vector<KernelBlock> blocks;
                bool exhausted = false;
                for (const auto& ds : data) {
                    try {
                        blocks.push_back(calibrate_nugget(ds, kc));
                    } catch (const NuggetExhausted&) {
                        exhausted = true;
                        break;
                    }
                }
                if (exhausted) {
                    t.rows.push_back({fmt_double(omega), std::to_string(ntr), "nan", "nan",
                                      "nan", "nan", "inf", "nan"});
                    continue;
                }
                CoResField field(net, std::move(blocks));
                std::vector<double> pred = field.predict_values(bpts, n_held);
                double mx = 0.0, s = 0.0;
                for (std::size_t i = 0; i < n_held * q; ++i) {
                    const double e = std::abs(pred[i] - bexact[i]);
                    mx = std::max(mx, e);
                    s += e * e;
                }
                const double rms = std::sqrt(s / double(n_held * q));
                t.rows.push_back({fmt_double(omega), std::to_string(ntr), fmt_double(mx),
                                  fmt_double(rms), fmt_double(mx / range), fmt_double(rms / range),
                                  fmt_double(field.block(0).kappa),
                                  fmt_double(field.block(0).config.delta)});
            }
        }
        const std::string sweep_csv = detail::out_path(cfg, "sweep_omega.csv");
        t.write(sweep_csv);
        manifest.outputs.push_back(sweep_csv);

        json summary = detail::base_summary(cfg, "sweep-omega");
        summary["omega_count"] = cfg.omega_count;
        summary["n_train_list"] = cfg.n_train_list;
        summary["solution_range"] = range;

        if (cfg.sweep_train_stage_b) {
            CsvTable tb;
            tb.header = {"omega", "l2e_domain", "final_loss"};
            for (int iw = 0; iw < cfg.stage_b_count; ++iw) {
                const double omega =
                    cfg.stage_b_count == 1
                        ? cfg.omega_min
                        : cfg.omega_min +
                              (cfg.omega_max - cfg.omega_min) * iw / double(cfg.stage_b_count - 1);
                TrainRun run = base;
                run.omega = omega;
                try {
                    CoResField field = module_one(run);
                    TrainResult r = module_two(field, run, &oracle);
                    tb.rows.push_back({fmt_double(omega), fmt_double(r.report.final_l2e_domain),
                                       fmt_double(r.report.final_loss)});
                } catch (const NuggetExhausted&) {
                    tb.rows.push_back({fmt_double(omega), "nan", "nan"});
                }
            }
            const std::string tb_csv = detail::out_path(cfg, "sweep_omega_trained.csv");
            tb.write(tb_csv);
            manifest.outputs.push_back(tb_csv);
        }
        detail::write_summary(manifest, detail::out_path(cfg, "summary.json"), summary);
    } catch (...) {
        manifest.status = "failed";
        manifest.finished_utc = utc_timestamp();
        try {
            manifest.write(detail::out_path(cfg, "manifest.json"));
        } catch (...) {}
        throw;
    }
    manifest.finished_utc = utc_timestamp();
    manifest.write(detail::out_path(cfg, "manifest.json"));
    return manifest;
}

// ---- noise study -----------------------------------------------------------------------

inline RunManifest run_noise_study(const std::string& config_path) {
    ExperimentConfig cfg = load_config(config_path);
    RunManifest manifest = make_manifest(cfg);
    try {
        if (cfg.noise_levels.empty()) throw ConfigInvalid("experiment.noise_levels is empty");
        const ReferenceOracle oracle = build_reference(cfg.run.problem, cfg.run.ref_options);
        const double range = solution_range(cfg.run.problem, oracle);
        CsvTable t;
        t.header = {"noise_level", "noise_std", "l2e_domain", "l2e_boundary", "final_loss"};
        json per_level = json::array();
        for (double level : cfg.noise_levels) {
            TrainRun run = cfg.run;
            run.noise_level = level;
            CoResField field = module_one(run, nullptr, range);
            TrainResult r = module_two(field, run, &oracle);
            t.rows.push_back({fmt_double(level), fmt_double(level * range),
                              fmt_double(r.report.final_l2e_domain),
                              fmt_double(r.report.final_l2e_boundary),
                              fmt_double(r.report.final_loss)});
            json e;
            e["noise_level"] = level;
            e["l2e_domain"] = r.report.final_l2e_domain;
            e["l2e_boundary"] = r.report.final_l2e_boundary;
            per_level.push_back(e);
        }
        const std::string csv = detail::out_path(cfg, "noise_study.csv");
        t.write(csv);
        manifest.outputs.push_back(csv);
        json summary = detail::base_summary(cfg, "noise");
        summary["solution_range"] = range;
        summary["levels"] = per_level;
        detail::write_summary(manifest, detail::out_path(cfg, "summary.json"), summary);
    } catch (...) {
        manifest.status = "failed";
        manifest.finished_utc = utc_timestamp();
        try {
            manifest.write(detail::out_path(cfg, "manifest.json"));
        } catch (...) {}
        throw;
    }
    manifest.finished_utc = utc_timestamp();
    manifest.write(detail::out_path(cfg, "manifest.json"));
    return manifest;
}

// ---- fixed-hyperparameter 1-D GP regression demo ------------------------------------------

inline RunManifest run_gp_demo(const std::string& config_path) {
    ExperimentConfig cfg = load_config(config_path, /*require_problem=*/false);
    RunManifest manifest = make_manifest(cfg);
    try {
        json freqs = json::array();
        CsvTable curves;
        curves.header = {"frequency", "x", "u_true", "u_pred"};
        CsvTable table;
        table.header = {"frequency", "n_train", "delta", "kappa", "rmse_test"};
        SplitMix64 rng(cfg.run.seed);
        for (double f : cfg.demo_frequencies) {
            const std::size_t n = cfg.demo_n_train;
            BoundaryDataset ds;
            ds.d = 1;
            for (std::size_t i = 0; i < n; ++i) {
                const double x = n == 1 ? 0.0 : double(i) / double(n - 1);
                ds.append(&x, std::sin(2.0 * kPi * f * x), RowTag::Observation);
            }
            KernelConfig kc = KernelConfig::iso(1, cfg.demo_omega);
            kc.kappa_max = cfg.run.kappa_max;
            KernelBlock block = calibrate_nugget(ds, kc);
            MeanNetwork zero({1, 1}, 0);
            zero.set_params({0.0, 0.0});  // zero-mean GP
            CoResField field(std::move(zero), {std::move(block)});

            std::vector<double> xt(10000);
            for (auto& x : xt) x = rng.next_double();
            std::vector<double> pred = field.predict_values(xt, xt.size());
            double s = 0.0;
            for (std::size_t i = 0; i < xt.size(); ++i) {
                const double e = pred[i] - std::sin(2.0 * kPi * f * xt[i]);
                s += e * e;
            }
            const double rmse = std::sqrt(s / double(xt.size()));

            std::vector<double> xg(1001);
            for (std::size_t i = 0; i < xg.size(); ++i) xg[i] = double(i) / 1000.0;
            std::vector<double> pg = field.predict_values(xg, xg.size());
            for (std::size_t i = 0; i < xg.size(); ++i)
                curves.rows.push_back({fmt_double(f), fmt_double(xg[i]),
                                       fmt_double(std::sin(2.0 * kPi * f * xg[i])),
                                       fmt_double(pg[i])});

            table.rows.push_back({fmt_double(f), std::to_string(n),
                                  fmt_double(field.block(0).config.delta),
                                  fmt_double(field.block(0).kappa), fmt_double(rmse)});
            json e;
            e["frequency"] = f;
            e["delta"] = field.block(0).config.delta;
            e["kappa"] = field.block(0).kappa;
            e["rmse_test"] = rmse;
            freqs.push_back(e);
        }
        const std::string curves_csv = detail::out_path(cfg, "gp_demo_curves.csv");
        curves.write(curves_csv);
        manifest.outputs.push_back(curves_csv);
        const std::string table_csv = detail::out_path(cfg, "gp_demo.csv");
        table.write(table_csv);
        manifest.outputs.push_back(table_csv);
        json summary = detail::base_summary(cfg, "gp-demo");
        summary["frequencies"] = freqs;
        detail::write_summary(manifest, detail::out_path(cfg, "summary.json"), summary);
    } catch (...) {
        manifest.status = "failed";
        manifest.finished_utc = utc_timestamp();
        try {
            manifest.write(detail::out_path(cfg, "manifest.json"));
        } catch (...) {}
        throw;
    }
    manifest.finished_utc = utc_timestamp();
    manifest.write(detail::out_path(cfg, "manifest.json"));
    return manifest;
}

} // namespace cores
