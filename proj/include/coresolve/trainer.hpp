#pragma once

#include <chrono>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "coresolve/field.hpp"
#include "coresolve/loss.hpp"
#include "coresolve/metrics.hpp"
#include "coresolve/optim.hpp"
#include "coresolve/pde.hpp"
#include "coresolve/reference.hpp"

namespace cores {

enum class ModelKind { NnCores, Pinn, PinnHc };

inline std::string to_string(ModelKind k) {
    switch (k) {
        case ModelKind::NnCores: return "nn-cores";
        case ModelKind::Pinn: return "pinn";
        case ModelKind::PinnHc: return "pinn-hc";
    }
    return "?";
}

inline ModelKind model_kind_from_string(const std::string& s) {
    if (s == "nn-cores") return ModelKind::NnCores;
    if (s == "pinn") return ModelKind::Pinn;
    if (s == "pinn-hc") return ModelKind::PinnHc;
    throw Error("unknown model kind: " + s);
}

struct InverseSpec {
    std::string unknown;        // "" = forward problem
    double initial_guess = 0.0;
    std::size_t n_obs = 0;
    double obs_noise = 0.0;     // absolute std of observation noise
};

struct TrainRun {
    PdeProblem problem;
    ModelKind kind = ModelKind::NnCores;
    std::vector<int> hidden = {20, 20, 20, 20};
    SamplePlan plan;
    OptimConfig optim = OptimConfig::lbfgs();
    std::uint64_t seed = 0;
    double noise_level = 0.0;
    InverseSpec inverse;

    double omega = 2.0;
    double sigma2 = 1.0;
    double kappa_max = 1e6;

    // inviscid strategy switches
    bool use_lambda = true;
    bool use_rh = true;
    double w_pde = 1.0, w_rh = 1.0;
    std::size_t n_rh = 64;

    std::size_t n_data_baseline = 1000;  // PINN boundary/IC sample count
    std::size_t n_test = 10000;
    int metrics_every = 1;
    ReferenceOptions ref_options;

    std::vector<int> widths() const {
        std::vector<int> w;
        w.push_back(problem.d);
        w.insert(w.end(), hidden.begin(), hidden.end());
        w.push_back(problem.num_outputs());
        return w;
    }
};

// Deterministic sub-streams for the run's random choices.
struct RunSeeds {
    std::uint64_t net, cp, test, btest, noise, obs, data;
    explicit RunSeeds(std::uint64_t master) {
        SplitMix64 root(master);
        net = root.next_u64();
        cp = root.next_u64();
        test = root.next_u64();
        btest = root.next_u64();
        noise = root.next_u64();
        obs = root.next_u64();
        data = root.next_u64();
    }
};

struct LossRow {
    int epoch = 0;
    double loss_total = 0, loss_pde = 0, loss_bc = 0, loss_ic = 0;
    double l2e_domain = std::numeric_limits<double>::quiet_NaN();
    double l2e_boundary = std::numeric_limits<double>::quiet_NaN();
    double l2e_mean_only = std::numeric_limits<double>::quiet_NaN();
    double boundary_max_err = std::numeric_limits<double>::quiet_NaN();
    double wall_seconds = 0;
    bool has_metrics = false;
};

struct LossReport {
    std::vector<LossRow> rows;          // epoch 0 row is the pre-training state
    double final_loss = 0;
    double final_l2e_domain = std::numeric_limits<double>::quiet_NaN();
    double final_l2e_boundary = std::numeric_limits<double>::quiet_NaN();
    double final_l2e_mean_only = std::numeric_limits<double>::quiet_NaN();
    double final_boundary_max = std::numeric_limits<double>::quiet_NaN();
    double initial_boundary_max = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> block_kappa, block_delta;
};

struct TrainResult {
    LossReport report;
    OptTrace trace;
    std::vector<double> final_grad;       // dL_PDE-side gradient at the returned theta
    std::vector<double> unknown_trace;    // inverse mode, one entry per epoch
    double unknown_final = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

// Random points on the boundary, segments weighted by arc length.
inline std::vector<double> sample_boundary_points(const PdeProblem& p, std::size_t n,
                                                  std::uint64_t seed) {
    SplitMix64 rng(seed);
    double total = 0.0;
    for (const auto& s : p.segments) total += s.hi - s.lo;
    std::vector<double> pts(n * p.d);
    for (std::size_t i = 0; i < n; ++i) {
        double r = rng.uniform(0.0, total);
        const BoundarySegment* seg = &p.segments.back();
        for (const auto& s : p.segments) {
            const double len = s.hi - s.lo;
            if (r <= len) { seg = &s; break; }
            r -= len;
        }
        pts[i * p.d + seg->fixed_dim] = seg->fixed_value;
        pts[i * p.d + seg->vary_dim] = seg->lo + std::min(r, seg->hi - seg->lo);
    }
    return pts;
}

// Tracks L2,e on held-out domain/boundary points during training. The model
// value is the composite eta (Field mode), the bare network (Plain), or the
// hard-constrained transform (Hc); the kernel/transform pieces are
// theta-independent and precomputed once.
class MetricsRecorder {
  public:
    enum class Mode { Field, Plain, Hc };

    MetricsRecorder(const PdeProblem& problem, const ReferenceOracle& oracle,
                    std::size_t n_test, std::uint64_t test_seed, std::uint64_t btest_seed,
                    Mode mode)
        : prob_(problem), mode_(mode) {
        SamplePlan plan(0, n_test, test_seed);
        domain_pts_ = sample_interior(problem, plan);
        n_dom_ = n_test;
        boundary_pts_ = sample_boundary_points(problem, n_test, btest_seed);
        n_bnd_ = n_test;
        const int q = prob_.num_outputs();
        if (oracle.available) {
            ref_.assign(n_dom_ * q, 0.0);
            for (std::size_t i = 0; i < n_dom_; ++i)
                for (int o = 0; o < q; ++o)
                    ref_[i * q + o] = oracle(domain_pts_.data() + i * prob_.d, o);
            have_ref_ = true;
        }
        bexact_.assign(n_bnd_ * q, 0.0);
        binclude_.assign(q, true);
        for (int o = 0; o < q; ++o) {
            if (prob_.kind == ProblemKind::Ldc && prob_.outputs[o] == "p") {
                binclude_[o] = false;  // pressure is pinned at one point, not on curves
                continue;
            }
            for (std::size_t i = 0; i < n_bnd_; ++i)
                bexact_[i * q + o] = boundary_value(prob_, o, boundary_pts_.data() + i * prob_.d);
        }
        if (mode_ == Mode::Hc) {
            const ChannelSet vcs = ChannelSet::value_only(prob_.d);
            auto fill = [&](const std::vector<double>& pts, std::size_t n, std::vector<double>& a,
                            std::vector<double>& b) {
                a.assign(n * q, 0.0);
                b.assign(n * q, 0.0);
                double a1, b1;
                for (std::size_t i = 0; i < n; ++i)
                    for (int o = 0; o < q; ++o) {
                        hc_transform(prob_, o, pts.data() + i * prob_.d, vcs, &a1, &b1);
                        a[i * q + o] = a1;
                        b[i * q + o] = b1;
                    }
            };
            fill(domain_pts_, n_dom_, a_dom_, b_dom_);
            fill(boundary_pts_, n_bnd_, a_bnd_, b_bnd_);
        }
    }

    void attach_field(const CoResField& field) {
        field_ = &field;
        const ChannelSet vcs = ChannelSet::value_only(prob_.d);
        const int q = prob_.num_outputs();
        wdom_.clear();
        wbnd_.clear();
        for (int o = 0; o < q; ++o) {
            wdom_.push_back(field.weight_jets(o, domain_pts_, n_dom_, vcs));
            wbnd_.push_back(field.weight_jets(o, boundary_pts_, n_bnd_, vcs));
        }
    }

    void record(const MeanNetwork& net, LossRow& row) const {
        const int q = prob_.num_outputs();
        std::vector<double> mdom(n_dom_ * q), mbnd(n_bnd_ * q);
        batch_values(net, domain_pts_, n_dom_, mdom);
        batch_values(net, boundary_pts_, n_bnd_, mbnd);

        std::vector<std::vector<double>> r;
        if (mode_ == Mode::Field) {
            r.resize(q);
            JetEvaluator ev(net, ChannelSet::value_only(prob_.d));
            JetWorkspace ws;
            ev.init_workspace(ws);
            std::vector<double> out(q);
            for (int o = 0; o < q; ++o) {
                const auto& b = field_->block(o);
                r[o].resize(b.size());
                for (std::size_t j = 0; j < b.size(); ++j) {
                    ev.forward(ws, b.data.point(j), out.data());
                    r[o][j] = b.data.u[j] - out[o];
                }
            }
        }
        double gauge = 0.0;
        if (mode_ == Mode::Hc && hc_pressure_gauge(prob_)) {
            JetEvaluator ev(net, ChannelSet::value_only(prob_.d));
            JetWorkspace ws;
            ev.init_workspace(ws);
            std::vector<double> out(q);
            const double origin[2] = {0.0, 0.0};
            ev.forward(ws, origin, out.data());
            gauge = out[2];
        }

        auto model_at = [&](const std::vector<double>& m,
                            const std::vector<CoResField::WeightJets>& w,
                            const std::vector<double>& a, const std::vector<double>& b,
                            std::size_t i, int o) {
            double v = m[i * q + o];
            if (mode_ == Mode::Field) {
                const auto& wj = w[o];
                const double* rowp = wj.w[0].data() + i * wj.ntrain;
                for (std::size_t j = 0; j < wj.ntrain; ++j) v += rowp[j] * r[o][j];
            } else if (mode_ == Mode::Hc) {
                v = a[i * q + o] * v + b[i * q + o];
                if (o == 2 && hc_pressure_gauge(prob_)) v -= gauge;
            }
            return v;
        };

        if (have_ref_) {
            double acc = 0.0, acc_mean = 0.0;
            for (int o = 0; o < q; ++o) {
                double s = 0.0, sm = 0.0;
                for (std::size_t i = 0; i < n_dom_; ++i) {
                    const double pred = model_at(mdom, wdom_, a_dom_, b_dom_, i, o);
                    const double e = pred - ref_[i * q + o];
                    const double em = mdom[i * q + o] - ref_[i * q + o];
                    s += e * e;
                    sm += em * em;
                }
                acc += std::sqrt(s / double(n_dom_));
                acc_mean += std::sqrt(sm / double(n_dom_));
            }
            row.l2e_domain = acc / q;
            row.l2e_mean_only = mode_ == Mode::Field ? acc_mean / q : row.l2e_domain;
        }

        double s = 0.0, mx = 0.0;
        std::size_t cnt = 0;
        for (int o = 0; o < q; ++o) {
            if (!binclude_[o]) continue;
            for (std::size_t i = 0; i < n_bnd_; ++i) {
                const double e =
                    model_at(mbnd, wbnd_, a_bnd_, b_bnd_, i, o) - bexact_[i * q + o];
                s += e * e;
                mx = std::max(mx, std::abs(e));
                ++cnt;
            }
        }
        if (cnt) {
            row.l2e_boundary = std::sqrt(s / double(cnt));
            row.boundary_max_err = mx;
        }
        row.has_metrics = true;
    }

  private:
    void batch_values(const MeanNetwork& net, const std::vector<double>& pts, std::size_t n,
                      std::vector<double>& out) const {
        const int q = prob_.num_outputs();
        JetEvaluator ev(net, ChannelSet::value_only(prob_.d));
        parallel_chunks(n, [&](std::size_t, std::size_t lo, std::size_t hi) {
            JetWorkspace ws;
            ev.init_workspace(ws);
            for (std::size_t i = lo; i < hi; ++i)
                ev.forward(ws, pts.data() + i * prob_.d, out.data() + i * q);
        });
    }

    PdeProblem prob_;
    Mode mode_;
    const CoResField* field_ = nullptr;
    std::vector<double> domain_pts_, boundary_pts_;
    std::size_t n_dom_ = 0, n_bnd_ = 0;
    std::vector<double> ref_, bexact_;
    std::vector<bool> binclude_;
    bool have_ref_ = false;
    std::vector<CoResField::WeightJets> wdom_, wbnd_;
    std::vector<double> a_dom_, b_dom_, a_bnd_, b_bnd_;
};

} // namespace detail

// ---- module one: kernel calibration -------------------------------------------------
//
// Boundary datasets are sampled (and optionally noise-corrupted), each output
// block's nugget is calibrated against kappa_max, and the mean network is
// initialized from the run seed. Observation rows, when given, join the
// blocks exactly like BC/IC rows.
inline CoResField module_one(const TrainRun& run,
                             const std::vector<BoundaryDataset>* observations = nullptr,
                             double noise_range = 0.0) {
    const RunSeeds seeds(run.seed);
    std::vector<BoundaryDataset> data = sample_boundary(run.problem, run.plan);
    if (run.noise_level > 0.0) {
        double range = noise_range;
        if (range <= 0.0) {
            const ReferenceOracle oracle = build_reference(run.problem, run.ref_options);
            range = solution_range(run.problem, oracle);
        }
        SplitMix64 nseed(seeds.noise);
        for (auto& ds : data)
            ds = corrupt_boundary(ds, run.noise_level, nseed.next_u64(), range);
    }
    if (observations) {
        if (observations->size() != data.size())
            throw ShapeMismatch("module_one: one observation set per output expected");
        for (std::size_t o = 0; o < data.size(); ++o) {
            const auto& obs = (*observations)[o];
            for (std::size_t i = 0; i < obs.size(); ++i)
                data[o].append(obs.point(i), obs.u[i], RowTag::Observation);
        }
    }
    KernelConfig cfg = KernelConfig::iso(run.problem.d, run.omega);
    cfg.sigma2 = run.sigma2;
    cfg.kappa_max = run.kappa_max;
    std::vector<KernelBlock> blocks;
    blocks.reserve(data.size());
    for (auto& ds : data) blocks.push_back(calibrate_nugget(std::move(ds), cfg));
    MeanNetwork net(run.widths(), seeds.net);
    return CoResField(std::move(net), std::move(blocks));
}

namespace detail {

struct EpochRecorder {
    const TrainRun* run;
    const MetricsRecorder* rec;
    MeanNetwork* net;
    LossReport* report;
    CoresLossEngine* cores_engine = nullptr;
    PinnLossEngine* pinn_engine = nullptr;
    std::vector<double>* unknown_trace = nullptr;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    void operator()(int epoch, double loss, const std::vector<double>& theta) const {
        LossRow row;
        row.epoch = epoch;
        row.loss_total = loss;
        if (cores_engine) {
            // without the RH penalty the total IS the PDE loss, bitwise
            row.loss_pde = cores_engine->last_rh_loss() > 0.0 ? cores_engine->last_pde_loss()
                                                              : loss;
            if (unknown_trace) unknown_trace->push_back(cores_engine->unknown_value(theta));
        } else if (pinn_engine) {
            row.loss_pde = pinn_engine->last_pde_loss();
            row.loss_bc = pinn_engine->last_bc_loss();
            row.loss_ic = pinn_engine->last_ic_loss();
        }
        row.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool sample = run->metrics_every > 0 &&
                            (epoch % run->metrics_every == 0 || epoch == 1 ||
                             epoch == run->optim.epochs);
        if (sample) {
            const std::size_t np = net->num_params();
            if (theta.size() == np)
                net->set_params(theta);
            else
                net->set_params(std::vector<double>(theta.begin(), theta.begin() + np));
            rec->record(*net, row);
        }
        report->rows.push_back(row);
    }
};

} // namespace detail

// ---- module two: physics-residual training of the composite field -------------------

inline TrainResult module_two(CoResField& field, const TrainRun& run,
                              const ReferenceOracle* oracle_in = nullptr) {
    const RunSeeds seeds(run.seed);
    ReferenceOracle oracle = oracle_in ? *oracle_in : build_reference(run.problem, run.ref_options);

    SamplePlan cp_plan = run.plan;
    cp_plan.seed = seeds.cp;
    std::vector<double> cps = sample_interior(run.problem, cp_plan);

    CoresLossEngine::Options opts;
    if (!run.inverse.unknown.empty()) {
        opts.unknown = run.inverse.unknown;
        opts.unknown_init = run.inverse.initial_guess;
    }
    if (run.problem.kind == ProblemKind::InviscidBurgers) {
        opts.use_lambda = run.use_lambda;
        opts.use_rh = run.use_rh;
        opts.w_pde = run.w_pde;
        opts.w_rh = run.w_rh;
        opts.n_rh = run.n_rh;
    }
    CoresLossEngine engine(field, run.problem, std::move(cps), run.plan.n_pde, opts);

    detail::MetricsRecorder rec(run.problem, oracle, run.n_test, seeds.test, seeds.btest,
                                detail::MetricsRecorder::Mode::Field);
    rec.attach_field(field);

    TrainResult result;
    for (const auto& b : field.blocks()) {
        result.report.block_kappa.push_back(b.kappa);
        result.report.block_delta.push_back(b.config.delta);
    }

    {
        LossRow row;
        row.epoch = 0;
        rec.record(field.mean(), row);
        result.report.initial_boundary_max = row.boundary_max_err;
        result.report.rows.push_back(row);
    }

    detail::EpochRecorder on_epoch{&run,
                                   &rec,
                                   &field.mean(),
                                   &result.report,
                                   &engine,
                                   nullptr,
                                   opts.unknown.empty() ? nullptr : &result.unknown_trace};

    LossAndGrad f = [&engine](const std::vector<double>& th, std::vector<double>& g) {
        return engine(th, g);
    };
    auto [theta, trace] = minimize(
        f, engine.initial_theta(), run.optim,
        [&on_epoch](int e, double l, const std::vector<double>& th) { on_epoch(e, l, th); });
    result.trace = std::move(trace);

    result.final_grad.assign(theta.size(), 0.0);
    result.report.final_loss = engine(theta, result.final_grad);
    if (!opts.unknown.empty()) {
        result.unknown_final = engine.unknown_value(theta);
        result.final_grad.pop_back();
        theta.resize(field.mean().num_params());
    }
    field.set_params(theta);

    LossRow final_row;
    rec.record(field.mean(), final_row);
    result.report.final_l2e_domain = final_row.l2e_domain;
    result.report.final_l2e_boundary = final_row.l2e_boundary;
    result.report.final_l2e_mean_only = final_row.l2e_mean_only;
    result.report.final_boundary_max = final_row.boundary_max_err;
    return result;
}

// ---- baselines ----------------------------------------------------------------------

inline TrainResult train_baseline(MeanNetwork& net, const TrainRun& run, bool hard_constraint,
                                  const ReferenceOracle* oracle_in = nullptr) {
    const RunSeeds seeds(run.seed);
    ReferenceOracle oracle = oracle_in ? *oracle_in : build_reference(run.problem, run.ref_options);

    SamplePlan cp_plan = run.plan;
    cp_plan.seed = seeds.cp;
    std::vector<double> cps = sample_interior(run.problem, cp_plan);
    std::vector<DataRow> data;
    if (!hard_constraint)
        data = sample_baseline_data(run.problem, run.n_data_baseline, seeds.data);

    PinnLossEngine engine(net, run.problem, std::move(cps), run.plan.n_pde, std::move(data),
                          hard_constraint);
    detail::MetricsRecorder rec(run.problem, oracle, run.n_test, seeds.test, seeds.btest,
                                hard_constraint ? detail::MetricsRecorder::Mode::Hc
                                                : detail::MetricsRecorder::Mode::Plain);

    TrainResult result;
    {
        LossRow row;
        row.epoch = 0;
        rec.record(net, row);
        result.report.initial_boundary_max = row.boundary_max_err;
        result.report.rows.push_back(row);
    }
    detail::EpochRecorder on_epoch{&run, &rec, &net, &result.report, nullptr, &engine, nullptr};

    LossAndGrad f = [&engine](const std::vector<double>& th, std::vector<double>& g) {
        return engine(th, g);
    };
    auto [theta, trace] = minimize(
        f, net.params(), run.optim,
        [&on_epoch](int e, double l, const std::vector<double>& th) { on_epoch(e, l, th); });
    result.trace = std::move(trace);

    result.final_grad.assign(theta.size(), 0.0);
    result.report.final_loss = engine(theta, result.final_grad);
    net.set_params(theta);

    LossRow final_row;
    rec.record(net, final_row);
    result.report.final_l2e_domain = final_row.l2e_domain;
    result.report.final_l2e_boundary = final_row.l2e_boundary;
    result.report.final_l2e_mean_only = final_row.l2e_mean_only;
    result.report.final_boundary_max = final_row.boundary_max_err;
    return result;
}

inline std::pair<MeanNetwork, TrainResult> train_pinn(const TrainRun& run,
                                                      const ReferenceOracle* oracle = nullptr) {
    const RunSeeds seeds(run.seed);
    MeanNetwork net(run.widths(), seeds.net);
    TrainResult res = train_baseline(net, run, false, oracle);
    return {std::move(net), std::move(res)};
}

inline std::pair<MeanNetwork, TrainResult> train_pinn_hc(const TrainRun& run,
                                                         const ReferenceOracle* oracle = nullptr) {
    const RunSeeds seeds(run.seed);
    MeanNetwork net(run.widths(), seeds.net);
    TrainResult res = train_baseline(net, run, true, oracle);
    return {std::move(net), std::move(res)};
}

// ---- inverse problems ----------------------------------------------------------------
//
// The run's problem carries the true parameter; observations of the true
// solution at n_obs interior points are folded into the kernel blocks and the
// unknown is optimized jointly with theta (log-space, since the supported
// unknowns are positive physical constants).
struct InverseResult {
    CoResField field;
    TrainResult train;
    std::vector<BoundaryDataset> observations;
};

inline InverseResult train_inverse(const TrainRun& run,
                                   const ReferenceOracle* oracle_in = nullptr) {
    if (run.inverse.unknown.empty() || run.inverse.n_obs == 0)
        throw Error("train_inverse: inverse spec needs an unknown and n_obs > 0");
    const RunSeeds seeds(run.seed);
    ReferenceOracle oracle = oracle_in ? *oracle_in : build_reference(run.problem, run.ref_options);
    if (!oracle.available)
        throw Error("train_inverse: problem has no reference to sample observations from");

    SamplePlan obs_plan = run.plan;
    obs_plan.seed = seeds.obs;
    obs_plan.n_pde = run.inverse.n_obs;
    std::vector<double> obs_pts = sample_interior(run.problem, obs_plan);
    SplitMix64 obs_noise_rng(seeds.obs ^ 0x9e3779b97f4a7c15ULL);

    std::vector<BoundaryDataset> observations(run.problem.num_outputs());
    for (auto& ds : observations) ds.d = run.problem.d;
    for (std::size_t i = 0; i < run.inverse.n_obs; ++i) {
        const double* x = obs_pts.data() + i * run.problem.d;
        for (int o = 0; o < run.problem.num_outputs(); ++o) {
            double v = oracle(x, o);
            if (run.inverse.obs_noise > 0.0) v += run.inverse.obs_noise * obs_noise_rng.normal();
            observations[o].append(x, v, RowTag::Observation);
        }
    }

    InverseResult out{module_one(run, &observations), {}, std::move(observations)};
    out.train = module_two(out.field, run, &oracle);
    return out;
}

// ---- inviscid Burgers strategy ---------------------------------------------------------

inline TrainResult train_inviscid(CoResField& field, const TrainRun& run,
                                  const ReferenceOracle* oracle = nullptr) {
    if (run.problem.kind != ProblemKind::InviscidBurgers)
        throw WrongProblem("train_inviscid expects the inviscid Burgers' problem");
    return module_two(field, run, oracle);
}

} // namespace cores
