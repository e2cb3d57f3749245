#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "coresolve/common.hpp"
#include "coresolve/field.hpp"
#include "coresolve/pde.hpp"

namespace cores {

// ---- hard-constraint output transforms -----------------------------------------
//
// PINN_HC writes the model as a(x) * net(x) + b(x) with a vanishing on the
// Dirichlet boundary and b matching the data there. The (a, b) pairs below
// are the per-problem choices; LDC pressure is gauged by subtracting the
// network value at the origin instead.

inline bool hc_transform_defined(const PdeProblem& p) {
    switch (p.kind) {
        case ProblemKind::Burgers:
        case ProblemKind::InviscidBurgers:
        case ProblemKind::Elliptic:
        case ProblemKind::Eikonal:
        case ProblemKind::Helmholtz:
        case ProblemKind::Ldc:
            return true;
    }
    return false;
}

inline bool hc_pressure_gauge(const PdeProblem& p) { return p.kind == ProblemKind::Ldc; }

// Fills channel jets (layout cs) of a and b for output o at x.
inline void hc_transform(const PdeProblem& p, int o, const double* x, const ChannelSet& cs,
                         double* a_ch, double* b_ch) {
    if (!hc_transform_defined(p))
        throw TransformUndefined("hard-constraint transform undefined for " + p.name);
    const int d = cs.d;
    const int C = cs.count();
    std::fill(a_ch, a_ch + C, 0.0);
    std::fill(b_ch, b_ch + C, 0.0);
    auto pairs = cs.pairs;

    // helpers writing value/grad/hess of a scalar field into channels
    auto set_val = [&](double* ch, double v) { ch[0] = v; };
    auto set_grad = [&](double* ch, int k, double v) { if (cs.grads) ch[1 + k] = v; };
    auto set_hess = [&](double* ch, int k, int l, double v) {
        for (std::size_t pr = 0; pr < pairs.size(); ++pr)
            if ((pairs[pr].first == k && pairs[pr].second == l) ||
                (pairs[pr].first == l && pairs[pr].second == k))
                ch[1 + d + pr] = v;
    };

    switch (p.kind) {
        case ProblemKind::Burgers:
        case ProblemKind::InviscidBurgers: {
            const double X = x[0], t = x[1];
            const double et = std::exp(-t);
            const double sig = 1.0 / (1.0 + et);        // logistic
            const double dsig = sig * (1.0 - sig);
            const double d2sig = dsig * (1.0 - 2.0 * sig);
            const double s = std::sin(kPi * X), c = std::cos(kPi * X);
            // a = (1 - x^2)(1 - e^{-t})
            set_val(a_ch, (1.0 - X * X) * (1.0 - et));
            set_grad(a_ch, 0, -2.0 * X * (1.0 - et));
            set_grad(a_ch, 1, (1.0 - X * X) * et);
            set_hess(a_ch, 0, 0, -2.0 * (1.0 - et));
            set_hess(a_ch, 1, 1, -(1.0 - X * X) * et);
            set_hess(a_ch, 0, 1, -2.0 * X * et);
            // b = -2 sin(pi x) / (1 + e^{-t})
            set_val(b_ch, -2.0 * s * sig);
            set_grad(b_ch, 0, -2.0 * kPi * c * sig);
            set_grad(b_ch, 1, -2.0 * s * dsig);
            set_hess(b_ch, 0, 0, 2.0 * kPi * kPi * s * sig);
            set_hess(b_ch, 1, 1, -2.0 * s * d2sig);
            set_hess(b_ch, 0, 1, -2.0 * kPi * c * dsig);
            break;
        }
        case ProblemKind::Elliptic:
        case ProblemKind::Eikonal: {
            const double X = x[0], Y = x[1];
            set_val(a_ch, X * (1 - X) * Y * (1 - Y));
            set_grad(a_ch, 0, (1 - 2 * X) * Y * (1 - Y));
            set_grad(a_ch, 1, X * (1 - X) * (1 - 2 * Y));
            set_hess(a_ch, 0, 0, -2.0 * Y * (1 - Y));
            set_hess(a_ch, 1, 1, -2.0 * X * (1 - X));
            set_hess(a_ch, 0, 1, (1 - 2 * X) * (1 - 2 * Y));
            break;
        }
        case ProblemKind::Helmholtz: {
            const double X = x[0], Y = x[1];
            set_val(a_ch, (1 - X * X) * (1 - Y * Y));
            set_grad(a_ch, 0, -2 * X * (1 - Y * Y));
            set_grad(a_ch, 1, -2 * Y * (1 - X * X));
            set_hess(a_ch, 0, 0, -2.0 * (1 - Y * Y));
            set_hess(a_ch, 1, 1, -2.0 * (1 - X * X));
            set_hess(a_ch, 0, 1, 4.0 * X * Y);
            break;
        }
        case ProblemKind::Ldc: {
            const double X = x[0], Y = x[1];
            if (o == 2) {
                set_val(a_ch, 1.0);  // pressure handled by the origin gauge
                break;
            }
            set_val(a_ch, X * (1 - X) * Y * (1 - Y));
            set_grad(a_ch, 0, (1 - 2 * X) * Y * (1 - Y));
            set_grad(a_ch, 1, X * (1 - X) * (1 - 2 * Y));
            set_hess(a_ch, 0, 0, -2.0 * Y * (1 - Y));
            set_hess(a_ch, 1, 1, -2.0 * X * (1 - X));
            set_hess(a_ch, 0, 1, (1 - 2 * X) * (1 - 2 * Y));
            if (o == 0) {
                // lid profile continued into the domain: A sin(pi x) y^2 (3 - 2y)
                const double A = p.params.A;
                const double s = std::sin(kPi * X), c = std::cos(kPi * X);
                const double w = Y * Y * (3.0 - 2.0 * Y), dw = 6.0 * Y - 6.0 * Y * Y,
                             d2w = 6.0 - 12.0 * Y;
                set_val(b_ch, A * s * w);
                set_grad(b_ch, 0, A * kPi * c * w);
                set_grad(b_ch, 1, A * s * dw);
                set_hess(b_ch, 0, 0, -A * kPi * kPi * s * w);
                set_hess(b_ch, 1, 1, A * s * d2w);
                set_hess(b_ch, 0, 1, A * kPi * c * dw);
            }
            break;
        }
    }
}

// compose out = a * m + b on jet channels (value, grads, second-derivative pairs)
inline void hc_compose(const ChannelSet& cs, const double* a, const double* b, const double* m,
                       double* out) {
    const int d = cs.d;
    out[0] = a[0] * m[0] + b[0];
    for (int k = 0; k < d; ++k)
        out[1 + k] = a[1 + k] * m[0] + a[0] * m[1 + k] + b[1 + k];
    for (std::size_t pr = 0; pr < cs.pairs.size(); ++pr) {
        const auto [k, l] = cs.pairs[pr];
        out[1 + d + pr] = a[1 + d + pr] * m[0] + a[1 + k] * m[1 + l] + a[1 + l] * m[1 + k] +
                          a[0] * m[1 + d + pr] + b[1 + d + pr];
    }
}

// adjoint of hc_compose: cotangent on out -> cotangent on m
inline void hc_compose_adjoint(const ChannelSet& cs, const double* a, const double* cot_out,
                               double* cot_m) {
    const int d = cs.d;
    const int C = cs.count();
    std::fill(cot_m, cot_m + C, 0.0);
    cot_m[0] += cot_out[0] * a[0];
    for (int k = 0; k < d; ++k) {
        cot_m[0] += cot_out[1 + k] * a[1 + k];
        cot_m[1 + k] += cot_out[1 + k] * a[0];
    }
    for (std::size_t pr = 0; pr < cs.pairs.size(); ++pr) {
        const auto [k, l] = cs.pairs[pr];
        const double c = cot_out[1 + d + pr];
        cot_m[0] += c * a[1 + d + pr];
        cot_m[1 + k] += c * a[1 + l];
        cot_m[1 + l] += c * a[1 + k];
        cot_m[1 + d + pr] += c * a[0];
    }
}

// ---- NN-CoRes physics loss -------------------------------------------------------
//
// L(theta) = w_pde * mean_i sum_e res_e(eta jets at CP_i)^2  [+ w_rh * L_RH]
// with eta = m + W r; the kernel weight jets W are frozen, so theta enters
// through the network jets at the collocation points and through the residual
// vector r at the kernel training rows.
class CoresLossEngine {
  public:
    struct Options {
        std::string unknown;        // PDE parameter optimized jointly ("" = forward problem)
        double unknown_init = 0.0;
        bool log_space = true;      // optimize log(unknown) when positivity is physical
        bool use_lambda = false;    // inviscid gradient-based residual weighting
        bool use_rh = false;        // inviscid Rankine-Hugoniot penalty
        double w_pde = 1.0, w_rh = 1.0;
        std::size_t n_rh = 64;
    };

    CoresLossEngine(CoResField& field, const PdeProblem& problem, std::vector<double> cps,
                    std::size_t ncp, Options opt = {})
        : field_(&field), prob_(problem), opt_(std::move(opt)), cps_(std::move(cps)), ncp_(ncp),
          cs_(problem_channels(problem)),
          jet_eval_(field.mean(), cs_),
          val_eval_(field.mean(), ChannelSet::value_only(problem.d)) {
        const int q = prob_.num_outputs();
        wjets_.reserve(q);
        for (int o = 0; o < q; ++o)
            wjets_.push_back(field.weight_jets(o, cps_, ncp_, cs_));
        if (opt_.use_rh) {
            if (!prob_.is_burgers_like())
                throw WrongProblem("Rankine-Hugoniot loss applies to the inviscid Burgers' setup");
            rh_pts_.push_back(0.0);  // anchor (x=0, t=0) first
            rh_pts_.push_back(0.0);
            for (std::size_t i = 1; i <= opt_.n_rh; ++i) {
                rh_pts_.push_back(0.0);
                rh_pts_.push_back(double(i) / double(opt_.n_rh));
            }
            rh_w_ = field.weight_jets(0, rh_pts_, opt_.n_rh + 1, ChannelSet::value_only(prob_.d));
        }
    }

    std::size_t dim() const {
        return field_->mean().num_params() + (opt_.unknown.empty() ? 0 : 1);
    }

    std::vector<double> initial_theta() const {
        std::vector<double> th = field_->mean().params();
        if (!opt_.unknown.empty()) {
            if (opt_.unknown_init <= 0.0 && opt_.log_space)
                throw Error("inverse unknown must start positive in log space");
            th.push_back(opt_.log_space ? std::log(opt_.unknown_init) : opt_.unknown_init);
        }
        return th;
    }

    double unknown_value(const std::vector<double>& theta) const {
        if (opt_.unknown.empty()) throw Error("no inverse unknown configured");
        const double raw = theta.back();
        return opt_.log_space ? std::exp(raw) : raw;
    }

    double last_pde_loss() const { return last_pde_; }
    double last_rh_loss() const { return last_rh_; }
    const PdeProblem& problem() const { return prob_; }
    const ChannelSet& channels() const { return cs_; }

    double operator()(const std::vector<double>& theta, std::vector<double>& grad) {
        const std::size_t np = field_->mean().num_params();
        const int q = prob_.num_outputs();
        const int C = cs_.count();

        if (!opt_.unknown.empty()) {
            std::vector<double> nt(theta.begin(), theta.begin() + np);
            field_->mean().set_params(nt);
            apply_unknown(unknown_value(theta));
        } else {
            field_->mean().set_params(theta);
        }
        jet_eval_.refresh();
        val_eval_.refresh();

        grad.assign(theta.size(), 0.0);

        // residuals r_o = u_o - m_o(X_o)
        std::vector<std::vector<double>> r(q);
        for (int o = 0; o < q; ++o) {
            const auto& b = field_->block(o);
            r[o].resize(b.size());
            JetWorkspace ws;
            val_eval_.init_workspace(ws);
            std::vector<double> out(q);
            for (std::size_t j = 0; j < b.size(); ++j) {
                val_eval_.forward(ws, b.data.point(j), out.data());
                r[o][j] = b.data.u[j] - out[o];
            }
        }

        // collocation sweep
        const std::size_t nchunks = parallel_chunk_count(ncp_);
        std::vector<double> loss_part(nchunks, 0.0), dparam_part(nchunks, 0.0);
        std::vector<std::vector<double>> grad_part(nchunks, std::vector<double>(np, 0.0));
        std::vector<std::vector<std::vector<double>>> sval_part(nchunks);
        for (auto& sv : sval_part) {
            sv.resize(q);
            for (int o = 0; o < q; ++o) sv[o].assign(field_->block(o).size(), 0.0);
        }
        const double scale = opt_.w_pde / double(ncp_);
        const int neq = prob_.n_equations;
        const bool has_unknown = !opt_.unknown.empty();

        parallel_chunks(ncp_, [&](std::size_t chunk, std::size_t lo, std::size_t hi) {
            JetWorkspace ws;
            jet_eval_.init_workspace(ws);
            std::vector<double> mch(q * C), eta(q * C), corr(C);
            std::vector<double> res(neq), jac(neq * q * C), cot(q * C), dres(neq);
            for (std::size_t i = lo; i < hi; ++i) {
                const double* x = cps_.data() + i * prob_.d;
                jet_eval_.forward(ws, x, mch.data());
                for (int o = 0; o < q; ++o) {
                    wjets_[o].apply(r[o], i, corr.data());
                    for (int c = 0; c < C; ++c) eta[o * C + c] = mch[o * C + c] + corr[c];
                }
                pde_residual_channels(prob_, x, eta.data(), res.data(), jac.data(),
                                      opt_.unknown, has_unknown ? dres.data() : nullptr);
                if (opt_.use_lambda) {
                    // residual weighted by lambda(u_x); differentiate through it
                    const double ux = eta[1];  // output 0, d/dx channel
                    const double lam = lambda_weight(ux, prob_.params.k1);
                    const double dlam = lambda_weight_derivative(ux, prob_.params.k1);
                    for (int c = 0; c < C; ++c) jac[c] = lam * jac[c];
                    jac[1] += res[0] * dlam;
                    res[0] *= lam;
                }
                double li = 0.0;
                std::fill(cot.begin(), cot.end(), 0.0);
                for (int e = 0; e < neq; ++e) {
                    li += res[e] * res[e];
                    const double w = 2.0 * scale * res[e];
                    const double* je = jac.data() + e * q * C;
                    for (int oc = 0; oc < q * C; ++oc) cot[oc] += w * je[oc];
                    if (has_unknown) dparam_part[chunk] += w * dres[e];
                }
                loss_part[chunk] += scale * li;
                jet_eval_.backward(ws, cot.data(), grad_part[chunk].data());
                for (int o = 0; o < q; ++o) {
                    auto& sv = sval_part[chunk][o];
                    const std::size_t nb = sv.size();
                    for (int c = 0; c < C; ++c) {
                        const double w = cot[o * C + c];
                        if (w == 0.0) continue;
                        const double* row = wjets_[o].w[c].data() + i * nb;
                        for (std::size_t j = 0; j < nb; ++j) sv[j] -= w * row[j];
                    }
                }
            }
        });

        double loss = 0.0, dparam = 0.0;
        std::vector<std::vector<double>> sval(q);
        for (int o = 0; o < q; ++o) sval[o].assign(field_->block(o).size(), 0.0);
        for (std::size_t c = 0; c < nchunks; ++c) {
            loss += loss_part[c];
            dparam += dparam_part[c];
            for (std::size_t i = 0; i < np; ++i) grad[i] += grad_part[c][i];
            for (int o = 0; o < q; ++o)
                for (std::size_t j = 0; j < sval[o].size(); ++j) sval[o][j] += sval_part[c][o][j];
        }
        last_pde_ = loss;

        // Rankine-Hugoniot penalty: mean_t (eta(0,t) - eta(0,0))^2
        last_rh_ = 0.0;
        if (opt_.use_rh) {
            const std::size_t nrh = opt_.n_rh;
            JetWorkspace ws;
            val_eval_.init_workspace(ws);
            std::vector<double> out(q);
            std::vector<double> vals(nrh + 1);
            for (std::size_t i = 0; i <= nrh; ++i) {
                val_eval_.forward(ws, rh_pts_.data() + i * prob_.d, out.data());
                double corr0 = 0.0;
                const double* row = rh_w_.w[0].data() + i * rh_w_.ntrain;
                for (std::size_t j = 0; j < rh_w_.ntrain; ++j) corr0 += row[j] * r[0][j];
                vals[i] = out[0] + corr0;
            }
            double anchor_cot = 0.0;
            std::vector<double> cot1(q, 0.0);
            for (std::size_t i = 1; i <= nrh; ++i) {
                const double dvi = vals[i] - vals[0];
                last_rh_ += dvi * dvi;
                const double w = opt_.w_rh * 2.0 * dvi / double(nrh);
                // backward for this sample point
                val_eval_.forward(ws, rh_pts_.data() + i * prob_.d, out.data());
                std::fill(cot1.begin(), cot1.end(), 0.0);
                cot1[0] = w;
                val_eval_.backward(ws, cot1.data(), grad.data());
                const double* row = rh_w_.w[0].data() + i * rh_w_.ntrain;
                for (std::size_t j = 0; j < rh_w_.ntrain; ++j) sval[0][j] -= w * row[j];
                anchor_cot -= w;
            }
            last_rh_ /= double(nrh);
            val_eval_.forward(ws, rh_pts_.data(), out.data());
            std::fill(cot1.begin(), cot1.end(), 0.0);
            cot1[0] = anchor_cot;
            val_eval_.backward(ws, cot1.data(), grad.data());
            const double* row0 = rh_w_.w[0].data();
            for (std::size_t j = 0; j < rh_w_.ntrain; ++j) sval[0][j] -= anchor_cot * row0[j];
            loss += opt_.w_rh * last_rh_;
        }

        // residual-vector contribution: dL/dtheta -= sum_j sval_o[j] * dm_o(x_j)/dtheta
        {
            JetWorkspace ws;
            val_eval_.init_workspace(ws);
            std::vector<double> out(q), cot(q);
            for (int o = 0; o < q; ++o) {
                const auto& b = field_->block(o);
                for (std::size_t j = 0; j < b.size(); ++j) {
                    const double s = sval[o][j];
                    if (s == 0.0) continue;
                    val_eval_.forward(ws, b.data.point(j), out.data());
                    std::fill(cot.begin(), cot.end(), 0.0);
                    cot[o] = s;
                    val_eval_.backward(ws, cot.data(), grad.data());
                }
            }
        }

        if (has_unknown) {
            const double u = unknown_value(theta);
            grad[np] = opt_.log_space ? dparam * u : dparam;
        }
        return loss;
    }

    // expose residuals for reporting paths that want eta without re-solving
    std::vector<std::vector<double>> residual_snapshot() const {
        std::vector<std::vector<double>> r(prob_.num_outputs());
        JetEvaluator ev(field_->mean(), ChannelSet::value_only(prob_.d));
        JetWorkspace ws;
        ev.init_workspace(ws);
        std::vector<double> out(prob_.num_outputs());
        for (int o = 0; o < prob_.num_outputs(); ++o) {
            const auto& b = field_->block(o);
            r[o].resize(b.size());
            for (std::size_t j = 0; j < b.size(); ++j) {
                ev.forward(ws, b.data.point(j), out.data());
                r[o][j] = b.data.u[j] - out[o];
            }
        }
        return r;
    }

  private:
    void apply_unknown(double v) {
        if (opt_.unknown == "nu") prob_.params.nu = v;
        else if (opt_.unknown == "alpha") prob_.params.alpha = v;
        else if (opt_.unknown == "epsilon") prob_.params.epsilon = v;
        else throw Error("unsupported inverse unknown: " + opt_.unknown);
    }

    CoResField* field_;
    PdeProblem prob_;
    Options opt_;
    std::vector<double> cps_;
    std::size_t ncp_;
    ChannelSet cs_;
    JetEvaluator jet_eval_, val_eval_;
    std::vector<CoResField::WeightJets> wjets_;
    std::vector<double> rh_pts_;
    CoResField::WeightJets rh_w_;
    double last_pde_ = 0.0, last_rh_ = 0.0;
};

// ---- PINN / PINN_HC baseline loss ------------------------------------------------

struct DataRow {
    double x[2];
    int output;
    double value;
    RowTag tag;
};

// n_total points spread as evenly as possible over the boundary segments,
// positions uniform per segment; LDC pressure keeps its single gauge row.
inline std::vector<DataRow> sample_baseline_data(const PdeProblem& p, std::size_t n_total,
                                                 std::uint64_t seed) {
    SplitMix64 rng(seed);
    std::vector<DataRow> rows;
    for (int o = 0; o < p.num_outputs(); ++o) {
        if (p.kind == ProblemKind::Ldc && p.outputs[o] == "p") {
            rows.push_back(DataRow{{0.0, 0.0}, o, 0.0, RowTag::BC});
            continue;
        }
        const std::size_t nseg = p.segments.size();
        for (std::size_t s = 0; s < nseg; ++s) {
            const auto& seg = p.segments[s];
            std::size_t n = n_total / nseg + (s < n_total % nseg ? 1 : 0);
            for (std::size_t i = 0; i < n; ++i) {
                DataRow row{};
                row.x[seg.fixed_dim] = seg.fixed_value;
                row.x[seg.vary_dim] = rng.uniform(seg.lo, seg.hi);
                row.output = o;
                row.tag = seg.tag;
                row.value = boundary_value(p, o, row.x);
                rows.push_back(row);
            }
        }
    }
    return rows;
}

// Composite PINN loss L_PDE + L_BC + L_IC on the bare network, or the
// PDE-only loss on the hard-constrained output when `hard_constraint` is set.
class PinnLossEngine {
  public:
    PinnLossEngine(MeanNetwork& net, const PdeProblem& problem, std::vector<double> cps,
                   std::size_t ncp, std::vector<DataRow> data, bool hard_constraint)
        : net_(&net), prob_(problem), cps_(std::move(cps)), ncp_(ncp), data_(std::move(data)),
          hc_(hard_constraint), cs_(problem_channels(problem)),
          jet_eval_(net, cs_), val_eval_(net, ChannelSet::value_only(problem.d)) {
        if (hc_ && !hc_transform_defined(prob_))
            throw TransformUndefined("hard-constraint transform undefined for " + prob_.name);
        n_bc_ = n_ic_ = 0;
        for (const auto& r : data_) (r.tag == RowTag::IC ? n_ic_ : n_bc_) += 1;
    }

    double last_pde_loss() const { return last_pde_; }
    double last_bc_loss() const { return last_bc_; }
    double last_ic_loss() const { return last_ic_; }

    // value of the (possibly transformed) model at x for output o, using the
    // network's current parameters
    double model_value(const double* x, int o) const {
        JetWorkspace ws;
        val_eval_.init_workspace(ws);
        std::vector<double> out(prob_.num_outputs());
        val_eval_.forward(ws, x, out.data());
        if (!hc_) return out[o];
        const ChannelSet vcs = ChannelSet::value_only(prob_.d);
        double a_ch[1], b_ch[1];
        hc_transform(prob_, o, x, vcs, a_ch, b_ch);
        double v = a_ch[0] * out[o] + b_ch[0];
        if (o == 2 && hc_pressure_gauge(prob_)) {
            const double origin[2] = {0.0, 0.0};
            std::vector<double> out0(prob_.num_outputs());
            val_eval_.forward(ws, origin, out0.data());
            v -= out0[2];
        }
        return v;
    }

    double operator()(const std::vector<double>& theta, std::vector<double>& grad) {
        net_->set_params(theta);
        jet_eval_.refresh();
        val_eval_.refresh();
        grad.assign(theta.size(), 0.0);

        const int q = prob_.num_outputs();
        const int C = cs_.count();
        const int neq = prob_.n_equations;
        const double scale = 1.0 / double(ncp_);
        const bool gauge = hc_ && hc_pressure_gauge(prob_);

        // pressure gauge value for this parameter vector
        double p00 = 0.0;
        if (gauge) {
            JetWorkspace ws;
            val_eval_.init_workspace(ws);
            std::vector<double> out(q);
            const double origin[2] = {0.0, 0.0};
            val_eval_.forward(ws, origin, out.data());
            p00 = out[2];
        }

        const std::size_t nchunks = parallel_chunk_count(ncp_);
        std::vector<double> loss_part(nchunks, 0.0), gauge_part(nchunks, 0.0);
        std::vector<std::vector<double>> grad_part(nchunks, std::vector<double>(theta.size(), 0.0));

        parallel_chunks(ncp_, [&](std::size_t chunk, std::size_t lo, std::size_t hi) {
            JetWorkspace ws;
            jet_eval_.init_workspace(ws);
            std::vector<double> mch(q * C), eta(q * C), res(neq), jac(neq * q * C);
            std::vector<double> cot(q * C), cot_m(q * C), a_ch(C), b_ch(C), cm1(C);
            for (std::size_t i = lo; i < hi; ++i) {
                const double* x = cps_.data() + i * prob_.d;
                jet_eval_.forward(ws, x, mch.data());
                const double* model = mch.data();
                if (hc_) {
                    for (int o = 0; o < q; ++o) {
                        hc_transform(prob_, o, x, cs_, a_ch.data(), b_ch.data());
                        hc_compose(cs_, a_ch.data(), b_ch.data(), mch.data() + o * C,
                                   eta.data() + o * C);
                    }
                    if (gauge) eta[2 * C] -= p00;
                    model = eta.data();
                }
                pde_residual_channels(prob_, x, model, res.data(), jac.data());
                double li = 0.0;
                std::fill(cot.begin(), cot.end(), 0.0);
                for (int e = 0; e < neq; ++e) {
                    li += res[e] * res[e];
                    const double w = 2.0 * scale * res[e];
                    const double* je = jac.data() + e * q * C;
                    for (int oc = 0; oc < q * C; ++oc) cot[oc] += w * je[oc];
                }
                loss_part[chunk] += scale * li;
                if (hc_) {
                    for (int o = 0; o < q; ++o) {
                        hc_transform(prob_, o, x, cs_, a_ch.data(), b_ch.data());
                        hc_compose_adjoint(cs_, a_ch.data(), cot.data() + o * C, cm1.data());
                        std::copy(cm1.begin(), cm1.end(), cot_m.begin() + o * C);
                    }
                    if (gauge) gauge_part[chunk] -= cot[2 * C];
                    jet_eval_.backward(ws, cot_m.data(), grad_part[chunk].data());
                } else {
                    jet_eval_.backward(ws, cot.data(), grad_part[chunk].data());
                }
            }
        });

        double loss = 0.0, gauge_cot = 0.0;
        for (std::size_t c = 0; c < nchunks; ++c) {
            loss += loss_part[c];
            gauge_cot += gauge_part[c];
            for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += grad_part[c][i];
        }
        last_pde_ = loss;

        if (gauge && gauge_cot != 0.0) {
            JetWorkspace ws;
            val_eval_.init_workspace(ws);
            std::vector<double> out(q), cot1(q, 0.0);
            const double origin[2] = {0.0, 0.0};
            val_eval_.forward(ws, origin, out.data());
            cot1[2] = gauge_cot;
            val_eval_.backward(ws, cot1.data(), grad.data());
        }

        // data terms (plain PINN only)
        last_bc_ = last_ic_ = 0.0;
        if (!hc_ && !data_.empty()) {
            JetWorkspace ws;
            val_eval_.init_workspace(ws);
            std::vector<double> out(q), cot1(q);
            for (const auto& row : data_) {
                val_eval_.forward(ws, row.x, out.data());
                const double diff = out[row.output] - row.value;
                const std::size_t n = row.tag == RowTag::IC ? n_ic_ : n_bc_;
                (row.tag == RowTag::IC ? last_ic_ : last_bc_) += diff * diff / double(n);
                std::fill(cot1.begin(), cot1.end(), 0.0);
                cot1[row.output] = 2.0 * diff / double(n);
                val_eval_.backward(ws, cot1.data(), grad.data());
            }
            loss += last_bc_ + last_ic_;
        }
        return loss;
    }

  private:
    MeanNetwork* net_;
    PdeProblem prob_;
    std::vector<double> cps_;
    std::size_t ncp_;
    std::vector<DataRow> data_;
    bool hc_;
    ChannelSet cs_;
    JetEvaluator jet_eval_;
    mutable JetEvaluator val_eval_;
    std::size_t n_bc_ = 0, n_ic_ = 0;
    double last_pde_ = 0.0, last_bc_ = 0.0, last_ic_ = 0.0;
};

// Standalone Rankine-Hugoniot penalty (inspection path).
inline double rh_loss(const CoResField& field, const std::vector<double>& t_samples) {
    const double origin[2] = {0.0, 0.0};
    const double anchor = field.posterior_jet(origin, 0).value[0];
    double s = 0.0;
    for (double t : t_samples) {
        const double x[2] = {0.0, t};
        const double dv = field.posterior_jet(x, 0).value[0] - anchor;
        s += dv * dv;
    }
    return s / double(t_samples.size());
}

} // namespace cores
