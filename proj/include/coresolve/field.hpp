#pragma once

#include <cstdint>
#include <vector>

#include "coresolve/common.hpp"
#include "coresolve/kernel.hpp"
#include "coresolve/network.hpp"

namespace cores {

// The composite predictor eta(x) = m(x; theta) + w(x)^T r, one corrective
// block per output variable. The kernel side (C factor, weights) is frozen
// after calibration; theta updates only move the residual cache.
class CoResField {
  public:
    CoResField() = default;
    CoResField(MeanNetwork mean, std::vector<KernelBlock> blocks)
        : mean_(std::move(mean)), blocks_(std::move(blocks)) {
        if (static_cast<int>(blocks_.size()) != mean_.output_dim())
            throw ShapeMismatch("CoResField: one kernel block per network output required");
        residuals_.resize(blocks_.size());
        refresh_residuals();
    }

    const MeanNetwork& mean() const { return mean_; }
    MeanNetwork& mean() { return mean_; }
    const std::vector<KernelBlock>& blocks() const { return blocks_; }
    const KernelBlock& block(int o) const { return blocks_[o]; }
    int num_outputs() const { return static_cast<int>(blocks_.size()); }
    int input_dim() const { return mean_.input_dim(); }

    void set_params(const std::vector<double>& theta) {
        mean_.set_params(theta);
        refresh_residuals();
    }

    // r_o = u_o - m_o(X_o; theta)
    void refresh_residuals() {
        const int q = num_outputs();
        for (int o = 0; o < q; ++o) {
            const KernelBlock& b = blocks_[o];
            auto& r = residuals_[o];
            r.resize(b.size());
            JetBundle jet;
            for (std::size_t i = 0; i < b.size(); ++i) {
                jet = mean_.forward_jet(b.data.point(i), 0);
                r[i] = b.data.u[i] - jet.value[o];
            }
        }
        residual_version_ = mean_.version();
    }

    bool residuals_fresh() const { return residual_version_ == mean_.version(); }
    const std::vector<double>& residuals(int o) const { return residuals_[o]; }

    // Posterior jets of eta at xstar. Weights w(x*) = C^{-1} c(X, x*) are
    // theta-independent; only r carries theta.
    JetBundle posterior_jet(const double* xstar, int order) const {
        if (!residuals_fresh())
            throw StaleResidualCache("posterior_jet: residual cache is stale; call refresh_residuals()");
        JetBundle jet = mean_.forward_jet(xstar, order);
        const int d = input_dim(), q = num_outputs();
        const ChannelSet cs = ChannelSet::for_order(d, order);
        const std::size_t C = cs.count();
        std::vector<double> kj;
        for (int o = 0; o < q; ++o) {
            const KernelBlock& b = blocks_[o];
            const std::size_t n = b.size();
            kj.resize(n * C);
            kernel_vector_jet(b.data, b.config, xstar, cs, kj.data());
            // w jets: solve C w_c = c_c for every channel
            std::vector<double> w = chol_solve(b.chol, kj, C);
            const auto& r = residuals_[o];
            for (std::size_t c = 0; c < C; ++c) {
                double corr = 0.0;
                for (std::size_t i = 0; i < n; ++i) corr += w[i * C + c] * r[i];
                if (c == 0) jet.value[o] += corr;
                else if (c <= static_cast<std::size_t>(d)) jet.grad[o * d + (c - 1)] += corr;
                else {
                    const auto [k, l] = cs.pairs[c - 1 - d];
                    jet.hess[(static_cast<std::size_t>(o) * d + k) * d + l] += corr;
                    if (k != l) jet.hess[(static_cast<std::size_t>(o) * d + l) * d + k] += corr;
                }
            }
        }
        return jet;
    }

    JetBundle posterior_jet(const std::vector<double>& xstar, int order) const {
        if (static_cast<int>(xstar.size()) != input_dim())
            throw DimensionMismatch("posterior_jet: point dimension mismatch");
        return posterior_jet(xstar.data(), order);
    }

    double predict(const std::vector<double>& xstar, int output = 0) const {
        return posterior_jet(xstar, 0).value[output];
    }

    // Precomputed weight-jet matrix for a fixed batch of points: for output o
    // and channel c, W[c][i*n + j] = (d^c w_j / dx^c)(point_i). Computed once
    // per point set and reused across every training epoch.
    struct WeightJets {
        std::size_t npts = 0, ntrain = 0;
        ChannelSet cs;
        std::vector<std::vector<double>> w;  // per channel: npts * ntrain

        // corr_c(point p) = sum_j w[c][p*ntrain + j] * r[j]
        void apply(const std::vector<double>& r, std::size_t p, double* corr) const {
            for (std::size_t c = 0; c < w.size(); ++c) {
                const double* row = w[c].data() + p * ntrain;
                double s = 0.0;
                for (std::size_t j = 0; j < ntrain; ++j) s += row[j] * r[j];
                corr[c] = s;
            }
        }
    };

    // One-shot batch prediction of eta values: beta_o = C_o^{-1} r_o once,
    // then eta(x) = m(x) + c(X, x)^T beta. O(n) per point instead of a solve.
    std::vector<double> predict_values(const std::vector<double>& pts, std::size_t npts) const {
        if (!residuals_fresh())
            throw StaleResidualCache("predict_values: residual cache is stale");
        const int q = num_outputs(), d = input_dim();
        std::vector<std::vector<double>> beta(q);
        for (int o = 0; o < q; ++o) beta[o] = chol_solve_vec(blocks_[o].chol, residuals_[o]);
        std::vector<double> out(npts * q);
        JetEvaluator ev(mean_, ChannelSet::value_only(d));
        parallel_chunks(npts, [&](std::size_t, std::size_t lo, std::size_t hi) {
            JetWorkspace ws;
            ev.init_workspace(ws);
            std::vector<double> m(q);
            for (std::size_t i = lo; i < hi; ++i) {
                const double* x = pts.data() + i * d;
                ev.forward(ws, x, m.data());
                for (int o = 0; o < q; ++o) {
                    const KernelBlock& b = blocks_[o];
                    KernelConfig plain = b.config;
                    plain.delta = 0.0;
                    double corr = 0.0;
                    for (std::size_t j = 0; j < b.size(); ++j)
                        corr += gaussian_kernel(x, b.data.point(j), plain) * beta[o][j];
                    out[i * q + o] = m[o] + corr;
                }
            }
        });
        return out;
    }

    WeightJets weight_jets(int o, const std::vector<double>& pts, std::size_t npts,
                           const ChannelSet& cs) const {
        const KernelBlock& b = blocks_[o];
        const int d = input_dim();
        const std::size_t n = b.size();
        const std::size_t C = cs.count();
        WeightJets out;
        out.npts = npts;
        out.ntrain = n;
        out.cs = cs;
        out.w.assign(C, std::vector<double>(npts * n));
        parallel_chunks(npts, [&](std::size_t, std::size_t lo, std::size_t hi) {
            std::vector<double> kj(n * C);
            for (std::size_t p = lo; p < hi; ++p) {
                kernel_vector_jet(b.data, b.config, pts.data() + p * d, cs, kj.data());
                std::vector<double> w = chol_solve(b.chol, kj, C);
                for (std::size_t c = 0; c < C; ++c)
                    for (std::size_t j = 0; j < n; ++j) out.w[c][p * n + j] = w[j * C + c];
            }
        });
        return out;
    }

  private:
    MeanNetwork mean_;
    std::vector<KernelBlock> blocks_;
    std::vector<std::vector<double>> residuals_;
    std::uint64_t residual_version_ = ~0ULL;
};

inline void residual_refresh(CoResField& field) { field.refresh_residuals(); }

inline JetBundle posterior_jet(const CoResField& field, const std::vector<double>& xstar,
                               int order) {
    return field.posterior_jet(xstar, order);
}

} // namespace cores
