#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "coresolve/common.hpp"
#include "coresolve/linalg.hpp"
#include "coresolve/network.hpp"

namespace cores {

enum class RowTag { BC, IC, Observation };

inline std::string to_string(RowTag t) {
    switch (t) {
        case RowTag::BC: return "BC";
        case RowTag::IC: return "IC";
        case RowTag::Observation: return "OBS";
    }
    return "?";
}

inline RowTag row_tag_from_string(const std::string& s) {
    if (s == "BC") return RowTag::BC;
    if (s == "IC") return RowTag::IC;
    if (s == "OBS") return RowTag::Observation;
    throw Error("unknown row tag: " + s);
}

// Labeled points on the domain boundary (plus in-domain observations in
// inverse mode) for one output variable.
struct BoundaryDataset {
    int d = 0;
    std::vector<double> x;     // n*d row-major
    std::vector<double> u;     // n
    std::vector<RowTag> tag;   // n

    std::size_t size() const { return u.size(); }
    const double* point(std::size_t i) const { return x.data() + i * d; }

    void append(const double* xi, double ui, RowTag t) {
        x.insert(x.end(), xi, xi + d);
        u.push_back(ui);
        tag.push_back(t);
    }

    bool has_duplicates() const {
        for (std::size_t i = 0; i < size(); ++i)
            for (std::size_t j = i + 1; j < size(); ++j) {
                bool same = true;
                for (int k = 0; k < d; ++k)
                    if (x[i * d + k] != x[j * d + k]) { same = false; break; }
                if (same) return true;
            }
        return false;
    }
};

// Gaussian kernel configuration; phi_k = 10^{omega_k}. The process variance
// stays at 1 unless a study overrides it (it cancels in the posterior mean).
struct KernelConfig {
    std::vector<double> omega;   // per input dimension
    double sigma2 = 1.0;
    double delta = 0.0;
    double kappa_max = 1e6;

    int dim() const { return static_cast<int>(omega.size()); }
    double phi(int k) const { return std::pow(10.0, omega[k]); }

    static KernelConfig iso(int d, double omega_value, double delta = 0.0) {
        KernelConfig cfg;
        cfg.omega.assign(d, omega_value);
        cfg.delta = delta;
        return cfg;
    }
};

// c(x, x') = sigma^2 exp(-sum_k phi_k (x_k - x'_k)^2) + delta * [x == x']
inline double gaussian_kernel(const double* x, const double* x2, const KernelConfig& cfg) {
    double e = 0.0;
    bool same = true;
    for (int k = 0; k < cfg.dim(); ++k) {
        const double dx = x[k] - x2[k];
        if (dx != 0.0) same = false;
        e += cfg.phi(k) * dx * dx;
    }
    double v = cfg.sigma2 * std::exp(-e);
    if (same) v += cfg.delta;
    return v;
}

inline double gaussian_kernel(const std::vector<double>& x, const std::vector<double>& x2,
                              const KernelConfig& cfg) {
    if (static_cast<int>(x.size()) != cfg.dim() || static_cast<int>(x2.size()) != cfg.dim())
        throw DimensionMismatch("gaussian_kernel: point dimension does not match omega");
    return gaussian_kernel(x.data(), x2.data(), cfg);
}

// C_ij = kernel(x_i, x_j); the nugget lands on the diagonal only, so exact
// duplicate rows stay factorable once delta > 0.
inline SymMatrix build_covariance(const std::vector<double>& x, std::size_t n, int d,
                                  const KernelConfig& cfg) {
    SymMatrix c(n);
    KernelConfig plain = cfg;
    plain.delta = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
            double v = gaussian_kernel(x.data() + i * d, x.data() + j * d, plain);
            if (i == j) v += cfg.delta;
            c.set(i, j, v);
        }
    }
    return c;
}

inline SymMatrix build_covariance(const BoundaryDataset& data, const KernelConfig& cfg) {
    return build_covariance(data.x, data.size(), data.d, cfg);
}

// Per-output corrective-residual block: calibrated kernel + factored
// covariance + the condition-number certificate.
struct KernelBlock {
    KernelConfig config;
    BoundaryDataset data;
    CholeskyFactor chol;
    double kappa = 0.0;

    std::size_t size() const { return data.size(); }
};

inline const std::vector<double>& nugget_ladder() {
    static const std::vector<double> ladder = {0.0,  1e-8, 1e-7, 1e-6,
                                               1e-5, 1e-4, 1e-3, 1e-2};
    return ladder;
}

// Smallest delta on the ladder such that C factors and kappa(C) <= kappa_max.
// Since C(delta) = K + delta*I only shifts the spectrum, one eigendecomposition
// of K answers the whole ladder.
inline KernelBlock calibrate_nugget(BoundaryDataset data, KernelConfig cfg) {
    if (data.size() == 0) throw Error("calibrate_nugget: empty dataset");
    if (data.d != cfg.dim())
        throw DimensionMismatch("calibrate_nugget: dataset dimension vs kernel omega");

    KernelConfig base = cfg;
    base.delta = 0.0;
    const SymMatrix k0 = build_covariance(data, base);
    const std::vector<double> ev = sym_eigenvalues(k0);
    const double lo = ev.front(), hi = ev.back();

    for (double delta : nugget_ladder()) {
        const double lmin = lo + delta, lmax = hi + delta;
        if (lmin <= 0.0) continue;
        const double kappa = lmax / lmin;
        if (kappa > cfg.kappa_max) continue;
        KernelConfig chosen = cfg;
        chosen.delta = delta;
        try {
            KernelBlock block;
            block.config = chosen;
            block.chol = cholesky(build_covariance(data, chosen));
            block.kappa = kappa;
            block.data = std::move(data);
            return block;
        } catch (const NotPositiveDefinite&) {
            // spectrum said ok but factorization disagreed at round-off level;
            // escalate to the next rung
            continue;
        }
    }
    throw NuggetExhausted("calibrate_nugget: no ladder delta satisfies kappa <= " +
                          std::to_string(cfg.kappa_max));
}

// Jets of the kernel vector c(X, x*) with respect to the prediction point.
// Prediction points are sampled from the open interior so they never coincide
// with training rows; the nugget indicator is identically zero here and the
// jets stay smooth. Channel layout matches ChannelSet.
inline void kernel_vector_jet(const BoundaryDataset& data, const KernelConfig& cfg,
                              const double* xstar, const ChannelSet& cs, double* out) {
    const int d = data.d;
    const std::size_t n = data.size();
    const std::size_t C = cs.count();
    for (std::size_t i = 0; i < n; ++i) {
        const double* xi = data.point(i);
        double e = 0.0;
        for (int k = 0; k < d; ++k) {
            const double dx = xstar[k] - xi[k];
            e += cfg.phi(k) * dx * dx;
        }
        const double c0 = cfg.sigma2 * std::exp(-e);
        double* row = out + i * C;
        row[0] = c0;
        if (cs.grads)
            for (int k = 0; k < d; ++k)
                row[1 + k] = -2.0 * cfg.phi(k) * (xstar[k] - xi[k]) * c0;
        for (std::size_t p = 0; p < cs.pairs.size(); ++p) {
            const auto [k, l] = cs.pairs[p];
            const double pk = cfg.phi(k), pl = cfg.phi(l);
            const double dk = xstar[k] - xi[k], dl = xstar[l] - xi[l];
            double v = 4.0 * pk * pl * dk * dl;
            if (k == l) v -= 2.0 * pk;
            row[1 + d + p] = v * c0;
        }
    }
}

inline std::vector<double> kernel_vector_jet(const KernelBlock& block, const double* xstar,
                                             int order) {
    const ChannelSet cs = ChannelSet::for_order(block.data.d, order);
    std::vector<double> out(block.size() * cs.count());
    kernel_vector_jet(block.data, block.config, xstar, cs, out.data());
    return out;
}

} // namespace cores
