#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <vector>

#include "coresolve/common.hpp"
#include "coresolve/pde.hpp"

namespace cores {

// Rectilinear grid of reference values with bilinear interpolation.
struct ReferenceGrid {
    std::vector<double> ax0, ax1;  // strictly increasing node lists
    std::vector<double> values;    // ax0.size() x ax1.size(), row-major in ax0

    double at(std::size_t i0, std::size_t i1) const { return values[i0 * ax1.size() + i1]; }

    static std::size_t bracket(const std::vector<double>& ax, double v) {
        // index i with ax[i] <= v <= ax[i+1], clamped to the grid
        if (v <= ax.front()) return 0;
        if (v >= ax[ax.size() - 2]) return ax.size() - 2;
        const auto it = std::upper_bound(ax.begin(), ax.end(), v);
        return static_cast<std::size_t>(it - ax.begin()) - 1;
    }

    double interpolate(double x0, double x1) const {
        const std::size_t i = bracket(ax0, x0), j = bracket(ax1, x1);
        const double t = (x0 - ax0[i]) / (ax0[i + 1] - ax0[i]);
        const double s = (x1 - ax1[j]) / (ax1[j + 1] - ax1[j]);
        return (1 - t) * (1 - s) * at(i, j) + t * (1 - s) * at(i + 1, j) +
               (1 - t) * s * at(i, j + 1) + t * s * at(i + 1, j + 1);
    }
};

// ---- Gauss-Hermite nodes/weights ---------------------------------------------
//
// Newton iteration on the orthonormal Hermite recurrence (weight exp(-z^2)),
// largest roots first with the classical asymptotic starting guesses.
struct GaussHermite {
    std::vector<double> nodes, weights;
};

inline GaussHermite gauss_hermite(int n) {
    GaussHermite gh;
    gh.nodes.resize(n);
    gh.weights.resize(n);
    const double pim4 = 0.7511255444649425;  // pi^{-1/4}
    const int m = (n + 1) / 2;
    double z = 0.0;
    for (int i = 0; i < m; ++i) {
        if (i == 0)
            z = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -1.0 / 6.0);
        else if (i == 1)
            z -= 1.14 * std::pow(n, 0.426) / z;
        else if (i == 2)
            z = 1.86 * z - 0.86 * gh.nodes[0];
        else if (i == 3)
            z = 1.91 * z - 0.91 * gh.nodes[1];
        else
            z = 2.0 * z - gh.nodes[i - 2];
        double pp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p1 = pim4, p2 = 0.0;
            for (int j = 0; j < n; ++j) {
                const double p3 = p2;
                p2 = p1;
                p1 = z * std::sqrt(2.0 / (j + 1)) * p2 - std::sqrt(double(j) / (j + 1)) * p3;
            }
            pp = std::sqrt(2.0 * n) * p2;
            const double dz = p1 / pp;
            z -= dz;
            if (std::abs(dz) <= 1e-15 * std::max(1.0, std::abs(z))) break;
        }
        gh.nodes[i] = z;
        gh.nodes[n - 1 - i] = -z;
        gh.weights[i] = 2.0 / (pp * pp);
        gh.weights[n - 1 - i] = gh.weights[i];
    }
    return gh;
}

// ---- viscous Burgers via the heat-kernel transformation ------------------------
//
// u(x,t) = -int sin(pi(x-e)) G de / int G de with
// G = exp(-cos(pi(x-e))/(2 pi nu)) exp(-e^2/(4 nu t)); the substitution
// e = 2 sqrt(nu t) z turns the outer factor into the Gauss-Hermite weight.
inline double burgers_reference(double x, double t, double nu, int quad_nodes = 100) {
    if (nu <= 0.0)
        throw InvalidViscosity("burgers_reference needs nu > 0; use lax_wendroff_reference");
    if (t <= 0.0) return -std::sin(kPi * x);
    static thread_local GaussHermite cache;
    static thread_local int cache_n = 0;
    if (cache_n != quad_nodes) {
        cache = gauss_hermite(quad_nodes);
        cache_n = quad_nodes;
    }
    const double s = 2.0 * std::sqrt(nu * t);
    const double inv2pinu = 1.0 / (2.0 * kPi * nu);
    double num = 0.0, den = 0.0;
    for (int i = 0; i < quad_nodes; ++i) {
        const double y = x - s * cache.nodes[i];
        const double g = cache.weights[i] * std::exp(-std::cos(kPi * y) * inv2pinu);
        num -= g * std::sin(kPi * y);
        den += g;
    }
    return num / den;
}

// ---- regularized Eikonal via g - eps^2 lap(g) = 0 ------------------------------
//
// u = -eps log g with g = 1 on the boundary (u = 0 there). The screened
// Poisson system is SPD, so a matrix-free conjugate-gradient solve on the
// 5-point stencil is enough.
inline ReferenceGrid eikonal_reference(double epsilon, int grid_n = 512) {
    if (epsilon <= 0.0) throw Error("eikonal_reference: epsilon must be > 0");
    if (grid_n < 64) throw Error("eikonal_reference: grid_n must be >= 64");
    const int n = grid_n, ni = n - 2;
    const double h = 1.0 / (n - 1);
    const double c = epsilon * epsilon / (h * h);

    auto idx = [ni](int i, int j) { return static_cast<std::size_t>(i) * ni + j; };
    const std::size_t nn = static_cast<std::size_t>(ni) * ni;
    std::vector<double> g(nn, 0.0), r(nn), p(nn), ap(nn);

    // A v = (1 + 4c) v - c * (neighbors); rhs collects the g = 1 boundary ring
    auto apply = [&](const std::vector<double>& v, std::vector<double>& out) {
        for (int i = 0; i < ni; ++i) {
            for (int j = 0; j < ni; ++j) {
                double s = (1.0 + 4.0 * c) * v[idx(i, j)];
                if (i > 0) s -= c * v[idx(i - 1, j)];
                if (i < ni - 1) s -= c * v[idx(i + 1, j)];
                if (j > 0) s -= c * v[idx(i, j - 1)];
                if (j < ni - 1) s -= c * v[idx(i, j + 1)];
                out[idx(i, j)] = s;
            }
        }
    };
    std::vector<double> b(nn, 0.0);
    for (int i = 0; i < ni; ++i)
        for (int j = 0; j < ni; ++j) {
            double s = 0.0;
            if (i == 0) s += c;
            if (i == ni - 1) s += c;
            if (j == 0) s += c;
            if (j == ni - 1) s += c;
            b[idx(i, j)] = s;
        }

    auto dot = [&](const std::vector<double>& a, const std::vector<double>& bb) {
        double s = 0.0;
        for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * bb[k];
        return s;
    };

    r = b;
    p = r;
    double rr = dot(r, r);
    const double tol2 = 1e-24 * rr;
    bool converged = rr <= tol2;
    for (int it = 0; it < 20000 && !converged; ++it) {
        apply(p, ap);
        const double alpha = rr / dot(p, ap);
        for (std::size_t k = 0; k < nn; ++k) {
            g[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        const double rr_new = dot(r, r);
        if (rr_new <= tol2) { converged = true; break; }
        const double beta = rr_new / rr;
        rr = rr_new;
        for (std::size_t k = 0; k < nn; ++k) p[k] = r[k] + beta * p[k];
    }
    if (!converged) throw SolveFailed("eikonal_reference: CG did not converge");

    ReferenceGrid grid;
    grid.ax0.resize(n);
    grid.ax1.resize(n);
    for (int i = 0; i < n; ++i) grid.ax0[i] = grid.ax1[i] = i * h;
    grid.values.assign(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const bool boundary = (i == 0 || j == 0 || i == n - 1 || j == n - 1);
            const double gij = boundary ? 1.0 : g[idx(i - 1, j - 1)];
            grid.values[static_cast<std::size_t>(i) * n + j] = -epsilon * std::log(gij);
        }
    return grid;
}

// ---- manufactured analytic solutions -------------------------------------------

inline double analytic_reference(const PdeProblem& p, const double* x) {
    if (p.kind == ProblemKind::Elliptic) {
        return std::sin(kPi * x[0]) * std::sin(kPi * x[1]) +
               2.0 * std::sin(4.0 * kPi * x[0]) * std::sin(4.0 * kPi * x[1]);
    }
    if (p.kind == ProblemKind::Helmholtz) {
        return std::sin(p.params.a1 * kPi * x[0]) * std::sin(p.params.a2 * kPi * x[1]);
    }
    throw WrongProblem("analytic_reference: elliptic and helmholtz only");
}

// ---- inviscid Burgers via conservative Lax-Wendroff ----------------------------
//
// u_t + (u^2/2)_x = 0 on [-1,1], IC -sin(pi x), pinned endpoints, advanced to
// t = 1. Every accepted time level is kept so (x,t) queries interpolate the
// full history. The optional minmod limiter blends toward the upwind flux.
inline ReferenceGrid lax_wendroff_reference(int grid_nx = 2001, double cfl = 0.4,
                                            bool limiter = false) {
    if (!(cfl > 0.0 && cfl < 1.0)) throw CflViolation("lax_wendroff_reference: cfl must be in (0,1)");
    if (grid_nx < 200) throw Error("lax_wendroff_reference: grid_nx must be >= 200");
    const int nx = grid_nx;
    const double dx = 2.0 / (nx - 1);
    std::vector<double> x(nx), u(nx);
    for (int i = 0; i < nx; ++i) {
        x[i] = -1.0 + i * dx;
        u[i] = -std::sin(kPi * x[i]);
    }
    u[0] = u[nx - 1] = 0.0;

    std::vector<double> tlev = {0.0};
    std::vector<double> hist(u.begin(), u.end());
    std::vector<double> flux(nx - 1), unew(nx);
    auto f = [](double v) { return 0.5 * v * v; };
    auto minmod = [](double a, double b) {
        if (a * b <= 0.0) return 0.0;
        return std::abs(a) < std::abs(b) ? a : b;
    };

    double t = 0.0;
    while (t < 1.0) {
        double umax = 0.0;
        for (double v : u) umax = std::max(umax, std::abs(v));
        double dt = cfl * dx / std::max(umax, 1e-12);
        if (t + dt > 1.0) dt = 1.0 - t;
        const double lam = dt / dx;

        for (int i = 0; i < nx - 1; ++i) {
            const double a = 0.5 * (u[i] + u[i + 1]);
            const double flw = 0.5 * (f(u[i]) + f(u[i + 1])) - 0.5 * lam * a * (f(u[i + 1]) - f(u[i]));
            if (!limiter) {
                flux[i] = flw;
            } else {
                const double flo = a >= 0.0 ? f(u[i]) : f(u[i + 1]);
                const double du = u[i + 1] - u[i];
                const double dup = (a >= 0.0)
                                       ? (i > 0 ? u[i] - u[i - 1] : du)
                                       : (i < nx - 2 ? u[i + 2] - u[i + 1] : du);
                const double phi = du == 0.0 ? 0.0 : std::clamp(minmod(dup, du) / du, 0.0, 1.0);
                flux[i] = flo + phi * (flw - flo);
            }
        }
        unew[0] = 0.0;
        unew[nx - 1] = 0.0;
        for (int i = 1; i < nx - 1; ++i) unew[i] = u[i] - lam * (flux[i] - flux[i - 1]);
        u.swap(unew);
        t += dt;
        tlev.push_back(t);
        hist.insert(hist.end(), u.begin(), u.end());
    }

    ReferenceGrid grid;
    grid.ax0 = std::move(x);
    grid.ax1 = std::move(tlev);
    // hist is time-major; grid wants ax0 (x) major
    grid.values.assign(static_cast<std::size_t>(nx) * grid.ax1.size(), 0.0);
    for (std::size_t it = 0; it < grid.ax1.size(); ++it)
        for (int i = 0; i < nx; ++i)
            grid.values[static_cast<std::size_t>(i) * grid.ax1.size() + it] =
                hist[it * nx + i];
    return grid;
}

// ---- oracle binding -------------------------------------------------------------

struct ReferenceOracle {
    bool available = false;
    std::function<double(const double*, int)> eval;  // (point, output index)

    double operator()(const double* x, int o = 0) const { return eval(x, o); }
};

struct ReferenceOptions {
    int eikonal_grid = 512;
    int lw_grid_nx = 2001;
    double lw_cfl = 0.4;
    int quad_nodes = 100;
};

inline ReferenceOracle build_reference(const PdeProblem& p, const ReferenceOptions& opt = {}) {
    ReferenceOracle oracle;
    switch (p.kind) {
        case ProblemKind::Burgers: {
            const double nu = p.params.nu;
            const int nodes = opt.quad_nodes;
            oracle.available = true;
            oracle.eval = [nu, nodes](const double* x, int) {
                return burgers_reference(x[0], x[1], nu, nodes);
            };
            break;
        }
        case ProblemKind::Elliptic:
        case ProblemKind::Helmholtz: {
            PdeProblem copy = p;
            oracle.available = true;
            oracle.eval = [copy](const double* x, int) { return analytic_reference(copy, x); };
            break;
        }
        case ProblemKind::Eikonal: {
            auto grid = std::make_shared<ReferenceGrid>(
                eikonal_reference(p.params.epsilon, opt.eikonal_grid));
            oracle.available = true;
            oracle.eval = [grid](const double* x, int) { return grid->interpolate(x[0], x[1]); };
            break;
        }
        case ProblemKind::InviscidBurgers: {
            auto grid = std::make_shared<ReferenceGrid>(
                lax_wendroff_reference(opt.lw_grid_nx, opt.lw_cfl));
            oracle.available = true;
            oracle.eval = [grid](const double* x, int) { return grid->interpolate(x[0], x[1]); };
            break;
        }
        case ProblemKind::Ldc:
            oracle.available = false;  // assessed by residual norms and BC satisfaction
            break;
    }
    return oracle;
}

// max - min of the reference solution over a scan grid; the noise studies
// scale their corruption by this. LDC has no in-repo reference, so the lid
// amplitude serves as the velocity scale.
inline double solution_range(const PdeProblem& p, const ReferenceOracle& oracle,
                             int scan = 101) {
    if (!oracle.available) return p.params.A;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (int i = 0; i < scan; ++i)
        for (int j = 0; j < scan; ++j) {
            const double x[2] = {
                p.box_lo[0] + (p.box_hi[0] - p.box_lo[0]) * i / double(scan - 1),
                p.box_lo[1] + (p.box_hi[1] - p.box_lo[1]) * j / double(scan - 1)};
            const double v = oracle(x, 0);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    return hi - lo;
}

} // namespace cores
