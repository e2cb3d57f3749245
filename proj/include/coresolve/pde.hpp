#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "coresolve/common.hpp"
#include "coresolve/kernel.hpp"
#include "coresolve/rng.hpp"

namespace cores {

inline constexpr double kPi = 3.14159265358979323846;

enum class ProblemKind { Burgers, Elliptic, Eikonal, Ldc, Helmholtz, InviscidBurgers };

inline std::string to_string(ProblemKind k) {
    switch (k) {
        case ProblemKind::Burgers: return "burgers";
        case ProblemKind::Elliptic: return "elliptic";
        case ProblemKind::Eikonal: return "eikonal";
        case ProblemKind::Ldc: return "ldc";
        case ProblemKind::Helmholtz: return "helmholtz";
        case ProblemKind::InviscidBurgers: return "inviscid-burgers";
    }
    return "?";
}

struct PdeParams {
    double nu = 0.02 / kPi;   // viscosity (burgers, ldc)
    double alpha = 30.0;      // elliptic nonlinearity
    double epsilon = 0.05;    // eikonal regularization
    double A = 3.0;           // ldc lid amplitude
    double rho = 1.0;         // ldc density
    double a1 = 1.0, a2 = 4.0;  // helmholtz frequencies
    double k1 = 0.2;          // inviscid residual-weighting constant
};

// One straight boundary piece: coordinate `fixed_dim` pinned to `fixed_value`,
// the other coordinate sweeping [lo, hi].
struct BoundarySegment {
    int fixed_dim = 0;
    double fixed_value = 0.0;
    int vary_dim = 1;
    double lo = 0.0, hi = 1.0;
    RowTag tag = RowTag::BC;
};

struct PdeProblem {
    ProblemKind kind = ProblemKind::Burgers;
    std::string name;
    int d = 2;
    std::vector<std::string> outputs;
    std::array<double, 2> box_lo{}, box_hi{};
    PdeParams params;
    std::vector<BoundarySegment> segments;
    int n_equations = 1;

    int num_outputs() const { return static_cast<int>(outputs.size()); }
    bool is_burgers_like() const {
        return kind == ProblemKind::Burgers || kind == ProblemKind::InviscidBurgers;
    }
};

// Re = rho * u_bar * L / nu with u_bar = integral of A sin(pi x) over the lid
// = 2A/pi, L = 1.
inline double ldc_reynolds(const PdeProblem& p) {
    if (p.kind != ProblemKind::Ldc) throw WrongProblem("reynolds: LDC only");
    return p.params.rho * (2.0 * p.params.A / kPi) / p.params.nu;
}

inline PdeProblem make_problem(const std::string& name, PdeParams params = {}) {
    PdeProblem p;
    p.params = params;
    p.name = name;
    if (params.nu < 0.0) throw Error("viscosity must be >= 0");
    if (params.k1 < 0.1 || params.k1 > 0.4) throw Error("k1 must lie in [0.1, 0.4]");

    auto square_segments = [&](double lo, double hi) {
        p.segments = {
            {1, lo, 0, lo, hi, RowTag::BC},   // bottom
            {1, hi, 0, lo, hi, RowTag::BC},   // top
            {0, lo, 1, lo, hi, RowTag::BC},   // left
            {0, hi, 1, lo, hi, RowTag::BC},   // right
        };
    };

    if (name == "burgers" || name == "inviscid-burgers") {
        p.kind = name == "burgers" ? ProblemKind::Burgers : ProblemKind::InviscidBurgers;
        if (p.kind == ProblemKind::Burgers && params.nu <= 0.0)
            throw Error("viscous burgers needs nu > 0");
        if (p.kind == ProblemKind::InviscidBurgers) p.params.nu = 0.0;
        p.outputs = {"u"};
        p.box_lo = {-1.0, 0.0};
        p.box_hi = {1.0, 1.0};
        p.segments = {
            {1, 0.0, 0, -1.0, 1.0, RowTag::IC},   // t = 0 line
            {0, -1.0, 1, 0.0, 1.0, RowTag::BC},   // x = -1
            {0, 1.0, 1, 0.0, 1.0, RowTag::BC},    // x = +1
        };
    } else if (name == "elliptic") {
        p.kind = ProblemKind::Elliptic;
        p.outputs = {"u"};
        p.box_lo = {0.0, 0.0};
        p.box_hi = {1.0, 1.0};
        square_segments(0.0, 1.0);
    } else if (name == "eikonal") {
        p.kind = ProblemKind::Eikonal;
        if (params.epsilon <= 0.0) throw Error("eikonal needs epsilon > 0");
        p.outputs = {"u"};
        p.box_lo = {0.0, 0.0};
        p.box_hi = {1.0, 1.0};
        square_segments(0.0, 1.0);
    } else if (name == "ldc") {
        p.kind = ProblemKind::Ldc;
        if (params.nu <= 0.0) p.params.nu = 0.01;
        p.outputs = {"u", "v", "p"};
        p.n_equations = 3;
        p.box_lo = {0.0, 0.0};
        p.box_hi = {1.0, 1.0};
        square_segments(0.0, 1.0);
    } else if (name == "helmholtz") {
        p.kind = ProblemKind::Helmholtz;
        p.outputs = {"u"};
        p.box_lo = {-1.0, -1.0};
        p.box_hi = {1.0, 1.0};
        square_segments(-1.0, 1.0);
    } else {
        throw Error("unknown problem: " + name);
    }
    return p;
}

// Dirichlet/initial value of output `o` at boundary point x.
inline double boundary_value(const PdeProblem& p, int o, const double* x) {
    switch (p.kind) {
        case ProblemKind::Burgers:
        case ProblemKind::InviscidBurgers:
            // IC -sin(pi x) on t=0, zero on the x = +-1 edges
            return x[1] == 0.0 ? -std::sin(kPi * x[0]) : 0.0;
        case ProblemKind::Elliptic:
        case ProblemKind::Eikonal:
        case ProblemKind::Helmholtz:
            return 0.0;
        case ProblemKind::Ldc:
            if (o == 0 && x[1] == 1.0) return p.params.A * std::sin(kPi * x[0]);
            return 0.0;
    }
    return 0.0;
}

// ---- manufactured forcings ---------------------------------------------------

inline double manufactured_forcing(const PdeProblem& p, const double* x) {
    if (p.kind == ProblemKind::Elliptic) {
        const double s1 = std::sin(kPi * x[0]) * std::sin(kPi * x[1]);
        const double s4 = std::sin(4.0 * kPi * x[0]) * std::sin(4.0 * kPi * x[1]);
        const double u = s1 + 2.0 * s4;
        return -2.0 * kPi * kPi * s1 - 64.0 * kPi * kPi * s4 - p.params.alpha * u * u * u;
    }
    if (p.kind == ProblemKind::Helmholtz) {
        const double a1 = p.params.a1, a2 = p.params.a2;
        const double u = std::sin(a1 * kPi * x[0]) * std::sin(a2 * kPi * x[1]);
        return (1.0 - (a1 * a1 + a2 * a2) * kPi * kPi) * u;
    }
    throw WrongProblem("manufactured_forcing: defined for elliptic and helmholtz only");
}

// ---- residual operator --------------------------------------------------------

// Second-derivative pairs each problem's residual references.
inline ChannelSet problem_channels(const PdeProblem& p) {
    ChannelSet cs = ChannelSet::with_grads(p.d);
    switch (p.kind) {
        case ProblemKind::Burgers:
            cs.pairs = {{0, 0}};
            break;
        case ProblemKind::InviscidBurgers:
            break;  // first order only
        case ProblemKind::Elliptic:
        case ProblemKind::Eikonal:
        case ProblemKind::Helmholtz:
        case ProblemKind::Ldc:
            cs.pairs = {{0, 0}, {1, 1}};
            break;
    }
    return cs;
}

// Residuals and their jacobian w.r.t. the jet channels of every output.
//   eta: q x C channel matrix (layout = problem_channels)
//   res: n_equations
//   jac (optional): n_eq x q x C
//   dres_dparam (optional): derivative of each residual w.r.t. `unknown`
inline void pde_residual_channels(const PdeProblem& p, const double* x, const double* eta,
                                  double* res, double* jac = nullptr,
                                  const std::string& unknown = {},
                                  double* dres_dparam = nullptr) {
    const ChannelSet cs = problem_channels(p);
    const int C = cs.count();
    const int q = p.num_outputs();
    auto ch = [&](int o, int c) { return eta[o * C + c]; };
    auto J = [&](int e, int o, int c) -> double& { return jac[(e * q + o) * C + c]; };
    if (jac) std::fill(jac, jac + p.n_equations * q * C, 0.0);
    if (dres_dparam) std::fill(dres_dparam, dres_dparam + p.n_equations, 0.0);

    switch (p.kind) {
        case ProblemKind::Burgers: {
            // channels: 0 val, 1 d/dx, 2 d/dt, 3 d2/dx2
            const double v = ch(0, 0), gx = ch(0, 1), gt = ch(0, 2), hxx = ch(0, 3);
            res[0] = gt + v * gx - p.params.nu * hxx;
            if (jac) {
                J(0, 0, 0) = gx;
                J(0, 0, 1) = v;
                J(0, 0, 2) = 1.0;
                J(0, 0, 3) = -p.params.nu;
            }
            if (dres_dparam && unknown == "nu") dres_dparam[0] = -hxx;
            break;
        }
        case ProblemKind::InviscidBurgers: {
            const double v = ch(0, 0), gx = ch(0, 1), gt = ch(0, 2);
            res[0] = gt + v * gx;
            if (jac) {
                J(0, 0, 0) = gx;
                J(0, 0, 1) = v;
                J(0, 0, 2) = 1.0;
            }
            break;
        }
        case ProblemKind::Elliptic: {
            const double v = ch(0, 0), hxx = ch(0, 3), hyy = ch(0, 4);
            res[0] = hxx + hyy - p.params.alpha * v * v * v - manufactured_forcing(p, x);
            if (jac) {
                J(0, 0, 0) = -3.0 * p.params.alpha * v * v;
                J(0, 0, 3) = 1.0;
                J(0, 0, 4) = 1.0;
            }
            if (dres_dparam && unknown == "alpha") dres_dparam[0] = -v * v * v;
            break;
        }
        case ProblemKind::Eikonal: {
            const double gx = ch(0, 1), gy = ch(0, 2), hxx = ch(0, 3), hyy = ch(0, 4);
            res[0] = gx * gx + gy * gy - p.params.epsilon * (hxx + hyy) - 1.0;
            if (jac) {
                J(0, 0, 1) = 2.0 * gx;
                J(0, 0, 2) = 2.0 * gy;
                J(0, 0, 3) = -p.params.epsilon;
                J(0, 0, 4) = -p.params.epsilon;
            }
            if (dres_dparam && unknown == "epsilon") dres_dparam[0] = -(hxx + hyy);
            break;
        }
        case ProblemKind::Helmholtz: {
            const double v = ch(0, 0), hxx = ch(0, 3), hyy = ch(0, 4);
            res[0] = hxx + hyy + v - manufactured_forcing(p, x);
            if (jac) {
                J(0, 0, 0) = 1.0;
                J(0, 0, 3) = 1.0;
                J(0, 0, 4) = 1.0;
            }
            break;
        }
        case ProblemKind::Ldc: {
            const double inv_rho = 1.0 / p.params.rho;
            const double nu = p.params.nu;
            const double u = ch(0, 0), ux = ch(0, 1), uy = ch(0, 2), uxx = ch(0, 3), uyy = ch(0, 4);
            const double v = ch(1, 0), vx = ch(1, 1), vy = ch(1, 2), vxx = ch(1, 3), vyy = ch(1, 4);
            const double px = ch(2, 1), py = ch(2, 2);
            res[0] = ux + vy;
            res[1] = u * ux + v * uy + inv_rho * px - nu * (uxx + uyy);
            res[2] = u * vx + v * vy + inv_rho * py - nu * (vxx + vyy);
            if (jac) {
                J(0, 0, 1) = 1.0;
                J(0, 1, 2) = 1.0;
                J(1, 0, 0) = ux;
                J(1, 0, 1) = u;
                J(1, 1, 0) = uy;
                J(1, 0, 2) = v;
                J(1, 2, 1) = inv_rho;
                J(1, 0, 3) = -nu;
                J(1, 0, 4) = -nu;
                J(2, 0, 0) = vx;
                J(2, 1, 1) = u;
                J(2, 1, 0) = vy;
                J(2, 1, 2) = v;
                J(2, 2, 2) = inv_rho;
                J(2, 1, 3) = -nu;
                J(2, 1, 4) = -nu;
            }
            if (dres_dparam && unknown == "nu") {
                dres_dparam[1] = -(uxx + uyy);
                dres_dparam[2] = -(vxx + vyy);
            }
            break;
        }
    }
}

// Residuals from a full jet bundle (test/inspection path).
inline std::vector<double> pde_residual(const PdeProblem& p, const double* x,
                                        const JetBundle& jets) {
    const ChannelSet cs = problem_channels(p);
    const int needed_order = cs.pairs.empty() ? 1 : 2;
    if (jets.order < needed_order)
        throw MissingDerivative("pde_residual: jet order " + std::to_string(jets.order) +
                                " below required " + std::to_string(needed_order));
    if (jets.q != p.num_outputs() || jets.d != p.d)
        throw ShapeMismatch("pde_residual: jet shape does not match problem");
    const int C = cs.count();
    std::vector<double> eta(static_cast<std::size_t>(jets.q) * C, 0.0);
    for (int o = 0; o < jets.q; ++o) {
        eta[o * C + 0] = jets.value[o];
        for (int k = 0; k < p.d; ++k) eta[o * C + 1 + k] = jets.g(o, k);
        for (std::size_t pr = 0; pr < cs.pairs.size(); ++pr) {
            const auto [k, l] = cs.pairs[pr];
            eta[o * C + 1 + p.d + pr] = jets.h(o, k, l);
        }
    }
    std::vector<double> res(p.n_equations);
    pde_residual_channels(p, x, eta.data(), res.data());
    return res;
}

// ---- residual weighting for the inviscid shock -------------------------------

// lambda = 1 / (k1 (|u_x| - u_x) + 1), in (0, 1]; de-emphasizes points on the
// steep side of the shock.
inline double lambda_weight(double u_x, double k1) {
    if (k1 < 0.1 || k1 > 0.4) throw Error("lambda_weight: k1 must lie in [0.1, 0.4]");
    return 1.0 / (k1 * (std::abs(u_x) - u_x) + 1.0);
}

inline double lambda_weight_derivative(double u_x, double k1) {
    if (u_x >= 0.0) return 0.0;
    const double denom = 1.0 - 2.0 * k1 * u_x;
    return 2.0 * k1 / (denom * denom);
}

// ---- sampling -----------------------------------------------------------------

struct SamplePlan {
    std::size_t n_bc_per_segment = 40;
    std::size_t n_pde = 10000;
    std::uint64_t seed = 0;

    SamplePlan() = default;
    SamplePlan(std::size_t n_bc, std::size_t n_pde_, std::uint64_t seed_)
        : n_bc_per_segment(n_bc), n_pde(n_pde_), seed(seed_) {}
};

// Equispaced points (endpoints included) on every boundary segment, with exact
// BC/IC values. LDC pressure gets the single gauge row p(0,0) = 0.
inline std::vector<BoundaryDataset> sample_boundary(const PdeProblem& p, const SamplePlan& plan) {
    std::vector<BoundaryDataset> out(p.num_outputs());
    for (auto& ds : out) ds.d = p.d;
    const std::size_t n = plan.n_bc_per_segment;
    for (int o = 0; o < p.num_outputs(); ++o) {
        if (p.kind == ProblemKind::Ldc && p.outputs[o] == "p") {
            const double origin[2] = {0.0, 0.0};
            out[o].append(origin, 0.0, RowTag::BC);
            continue;
        }
        for (const auto& seg : p.segments) {
            for (std::size_t i = 0; i < n; ++i) {
                double x[2];
                const double s = n == 1 ? seg.lo : seg.lo + (seg.hi - seg.lo) * i / double(n - 1);
                x[seg.fixed_dim] = seg.fixed_value;
                x[seg.vary_dim] = s;
                out[o].append(x, boundary_value(p, o, x), seg.tag);
            }
        }
    }
    return out;
}

// Uniform i.i.d. collocation points strictly inside the open domain box,
// deterministic per seed and fixed for the whole run.
inline std::vector<double> sample_interior(const PdeProblem& p, const SamplePlan& plan) {
    SplitMix64 rng(plan.seed);
    std::vector<double> pts(plan.n_pde * p.d);
    for (std::size_t i = 0; i < plan.n_pde; ++i) {
        for (int k = 0; k < p.d; ++k) {
            double v;
            do {
                v = rng.uniform(p.box_lo[k], p.box_hi[k]);
            } while (v == p.box_lo[k] || v == p.box_hi[k]);
            pts[i * p.d + k] = v;
        }
    }
    return pts;
}

// Zero-mean Gaussian corruption with std = level * solution range, applied to
// the response column only. Deterministic per seed; level 0 is the identity.
inline BoundaryDataset corrupt_boundary(const BoundaryDataset& data, double level,
                                        std::uint64_t seed, double solution_range) {
    if (level < 0.0) throw Error("corrupt_boundary: level must be >= 0");
    BoundaryDataset out = data;
    if (level == 0.0) return out;
    SplitMix64 rng(seed);
    const double sd = level * solution_range;
    for (auto& v : out.u) v += sd * rng.normal();
    return out;
}

} // namespace cores
