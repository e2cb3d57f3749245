#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "coresolve/common.hpp"

namespace cores {

enum class OptimMethod { Adam, Lbfgs };

struct OptimConfig {
    OptimMethod method = OptimMethod::Lbfgs;
    double learning_rate = 1e-2;  // adam step size / initial L-BFGS line-search step
    int epochs = 1000;
    // adam
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    // lbfgs
    int history = 10;
    double wolfe_c1 = 1e-4, wolfe_c2 = 0.9;
    int max_line_search = 25;

    static OptimConfig adam(double lr = 1e-3, int epochs = 1000) {
        OptimConfig c;
        c.method = OptimMethod::Adam;
        c.learning_rate = lr;
        c.epochs = epochs;
        return c;
    }
    static OptimConfig lbfgs(double lr = 1e-2, int epochs = 1000) {
        OptimConfig c;
        c.method = OptimMethod::Lbfgs;
        c.learning_rate = lr;
        c.epochs = epochs;
        return c;
    }
};

struct OptTrace {
    std::vector<double> loss;       // per epoch actually run
    std::vector<double> grad_inf;   // gradient infinity norms
    double wall_seconds = 0.0;
    std::size_t function_evals = 0;
    bool line_search_failed = false;
};

// loss_and_grad(theta, grad_out) -> loss; grad_out is pre-sized
using LossAndGrad = std::function<double(const std::vector<double>&, std::vector<double>&)>;
// called with (epoch index, loss, theta) after each accepted epoch
using EpochCallback = std::function<void(int, double, const std::vector<double>&)>;

namespace detail {

inline double inf_norm(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

} // namespace detail

inline std::pair<std::vector<double>, OptTrace>
minimize_adam(const LossAndGrad& f, std::vector<double> theta, const OptimConfig& cfg,
              const EpochCallback& on_epoch = {}) {
    const auto t0 = std::chrono::steady_clock::now();
    OptTrace trace;
    const std::size_t n = theta.size();
    std::vector<double> g(n), m(n, 0.0), v(n, 0.0);
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const double loss = f(theta, g);
        if (!std::isfinite(loss))
            throw NonFiniteLoss("adam: non-finite loss at epoch " + std::to_string(epoch));
        ++trace.function_evals;
        const double bc1 = 1.0 - std::pow(cfg.beta1, epoch);
        const double bc2 = 1.0 - std::pow(cfg.beta2, epoch);
        for (std::size_t i = 0; i < n; ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1, vhat = v[i] / bc2;
            theta[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.eps);
        }
        trace.loss.push_back(loss);
        trace.grad_inf.push_back(detail::inf_norm(g));
        if (on_epoch) on_epoch(epoch, loss, theta);
    }
    trace.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {std::move(theta), std::move(trace)};
}

namespace detail {

// Strong-Wolfe line search, bracket + zoom with cubic interpolation.
// Returns the accepted step (0 on failure); on success fnew/gnew hold the
// accepted point's loss and gradient.
struct LineSearchResult {
    double alpha = 0.0;
    double fnew = 0.0;
    std::size_t evals = 0;
    bool ok = false;
};

inline double cubic_step(double a, double fa, double da, double b, double fb, double db) {
    // minimizer of the cubic through (a, fa, da), (b, fb, db)
    const double d1 = da + db - 3.0 * (fa - fb) / (a - b);
    const double sq = d1 * d1 - da * db;
    if (sq < 0.0) return 0.5 * (a + b);
    const double d2 = std::sqrt(sq) * (b > a ? 1.0 : -1.0);
    const double t = b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2);
    if (!std::isfinite(t) || t <= std::min(a, b) || t >= std::max(a, b))
        return 0.5 * (a + b);
    return t;
}

inline LineSearchResult strong_wolfe(const LossAndGrad& f, const std::vector<double>& x,
                                     const std::vector<double>& d, double f0,
                                     const std::vector<double>& g0, double alpha0,
                                     std::vector<double>& xnew, std::vector<double>& gnew,
                                     const OptimConfig& cfg) {
    const std::size_t n = x.size();
    const double dphi0 = dot(g0, d);
    LineSearchResult out;
    if (dphi0 >= 0.0) return out;  // not a descent direction

    auto eval = [&](double a) {
        for (std::size_t i = 0; i < n; ++i) xnew[i] = x[i] + a * d[i];
        ++out.evals;
        return f(xnew, gnew);
    };

    double best_a = 0.0, best_f = f0;

    double a_prev = 0.0, f_prev = f0, d_prev = dphi0;
    double a = alpha0;
    double lo = 0, f_lo = 0, d_lo = 0, hi = 0, f_hi = 0, d_hi = 0;
    bool bracketed = false;
    const int max_trials = cfg.max_line_search;

    for (int i = 0; i < max_trials; ++i) {
        double fv = eval(a);
        double dv = dot(gnew, d);
        if (std::isfinite(fv) && fv < best_f) {
            best_a = a; best_f = fv;
        }
        if (!std::isfinite(fv) || fv > f0 + cfg.wolfe_c1 * a * dphi0 || (i > 0 && fv >= f_prev)) {
            lo = a_prev; f_lo = f_prev; d_lo = d_prev;
            hi = a; f_hi = fv; d_hi = dv;
            bracketed = true;
            break;
        }
        if (std::abs(dv) <= -cfg.wolfe_c2 * dphi0) {
            out.alpha = a; out.fnew = fv; out.ok = true;
            return out;
        }
        if (dv >= 0.0) {
            lo = a; f_lo = fv; d_lo = dv;
            hi = a_prev; f_hi = f_prev; d_hi = d_prev;
            bracketed = true;
            break;
        }
        a_prev = a; f_prev = fv; d_prev = dv;
        a = std::min(a * 2.0, 1e10);
    }

    if (bracketed) {
        const int remaining = max_trials - static_cast<int>(out.evals);
        for (int j = 0; j < remaining; ++j) {
            a = cubic_step(lo, f_lo, d_lo, hi, f_hi, d_hi);
            double fv = eval(a);
            double dv = dot(gnew, d);
            if (std::isfinite(fv) && fv < best_f) {
                best_a = a; best_f = fv;
            }
            if (!std::isfinite(fv) || fv > f0 + cfg.wolfe_c1 * a * dphi0 || fv >= f_lo) {
                hi = a; f_hi = fv; d_hi = dv;
            } else {
                if (std::abs(dv) <= -cfg.wolfe_c2 * dphi0) {
                    out.alpha = a; out.fnew = fv; out.ok = true;
                    return out;
                }
                if (dv * (hi - lo) >= 0.0) {
                    hi = lo; f_hi = f_lo; d_hi = d_lo;
                }
                lo = a; f_lo = fv; d_lo = dv;
            }
        }
    }

    if (best_a > 0.0 && best_f < f0) {
        // no Wolfe point within the budget; fall back to the best decrease
        // seen (re-evaluated so downstream loss decompositions see it last)
        out.fnew = eval(best_a);
        out.alpha = best_a;
        out.ok = true;
        return out;
    }
    return out;
}

} // namespace detail

// Two-loop recursion over the last `history` curvature pairs with a
// strong-Wolfe cubic line search. The learning rate sets the initial step of
// the very first line search (quasi-Newton steps after that start at 1, with
// H0 = (s.y / y.y) I scaling); curvature pairs with y.s <= 1e-10 are rejected
// and the next direction falls back to steepest descent if the history is
// empty.
inline std::pair<std::vector<double>, OptTrace>
minimize_lbfgs(const LossAndGrad& f, std::vector<double> theta, const OptimConfig& cfg,
               const EpochCallback& on_epoch = {}) {
    const auto t0 = std::chrono::steady_clock::now();
    OptTrace trace;
    const std::size_t n = theta.size();

    std::vector<double> g(n);
    double loss = f(theta, g);
    ++trace.function_evals;
    if (!std::isfinite(loss)) throw NonFiniteLoss("lbfgs: non-finite loss at initial point");

    std::vector<std::vector<double>> S, Y;
    std::vector<double> rho;
    std::vector<double> d(n), xnew(n), gnew(n), alpha_buf;

    std::vector<double> best_theta = theta;
    double best_loss = loss;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const double gmax = detail::inf_norm(g);
        if (gmax <= 1e-13) {
            // already at a stationary point; record and stop
            trace.loss.push_back(loss);
            trace.grad_inf.push_back(gmax);
            if (on_epoch) on_epoch(epoch, loss, theta);
            break;
        }

        // two-loop recursion
        d = g;
        const std::size_t h = S.size();
        alpha_buf.assign(h, 0.0);
        for (std::size_t k = h; k-- > 0;) {
            alpha_buf[k] = rho[k] * detail::dot(S[k], d);
            for (std::size_t i = 0; i < n; ++i) d[i] -= alpha_buf[k] * Y[k][i];
        }
        if (h > 0) {
            const double gamma = detail::dot(S[h - 1], Y[h - 1]) / detail::dot(Y[h - 1], Y[h - 1]);
            for (auto& v : d) v *= gamma;
        }
        for (std::size_t k = 0; k < h; ++k) {
            const double beta = rho[k] * detail::dot(Y[k], d);
            for (std::size_t i = 0; i < n; ++i) d[i] += (alpha_buf[k] - beta) * S[k][i];
        }
        for (auto& v : d) v = -v;
        if (detail::dot(d, g) >= 0.0) {
            for (std::size_t i = 0; i < n; ++i) d[i] = -g[i];  // safeguard
        }

        double a0 = 1.0;
        if (epoch == 1) {
            double g1 = 0.0;
            for (double v : g) g1 += std::abs(v);
            a0 = std::min(1.0, 1.0 / g1) * cfg.learning_rate;
        }

        auto ls = detail::strong_wolfe(f, theta, d, loss, g, a0, xnew, gnew, cfg);
        trace.function_evals += ls.evals;
        if (!ls.ok) {
            trace.line_search_failed = true;
            trace.loss.push_back(loss);
            trace.grad_inf.push_back(gmax);
            if (on_epoch) on_epoch(epoch, loss, theta);
            break;  // terminate, best-so-far returned below
        }

        std::vector<double> s(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = xnew[i] - theta[i];
            y[i] = gnew[i] - g[i];
        }
        const double ys = detail::dot(y, s);
        if (ys > 1e-10) {
            S.push_back(std::move(s));
            Y.push_back(std::move(y));
            rho.push_back(1.0 / ys);
            if (static_cast<int>(S.size()) > cfg.history) {
                S.erase(S.begin());
                Y.erase(Y.begin());
                rho.erase(rho.begin());
            }
        }
        theta = xnew;
        g = gnew;
        loss = ls.fnew;
        if (!std::isfinite(loss))
            throw NonFiniteLoss("lbfgs: non-finite loss at epoch " + std::to_string(epoch));
        if (loss < best_loss) {
            best_loss = loss;
            best_theta = theta;
        }
        trace.loss.push_back(loss);
        trace.grad_inf.push_back(detail::inf_norm(g));
        if (on_epoch) on_epoch(epoch, loss, theta);
    }

    if (best_loss < loss) {
        theta = best_theta;
    }
    trace.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {std::move(theta), std::move(trace)};
}

inline std::pair<std::vector<double>, OptTrace>
minimize(const LossAndGrad& f, std::vector<double> theta, const OptimConfig& cfg,
         const EpochCallback& on_epoch = {}) {
    return cfg.method == OptimMethod::Adam ? minimize_adam(f, std::move(theta), cfg, on_epoch)
                                           : minimize_lbfgs(f, std::move(theta), cfg, on_epoch);
}

} // namespace cores
