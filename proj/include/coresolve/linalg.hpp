#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "coresolve/common.hpp"

namespace cores {

// Dense symmetric matrix, full row-major storage. The upper triangle is
// authoritative: set() mirrors both halves.
class SymMatrix {
  public:
    SymMatrix() = default;
    explicit SymMatrix(std::size_t n) : n_(n), a_(n * n, 0.0) {}

    std::size_t size() const { return n_; }
    double operator()(std::size_t i, std::size_t j) const { return a_[i * n_ + j]; }
    void set(std::size_t i, std::size_t j, double v) {
        a_[i * n_ + j] = v;
        a_[j * n_ + i] = v;
    }
    const std::vector<double>& data() const { return a_; }

    double max_abs() const {
        double m = 0.0;
        for (double v : a_) m = std::max(m, std::abs(v));
        return m;
    }

  private:
    std::size_t n_ = 0;
    std::vector<double> a_;
};

// Lower-triangular Cholesky factor, L * L^T = A.
class CholeskyFactor {
  public:
    CholeskyFactor() = default;
    CholeskyFactor(std::size_t n, std::vector<double> lower)
        : n_(n), l_(std::move(lower)) {}

    std::size_t size() const { return n_; }
    double operator()(std::size_t i, std::size_t j) const { return l_[i * n_ + j]; }

    // Solve A x = b in place (forward then back substitution).
    void solve_in_place(double* b) const {
        for (std::size_t i = 0; i < n_; ++i) {
            double s = b[i];
            const double* row = &l_[i * n_];
            for (std::size_t j = 0; j < i; ++j) s -= row[j] * b[j];
            b[i] = s / row[i];
        }
        for (std::size_t ii = n_; ii-- > 0;) {
            double s = b[ii];
            for (std::size_t j = ii + 1; j < n_; ++j) s -= l_[j * n_ + ii] * b[j];
            b[ii] = s / l_[ii * n_ + ii];
        }
    }

  private:
    std::size_t n_ = 0;
    std::vector<double> l_;  // row-major, upper part unused (zero)
};

inline CholeskyFactor cholesky(const SymMatrix& a) {
    const std::size_t n = a.size();
    std::vector<double> l(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = a(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l[i * n + k] * l[j * n + k];
            if (i == j) {
                if (s <= 0.0 || !std::isfinite(s))
                    throw NotPositiveDefinite("cholesky: non-positive pivot at row " + std::to_string(i));
                l[i * n + i] = std::sqrt(s);
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    return CholeskyFactor(n, std::move(l));
}

// Solve A X = B for a dense right-hand-side block. B is n x k row-major.
inline std::vector<double> chol_solve(const CholeskyFactor& f, const std::vector<double>& b,
                                      std::size_t ncols) {
    const std::size_t n = f.size();
    if (ncols == 0 || b.size() != n * ncols)
        throw DimensionMismatch("chol_solve: rhs has " + std::to_string(b.size()) +
                                " entries, expected " + std::to_string(n * ncols));
    std::vector<double> x(b);
    if (ncols == 1) {
        f.solve_in_place(x.data());
        return x;
    }
    // column-at-a-time through a scratch vector
    std::vector<double> col(n);
    for (std::size_t c = 0; c < ncols; ++c) {
        for (std::size_t i = 0; i < n; ++i) col[i] = x[i * ncols + c];
        f.solve_in_place(col.data());
        for (std::size_t i = 0; i < n; ++i) x[i * ncols + c] = col[i];
    }
    return x;
}

inline std::vector<double> chol_solve_vec(const CholeskyFactor& f, std::vector<double> b) {
    if (b.size() != f.size())
        throw DimensionMismatch("chol_solve: vector length mismatch");
    f.solve_in_place(b.data());
    return b;
}

// Eigenvalues of a symmetric matrix by the cyclic Jacobi method. Exact O(n^3)
// spectra are cheap at the matrix sizes seen here (n <= ~500). Converges when
// the off-diagonal Frobenius norm falls below 1e-12 * ||A||_F; hard cap of
// 100 sweeps.
inline std::vector<double> sym_eigenvalues(const SymMatrix& a) {
    const std::size_t n = a.size();
    std::vector<double> m(a.data());
    if (n == 1) return {m[0]};

    auto frob = [&](bool off_only) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (!off_only || i != j) s += m[i * n + j] * m[i * n + j];
        return std::sqrt(s);
    };
    const double total = frob(false);
    const double tol = 1e-12 * (total > 0 ? total : 1.0);

    for (int sweep = 0; sweep < 100; ++sweep) {
        if (frob(true) <= tol) break;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = m[p * n + q];
                if (apq == 0.0) continue;
                const double app = m[p * n + p], aqq = m[q * n + q];
                const double tau = (aqq - app) / (2.0 * apq);
                const double t = (tau >= 0.0 ? 1.0 / (tau + std::sqrt(1.0 + tau * tau))
                                             : 1.0 / (tau - std::sqrt(1.0 + tau * tau)));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double mkp = m[k * n + p], mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double mpk = m[p * n + k], mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
            }
        }
    }
    std::vector<double> ev(n);
    for (std::size_t i = 0; i < n; ++i) ev[i] = m[i * n + i];
    std::sort(ev.begin(), ev.end());
    return ev;
}

// kappa = lambda_max / lambda_min; +inf sentinel when lambda_min <= 0.
inline double condition_number(const SymMatrix& a) {
    const std::vector<double> ev = sym_eigenvalues(a);
    const double lo = ev.front(), hi = ev.back();
    if (lo <= 0.0) return std::numeric_limits<double>::infinity();
    return hi / lo;
}

} // namespace cores
