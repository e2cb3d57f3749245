#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "coresolve/common.hpp"

namespace cores {

// Root-mean-square deviation between prediction and reference.
inline double l2e(const std::vector<double>& pred, const std::vector<double>& ref) {
    if (pred.size() != ref.size() || pred.empty())
        throw LengthMismatch("l2e: vectors must be equal-length and non-empty");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - ref[i];
        s += d * d;
    }
    return std::sqrt(s / pred.size());
}

struct Histogram {
    std::vector<double> edges;        // bins+1 ascending edges over [-12, 2]
    std::vector<std::size_t> counts;  // bins
};

// Histogram of log10|g_i| over fixed edges [-12, 2]; zeros (and anything
// smaller) clamp into the leftmost bin, anything above 2 into the rightmost.
inline Histogram gradient_histogram(const std::vector<double>& grad, int bins) {
    if (bins < 1) throw Error("gradient_histogram: bins must be >= 1");
    Histogram h;
    const double lo = -12.0, hi = 2.0;
    h.edges.resize(bins + 1);
    for (int b = 0; b <= bins; ++b) h.edges[b] = lo + (hi - lo) * b / bins;
    h.counts.assign(bins, 0);
    for (double g : grad) {
        double v = g == 0.0 ? lo : std::log10(std::abs(g));
        if (v < lo) v = lo;
        int b = static_cast<int>((v - lo) / (hi - lo) * bins);
        if (b < 0) b = 0;
        if (b >= bins) b = bins - 1;
        ++h.counts[b];
    }
    return h;
}

} // namespace cores
