#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "coresolve/common.hpp"
#include "coresolve/rng.hpp"

namespace cores {

// Value / input-gradient / input-Hessian of every network output at one point.
struct JetBundle {
    int d = 0;      // input dimension
    int q = 0;      // output dimension
    int order = 0;  // highest derivative populated
    std::vector<double> value;  // q
    std::vector<double> grad;   // q*d, grad[o*d + k]
    std::vector<double> hess;   // q*d*d, hess[(o*d + k)*d + l], symmetric

    double g(int o, int k) const { return grad[o * d + k]; }
    double h(int o, int k, int l) const { return hess[(o * d + k) * d + l]; }
};

// Loss weights on the jet entries of a batch of points (dL/d jet).
struct AdjointSeed {
    int d = 0, q = 0;
    std::size_t npts = 0;
    std::vector<double> value;  // npts*q
    std::vector<double> grad;   // npts*q*d
    std::vector<double> hess;   // npts*q*d*d

    static AdjointSeed zeros(std::size_t npts, int q, int d) {
        AdjointSeed s;
        s.d = d; s.q = q; s.npts = npts;
        s.value.assign(npts * q, 0.0);
        s.grad.assign(npts * q * d, 0.0);
        s.hess.assign(npts * q * d * d, 0.0);
        return s;
    }
};

// Fully connected tanh network housing theta. Hidden activation is tanh and
// the output layer is linear; neither is configurable. Identical
// (widths, seed) pairs produce bit-identical parameters.
class MeanNetwork {
  public:
    MeanNetwork() = default;

    MeanNetwork(std::vector<int> widths, std::uint64_t seed)
        : widths_(std::move(widths)), seed_(seed) {
        if (widths_.size() < 2)
            throw InvalidWidths("network needs at least an input and an output layer");
        for (int w : widths_)
            if (w < 1) throw InvalidWidths("layer widths must be >= 1");
        std::size_t total = 0;
        for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
            w_off_.push_back(total);
            total += static_cast<std::size_t>(widths_[l]) * widths_[l + 1];
            b_off_.push_back(total);
            total += widths_[l + 1];
        }
        params_.assign(total, 0.0);
        // Glorot-uniform weights, zero biases
        SplitMix64 rng(seed);
        for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
            const double bound = std::sqrt(6.0 / (widths_[l] + widths_[l + 1]));
            double* w = params_.data() + w_off_[l];
            const std::size_t nw = static_cast<std::size_t>(widths_[l]) * widths_[l + 1];
            for (std::size_t i = 0; i < nw; ++i) w[i] = rng.uniform(-bound, bound);
        }
    }

    int input_dim() const { return widths_.front(); }
    int output_dim() const { return widths_.back(); }
    int num_layers() const { return static_cast<int>(widths_.size()) - 1; }
    const std::vector<int>& widths() const { return widths_; }
    std::uint64_t seed() const { return seed_; }
    std::size_t num_params() const { return params_.size(); }
    const std::vector<double>& params() const { return params_; }
    std::uint64_t version() const { return version_; }

    void set_params(const std::vector<double>& theta) {
        if (theta.size() != params_.size())
            throw ShapeMismatch("set_params: expected " + std::to_string(params_.size()) +
                                " parameters, got " + std::to_string(theta.size()));
        params_ = theta;
        ++version_;
    }

    const double* weights(int layer) const { return params_.data() + w_off_[layer]; }
    const double* biases(int layer) const { return params_.data() + b_off_[layer]; }
    std::size_t weight_offset(int layer) const { return w_off_[layer]; }
    std::size_t bias_offset(int layer) const { return b_off_[layer]; }

    JetBundle forward_jet(const double* x, int order) const;
    double value(const double* x, int output = 0) const;

  private:
    std::vector<int> widths_;
    std::uint64_t seed_ = 0;
    std::vector<double> params_;
    std::vector<std::size_t> w_off_, b_off_;
    std::uint64_t version_ = 0;
};

inline MeanNetwork init_network(const std::vector<int>& widths, std::uint64_t seed) {
    return MeanNetwork(widths, seed);
}

// Which jet channels an evaluation propagates: channel 0 is the value,
// channels 1..d the input gradient, then one channel per requested
// second-derivative pair (k <= l). Restricting pairs to what a PDE actually
// references keeps the per-point cost down.
struct ChannelSet {
    int d = 0;
    bool grads = false;
    std::vector<std::pair<int, int>> pairs;

    int count() const { return 1 + (grads ? d : 0) + static_cast<int>(pairs.size()); }

    static ChannelSet value_only(int d) { return ChannelSet{d, false, {}}; }
    static ChannelSet with_grads(int d) { return ChannelSet{d, true, {}}; }
    static ChannelSet full(int d) {
        ChannelSet cs{d, true, {}};
        for (int k = 0; k < d; ++k)
            for (int l = k; l < d; ++l) cs.pairs.emplace_back(k, l);
        return cs;
    }
    static ChannelSet for_order(int d, int order) {
        if (order <= 0) return value_only(d);
        if (order == 1) return with_grads(d);
        return full(d);
    }
};

// Per-thread scratch for one point's forward/backward sweep. forward() leaves
// the layer states behind so backward() can run on the same point.
struct JetWorkspace {
    std::vector<std::vector<double>> a;   // a[l]: widths[l] x C, post-activation
    std::vector<std::vector<double>> z;   // z[l]: widths[l] x C, pre-activation (hidden only)
    std::vector<double> cot_a, cot_z;     // scratch cotangents
};

// Propagates (value, gradient, Hessian) channels through the network and runs
// the exact adjoint of that propagation for parameter gradients. Weight
// copies (including transposes for the backward sweep) are refreshed once per
// theta update, not per point.
class JetEvaluator {
  public:
    JetEvaluator(const MeanNetwork& net, ChannelSet cs)
        : net_(&net), cs_(std::move(cs)) {
        if (cs_.d != net.input_dim())
            throw ShapeMismatch("channel set dimension does not match network input");
        refresh();
    }

    const ChannelSet& channels() const { return cs_; }
    int channel_count() const { return static_cast<int>(c_); }

    void refresh() {
        const auto& widths = net_->widths();
        const int L = net_->num_layers();
        w_.resize(L);
        wt_.resize(L);
        b_.resize(L);
        for (int l = 0; l < L; ++l) {
            const int ni = widths[l], no = widths[l + 1];
            const double* w = net_->weights(l);
            w_[l].assign(w, w + static_cast<std::size_t>(ni) * no);
            wt_[l].resize(static_cast<std::size_t>(ni) * no);
            for (int i = 0; i < no; ++i)
                for (int j = 0; j < ni; ++j) wt_[l][static_cast<std::size_t>(j) * no + i] = w[static_cast<std::size_t>(i) * ni + j];
            const double* bb = net_->biases(l);
            b_[l].assign(bb, bb + no);
        }
        c_ = static_cast<std::size_t>(cs_.count());
        version_ = net_->version();
    }

    std::uint64_t version() const { return version_; }

    void init_workspace(JetWorkspace& ws) const {
        const auto& widths = net_->widths();
        const int L = net_->num_layers();
        ws.a.resize(L + 1);
        ws.z.resize(L + 1);
        for (int l = 0; l <= L; ++l) {
            ws.a[l].assign(static_cast<std::size_t>(widths[l]) * c_, 0.0);
            if (l >= 1 && l < L) ws.z[l].assign(static_cast<std::size_t>(widths[l]) * c_, 0.0);
        }
        std::size_t mx = 0;
        for (int w : widths) mx = std::max(mx, static_cast<std::size_t>(w));
        ws.cot_a.assign(mx * c_, 0.0);
        ws.cot_z.assign(mx * c_, 0.0);
    }

    // out: q x C channel matrix (row per output, channels contiguous)
    void forward(JetWorkspace& ws, const double* x, double* out) const {
        const auto& widths = net_->widths();
        const int L = net_->num_layers();
        const int d = cs_.d;
        const std::size_t C = c_;

        // input jets
        {
            double* a0 = ws.a[0].data();
            std::fill(ws.a[0].begin(), ws.a[0].end(), 0.0);
            for (int j = 0; j < d; ++j) {
                a0[j * C] = x[j];
                if (cs_.grads) a0[j * C + 1 + j] = 1.0;
            }
        }

        for (int l = 0; l < L; ++l) {
            const int ni = widths[l], no = widths[l + 1];
            const bool hidden = (l + 1 < L);
            const double* W = w_[l].data();
            const double* prev = ws.a[l].data();
            double* dst = hidden ? ws.z[l + 1].data() : ws.a[l + 1].data();
            linear_forward(W, b_[l].data(), prev, dst, ni, no);
            if (hidden) tanh_forward(ws.z[l + 1].data(), ws.a[l + 1].data(), no);
        }
        const std::size_t nq = static_cast<std::size_t>(widths[L]) * C;
        std::copy_n(ws.a[L].data(), nq, out);
    }

    // cot: q x C cotangent on the forward output; accumulates dL/dtheta.
    // Must be called right after forward() on the same workspace/point.
    void backward(JetWorkspace& ws, const double* cot, double* grad) const {
        const auto& widths = net_->widths();
        const int L = net_->num_layers();
        const std::size_t C = c_;

        // cotangent on z of the output layer (identity activation)
        double* cz = ws.cot_z.data();
        double* ca = ws.cot_a.data();
        std::copy_n(cot, static_cast<std::size_t>(widths[L]) * C, cz);

        for (int l = L - 1; l >= 0; --l) {
            const int ni = widths[l], no = widths[l + 1];
            // parameter gradients of this layer
            double* gw = grad + net_->weight_offset(l);
            double* gb = grad + net_->bias_offset(l);
            const double* prev = ws.a[l].data();
            for (int i = 0; i < no; ++i) {
                const double* czi = cz + static_cast<std::size_t>(i) * C;
                gb[i] += czi[0];
                double* gwrow = gw + static_cast<std::size_t>(i) * ni;
                for (int j = 0; j < ni; ++j) {
                    const double* pj = prev + static_cast<std::size_t>(j) * C;
                    double s = 0.0;
                    for (std::size_t cch = 0; cch < C; ++cch) s += czi[cch] * pj[cch];
                    gwrow[j] += s;
                }
            }
            if (l == 0) break;
            // cotangent on previous activation: ca = W^T cz
            const double* WT = wt_[l].data();
            for (int j = 0; j < ni; ++j) {
                double* caj = ca + static_cast<std::size_t>(j) * C;
                std::fill(caj, caj + C, 0.0);
                const double* wtj = WT + static_cast<std::size_t>(j) * no;
                for (int i = 0; i < no; ++i) {
                    const double wij = wtj[i];
                    const double* czi = cz + static_cast<std::size_t>(i) * C;
                    for (std::size_t cch = 0; cch < C; ++cch) caj[cch] += wij * czi[cch];
                }
            }
            // through tanh of hidden layer l: ca (on a[l]) -> cz (on z[l])
            tanh_backward(ws.z[l].data(), ws.a[l].data(), ca, cz, ni);
        }
    }

  private:
    void linear_forward(const double* W, const double* b, const double* prev, double* dst,
                        int ni, int no) const {
        const std::size_t C = c_;
        for (int i = 0; i < no; ++i) {
            double* zi = dst + static_cast<std::size_t>(i) * C;
            std::fill(zi, zi + C, 0.0);
            const double* wrow = W + static_cast<std::size_t>(i) * ni;
            for (int j = 0; j < ni; ++j) {
                const double wij = wrow[j];
                const double* pj = prev + static_cast<std::size_t>(j) * C;
                for (std::size_t cch = 0; cch < C; ++cch) zi[cch] += wij * pj[cch];
            }
            zi[0] += b[i];
        }
    }

    // a = tanh(z) per channel:
    //   a0   = t
    //   aJ_k = t' zJ_k
    //   aH_p = t'' zJ_kp zJ_lp + t' zH_p        with t' = 1-t^2, t'' = -2 t t'
    void tanh_forward(const double* z, double* a, int n) const {
        const std::size_t C = c_;
        const int d = cs_.d;
        const std::size_t np = cs_.pairs.size();
        for (int i = 0; i < n; ++i) {
            const double* zi = z + static_cast<std::size_t>(i) * C;
            double* ai = a + static_cast<std::size_t>(i) * C;
            const double t = std::tanh(zi[0]);
            const double t1 = 1.0 - t * t;
            ai[0] = t;
            if (cs_.grads)
                for (int k = 0; k < d; ++k) ai[1 + k] = t1 * zi[1 + k];
            if (np) {
                const double t2 = -2.0 * t * t1;
                for (std::size_t p = 0; p < np; ++p) {
                    const auto [k, l] = cs_.pairs[p];
                    ai[1 + d + p] = t2 * zi[1 + k] * zi[1 + l] + t1 * zi[1 + d + p];
                }
            }
        }
    }

    // adjoint of tanh_forward: cotangent ca on a -> cotangent cz on z
    void tanh_backward(const double* z, const double* a, const double* ca, double* cz,
                       int n) const {
        const std::size_t C = c_;
        const int d = cs_.d;
        const std::size_t np = cs_.pairs.size();
        for (int i = 0; i < n; ++i) {
            const double* zi = z + static_cast<std::size_t>(i) * C;
            const double* cai = ca + static_cast<std::size_t>(i) * C;
            double* czi = cz + static_cast<std::size_t>(i) * C;
            const double t = a[static_cast<std::size_t>(i) * C];
            const double t1 = 1.0 - t * t;
            const double t2 = -2.0 * t * t1;

            double zbar = cai[0] * t1;
            if (cs_.grads) {
                double t1bar = 0.0;
                for (int k = 0; k < d; ++k) {
                    czi[1 + k] = t1 * cai[1 + k];
                    t1bar += cai[1 + k] * zi[1 + k];
                }
                if (np) {
                    const double t3 = -2.0 * t1 * t1 - 2.0 * t * t2;  // d t'' / dz
                    double t2bar = 0.0;
                    for (std::size_t p = 0; p < np; ++p) {
                        const auto [k, l] = cs_.pairs[p];
                        const double ch = cai[1 + d + p];
                        czi[1 + d + p] = t1 * ch;
                        t1bar += ch * zi[1 + d + p];
                        t2bar += ch * zi[1 + k] * zi[1 + l];
                        czi[1 + k] += t2 * ch * zi[1 + l];
                        czi[1 + l] += t2 * ch * zi[1 + k];
                    }
                    zbar += t2bar * t3;
                }
                zbar += t1bar * t2;
            }
            czi[0] = zbar;
        }
    }

    const MeanNetwork* net_;
    ChannelSet cs_;
    std::size_t c_ = 0;
    std::uint64_t version_ = 0;
    std::vector<std::vector<double>> w_, wt_, b_;
};

inline JetBundle MeanNetwork::forward_jet(const double* x, int order) const {
    const int d = input_dim(), q = output_dim();
    JetBundle jet;
    jet.d = d; jet.q = q; jet.order = order;
    jet.value.assign(q, 0.0);
    if (order >= 1) jet.grad.assign(static_cast<std::size_t>(q) * d, 0.0);
    if (order >= 2) jet.hess.assign(static_cast<std::size_t>(q) * d * d, 0.0);

    const ChannelSet cs = ChannelSet::for_order(d, order);
    JetEvaluator ev(*this, cs);
    JetWorkspace ws;
    ev.init_workspace(ws);
    std::vector<double> out(static_cast<std::size_t>(q) * cs.count());
    ev.forward(ws, x, out.data());

    const std::size_t C = cs.count();
    for (int o = 0; o < q; ++o) {
        const double* row = out.data() + o * C;
        jet.value[o] = row[0];
        if (order >= 1)
            for (int k = 0; k < d; ++k) jet.grad[o * d + k] = row[1 + k];
        if (order >= 2) {
            for (std::size_t p = 0; p < cs.pairs.size(); ++p) {
                const auto [k, l] = cs.pairs[p];
                jet.hess[(static_cast<std::size_t>(o) * d + k) * d + l] = row[1 + d + p];
                jet.hess[(static_cast<std::size_t>(o) * d + l) * d + k] = row[1 + d + p];
            }
        }
    }
    return jet;
}

inline double MeanNetwork::value(const double* x, int output) const {
    JetBundle j = forward_jet(x, 0);
    return j.value[output];
}

inline JetBundle forward_jet(const MeanNetwork& net, const double* x, int order) {
    return net.forward_jet(x, order);
}

// dL/dtheta for L = sum over points of <seeds, jets>. Exact adjoint of the
// jet propagation; the finite-difference contract is checked in the tests.
inline std::vector<double> param_gradient(const MeanNetwork& net,
                                          const std::vector<std::vector<double>>& points,
                                          const AdjointSeed& seeds) {
    const int d = net.input_dim(), q = net.output_dim();
    if (seeds.d != d || seeds.q != q || seeds.npts != points.size())
        throw ShapeMismatch("param_gradient: seed shape does not match network/points");

    const ChannelSet cs = ChannelSet::full(d);
    JetEvaluator ev(net, cs);
    const std::size_t C = cs.count();
    std::vector<double> grad(net.num_params(), 0.0);

    const std::size_t nchunks = parallel_chunk_count(points.size());
    std::vector<std::vector<double>> partial(nchunks, std::vector<double>(net.num_params(), 0.0));
    parallel_chunks(points.size(), [&](std::size_t chunk, std::size_t lo, std::size_t hi) {
        JetWorkspace ws;
        ev.init_workspace(ws);
        std::vector<double> out(static_cast<std::size_t>(q) * C);
        std::vector<double> cot(static_cast<std::size_t>(q) * C);
        for (std::size_t i = lo; i < hi; ++i) {
            if (points[i].size() != static_cast<std::size_t>(d))
                throw ShapeMismatch("param_gradient: point dimension mismatch");
            ev.forward(ws, points[i].data(), out.data());
            for (int o = 0; o < q; ++o) {
                double* row = cot.data() + o * C;
                row[0] = seeds.value[i * q + o];
                for (int k = 0; k < d; ++k) row[1 + k] = seeds.grad[(i * q + o) * d + k];
                for (std::size_t p = 0; p < cs.pairs.size(); ++p) {
                    const auto [k, l] = cs.pairs[p];
                    const double* hb = seeds.hess.data() + ((i * q + o) * d + k) * d;
                    double s = hb[l];
                    if (k != l) s += seeds.hess[((i * q + o) * d + l) * d + k];
                    row[1 + d + p] = s;
                }
            }
            ev.backward(ws, cot.data(), partial[chunk].data());
        }
    });
    for (const auto& part : partial)
        for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += part[i];
    return grad;
}

// ---- checkpoint I/O ---------------------------------------------------------
//
// Textual format, one value per line after the header; %.17g round-trips
// IEEE doubles exactly.
//
//   coresolve-net 1
//   widths <k> <w0> ... <wk-1>
//   seed <seed>
//   params <n>
//   <n parameter lines, layer order: W0 row-major, b0, W1, b1, ...>

inline void save_network(const MeanNetwork& net, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open checkpoint file for writing: " + path);
    out << "coresolve-net 1\n";
    out << "widths " << net.widths().size();
    for (int w : net.widths()) out << ' ' << w;
    out << "\nseed " << net.seed() << "\n";
    out << "params " << net.num_params() << "\n";
    char buf[40];
    for (double v : net.params()) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        out << buf << '\n';
    }
    if (!out) throw Error("failed writing checkpoint: " + path);
}

inline MeanNetwork load_network(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open checkpoint file: " + path);
    std::string magic;
    int version = 0;
    in >> magic >> version;
    if (magic != "coresolve-net" || version != 1)
        throw Error("unrecognized checkpoint header in " + path);
    std::string key;
    std::size_t k = 0;
    in >> key >> k;
    if (key != "widths") throw Error("malformed checkpoint (widths)");
    std::vector<int> widths(k);
    for (auto& w : widths) in >> w;
    std::uint64_t seed = 0;
    in >> key >> seed;
    if (key != "seed") throw Error("malformed checkpoint (seed)");
    std::size_t n = 0;
    in >> key >> n;
    if (key != "params") throw Error("malformed checkpoint (params)");
    MeanNetwork net(widths, seed);
    if (n != net.num_params()) throw Error("checkpoint parameter count mismatch");
    std::vector<double> theta(n);
    for (auto& v : theta) in >> v;
    if (!in) throw Error("truncated checkpoint: " + path);
    net.set_params(theta);
    return net;
}

} // namespace cores
