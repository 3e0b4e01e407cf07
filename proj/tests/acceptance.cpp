// Acceptance gate: one criterion per invocation (--criterion N), one PASS/FAIL
// line on stdout, exit status 0 only on pass.  Tolerances are pinned below.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fastnn/bench.hpp"
#include "fastnn/energy.hpp"

namespace {

using namespace fastnn;

constexpr double kValidTol = 1e-5;      // criterion 1: valid backends vs naive oracle
constexpr double kFullTol = 1e-4;       // criterion 1: full backends vs naive oracle
constexpr double kGradTol = 1e-2;       // criterion 2: central differences
constexpr double kDenseAccuracy = 0.90; // criterion 3
constexpr double kCnnAccuracy = 0.85;   // criterion 4
constexpr double kBackendLossTol = 1e-4;// criterion 4: im2col vs direct final loss
constexpr double kCifarAccuracy = 0.30; // criterion 5
constexpr double kDispatchSlack = 1.10; // criterion 6: within 10% of fastest
constexpr double kDispatchCeiling = 2.0;// criterion 6: never 2x slower
constexpr double kBarsRecon = 0.1;      // criterion 7
constexpr double kFreeEnergyTol = 1e-4; // criterion 7
constexpr double kCrbmDenseTol = 1e-6;  // criterion 7

struct Gate {
    bool ok = true;
    std::string detail;

    void require(bool cond, const std::string& what) {
        if (cond) return;
        ok = false;
        if (!detail.empty()) detail += "; ";
        detail += what;
    }
    void note(const std::string& what) {
        if (!detail.empty()) detail += "; ";
        detail += what;
    }
};

std::string fmt(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

double elapsed_since(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string temp_path(const char* name) { return (std::filesystem::temp_directory_path() / name).string(); }

double rel_err(double got, double want) { return std::abs(got - want) / std::max(1.0, std::abs(want)); }

Tensor random4(long long n, long long c, long long h, long long w, std::mt19937& rng) {
    Tensor t = make_tensor({n, c, h, w});
    std::uniform_real_distribution<float> d(-1.0f, 1.0f);
    for (std::size_t r = 0; r < t.rows_total(); ++r)
        for (std::size_t j = 0; j < t.last_dim(); ++j) t.row_ptr(r)[j] = d(rng);
    return t;
}

Tensor random2(long long rows, long long cols, std::mt19937& rng) {
    return detail::flatten_batch(random4(rows, 1, 1, cols, rng));
}

// ---- criterion 1: backend equivalence over randomized shapes ----

Tensor naive_valid(const Tensor& x, const Tensor& k, const ConvShape& s) {
    const std::size_t oh = s.h - s.kh + 1, ow = s.w - s.kw + 1;
    Tensor out = make_tensor({(long long)s.n, (long long)s.k, (long long)oh, (long long)ow});
    for (std::size_t b = 0; b < s.n; ++b)
        for (std::size_t f = 0; f < s.k; ++f)
            for (std::size_t oy = 0; oy < oh; ++oy)
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    double acc = 0.0;
                    for (std::size_t c = 0; c < s.c_in; ++c)
                        for (std::size_t di = 0; di < s.kh; ++di)
                            for (std::size_t dj = 0; dj < s.kw; ++dj)
                                acc += (double)x.at(b, c, oy + di, ox + dj) * (double)k.at(f, c, di, dj);
                    out.at(b, f, oy, ox) = (float)acc;
                }
    return out;
}

// true convolution over all overlapping positions (kernel flipped)
Tensor naive_full(const Tensor& x, const Tensor& k, const ConvShape& s) {
    const std::size_t oh = s.h + s.kh - 1, ow = s.w + s.kw - 1;
    Tensor out = make_tensor({(long long)s.n, (long long)s.k, (long long)oh, (long long)ow});
    for (std::size_t b = 0; b < s.n; ++b)
        for (std::size_t f = 0; f < s.k; ++f)
            for (std::size_t oy = 0; oy < oh; ++oy)
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    double acc = 0.0;
                    for (std::size_t c = 0; c < s.c_in; ++c)
                        for (std::size_t di = 0; di < s.kh; ++di)
                            for (std::size_t dj = 0; dj < s.kw; ++dj) {
                                const long long iy = (long long)oy + (long long)di - ((long long)s.kh - 1);
                                const long long ix = (long long)ox + (long long)dj - ((long long)s.kw - 1);
                                if (iy < 0 || ix < 0 || iy >= (long long)s.h || ix >= (long long)s.w) continue;
                                acc += (double)x.at(b, c, (std::size_t)iy, (std::size_t)ix) *
                                       (double)k.at(f, c, s.kh - 1 - di, s.kw - 1 - dj);
                            }
                    out.at(b, f, oy, ox) = (float)acc;
                }
    return out;
}

double max_err(const Tensor& got, const Tensor& want) {
    double worst = 0.0;
    for (std::size_t r = 0; r < got.rows_total(); ++r)
        for (std::size_t j = 0; j < got.last_dim(); ++j)
            worst = std::max(worst, rel_err(got.row_ptr(r)[j], want.row_ptr(r)[j]));
    return worst;
}

Gate criterion1() {
    Gate g;
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937 rng(4242);
    auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
    double worst_valid = 0.0, worst_full = 0.0;
    const int trials = 200;
    for (int t = 0; t < trials; ++t) {
        ConvShape s;
        s.n = pick(1, 4);
        s.c_in = pick(1, 4);
        s.k = pick(1, 4);
        s.h = pick(1, 16);
        s.w = pick(1, 16);
        s.kh = pick(1, (int)s.h);
        s.kw = pick(1, (int)s.w);
        Tensor x = random4(s.n, s.c_in, s.h, s.w, rng);
        Tensor k = random4(s.k, s.c_in, s.kh, s.kw, rng);
        Tensor ref_v = naive_valid(x, k, s);
        worst_valid = std::max(worst_valid, max_err(conv_valid_with(ConvBackend::DirectValid, x, k, s), ref_v));
        worst_valid = std::max(worst_valid, max_err(conv_valid_with(ConvBackend::Im2colGemm, x, k, s), ref_v));
        Tensor ref_f = naive_full(x, k, s);
        worst_full = std::max(worst_full, max_err(conv_full_with(ConvBackend::PaddedValidFull, x, k, s), ref_f));
        worst_full = std::max(worst_full, max_err(conv_full_with(ConvBackend::FftFull, x, k, s), ref_f));
    }
    const double secs = elapsed_since(t0);
    g.require(worst_valid < kValidTol, "valid worst rel err " + fmt(worst_valid) + " >= " + fmt(kValidTol));
    g.require(worst_full < kFullTol, "full worst rel err " + fmt(worst_full) + " >= " + fmt(kFullTol));
    g.require(secs < 60.0, "runtime " + fmt(secs) + "s >= 60s");
    g.note(std::to_string(trials) + " shapes, valid err " + fmt(worst_valid) + ", full err " + fmt(worst_full) + ", " +
           fmt(secs) + "s");
    return g;
}

// ---- criterion 2: central-difference gradient suite ----

double fd_scale(double a, double b) { return std::max({std::abs(a), std::abs(b), 0.05}); }

struct FdProbe {
    Tensor weights;  // fixed probe direction
    double loss(const Tensor& y) const {
        double acc = 0.0;
        for (std::size_t r = 0; r < y.rows_total(); ++r)
            for (std::size_t j = 0; j < y.last_dim(); ++j) acc += (double)y.row_ptr(r)[j] * (double)weights.row_ptr(r)[j];
        return acc;
    }
};

template <class Forward>
void fd_check(Gate& g, const char* what, Tensor& param, const Tensor& analytic, float h, Forward forward) {
    for (std::size_t r = 0; r < param.rows_total(); ++r)
        for (std::size_t j = 0; j < param.last_dim(); ++j) {
            float* slot = param.row_ptr(r) + j;
            const float keep = *slot;
            *slot = keep + h;
            const double up = forward();
            *slot = keep - h;
            const double dn = forward();
            *slot = keep;
            const double numeric = (up - dn) / (2.0 * (double)h);
            const double a = analytic.row_ptr(r)[j];
            if (std::abs(a - numeric) / fd_scale(a, numeric) >= kGradTol) {
                g.require(false, std::string(what) + " grad mismatch at (" + std::to_string(r) + "," + std::to_string(j) +
                                     "): analytic " + fmt(a) + " vs numeric " + fmt(numeric));
                return;
            }
        }
}

Gate criterion2() {
    Gate g;
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937 rng(99);

    {  // dense: x, w, b
        DenseLayer layer(3, 4);
        layer.init(rng);
        Tensor x = random2(2, 4, rng);
        FdProbe probe{random2(2, 3, rng)};
        auto fwd = [&] { return probe.loss(dense_forward(layer, x)); };
        layer.zero_grad();
        Tensor dx = dense_backward(layer, x, probe.weights);
        fd_check(g, "dense/x", x, dx, 1e-3f, fwd);
        fd_check(g, "dense/w", layer.w, layer.gw, 1e-3f, fwd);
        fd_check(g, "dense/b", layer.b, layer.gb, 1e-3f, fwd);
    }
    {  // conv: x, kernels, b
        ConvShape s;
        s.c_in = 2;
        s.k = 2;
        s.kh = 3;
        s.kw = 3;
        s.h = 5;
        s.w = 5;
        ConvLayer layer(s);
        layer.init(rng);
        Tensor x = random4(2, 2, 5, 5, rng);
        FdProbe probe{random4(2, 2, 3, 3, rng)};
        auto fwd = [&] { return probe.loss(conv_forward(layer, x)); };
        layer.zero_grad();
        Tensor dx = conv_backward(layer, x, probe.weights);
        fd_check(g, "conv/x", x, dx, 1e-2f, fwd);
        fd_check(g, "conv/k", layer.kernels, layer.gk, 1e-2f, fwd);
        fd_check(g, "conv/b", layer.b, layer.gb, 1e-2f, fwd);
    }
    for (PoolMode mode : {PoolMode::Max, PoolMode::Avg}) {  // pooling: x
        Tensor x = make_tensor({1, 2, 4, 4});
        std::size_t n = 0;  // well-separated values keep the argmax stable under the probe step
        for (std::size_t r = 0; r < x.rows_total(); ++r)
            for (std::size_t j = 0; j < x.last_dim(); ++j) x.row_ptr(r)[j] = 0.37f * (float)((n++ * 7) % 32) - 2.0f;
        FdProbe probe{random4(1, 2, 2, 2, rng)};
        auto fwd = [&] { return probe.loss(pool_forward(mode, x).y); };
        PoolResult res = pool_forward(mode, x);
        Tensor dx = pool_backward(mode, probe.weights, mode == PoolMode::Max ? res.argmax : x);
        fd_check(g, mode == PoolMode::Max ? "maxpool/x" : "avgpool/x", x, dx, 1e-3f, fwd);
    }
    for (Activation kind : {Activation::Sigmoid, Activation::Relu}) {  // activations: x
        Tensor x = random4(1, 1, 3, 5, rng);
        for (std::size_t r = 0; r < x.rows_total(); ++r)  // keep clear of the relu kink
            for (std::size_t j = 0; j < x.last_dim(); ++j)
                if (std::abs(x.row_ptr(r)[j]) < 0.05f) x.row_ptr(r)[j] += 0.1f;
        FdProbe probe{random4(1, 1, 3, 5, rng)};
        auto fwd = [&] { return probe.loss(activation_apply(kind, x)); };
        Tensor dx = activation_gradient(kind, activation_apply(kind, x), probe.weights);
        fd_check(g, kind == Activation::Sigmoid ? "sigmoid/x" : "relu/x", x, dx, 1e-3f, fwd);
    }
    {  // softmax + cross entropy: logits
        Tensor logits = random2(3, 4, rng);
        Tensor labels = make_tensor({3, 4});
        for (std::size_t r = 0; r < 3; ++r) labels.at(r, (r * 2) % 4) = 1.0f;
        auto fwd = [&] { return softmax_cross_entropy(softmax(logits), labels).loss; };
        Tensor dl = softmax_cross_entropy(softmax(logits), labels).dlogits;
        fd_check(g, "softmax_xent/logits", logits, dl, 1e-3f, fwd);
    }
    {  // batch norm: x, gamma, beta (training statistics frozen per evaluation)
        BatchNormState state(3);
        std::uniform_real_distribution<float> d(0.5f, 1.5f);
        for (std::size_t j = 0; j < 3; ++j) {
            state.gamma.at(j) = d(rng);
            state.beta.at(j) = d(rng) - 1.0f;
        }
        Tensor x = random2(4, 3, rng);
        FdProbe probe{random2(4, 3, rng)};
        auto fwd = [&] {
            BatchNormState probe_state(3);
            probe_state.gamma = state.gamma.clone();
            probe_state.beta = state.beta.clone();
            return probe.loss(batchnorm_forward(probe_state, x, true));
        };
        BatchNormState bstate(3);
        bstate.gamma = state.gamma.clone();
        bstate.beta = state.beta.clone();
        BatchNormCache cache;
        batchnorm_forward(bstate, x, true, &cache);
        Tensor dx = batchnorm_backward(bstate, cache, probe.weights);
        fd_check(g, "batchnorm/x", x, dx, 1e-2f, fwd);
        fd_check(g, "batchnorm/gamma", state.gamma, bstate.ggamma, 1e-2f, fwd);
        fd_check(g, "batchnorm/beta", state.beta, bstate.gbeta, 1e-2f, fwd);
    }
    {  // end-to-end two-layer network
        NetworkSpec s;
        s.input = {6};
        s.layers = {LayerDesc::dense(6, 4), LayerDesc::sigmoid(), LayerDesc::dense(4, 3), LayerDesc::softmax()};
        s.seed = 17;
        Network net = build_network(s);
        Tensor x = random2(5, 6, rng);
        Tensor y = make_tensor({5, 3});
        for (std::size_t r = 0; r < 5; ++r) y.at(r, r % 3) = 1.0f;
        Tensor pred = net_forward(net, x, true);
        Tensor grad = softmax_cross_entropy(pred, y).dlogits;
        for (auto it = net.layers.rbegin(); it != net.layers.rend(); ++it) grad = (*it)->backward(grad);
        auto fwd = [&] { return softmax_cross_entropy(forward_batch(net, x), y).loss; };
        for (ParamRef p : net.trainable()) fd_check(g, "network/param", *p.value, *p.grad, 1e-2f, fwd);
    }

    const double secs = elapsed_since(t0);
    g.require(secs < 30.0, "runtime " + fmt(secs) + "s >= 30s");
    if (g.ok) g.note("dense, conv, pooling, activations, softmax+xent, batchnorm, end-to-end; " + fmt(secs) + "s");
    return g;
}

// ---- criteria 3-5: scaled-down accuracy runs ----

Gate accuracy_run(const char* model, std::size_t subset_n, std::size_t epochs, double floor) {
    Gate g;
    ExperimentConfig cfg = builtin_experiment(model);
    cfg.subset = subset_n;
    cfg.epochs = epochs;
    Dataset train, test;
    if (cfg.dataset == "mnist") {
        train = scale_pre(load_mnist("train"), 255.0f);
        test = scale_pre(load_mnist("test"), 255.0f);
    } else {
        train = scale_pre(load_cifar10_split("train"), 255.0f);
        test = scale_pre(load_cifar10_split("test"), 255.0f);
    }
    const auto t0 = std::chrono::steady_clock::now();
    ExperimentResult res = run_experiment_on(cfg, train, test);
    const double secs = elapsed_since(t0);
    g.require(res.report.test_accuracy >= floor, std::string(model) + " test accuracy " + fmt(res.report.test_accuracy) +
                                                     " < " + fmt(floor));
    g.note("test accuracy " + fmt(res.report.test_accuracy) + " (floor " + fmt(floor) + "), " +
           std::to_string(subset_n) + " samples x " + std::to_string(epochs) + " epochs, " + fmt(secs) + "s");
    return g;
}

Gate criterion3() { return accuracy_run("mnist_dense", 5000, 5, kDenseAccuracy); }

Gate criterion4() {
    Gate g = accuracy_run("mnist_cnn", 2000, 3, kCnnAccuracy);
    // backend equivalence on the same configuration
    ExperimentConfig cfg = builtin_experiment("mnist_cnn");
    cfg.subset = 2000;
    cfg.epochs = 3;
    Dataset train = scale_pre(load_mnist("train"), 255.0f);
    Dataset test = scale_pre(load_mnist("test"), 255.0f);
    cfg.forced_backend = ConvBackend::Im2colGemm;
    const double loss_im2col = run_experiment_on(cfg, train, test).records.back().loss;
    cfg.forced_backend = ConvBackend::DirectValid;
    const double loss_direct = run_experiment_on(cfg, train, test).records.back().loss;
    const double rel = std::abs(loss_im2col - loss_direct) / std::max(std::abs(loss_im2col), std::abs(loss_direct));
    g.require(rel < kBackendLossTol,
              "im2col vs direct final loss differs by " + fmt(rel) + " (>= " + fmt(kBackendLossTol) + ")");
    g.note("im2col " + fmt(loss_im2col) + " vs direct " + fmt(loss_direct) + ", rel " + fmt(rel));
    return g;
}

Gate criterion5() { return accuracy_run("cifar_cnn", 5000, 5, kCifarAccuracy); }

// ---- criterion 6: dispatch self-consistency after calibration ----

Gate criterion6() {
    Gate g;
    const std::string path = temp_path("fastnn_acceptance_calibration.txt");
    const std::vector<ConvShape> grid = builtin_calibration_grid();
    std::vector<ShapeCalibration> measured = calibrate_heuristics(grid, path, nullptr, 5);
    load_calibration(path);
    double worst_ratio = 1.0;
    for (const ShapeCalibration& m : measured) {
        const ConvBackend picked = m.full ? dispatch_full(m.shape) : dispatch_valid(m.shape);
        double best = 1e300, mine = -1.0;
        for (const BackendTiming& t : m.timings) {
            best = std::min(best, t.seconds);
            if (t.backend == picked) mine = t.seconds;
        }
        std::ostringstream shape;
        shape << (m.full ? "full" : "valid") << ' ' << m.shape.h << 'x' << m.shape.w << " k" << m.shape.kh << 'x'
              << m.shape.kw;
        g.require(mine >= 0.0, shape.str() + ": dispatcher picked a backend that was never measured");
        if (mine < 0.0) continue;
        const double ratio = mine / best;
        worst_ratio = std::max(worst_ratio, ratio);
        g.require(ratio <= kDispatchSlack, shape.str() + ": dispatched backend " + fmt(ratio) + "x the fastest");
        g.require(ratio < kDispatchCeiling, shape.str() + ": dispatched backend at least 2x slower than the best");
    }
    // the 5x5 on 28x28 stage: im2col beats the plain direct loop, or the true winner is recorded
    for (const ShapeCalibration& m : measured) {
        if (m.full || m.shape.kh != 5 || m.shape.h != 28) continue;
        double t_direct = 0.0, t_im2col = 0.0;
        for (const BackendTiming& t : m.timings) {
            if (t.backend == ConvBackend::DirectValid) t_direct = t.seconds;
            if (t.backend == ConvBackend::Im2colGemm) t_im2col = t.seconds;
        }
        const ConvBackend truth = t_im2col < t_direct ? ConvBackend::Im2colGemm : ConvBackend::DirectValid;
        g.require(dispatch_valid(m.shape) == truth, "5x5/28x28: calibration does not record the measured winner");
        g.note(std::string("5x5/28x28 winner ") + backend_name(truth) + " (direct " + fmt(t_direct * 1e3) +
               "ms, im2col " + fmt(t_im2col * 1e3) + "ms)");
    }
    clear_calibration();
    std::remove(path.c_str());
    g.note("worst dispatch ratio " + fmt(worst_ratio));
    return g;
}

// ---- criterion 7: energy models ----

Gate criterion7() {
    Gate g;
    {  // bars toy set
        Tensor bars = tensor_of({4, 4}, {1, 0, 1, 0, 0, 1, 0, 1, 1, 1, 0, 0, 0, 0, 1, 1});
        Rbm rbm(8, 4);
        std::mt19937 rng(6);
        rbm.init(rng);
        double err = 1e9;
        for (int epoch = 0; epoch < 200; ++epoch) err = cd_k_update(rbm, bars, 1, 0.5f, rng);
        g.require(err < kBarsRecon, "bars reconstruction " + fmt(err) + " >= " + fmt(kBarsRecon));
        g.note("bars recon " + fmt(err));
    }
    {  // free energy vs exhaustive enumeration on 3-visible/2-hidden models
        std::mt19937 rng(8);
        double worst = 0.0;
        for (int trial = 0; trial < 5; ++trial) {
            Rbm rbm(2, 3);
            rbm.init(rng);
            glorot_fill(rbm.bv, 2, 2, rng);
            glorot_fill(rbm.bh, 2, 2, rng);
            for (int pattern = 0; pattern < 8; ++pattern) {
                Tensor v = make_tensor({1, 3});
                for (int j = 0; j < 3; ++j) v.at(0, j) = (pattern >> j) & 1 ? 1.0f : 0.0f;
                double z = 0.0;
                for (int hbits = 0; hbits < 4; ++hbits) {
                    double energy = 0.0;
                    for (int j = 0; j < 3; ++j) energy -= (double)rbm.bv.at(j) * v.at(0, j);
                    for (int i = 0; i < 2; ++i) {
                        const double h = (hbits >> i) & 1 ? 1.0 : 0.0;
                        energy -= (double)rbm.bh.at(i) * h;
                        for (int j = 0; j < 3; ++j) energy -= h * (double)rbm.w.at(i, j) * v.at(0, j);
                    }
                    z += std::exp(-energy);
                }
                worst = std::max(worst, std::abs(rbm_free_energy(rbm, v) - (-std::log(z))));
            }
        }
        g.require(worst < kFreeEnergyTol, "free energy vs enumeration err " + fmt(worst) + " >= " + fmt(kFreeEnergyTol));
        g.note("free energy err " + fmt(worst));
    }
    {  // 1x1-spatial convolutional model degenerates to the dense one
        ConvShape s;
        s.c_in = 3;
        s.k = 2;
        s.kh = 1;
        s.kw = 1;
        s.h = 1;
        s.w = 1;
        Crbm conv(s);
        Rbm dense(2, 3);
        std::mt19937 init(23);
        dense.init(init);
        for (std::size_t f = 0; f < 2; ++f)
            for (std::size_t c = 0; c < 3; ++c) conv.kernels.at(f, c, 0, 0) = dense.w.at(f, c);
        std::mt19937 setup(24);
        Tensor vd = make_tensor({4, 3}), vc = make_tensor({4, 3, 1, 1});
        std::bernoulli_distribution bit(0.5);
        for (std::size_t b = 0; b < 4; ++b)
            for (std::size_t c = 0; c < 3; ++c) {
                const float x = bit(setup) ? 1.0f : 0.0f;
                vd.at(b, c) = x;
                vc.at(b, c, 0, 0) = x;
            }
        std::mt19937 r1(25), r2(25);
        cd_k_update(dense, vd, 1, 0.1f, r1);
        crbm_cd_update(conv, vc, 0.1f, r2);
        double worst = 0.0;
        for (std::size_t f = 0; f < 2; ++f) {
            worst = std::max(worst, (double)std::abs(dense.bh.at(f) - conv.bh.at(f)));
            for (std::size_t c = 0; c < 3; ++c)
                worst = std::max(worst, (double)std::abs(dense.w.at(f, c) - conv.kernels.at(f, c, 0, 0)));
        }
        for (std::size_t c = 0; c < 3; ++c) worst = std::max(worst, (double)std::abs(dense.bv.at(c) - conv.bv.at(c)));
        g.require(worst < kCrbmDenseTol, "1x1 conv vs dense update err " + fmt(worst) + " >= " + fmt(kCrbmDenseTol));
        g.note("1x1 conv vs dense err " + fmt(worst));
    }
    return g;
}

// ---- criterion 8: optimizer trace oracles ----

Gate criterion8() {
    Gate g;
    const float grads[3] = {0.3f, -0.2f, 0.05f};
    for (OptimizerKind kind :
         {OptimizerKind::SgdMomentum, OptimizerKind::Adagrad, OptimizerKind::Adadelta, OptimizerKind::Adam}) {
        OptimizerState st;
        st.kind = kind;
        st.lr = 0.1f;
        st.momentum = 0.9f;
        Tensor p = tensor_of({1}, {1.0f});
        // transcription of the published update rules, evaluated in the same order
        float q = 1.0f, vel = 0.0f, acc = 0.0f, eg = 0.0f, ex = 0.0f, m = 0.0f, v = 0.0f;
        int t = 0;
        for (float gval : grads) {
            Tensor grad = tensor_of({1}, {gval});
            optimizer_step(st, p, grad);
            switch (kind) {
                case OptimizerKind::SgdMomentum: {
                    const float gg = gval + st.weight_decay * q;
                    vel = st.momentum * vel - st.lr * gg;
                    q += vel;
                    break;
                }
                case OptimizerKind::Adagrad: {
                    acc += gval * gval;
                    q -= st.lr * gval / (std::sqrt(acc) + st.eps);
                    break;
                }
                case OptimizerKind::Adadelta: {
                    eg = st.rho * eg + (1.0f - st.rho) * gval * gval;
                    const float delta = -std::sqrt(ex + st.eps) / std::sqrt(eg + st.eps) * gval;
                    ex = st.rho * ex + (1.0f - st.rho) * delta * delta;
                    q += delta;
                    break;
                }
                case OptimizerKind::Adam: {
                    t += 1;
                    const float c1 = 1.0f - std::pow(st.beta1, (float)t);
                    const float c2 = 1.0f - std::pow(st.beta2, (float)t);
                    m = st.beta1 * m + (1.0f - st.beta1) * gval;
                    v = st.beta2 * v + (1.0f - st.beta2) * gval * gval;
                    q -= st.lr * (m / c1) / (std::sqrt(v / c2) + st.eps);
                    break;
                }
            }
            if (std::memcmp(&q, p.row_ptr(0), sizeof(float)) != 0) {
                g.require(false, std::string("trace diverges for optimizer kind ") + std::to_string((int)kind) +
                                     " at step " + std::to_string(t ? t : (&gval - grads) + 1) + ": got " +
                                     fmt(p.row_ptr(0)[0]) + " want " + fmt(q));
                break;
            }
        }
    }
    // each optimizer walks f(x) = x^2 downhill
    for (OptimizerKind kind :
         {OptimizerKind::SgdMomentum, OptimizerKind::Adagrad, OptimizerKind::Adadelta, OptimizerKind::Adam}) {
        OptimizerState st;
        st.kind = kind;
        st.lr = 0.05f;
        st.momentum = 0.5f;
        Tensor x = tensor_of({1}, {2.0f});
        const float f0 = x.at(0) * x.at(0);
        for (int step = 0; step < 100; ++step) {
            Tensor grad = tensor_of({1}, {2.0f * x.at(0)});
            optimizer_step(st, x, grad);
        }
        const float f1 = x.at(0) * x.at(0);
        g.require(f1 < f0, "optimizer kind " + std::to_string((int)kind) + " did not decrease x^2 (" + fmt(f0) +
                               " -> " + fmt(f1) + ")");
    }
    if (g.ok) g.note("3-step traces exact for all four optimizers; x^2 decreases over 100 steps");
    return g;
}

// ---- criterion 9: file formats and checkpoints ----

Gate criterion9() {
    Gate g;
    const std::string img = temp_path("fastnn_acc_images.idx"), lab = temp_path("fastnn_acc_labels.idx");
    {  // idx round trip + rejection
        Dataset ds;
        ds.images = make_tensor({3, 1, 4, 4});
        std::mt19937 rng(5);
        std::uniform_int_distribution<int> px(0, 255);
        for (std::size_t r = 0; r < ds.images.rows_total(); ++r)
            for (std::size_t j = 0; j < ds.images.last_dim(); ++j) ds.images.row_ptr(r)[j] = (float)px(rng);
        ds.labels = {3, 1, 4};
        write_mnist_idx(ds, img, lab);
        Dataset back = load_mnist_idx(img, lab);
        bool same = back.labels == ds.labels;
        for (std::size_t r = 0; same && r < ds.images.rows_total(); ++r)
            for (std::size_t j = 0; j < ds.images.last_dim(); ++j)
                if (back.images.row_ptr(r)[j] != ds.images.row_ptr(r)[j]) same = false;
        g.require(same, "idx round trip not bit-exact");

        std::fstream corrupt(img, std::ios::in | std::ios::out | std::ios::binary);
        corrupt.seekp(0);
        corrupt.write("\xff\xff\xff\xff", 4);
        corrupt.close();
        bool rejected = false;
        try {
            load_mnist_idx(img, lab);
        } catch (const FormatError&) {
            rejected = true;
        }
        g.require(rejected, "corrupted idx magic was not rejected");

        write_mnist_idx(ds, img, lab);
        std::filesystem::resize_file(img, std::filesystem::file_size(img) - 8);
        rejected = false;
        try {
            load_mnist_idx(img, lab);
        } catch (const LengthError&) {
            rejected = true;
        }
        g.require(rejected, "truncated idx file was not rejected");
        std::remove(img.c_str());
        std::remove(lab.c_str());
    }
    const std::string cif = temp_path("fastnn_acc_cifar.bin");
    {  // cifar round trip + rejection
        Dataset ds;
        ds.images = make_tensor({2, 3, 32, 32});
        std::mt19937 rng(6);
        std::uniform_int_distribution<int> px(0, 255);
        for (std::size_t r = 0; r < ds.images.rows_total(); ++r)
            for (std::size_t j = 0; j < ds.images.last_dim(); ++j) ds.images.row_ptr(r)[j] = (float)px(rng);
        ds.labels = {7, 2};
        write_cifar10(ds, cif);
        Dataset back = load_cifar10({cif});
        bool same = back.labels == ds.labels;
        for (std::size_t r = 0; same && r < ds.images.rows_total(); ++r)
            for (std::size_t j = 0; j < ds.images.last_dim(); ++j)
                if (back.images.row_ptr(r)[j] != ds.images.row_ptr(r)[j]) same = false;
        g.require(same, "cifar round trip not bit-exact");

        std::filesystem::resize_file(cif, std::filesystem::file_size(cif) - 1);
        bool rejected = false;
        try {
            load_cifar10({cif});
        } catch (const FormatError&) {
            rejected = true;
        }
        g.require(rejected, "truncated cifar file was not rejected");
        std::remove(cif.c_str());
    }
    const std::string ckpt = temp_path("fastnn_acc_ckpt.fnn1");
    {  // checkpoint reproduces forward outputs
        NetworkSpec s;
        s.input = {1, 6, 6};
        s.layers = {LayerDesc::conv(2, 3, 3), LayerDesc::sigmoid(), LayerDesc::maxpool(), LayerDesc::dense(8, 3),
                    LayerDesc::softmax()};
        s.seed = 31;
        Network net = build_network(s);
        std::mt19937 rng(7);
        Tensor x = random4(3, 1, 6, 6, rng);
        save_network(net, ckpt);
        s.seed = 32;
        Network loaded = build_network(s);
        load_network(loaded, ckpt);
        Tensor a = forward_batch(net, x), b = forward_batch(loaded, x);
        bool same = true;
        for (std::size_t r = 0; same && r < a.rows_total(); ++r)
            for (std::size_t j = 0; j < a.last_dim(); ++j)
                if (std::memcmp(a.row_ptr(r) + j, b.row_ptr(r) + j, sizeof(float)) != 0) same = false;
        g.require(same, "checkpoint round trip changed forward outputs");
        std::remove(ckpt.c_str());
    }
    if (g.ok) g.note("idx + cifar reject corrupt/truncated and round-trip bit-exactly; checkpoint forward identical");
    return g;
}

}  // namespace

int main(int argc, char** argv) {
    int criterion = 0;
    for (int i = 1; i + 1 < argc; ++i)
        if (std::strcmp(argv[i], "--criterion") == 0) criterion = std::atoi(argv[i + 1]);
    if (criterion < 1 || criterion > 9) {
        std::fprintf(stderr, "usage: %s --criterion N   (N in 1..9)\n", argv[0]);
        return 2;
    }
    Gate g;
    try {
        switch (criterion) {
            case 1: g = criterion1(); break;
            case 2: g = criterion2(); break;
            case 3: g = criterion3(); break;
            case 4: g = criterion4(); break;
            case 5: g = criterion5(); break;
            case 6: g = criterion6(); break;
            case 7: g = criterion7(); break;
            case 8: g = criterion8(); break;
            case 9: g = criterion9(); break;
        }
    } catch (const std::exception& e) {
        g.ok = false;
        g.note(std::string("exception: ") + e.what());
    }
    std::printf("criterion %d: %s%s%s\n", criterion, g.ok ? "PASS" : "FAIL", g.detail.empty() ? "" : " — ",
                g.detail.c_str());
    return g.ok ? 0 : 1;
}
