#pragma once

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "fastnn/network.hpp"

namespace fastnn {

struct ExperimentConfig {
    std::string dataset;  // "mnist" or "cifar10"
    std::string model;    // "mnist_dense", "mnist_cnn", "cifar_cnn"
    std::size_t epochs = 50;
    std::size_t batch_size = 100;
    float lr = 0.1f;
    float momentum = 0.9f;
    std::size_t subset = 0;  // training-sample cap, 0 = full set; the test set is never capped
    unsigned seed = 42;
    std::optional<ConvBackend> forced_backend;
};

struct BenchRecord {
    std::string experiment;
    std::string backend;
    std::size_t epoch = 0;
    double seconds = 0.0;
    double loss = 0.0;
    double accuracy = 0.0;
};

inline ExperimentConfig builtin_experiment(const std::string& name) {
    ExperimentConfig cfg;
    cfg.model = name;
    if (name == "mnist_dense") {
        cfg.dataset = "mnist";
    } else if (name == "mnist_cnn") {
        cfg.dataset = "mnist";  // hyperparameters inherited from the dense run
    } else if (name == "cifar_cnn") {
        cfg.dataset = "cifar10";
        cfg.lr = 0.001f;
    } else {
        throw ParamError("unknown experiment '" + name + "'; expected mnist_dense, mnist_cnn, or cifar_cnn");
    }
    return cfg;
}

inline std::vector<std::string> builtin_experiment_names() { return {"mnist_dense", "mnist_cnn", "cifar_cnn"}; }

inline NetworkSpec experiment_network(const ExperimentConfig& cfg) {
    NetworkSpec s;
    s.lr = cfg.lr;
    s.momentum = cfg.momentum;
    s.batch_size = cfg.batch_size;
    s.seed = cfg.seed;
    if (cfg.model == "mnist_dense") {
        s.input = {784};
        s.layers = {LayerDesc::dense(784, 500), LayerDesc::sigmoid(), LayerDesc::dense(500, 250),
                    LayerDesc::sigmoid(),       LayerDesc::dense(250, 10), LayerDesc::softmax()};
    } else if (cfg.model == "mnist_cnn") {
        s.input = {1, 28, 28};
        s.layers = {LayerDesc::conv(8, 5, 5),  LayerDesc::sigmoid(), LayerDesc::maxpool(),
                    LayerDesc::conv(8, 5, 5),  LayerDesc::sigmoid(), LayerDesc::maxpool(),
                    LayerDesc::dense(8 * 4 * 4, 150), LayerDesc::sigmoid(),
                    LayerDesc::dense(150, 10), LayerDesc::softmax()};
    } else if (cfg.model == "cifar_cnn") {
        s.input = {3, 32, 32};
        s.layers = {LayerDesc::conv(12, 5, 5), LayerDesc::relu(), LayerDesc::maxpool(),
                    LayerDesc::conv(24, 3, 3), LayerDesc::relu(), LayerDesc::maxpool(),
                    LayerDesc::dense(24 * 6 * 6, 64), LayerDesc::relu(),
                    LayerDesc::dense(64, 10), LayerDesc::softmax()};
    } else {
        throw ParamError("unknown model '" + cfg.model + "'");
    }
    return s;
}

inline ConvBackend parse_backend_tag(const std::string& tag) {
    if (tag == "direct") return ConvBackend::DirectValid;
    if (tag == "im2col") return ConvBackend::Im2colGemm;
    if (tag == "fft") return ConvBackend::FftFull;
    if (tag == "padded_valid") return ConvBackend::PaddedValidFull;
    throw ParamError("unknown backend tag '" + tag + "'; expected direct, im2col, fft, or padded_valid");
}

inline std::string backend_column(const std::optional<ConvBackend>& b) { return b ? backend_name(*b) : "auto"; }

struct ExperimentResult {
    TrainReport report;
    std::vector<BenchRecord> records;
};

namespace detail {

struct ForcedBackendGuard {
    std::optional<ConvBackend> previous;
    ForcedBackendGuard() : previous(forced_backend_slot()) {}
    ~ForcedBackendGuard() { set_forced_backend(previous); }
};

}  // namespace detail

inline ExperimentResult run_experiment_on(const ExperimentConfig& cfg, const Dataset& train, const Dataset& test) {
    if (cfg.epochs < 1) throw ParamError("experiment epochs must be >= 1");
    if (cfg.subset > train.size()) throw ParamError("subset exceeds the dataset size");
    Network net = build_network(experiment_network(cfg));
    detail::ForcedBackendGuard guard;
    if (cfg.forced_backend) set_forced_backend(*cfg.forced_backend);
    const Dataset capped = subset(train, cfg.subset);
    ExperimentResult out;
    out.report = fit(net, capped, cfg.epochs, &test);
    for (std::size_t e = 0; e < out.report.epochs.size(); ++e) {
        BenchRecord r;
        r.experiment = cfg.model;
        r.backend = backend_column(cfg.forced_backend);
        r.epoch = e;
        r.seconds = out.report.epochs[e].seconds;
        r.loss = out.report.epochs[e].loss;
        r.accuracy = out.report.epochs[e].accuracy;
        out.records.push_back(r);
    }
    return out;
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    Dataset train, test;
    if (cfg.dataset == "mnist") {
        train = scale_pre(load_mnist("train"), 255.0f);
        test = scale_pre(load_mnist("test"), 255.0f);
    } else if (cfg.dataset == "cifar10") {
        train = scale_pre(load_cifar10_split("train"), 255.0f);
        test = scale_pre(load_cifar10_split("test"), 255.0f);
    } else {
        throw ParamError("unknown dataset '" + cfg.dataset + "'");
    }
    return run_experiment_on(cfg, train, test);
}

inline void emit_csv(const std::vector<BenchRecord>& records, const std::string& path) {
    std::ofstream os(path, std::ios::binary);  // binary keeps line endings at LF everywhere
    if (!os) throw DataMissingError("emit_csv: cannot open " + path);
    os << "experiment,backend,epoch,seconds,loss,accuracy\n";
    for (const BenchRecord& r : records) {
        std::ostringstream line;
        line << std::setprecision(6) << r.experiment << ',' << r.backend << ',' << r.epoch << ',' << r.seconds << ','
             << r.loss << ',' << r.accuracy;
        os << line.str() << '\n';
    }
    if (!os) throw DataMissingError("emit_csv: write failed for " + path);
}

// ---- convolution-dispatch calibration ----

struct BackendTiming {
    ConvBackend backend = ConvBackend::DirectValid;
    double seconds = 0.0;
};

struct ShapeCalibration {
    ConvShape shape;
    bool full = false;
    std::vector<BackendTiming> timings;  // every backend legal for the mode
    ConvBackend winner = ConvBackend::DirectValid;
};

namespace detail {

inline double time_backend(ConvBackend backend, bool full, const Tensor& x, const Tensor& kernels,
                           const ConvShape& shape, std::size_t repeats) {
    auto run_once = [&] {
        const auto t0 = std::chrono::steady_clock::now();
        Tensor y = full ? conv_full_with(backend, x, kernels, shape) : conv_valid_with(backend, x, kernels, shape);
        const auto t1 = std::chrono::steady_clock::now();
        volatile float sink = y.row_ptr(0)[0];  // keep the result alive
        (void)sink;
        return std::chrono::duration<double>(t1 - t0).count();
    };
    run_once();  // warm-up
    std::vector<double> samples(repeats);
    for (double& s : samples) s = run_once();
    std::nth_element(samples.begin(), samples.begin() + samples.size() / 2, samples.end());
    return samples[samples.size() / 2];
}

}  // namespace detail

// median-of-`repeats` wall time after one warm-up, for every legal backend in both modes
inline std::vector<ShapeCalibration> measure_grid(const std::vector<ConvShape>& grid, std::size_t repeats = 5) {
    std::vector<ShapeCalibration> out;
    std::mt19937 rng(1234);
    std::uniform_real_distribution<float> d(-1.0f, 1.0f);
    for (const ConvShape& s : grid) {
        Tensor x = make_tensor({(long long)s.n, (long long)s.c_in, (long long)s.h, (long long)s.w});
        Tensor k = make_tensor({(long long)s.k, (long long)s.c_in, (long long)s.kh, (long long)s.kw});
        for (std::size_t r = 0; r < x.rows_total(); ++r)
            for (std::size_t j = 0; j < x.last_dim(); ++j) x.row_ptr(r)[j] = d(rng);
        for (std::size_t r = 0; r < k.rows_total(); ++r)
            for (std::size_t j = 0; j < k.last_dim(); ++j) k.row_ptr(r)[j] = d(rng);
        for (bool full : {false, true}) {
            ShapeCalibration c;
            c.shape = s;
            c.full = full;
            const std::vector<ConvBackend> candidates =
                full ? std::vector<ConvBackend>{ConvBackend::PaddedValidFull, ConvBackend::FftFull}
                     : std::vector<ConvBackend>{ConvBackend::DirectValid, ConvBackend::Im2colGemm};
            for (ConvBackend b : candidates)
                c.timings.push_back({b, detail::time_backend(b, full, x, k, s, repeats)});
            c.winner = std::min_element(c.timings.begin(), c.timings.end(),
                                        [](const BackendTiming& a, const BackendTiming& b) { return a.seconds < b.seconds; })
                           ->backend;
            out.push_back(std::move(c));
        }
    }
    return out;
}

// Writes one exact-match row per measured (mode, kernel-area, image-area) key, most
// specific first, so a reloaded dispatcher reproduces every measured winner.  Keys
// shared by several grid shapes get the backend with the best worst-case ratio.
inline std::vector<ShapeCalibration> calibrate_heuristics(const std::vector<ConvShape>& grid, const std::string& out_path,
                                                          std::ostream* log = nullptr, std::size_t repeats = 5) {
    std::vector<ShapeCalibration> measured = measure_grid(grid, repeats);

    struct Row {
        bool full;
        std::size_t khkw, hw;
        ConvBackend backend;
    };
    std::vector<Row> rows;
    for (const ShapeCalibration& c : measured) {
        const std::size_t khkw = c.shape.kh * c.shape.kw, hw = c.shape.h * c.shape.w;
        auto same = std::find_if(rows.begin(), rows.end(),
                                 [&](const Row& r) { return r.full == c.full && r.khkw == khkw && r.hw == hw; });
        if (same == rows.end()) {
            rows.push_back({c.full, khkw, hw, c.winner});
            continue;
        }
        // key collision: keep the backend whose worst slowdown across the colliding shapes is least
        auto worst_ratio = [&](ConvBackend b) {
            double worst = 1.0;
            for (const ShapeCalibration& m : measured) {
                if (m.full != c.full || m.shape.kh * m.shape.kw != khkw || m.shape.h * m.shape.w != hw) continue;
                double best = 1e300, mine = 1e300;
                for (const BackendTiming& t : m.timings) {
                    best = std::min(best, t.seconds);
                    if (t.backend == b) mine = t.seconds;
                }
                worst = std::max(worst, mine / best);
            }
            return worst;
        };
        if (worst_ratio(c.winner) < worst_ratio(same->backend)) same->backend = c.winner;
    }
    std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
        if (a.full != b.full) return !a.full;
        if (a.khkw != b.khkw) return a.khkw < b.khkw;
        return a.hw > b.hw;
    });

    std::ofstream os(out_path, std::ios::binary);
    if (!os) throw DataMissingError("calibrate_heuristics: cannot open " + out_path);
    os << "# mode khkw_max hw_min backend\n";
    for (const Row& r : rows)
        os << (r.full ? "full" : "valid") << ' ' << r.khkw << ' ' << r.hw << ' ' << backend_name(r.backend)
           << '\n';
    if (!os) throw DataMissingError("calibrate_heuristics: write failed for " + out_path);

    if (log) {
        *log << std::left << std::setw(28) << "shape" << std::setw(7) << "mode";
        for (const char* name : {"direct", "im2col", "padded_valid", "fft"}) *log << std::setw(14) << name;
        *log << "winner\n";
        for (const ShapeCalibration& c : measured) {
            std::ostringstream shape;
            shape << c.shape.n << 'x' << c.shape.c_in << 'x' << c.shape.h << 'x' << c.shape.w << " k" << c.shape.k << ' '
                  << c.shape.kh << 'x' << c.shape.kw;
            *log << std::setw(28) << shape.str() << std::setw(7) << (c.full ? "full" : "valid");
            for (const char* name : {"direct", "im2col", "padded_valid", "fft"}) {
                std::string cell = "-";
                for (const BackendTiming& t : c.timings)
                    if (std::string(backend_name(t.backend)) == name) {
                        std::ostringstream v;
                        v << std::setprecision(3) << t.seconds * 1e3 << "ms";
                        cell = v.str();
                    }
                *log << std::setw(14) << cell;
            }
            *log << backend_name(c.winner) << '\n';
        }
    }
    return measured;
}

// shapes drawn from the built-in experiments plus small- and large-kernel extremes
inline std::vector<ConvShape> builtin_calibration_grid() {
    auto shape = [](long long n, long long c, long long k, long long kh, long long kw, long long h, long long w) {
        ConvShape s;
        s.n = n;
        s.c_in = c;
        s.k = k;
        s.kh = kh;
        s.kw = kw;
        s.h = h;
        s.w = w;
        return s;
    };
    return {
        shape(100, 1, 8, 5, 5, 28, 28),   // first mnist_cnn stage
        shape(100, 8, 8, 5, 5, 12, 12),   // second mnist_cnn stage
        shape(100, 3, 12, 5, 5, 32, 32),  // first cifar_cnn stage
        shape(100, 12, 24, 3, 3, 14, 14), // second cifar_cnn stage
        shape(100, 4, 4, 3, 3, 8, 8),     // small maps, small kernel
        shape(16, 1, 4, 9, 9, 32, 32),    // large kernel where spectral methods pay off
    };
}

}  // namespace fastnn
