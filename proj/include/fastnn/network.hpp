#pragma once

#include <chrono>
#include <cstring>
#include <fstream>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "fastnn/data.hpp"
#include "fastnn/layers.hpp"
#include "fastnn/optim.hpp"

namespace fastnn {

struct ParamRef {
    Tensor* value;
    Tensor* grad;
};

class NetLayer {
  public:
    virtual ~NetLayer() = default;
    virtual Tensor forward(const Tensor& x, bool training, std::mt19937& rng) = 0;
    virtual Tensor backward(const Tensor& dy) = 0;
    virtual std::string tag() const = 0;
    virtual std::vector<ParamRef> trainable() { return {}; }
    // tensors persisted in a checkpoint; defaults to the trainable values
    virtual std::vector<Tensor*> state() {
        std::vector<Tensor*> out;
        for (ParamRef p : trainable()) out.push_back(p.value);
        return out;
    }
    virtual void zero_grad() {
        for (ParamRef p : trainable()) p.grad->fill(0.0f);
    }
};

namespace detail {

// (batch, c, h, w) -> (batch, c*h*w), logical rows repacked contiguously
inline Tensor flatten_batch(const Tensor& x) {
    if (x.rank() != 4) throw ShapeError("flatten expects a rank-4 input; got rank " + std::to_string(x.rank()));
    const std::size_t b = x.dim(0), rows_per = x.dim(1) * x.dim(2), w = x.last_dim();
    Tensor out = make_tensor({(long long)b, (long long)(rows_per * w)});
    for (std::size_t i = 0; i < b; ++i) {
        float* dst = out.row_ptr(i);
        for (std::size_t r = 0; r < rows_per; ++r)
            std::memcpy(dst + r * w, x.row_ptr(i * rows_per + r), w * sizeof(float));
    }
    return out;
}

inline Tensor unflatten_batch(const Tensor& x, std::size_t c, std::size_t h, std::size_t w) {
    const std::size_t b = x.dim(0), rows_per = c * h;
    Tensor out = make_tensor({(long long)b, (long long)c, (long long)h, (long long)w});
    for (std::size_t i = 0; i < b; ++i) {
        const float* src = x.row_ptr(i);
        for (std::size_t r = 0; r < rows_per; ++r)
            std::memcpy(out.row_ptr(i * rows_per + r), src + r * w, w * sizeof(float));
    }
    return out;
}

inline std::size_t argmax_row(const Tensor& t, std::size_t row) {
    const float* p = t.row_ptr(row);
    std::size_t best = 0;
    for (std::size_t j = 1; j < t.last_dim(); ++j)
        if (p[j] > p[best]) best = j;
    return best;
}

class DenseNode final : public NetLayer {
  public:
    DenseNode(std::size_t out_units, std::size_t in_units) : layer_(out_units, in_units) {}
    Tensor forward(const Tensor& x, bool, std::mt19937&) override {
        x_ = x;
        return dense_forward(layer_, x);
    }
    Tensor backward(const Tensor& dy) override { return dense_backward(layer_, x_, dy); }
    std::string tag() const override { return "dense"; }
    std::vector<ParamRef> trainable() override { return {{&layer_.w, &layer_.gw}, {&layer_.b, &layer_.gb}}; }
    DenseLayer& impl() { return layer_; }

  private:
    DenseLayer layer_;
    Tensor x_;
};

class ConvNode final : public NetLayer {
  public:
    explicit ConvNode(const ConvShape& s) : layer_(s) {}
    Tensor forward(const Tensor& x, bool, std::mt19937&) override {
        x_ = x;
        return conv_forward(layer_, x);
    }
    Tensor backward(const Tensor& dy) override { return conv_backward(layer_, x_, dy); }
    std::string tag() const override { return "conv"; }
    std::vector<ParamRef> trainable() override { return {{&layer_.kernels, &layer_.gk}, {&layer_.b, &layer_.gb}}; }
    ConvLayer& impl() { return layer_; }

  private:
    ConvLayer layer_;
    Tensor x_;
};

class MaxPoolNode final : public NetLayer {
  public:
    Tensor forward(const Tensor& x, bool, std::mt19937&) override {
        PoolResult r = pool_forward(PoolMode::Max, x);
        argmax_ = r.argmax;
        return r.y;
    }
    Tensor backward(const Tensor& dy) override { return pool_backward(PoolMode::Max, dy, argmax_); }
    std::string tag() const override { return "maxpool"; }

  private:
    Tensor argmax_;
};

class ActNode final : public NetLayer {
  public:
    explicit ActNode(Activation kind) : kind_(kind) {}
    Tensor forward(const Tensor& x, bool, std::mt19937&) override {
        y_ = activation_apply(kind_, x);
        return y_;
    }
    Tensor backward(const Tensor& dy) override { return activation_gradient(kind_, y_, dy); }
    std::string tag() const override { return kind_ == Activation::Sigmoid ? "sigmoid" : "relu"; }

  private:
    Activation kind_;
    Tensor y_;
};

// output normalizer; backpropagation happens jointly with softmax_cross_entropy,
// whose gradient is already w.r.t. the pre-softmax logits, so backward is a pass-through
class SoftmaxNode final : public NetLayer {
  public:
    Tensor forward(const Tensor& x, bool, std::mt19937&) override { return softmax(x); }
    Tensor backward(const Tensor& dy) override { return dy.clone(); }
    std::string tag() const override { return "softmax"; }
};

class FlattenNode final : public NetLayer {
  public:
    FlattenNode(std::size_t c, std::size_t h, std::size_t w) : c_(c), h_(h), w_(w) {}
    Tensor forward(const Tensor& x, bool, std::mt19937&) override { return flatten_batch(x); }
    Tensor backward(const Tensor& dy) override { return unflatten_batch(dy, c_, h_, w_); }
    std::string tag() const override { return "flatten"; }

  private:
    std::size_t c_, h_, w_;
};

class DropoutNode final : public NetLayer {
  public:
    explicit DropoutNode(float p) : p_(p) {}
    Tensor forward(const Tensor& x, bool training, std::mt19937& rng) override {
        DropoutResult r = dropout_forward(p_, x, training, rng);
        mask_ = r.mask;
        return r.y;
    }
    Tensor backward(const Tensor& dy) override { return dropout_backward(mask_, dy); }
    std::string tag() const override { return "dropout"; }

  private:
    float p_;
    DropoutMask mask_;
};

class BatchNormNode final : public NetLayer {
  public:
    explicit BatchNormNode(std::size_t features) : state_(features) {}
    Tensor forward(const Tensor& x, bool training, std::mt19937&) override {
        return batchnorm_forward(state_, x, training, training ? &cache_ : nullptr);
    }
    Tensor backward(const Tensor& dy) override { return batchnorm_backward(state_, cache_, dy); }
    std::string tag() const override { return "batchnorm"; }
    std::vector<ParamRef> trainable() override { return {{&state_.gamma, &state_.ggamma}, {&state_.beta, &state_.gbeta}}; }
    std::vector<Tensor*> state() override {
        return {&state_.gamma, &state_.beta, &state_.running_mean, &state_.running_var};
    }
    BatchNormState& impl() { return state_; }

  private:
    BatchNormState state_;
    BatchNormCache cache_;
};

}  // namespace detail

struct LayerDesc {
    enum class Kind { Dense, Conv, MaxPool, Sigmoid, Relu, Softmax, Dropout, BatchNorm, Flatten };
    Kind kind = Kind::Dense;
    long long in = 0, out = 0;  // dense extents
    long long k = 0, kh = 0, kw = 0;  // conv extents
    float p = 0.0f;  // dropout keep-out probability

    static LayerDesc dense(long long in, long long out) {
        LayerDesc d;
        d.kind = Kind::Dense;
        d.in = in;
        d.out = out;
        return d;
    }
    static LayerDesc conv(long long k, long long kh, long long kw) {
        LayerDesc d;
        d.kind = Kind::Conv;
        d.k = k;
        d.kh = kh;
        d.kw = kw;
        return d;
    }
    static LayerDesc maxpool() { return LayerDesc{.kind = Kind::MaxPool}; }
    static LayerDesc sigmoid() { return LayerDesc{.kind = Kind::Sigmoid}; }
    static LayerDesc relu() { return LayerDesc{.kind = Kind::Relu}; }
    static LayerDesc softmax() { return LayerDesc{.kind = Kind::Softmax}; }
    static LayerDesc dropout(float p) { return LayerDesc{.kind = Kind::Dropout, .p = p}; }
    static LayerDesc batchnorm() { return LayerDesc{.kind = Kind::BatchNorm}; }
    static LayerDesc flatten() { return LayerDesc{.kind = Kind::Flatten}; }
};

struct NetworkSpec {
    std::vector<long long> input;  // per-sample extents: {features} or {c, h, w}
    std::vector<LayerDesc> layers;
    OptimizerKind optimizer = OptimizerKind::SgdMomentum;
    float lr = 0.1f;
    float momentum = 0.9f;
    float weight_decay = 0.0f;
    std::size_t batch_size = 100;
    unsigned seed = 42;
};

struct Network {
    std::vector<std::unique_ptr<NetLayer>> layers;
    OptimizerState opt;
    std::vector<long long> input;
    std::size_t batch_size = 100;
    unsigned seed = 42;
    std::mt19937 rng;

    std::vector<ParamRef> trainable() {
        std::vector<ParamRef> out;
        for (auto& l : layers)
            for (ParamRef p : l->trainable()) out.push_back(p);
        return out;
    }
    void zero_grad() {
        for (auto& l : layers) l->zero_grad();
    }
};

struct EpochStats {
    double loss = 0.0;
    double accuracy = 0.0;
    double seconds = 0.0;
};

struct TrainReport {
    std::vector<EpochStats> epochs;
    double test_accuracy = -1.0;  // -1 when no test set was given
    std::size_t total_batches = 0;
};

namespace detail {

inline std::string shape_str(const std::vector<long long>& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
    return out + ")";
}

inline std::string link_name(std::size_t idx) { return idx == 0 ? "input" : "layer " + std::to_string(idx); }

[[noreturn]] inline void spec_mismatch(std::size_t idx, const std::vector<long long>& got, const std::string& need) {
    throw SpecError("network spec: " + link_name(idx - 1) + " produces " + shape_str(got) + " but layer " +
                    std::to_string(idx) + " expects " + need);
}

}  // namespace detail

inline Network build_network(const NetworkSpec& spec) {
    if (spec.layers.empty()) throw SpecError("network spec has no layers");
    if (spec.input.size() != 1 && spec.input.size() != 3)
        throw SpecError("network spec input must have 1 or 3 extents; got " + std::to_string(spec.input.size()));
    for (long long e : spec.input)
        if (e < 1) throw SpecError("network spec input extents must be positive");

    Network net;
    net.input = spec.input;
    net.batch_size = spec.batch_size;
    net.seed = spec.seed;
    net.rng.seed(spec.seed);
    net.opt.kind = spec.optimizer;
    net.opt.lr = spec.lr;
    net.opt.momentum = spec.momentum;
    net.opt.weight_decay = spec.weight_decay;
    if (spec.batch_size < 1) throw SpecError("network spec batch_size must be >= 1");

    std::vector<long long> cur = spec.input;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerDesc& d = spec.layers[i];
        const std::size_t idx = i + 1;
        using K = LayerDesc::Kind;
        switch (d.kind) {
            case K::Dense: {
                if (cur.size() == 3) {  // implicit repack from feature maps to a flat vector
                    net.layers.push_back(std::make_unique<detail::FlattenNode>(cur[0], cur[1], cur[2]));
                    cur = {cur[0] * cur[1] * cur[2]};
                }
                if (cur[0] != d.in) detail::spec_mismatch(idx, cur, "dense input extent " + std::to_string(d.in));
                net.layers.push_back(std::make_unique<detail::DenseNode>(d.out, d.in));
                cur = {d.out};
                break;
            }
            case K::Conv: {
                if (cur.size() != 3) detail::spec_mismatch(idx, cur, "feature maps (c, h, w) for conv");
                if (d.kh > cur[1] || d.kw > cur[2])
                    detail::spec_mismatch(idx, cur, "extents >= the " + std::to_string(d.kh) + "x" + std::to_string(d.kw) + " kernel");
                ConvShape s;
                s.c_in = cur[0];
                s.k = d.k;
                s.kh = d.kh;
                s.kw = d.kw;
                s.h = cur[1];
                s.w = cur[2];
                net.layers.push_back(std::make_unique<detail::ConvNode>(s));
                cur = {d.k, cur[1] - d.kh + 1, cur[2] - d.kw + 1};
                break;
            }
            case K::MaxPool: {
                if (cur.size() != 3) detail::spec_mismatch(idx, cur, "feature maps (c, h, w) for maxpool");
                if (cur[1] % 2 || cur[2] % 2) detail::spec_mismatch(idx, cur, "even spatial extents for 2x2 pooling");
                net.layers.push_back(std::make_unique<detail::MaxPoolNode>());
                cur = {cur[0], cur[1] / 2, cur[2] / 2};
                break;
            }
            case K::Sigmoid:
                net.layers.push_back(std::make_unique<detail::ActNode>(Activation::Sigmoid));
                break;
            case K::Relu:
                net.layers.push_back(std::make_unique<detail::ActNode>(Activation::Relu));
                break;
            case K::Softmax:
                if (cur.size() != 1) detail::spec_mismatch(idx, cur, "a flat vector for softmax");
                if (i + 1 != spec.layers.size())
                    throw SpecError("network spec: softmax (layer " + std::to_string(idx) + ") must be the final layer");
                net.layers.push_back(std::make_unique<detail::SoftmaxNode>());
                break;
            case K::Dropout:
                if (!(d.p >= 0.0f && d.p < 1.0f))
                    throw SpecError("network spec: dropout probability must be in [0, 1); got " + std::to_string(d.p));
                net.layers.push_back(std::make_unique<detail::DropoutNode>(d.p));
                break;
            case K::BatchNorm:
                if (cur.size() != 1) detail::spec_mismatch(idx, cur, "a flat vector for batchnorm");
                net.layers.push_back(std::make_unique<detail::BatchNormNode>(cur[0]));
                break;
            case K::Flatten:
                if (cur.size() != 3) detail::spec_mismatch(idx, cur, "feature maps (c, h, w) for flatten");
                net.layers.push_back(std::make_unique<detail::FlattenNode>(cur[0], cur[1], cur[2]));
                cur = {cur[0] * cur[1] * cur[2]};
                break;
        }
    }

    std::mt19937 init_rng(spec.seed);
    for (auto& l : net.layers) {
        if (auto* dn = dynamic_cast<detail::DenseNode*>(l.get())) dn->impl().init(init_rng);
        if (auto* cn = dynamic_cast<detail::ConvNode*>(l.get())) cn->impl().init(init_rng);
    }
    return net;
}

namespace detail {

// accept either the network's native shape or a rank-4 batch that flattens onto it
inline Tensor ingest(const Network& net, const Tensor& x) {
    if (net.input.size() == 1) {
        const std::size_t want = (std::size_t)net.input[0];
        if (x.rank() == 2 && x.dim(1) == want) return x;
        if (x.rank() == 4 && x.dim(1) * x.dim(2) * x.dim(3) == want) return flatten_batch(x);
        throw ShapeError("network input expects (batch, " + std::to_string(want) + ")");
    }
    if (x.rank() != 4 || (long long)x.dim(1) != net.input[0] || (long long)x.dim(2) != net.input[1] ||
        (long long)x.dim(3) != net.input[2])
        throw ShapeError("network input expects (batch, " + std::to_string(net.input[0]) + ", " +
                         std::to_string(net.input[1]) + ", " + std::to_string(net.input[2]) + ")");
    return x;
}

}  // namespace detail

inline Tensor net_forward(Network& net, const Tensor& x, bool training) {
    Tensor cur = detail::ingest(net, x);
    for (auto& l : net.layers) cur = l->forward(cur, training, net.rng);
    return cur;
}

inline Tensor forward_batch(Network& net, const Tensor& x) { return net_forward(net, x, false); }

struct LossGrad {
    double loss = 0.0;
    Tensor dlogits;
};

// loss = -mean over the batch of log p[true class]; gradient is w.r.t. the pre-softmax logits
inline LossGrad softmax_cross_entropy(const Tensor& predictions, const Tensor& labels) {
    if (predictions.rank() != 2 || labels.rank() != 2 || predictions.dim(0) != labels.dim(0) ||
        predictions.dim(1) != labels.dim(1))
        throw ShapeError("softmax_cross_entropy: predictions and labels must both be (batch, classes)");
    const std::size_t b = predictions.dim(0), c = predictions.dim(1);
    LossGrad out;
    out.dlogits = make_tensor({(long long)b, (long long)c});
    double loss = 0.0;
    for (std::size_t r = 0; r < b; ++r) {
        const float* p = predictions.row_ptr(r);
        const float* y = labels.row_ptr(r);
        float* g = out.dlogits.row_ptr(r);
        std::size_t ones = 0, truth = 0;
        for (std::size_t j = 0; j < c; ++j) {
            if (y[j] == 1.0f) {
                ++ones;
                truth = j;
            } else if (y[j] != 0.0f) {
                throw LabelError("softmax_cross_entropy: labels must be one-hot; row " + std::to_string(r));
            }
            g[j] = (p[j] - y[j]) / (float)b;
        }
        if (ones != 1) throw LabelError("softmax_cross_entropy: labels must be one-hot; row " + std::to_string(r));
        loss -= std::log(std::max((double)p[truth], 1e-300));
    }
    out.loss = loss / (double)b;
    return out;
}

inline LossGrad mse_loss(const Tensor& predictions, const Tensor& targets) {
    if (predictions.rank() != 2 || targets.rank() != 2 || predictions.dim(0) != targets.dim(0) ||
        predictions.dim(1) != targets.dim(1))
        throw ShapeError("mse_loss: predictions and targets must both be (batch, features)");
    const std::size_t b = predictions.dim(0), c = predictions.dim(1);
    LossGrad out;
    out.dlogits = make_tensor({(long long)b, (long long)c});
    double loss = 0.0;
    for (std::size_t r = 0; r < b; ++r) {
        const float* p = predictions.row_ptr(r);
        const float* t = targets.row_ptr(r);
        float* g = out.dlogits.row_ptr(r);
        for (std::size_t j = 0; j < c; ++j) {
            const double d = (double)p[j] - (double)t[j];
            loss += d * d;
            g[j] = 2.0f * (p[j] - t[j]) / (float)b;
        }
    }
    out.loss = loss / (double)b;
    return out;
}

// forward in training mode, backpropagate, step every parameter, clear gradients;
// lr = 0 reports the loss but leaves the parameters untouched
inline double train_minibatch(Network& net, const Tensor& x, const Tensor& y) {
    Tensor pred = net_forward(net, x, true);
    LossGrad lg = softmax_cross_entropy(pred, y);
    Tensor g = lg.dlogits;
    for (auto it = net.layers.rbegin(); it != net.layers.rend(); ++it) g = (*it)->backward(g);
    if (net.opt.lr != 0.0f)
        for (ParamRef p : net.trainable()) optimizer_step(net.opt, *p.value, *p.grad);
    net.zero_grad();
    return lg.loss;
}

inline double evaluate(Network& net, const Dataset& ds) {
    if (ds.size() == 0) throw DataError("evaluate: empty dataset");
    std::size_t correct = 0;
    for (std::size_t lo = 0; lo < ds.size(); lo += net.batch_size) {
        const std::size_t hi = std::min(lo + net.batch_size, ds.size());
        Tensor pred = forward_batch(net, slice_batch(ds.images, lo, hi));
        for (std::size_t r = 0; r < hi - lo; ++r)
            correct += detail::argmax_row(pred, r) == (std::size_t)ds.labels[lo + r];
    }
    return (double)correct / (double)ds.size();
}

// epochs full passes, Fisher-Yates reshuffle per epoch from the run seed; per-epoch wall
// time covers the batch loop only, accuracy is measured afterwards in inference mode
inline TrainReport fit(Network& net, const Dataset& train, std::size_t epochs, const Dataset* test = nullptr) {
    if (train.size() == 0) throw DataError("fit: empty dataset");
    if (epochs < 1) throw ParamError("fit: epochs must be >= 1");
    TrainReport report;
    BatchIterator it(train, net.batch_size, net.seed);
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        if (epoch > 0) it.reshuffle(net.seed + (unsigned)epoch);
        double loss_sum = 0.0;
        const auto t0 = std::chrono::steady_clock::now();
        Batch b;
        while (it.next(b)) {
            loss_sum += train_minibatch(net, b.x, b.y) * (double)b.x.dim(0);
            ++report.total_batches;
        }
        const auto t1 = std::chrono::steady_clock::now();
        EpochStats stats;
        stats.loss = loss_sum / (double)train.size();
        stats.seconds = std::chrono::duration<double>(t1 - t0).count();
        stats.accuracy = evaluate(net, train);
        report.epochs.push_back(stats);
    }
    if (test) report.test_accuracy = evaluate(net, *test);
    return report;
}

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {(unsigned char)(v & 0xff), (unsigned char)((v >> 8) & 0xff), (unsigned char)((v >> 16) & 0xff),
                          (unsigned char)((v >> 24) & 0xff)};
    os.write((const char*)b, 4);
}

inline void write_u64(std::ostream& os, std::uint64_t v) {
    write_u32(os, (std::uint32_t)(v & 0xffffffffu));
    write_u32(os, (std::uint32_t)(v >> 32));
}

inline void write_f32(std::ostream& os, float f) {
    std::uint32_t v;
    std::memcpy(&v, &f, 4);
    write_u32(os, v);
}

inline std::uint32_t read_u32_ck(std::istream& is) {
    unsigned char b[4];
    if (!is.read((char*)b, 4)) throw LengthError("checkpoint truncated");
    return (std::uint32_t)b[0] | ((std::uint32_t)b[1] << 8) | ((std::uint32_t)b[2] << 16) | ((std::uint32_t)b[3] << 24);
}

inline std::uint64_t read_u64_ck(std::istream& is) {
    const std::uint64_t lo = read_u32_ck(is);
    return lo | ((std::uint64_t)read_u32_ck(is) << 32);
}

inline float read_f32_ck(std::istream& is) {
    const std::uint32_t v = read_u32_ck(is);
    float f;
    std::memcpy(&f, &v, 4);
    return f;
}

}  // namespace detail

// layout: "FNN1", layer count, then per layer a tag, a tensor count, and per tensor
// its extents followed by the raw little-endian single-precision values
inline void save_network(Network& net, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataMissingError("save_network: cannot open " + path);
    os.write("FNN1", 4);
    detail::write_u32(os, (std::uint32_t)net.layers.size());
    for (auto& l : net.layers) {
        const std::string tag = l->tag();
        detail::write_u32(os, (std::uint32_t)tag.size());
        os.write(tag.data(), (std::streamsize)tag.size());
        const std::vector<Tensor*> tensors = l->state();
        detail::write_u32(os, (std::uint32_t)tensors.size());
        for (const Tensor* t : tensors) {
            detail::write_u32(os, (std::uint32_t)t->rank());
            for (std::size_t d = 0; d < t->rank(); ++d) detail::write_u64(os, t->dim(d));
            for (std::size_t r = 0; r < t->rows_total(); ++r) {
                const float* p = t->row_ptr(r);
                for (std::size_t j = 0; j < t->last_dim(); ++j) detail::write_f32(os, p[j]);
            }
        }
    }
    if (!os) throw DataMissingError("save_network: write failed for " + path);
}

inline void load_network(Network& net, const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataMissingError("load_network: cannot open " + path);
    char magic[4];
    if (!is.read(magic, 4)) throw LengthError("checkpoint truncated");
    if (std::string(magic, 4) != "FNN1") throw FormatError("load_network: bad magic; expected FNN1");
    const std::uint32_t layers = detail::read_u32_ck(is);
    if (layers != net.layers.size())
        throw FormatError("load_network: checkpoint has " + std::to_string(layers) + " layers; network has " +
                          std::to_string(net.layers.size()));
    for (auto& l : net.layers) {
        const std::uint32_t taglen = detail::read_u32_ck(is);
        if (taglen > 64) throw FormatError("load_network: implausible tag length");
        std::string tag(taglen, '\0');
        if (taglen && !is.read(tag.data(), taglen)) throw LengthError("checkpoint truncated");
        if (tag != l->tag()) throw FormatError("load_network: layer tag mismatch; checkpoint '" + tag + "' vs network '" + l->tag() + "'");
        const std::uint32_t count = detail::read_u32_ck(is);
        const std::vector<Tensor*> tensors = l->state();
        if (count != tensors.size()) throw FormatError("load_network: tensor count mismatch in layer '" + tag + "'");
        for (Tensor* t : tensors) {
            const std::uint32_t rank = detail::read_u32_ck(is);
            if (rank != t->rank()) throw FormatError("load_network: tensor rank mismatch in layer '" + tag + "'");
            for (std::size_t d = 0; d < rank; ++d)
                if (detail::read_u64_ck(is) != t->dim(d)) throw FormatError("load_network: tensor extent mismatch in layer '" + tag + "'");
            for (std::size_t r = 0; r < t->rows_total(); ++r) {
                float* p = t->row_ptr(r);
                for (std::size_t j = 0; j < t->last_dim(); ++j) p[j] = detail::read_f32_ck(is);
            }
        }
    }
}

}  // namespace fastnn
