#pragma once

#include <cmath>
#include <optional>
#include <random>

#include "fastnn/conv.hpp"
#include "fastnn/elementwise.hpp"
#include "fastnn/gemm.hpp"

namespace fastnn {

namespace detail {

inline void require_rank2(const Tensor& t, const char* who) {
    if (t.rank() != 2) throw ShapeError(std::string(who) + ": expected a rank-2 tensor, got rank " + std::to_string(t.rank()));
}

inline std::vector<long long> dims_of(const Tensor& t) {
    const auto d = t.dims();
    return std::vector<long long>(d.begin(), d.end());
}

// dst += scale * src over the logical region
inline void add_scaled(Tensor& dst, const Tensor& src, float scale = 1.0f) {
    if (dst.dims() != src.dims()) throw ShapeError("add_scaled: shape mismatch");
    const std::size_t cols = dst.last_dim();
    parallel_for(0, dst.rows_total(), [&](std::size_t r0, std::size_t r1) {
        for (std::size_t r = r0; r < r1; ++r) {
            float* d = dst.row_ptr(r);
            const float* s = src.row_ptr(r);
            for (std::size_t j = 0; j < cols; ++j) d[j] += scale * s[j];
        }
    });
}

}  // namespace detail

// uniform ±sqrt(6 / (fan_in + fan_out)), drawn in row-major logical order
inline void glorot_fill(Tensor& t, std::size_t fan_in, std::size_t fan_out, std::mt19937& rng) {
    const float limit = std::sqrt(6.0f / static_cast<float>(fan_in + fan_out));
    std::uniform_real_distribution<float> dist(-limit, limit);
    const std::size_t cols = t.last_dim();
    for (std::size_t r = 0; r < t.rows_total(); ++r) {
        float* p = t.row_ptr(r);
        for (std::size_t j = 0; j < cols; ++j) p[j] = dist(rng);
    }
}

// ---------------------------------------------------------------------------
// dense

struct DenseLayer {
    Tensor w, b, gw, gb;  // w: (out, in); gradients match parameter shapes

    DenseLayer(std::size_t out_units, std::size_t in_units)
        : w(make_tensor({(long long)out_units, (long long)in_units})),
          b(make_tensor({(long long)out_units})),
          gw(make_tensor({(long long)out_units, (long long)in_units})),
          gb(make_tensor({(long long)out_units})) {}

    std::size_t out_units() const { return w.dim(0); }
    std::size_t in_units() const { return w.dim(1); }

    void init(std::mt19937& rng) { glorot_fill(w, in_units(), out_units(), rng); }

    void zero_grad() {
        gw.fill(0.0f);
        gb.fill(0.0f);
    }
};

// y = x·wᵀ + b, one gemm for the whole mini-batch
inline Tensor dense_forward(const DenseLayer& layer, const Tensor& x) {
    detail::require_rank2(x, "dense_forward");
    if (x.dim(1) != layer.in_units())
        throw ShapeError("dense_forward: input has " + std::to_string(x.dim(1)) + " columns, layer expects " +
                         std::to_string(layer.in_units()));
    Tensor y = gemm(x, layer.w, {.transpose_b = true});
    const std::size_t out = layer.out_units();
    parallel_for(0, y.rows_total(), [&](std::size_t r0, std::size_t r1) {
        for (std::size_t r = r0; r < r1; ++r) {
            float* p = y.row_ptr(r);
            const float* bias = layer.b.row_ptr(0);
            for (std::size_t j = 0; j < out; ++j) p[j] += bias[j];
        }
    });
    return y;
}

// dx = dy·w; gw += dyᵀ·x; gb += column sums of dy
inline Tensor dense_backward(DenseLayer& layer, const Tensor& x, const Tensor& dy) {
    detail::require_rank2(x, "dense_backward");
    detail::require_rank2(dy, "dense_backward");
    if (x.dim(0) != dy.dim(0) || x.dim(1) != layer.in_units() || dy.dim(1) != layer.out_units())
        throw ShapeError("dense_backward: x/dy shapes do not match the layer");
    Tensor dx = gemm(dy, layer.w);
    Tensor gw_step = gemm(dy, x, {.transpose_a = true});
    detail::add_scaled(layer.gw, gw_step);
    float* gb = layer.gb.row_ptr(0);
    const std::size_t out = layer.out_units();
    for (std::size_t r = 0; r < dy.rows_total(); ++r) {
        const float* p = dy.row_ptr(r);
        for (std::size_t j = 0; j < out; ++j) gb[j] += p[j];
    }
    return dx;
}

// ---------------------------------------------------------------------------
// convolutional

struct ConvLayer {
    Tensor kernels, b, gk, gb;  // kernels: (k, c_in, kh, kw); b per kernel
    ConvShape shape;

    explicit ConvLayer(const ConvShape& s)
        : kernels(make_tensor({(long long)s.k, (long long)s.c_in, (long long)s.kh, (long long)s.kw})),
          b(make_tensor({(long long)s.k})),
          gk(make_tensor({(long long)s.k, (long long)s.c_in, (long long)s.kh, (long long)s.kw})),
          gb(make_tensor({(long long)s.k})),
          shape(s) {}

    void init(std::mt19937& rng) { glorot_fill(kernels, shape.c_in * shape.kh * shape.kw, shape.k * shape.kh * shape.kw, rng); }

    void zero_grad() {
        gk.fill(0.0f);
        gb.fill(0.0f);
    }
};

// dispatched valid convolution plus per-kernel bias
inline Tensor conv_forward(const ConvLayer& layer, const Tensor& x) {
    ConvShape s = layer.shape;
    if (x.rank() != 4) throw ShapeError("conv_forward: expected a rank-4 input");
    s.n = x.dim(0);
    Tensor y = conv_valid(x, layer.kernels, s);
    const std::size_t oh = y.dim(2), ow = y.dim(3), k = s.k;
    parallel_for(0, s.n * k, [&](std::size_t m0, std::size_t m1) {
        for (std::size_t m = m0; m < m1; ++m) {
            const float bias = layer.b.row_ptr(0)[m % k];
            for (std::size_t oy = 0; oy < oh; ++oy) {
                float* p = y.row_ptr(m * oh + oy);
                for (std::size_t ox = 0; ox < ow; ++ox) p[ox] += bias;
            }
        }
    });
    return y;
}

// dx = dispatched full convolution of dy with channel-transposed kernels;
// gk += valid correlation of x with dy; gb += batch+spatial sums of dy
inline Tensor conv_backward(ConvLayer& layer, const Tensor& x, const Tensor& dy) {
    const ConvShape& s = layer.shape;
    if (x.rank() != 4 || dy.rank() != 4) throw ShapeError("conv_backward: expected rank-4 tensors");
    const std::size_t n = x.dim(0);
    const std::size_t oh = s.h + 2 * s.pad - s.kh + 1, ow = s.w + 2 * s.pad - s.kw + 1;
    if (dy.dim(0) != n || dy.dim(1) != s.k || dy.dim(2) != oh || dy.dim(3) != ow)
        throw ShapeError("conv_backward: dy does not match the forward output shape");
    if (s.pad != 0) throw ShapeError("conv_backward: padded forward has no backward pass");

    Tensor kt = make_tensor({(long long)s.c_in, (long long)s.k, (long long)s.kh, (long long)s.kw});
    for (std::size_t f = 0; f < s.k; ++f)
        for (std::size_t c = 0; c < s.c_in; ++c)
            for (std::size_t di = 0; di < s.kh; ++di)
                for (std::size_t dj = 0; dj < s.kw; ++dj) kt.at(c, f, di, dj) = layer.kernels.at(f, c, di, dj);
    ConvShape sb;
    sb.n = n;
    sb.c_in = s.k;
    sb.k = s.c_in;
    sb.kh = s.kh;
    sb.kw = s.kw;
    sb.h = oh;
    sb.w = ow;
    Tensor dx = conv_full(dy, kt, sb);

    parallel_for(0, s.k * s.c_in, [&](std::size_t m0, std::size_t m1) {
        for (std::size_t m = m0; m < m1; ++m) {
            const std::size_t f = m / s.c_in, c = m % s.c_in;
            float* dst = &layer.gk.at(f, c, 0, 0);
            for (std::size_t img = 0; img < n; ++img)
                detail::add_corr_map(dst, layer.gk.stride_last(), &x.at(img, c, 0, 0), x.stride_last(),
                                     &dy.at(img, f, 0, 0), dy.stride_last(), oh, ow, s.kh, s.kw);
        }
    });
    float* gb = layer.gb.row_ptr(0);
    for (std::size_t img = 0; img < n; ++img)
        for (std::size_t f = 0; f < s.k; ++f)
            for (std::size_t oy = 0; oy < oh; ++oy) {
                const float* p = &dy.at(img, f, oy, 0);
                for (std::size_t ox = 0; ox < ow; ++ox) gb[f] += p[ox];
            }
    return dx;
}

// ---------------------------------------------------------------------------
// pooling (non-overlapping 2x2 windows)

enum class PoolMode { Max, Avg };

struct PoolResult {
    Tensor y;
    Tensor argmax;  // max mode: in-window row-major index (0..3) per output cell
};

inline PoolResult pool_forward(PoolMode mode, const Tensor& x) {
    if (x.rank() < 2) throw ShapeError("pool_forward: expected rank >= 2");
    const std::size_t h = x.dim(x.rank() - 2), w = x.last_dim();
    if (h % 2 != 0 || w % 2 != 0) throw ShapeError("pool_forward: spatial extents must be even, got " + std::to_string(h) + "x" + std::to_string(w));
    std::vector<long long> od;
    for (std::size_t d = 0; d + 2 < x.rank(); ++d) od.push_back((long long)x.dim(d));
    od.push_back((long long)(h / 2));
    od.push_back((long long)(w / 2));
    PoolResult res{make_tensor(od), Tensor()};
    if (mode == PoolMode::Max) res.argmax = make_tensor(od);
    const std::size_t maps = x.rows_total() / h, oh = h / 2, ow = w / 2;
    parallel_for(0, maps, [&](std::size_t m0, std::size_t m1) {
        for (std::size_t m = m0; m < m1; ++m)
            for (std::size_t oy = 0; oy < oh; ++oy) {
                const float* r0 = x.row_ptr(m * h + 2 * oy);
                const float* r1 = x.row_ptr(m * h + 2 * oy + 1);
                float* out = res.y.row_ptr(m * oh + oy);
                float* arg = mode == PoolMode::Max ? res.argmax.row_ptr(m * oh + oy) : nullptr;
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    const float v[4] = {r0[2 * ox], r0[2 * ox + 1], r1[2 * ox], r1[2 * ox + 1]};
                    if (mode == PoolMode::Avg) {
                        out[ox] = (v[0] + v[1] + v[2] + v[3]) / 4.0f;
                    } else {
                        int best = 0;
                        for (int i = 1; i < 4; ++i)
                            if (v[i] > v[best]) best = i;  // ties keep the first index
                        out[ox] = v[best];
                        arg[ox] = static_cast<float>(best);
                    }
                }
            }
    });
    return res;
}

inline Tensor pool_backward(PoolMode mode, const Tensor& dy, const Tensor& argmax) {
    if (dy.rank() < 2) throw ShapeError("pool_backward: expected rank >= 2");
    if (mode == PoolMode::Max && dy.dims() != argmax.dims()) throw ShapeError("pool_backward: dy/argmax shape mismatch");
    const std::size_t oh = dy.dim(dy.rank() - 2), ow = dy.last_dim();
    std::vector<long long> xd;
    for (std::size_t d = 0; d + 2 < dy.rank(); ++d) xd.push_back((long long)dy.dim(d));
    xd.push_back((long long)(oh * 2));
    xd.push_back((long long)(ow * 2));
    Tensor dx = make_tensor(xd);
    const std::size_t maps = dy.rows_total() / oh;
    parallel_for(0, maps, [&](std::size_t m0, std::size_t m1) {
        for (std::size_t m = m0; m < m1; ++m)
            for (std::size_t oy = 0; oy < oh; ++oy) {
                const float* g = dy.row_ptr(m * oh + oy);
                float* r0 = dx.row_ptr(m * oh * 2 + 2 * oy);
                float* r1 = dx.row_ptr(m * oh * 2 + 2 * oy + 1);
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    if (mode == PoolMode::Avg) {
                        const float v = g[ox] / 4.0f;
                        r0[2 * ox] = v;
                        r0[2 * ox + 1] = v;
                        r1[2 * ox] = v;
                        r1[2 * ox + 1] = v;
                    } else {
                        const int best = static_cast<int>(argmax.row_ptr(m * oh + oy)[ox]);
                        (best < 2 ? r0 : r1)[2 * ox + best % 2] = g[ox];
                    }
                }
            }
    });
    return dx;
}

// ---------------------------------------------------------------------------
// activations

enum class Activation { Sigmoid, Relu };

inline Tensor activation_apply(Activation kind, const Tensor& x) {
    if (kind == Activation::Sigmoid) return elementwise_apply(x, [](float v) { return 1.0f / (1.0f + std::exp(-v)); });
    return elementwise_apply(x, [](float v) { return v > 0.0f ? v : 0.0f; });
}

// gradient expressed through the forward output y
inline Tensor activation_gradient(Activation kind, const Tensor& y, const Tensor& dy) {
    if (y.dims() != dy.dims()) throw ShapeError("activation_gradient: shape mismatch");
    Tensor dx = make_tensor(detail::dims_of(y), y.padded());
    const std::size_t cols = y.last_dim();
    parallel_for(0, y.rows_total(), [&](std::size_t r0, std::size_t r1) {
        for (std::size_t r = r0; r < r1; ++r) {
            const float* py = y.row_ptr(r);
            const float* pg = dy.row_ptr(r);
            float* pd = dx.row_ptr(r);
            for (std::size_t j = 0; j < cols; ++j)
                pd[j] = kind == Activation::Sigmoid ? pg[j] * py[j] * (1.0f - py[j]) : (py[j] > 0.0f ? pg[j] : 0.0f);
        }
    });
    return dx;
}

// row-wise exp-normalize with max subtraction
inline Tensor softmax(const Tensor& x) {
    detail::require_rank2(x, "softmax");
    Tensor y = make_tensor({(long long)x.dim(0), (long long)x.dim(1)}, x.padded());
    const std::size_t cols = x.dim(1);
    parallel_for(0, x.dim(0), [&](std::size_t r0, std::size_t r1) {
        for (std::size_t r = r0; r < r1; ++r) {
            const float* p = x.row_ptr(r);
            float* q = y.row_ptr(r);
            float m = p[0];
            for (std::size_t j = 1; j < cols; ++j) m = std::max(m, p[j]);
            float sum = 0.0f;
            for (std::size_t j = 0; j < cols; ++j) {
                q[j] = std::exp(p[j] - m);
                sum += q[j];
            }
            for (std::size_t j = 0; j < cols; ++j) q[j] /= sum;
        }
    });
    return y;
}

// ---------------------------------------------------------------------------
// dropout (inverted convention)

struct DropoutMask {
    float p = 0.0f;
    Tensor mask;  // 0/1, matching the activations
};

struct DropoutResult {
    Tensor y;
    DropoutMask mask;
};

inline DropoutResult dropout_forward(float p, const Tensor& x, bool training, std::mt19937& rng) {
    if (p < 0.0f || p >= 1.0f) throw ParamError("dropout_forward: p must be in [0, 1), got " + std::to_string(p));
    DropoutResult res;
    res.mask.p = p;
    res.mask.mask = make_tensor(detail::dims_of(x), x.padded());
    const std::size_t cols = x.last_dim();
    if (!training || p == 0.0f) {
        res.y = x.clone();
        for (std::size_t r = 0; r < res.mask.mask.rows_total(); ++r) {
            float* m = res.mask.mask.row_ptr(r);
            for (std::size_t j = 0; j < cols; ++j) m[j] = 1.0f;
        }
        return res;
    }
    res.y = make_tensor(detail::dims_of(x), x.padded());
    std::bernoulli_distribution keep(1.0 - p);
    const float scale = 1.0f / (1.0f - p);
    for (std::size_t r = 0; r < x.rows_total(); ++r) {
        const float* px = x.row_ptr(r);
        float* pm = res.mask.mask.row_ptr(r);
        float* py = res.y.row_ptr(r);
        for (std::size_t j = 0; j < cols; ++j) {
            pm[j] = keep(rng) ? 1.0f : 0.0f;
            py[j] = px[j] * pm[j] * scale;
        }
    }
    return res;
}

inline Tensor dropout_backward(const DropoutMask& mask, const Tensor& dy) {
    if (mask.mask.dims() != dy.dims()) throw ShapeError("dropout_backward: shape mismatch");
    Tensor dx = dy.clone();
    const float scale = 1.0f / (1.0f - mask.p);
    const std::size_t cols = dx.last_dim();
    for (std::size_t r = 0; r < dx.rows_total(); ++r) {
        float* pd = dx.row_ptr(r);
        const float* pm = mask.mask.row_ptr(r);
        for (std::size_t j = 0; j < cols; ++j) pd[j] *= pm[j] * scale;
    }
    return dx;
}

// ---------------------------------------------------------------------------
// batch normalization (per feature, over a batch×features matrix)

struct BatchNormState {
    Tensor gamma, beta, running_mean, running_var;
    Tensor ggamma, gbeta;
    float momentum = 0.9f;
    float epsilon = 1e-5f;

    explicit BatchNormState(std::size_t features)
        : gamma(make_tensor({(long long)features})),
          beta(make_tensor({(long long)features})),
          running_mean(make_tensor({(long long)features})),
          running_var(make_tensor({(long long)features})),
          ggamma(make_tensor({(long long)features})),
          gbeta(make_tensor({(long long)features})) {
        gamma.fill(1.0f);
        running_var.fill(1.0f);
    }

    std::size_t features() const { return gamma.dim(0); }
};

struct BatchNormCache {
    Tensor xhat, inv_std;
};

inline Tensor batchnorm_forward(BatchNormState& state, const Tensor& x, bool training, BatchNormCache* cache = nullptr) {
    detail::require_rank2(x, "batchnorm_forward");
    const std::size_t batch = x.dim(0), feats = x.dim(1);
    if (feats != state.features()) throw ShapeError("batchnorm_forward: feature count mismatch");
    if (training && batch < 2) throw BatchError("batchnorm_forward: training needs a batch of at least 2, got " + std::to_string(batch));
    Tensor y = make_tensor({(long long)batch, (long long)feats});
    const float* gamma = state.gamma.row_ptr(0);
    const float* beta = state.beta.row_ptr(0);
    if (!training) {
        const float* mu = state.running_mean.row_ptr(0);
        const float* var = state.running_var.row_ptr(0);
        for (std::size_t r = 0; r < batch; ++r) {
            const float* px = x.row_ptr(r);
            float* py = y.row_ptr(r);
            for (std::size_t j = 0; j < feats; ++j)
                py[j] = gamma[j] * (px[j] - mu[j]) / std::sqrt(var[j] + state.epsilon) + beta[j];
        }
        return y;
    }
    Tensor mean = make_tensor({(long long)feats});
    Tensor var = make_tensor({(long long)feats});
    float* mu = mean.row_ptr(0);
    float* vr = var.row_ptr(0);
    for (std::size_t r = 0; r < batch; ++r) {
        const float* px = x.row_ptr(r);
        for (std::size_t j = 0; j < feats; ++j) mu[j] += px[j];
    }
    for (std::size_t j = 0; j < feats; ++j) mu[j] /= static_cast<float>(batch);
    for (std::size_t r = 0; r < batch; ++r) {
        const float* px = x.row_ptr(r);
        for (std::size_t j = 0; j < feats; ++j) {
            const float d = px[j] - mu[j];
            vr[j] += d * d;
        }
    }
    for (std::size_t j = 0; j < feats; ++j) vr[j] /= static_cast<float>(batch);

    Tensor xhat = make_tensor({(long long)batch, (long long)feats});
    Tensor inv_std = make_tensor({(long long)feats});
    float* is = inv_std.row_ptr(0);
    for (std::size_t j = 0; j < feats; ++j) is[j] = 1.0f / std::sqrt(vr[j] + state.epsilon);
    for (std::size_t r = 0; r < batch; ++r) {
        const float* px = x.row_ptr(r);
        float* ph = xhat.row_ptr(r);
        float* py = y.row_ptr(r);
        for (std::size_t j = 0; j < feats; ++j) {
            ph[j] = (px[j] - mu[j]) * is[j];
            py[j] = gamma[j] * ph[j] + beta[j];
        }
    }
    float* rmu = state.running_mean.row_ptr(0);
    float* rvar = state.running_var.row_ptr(0);
    for (std::size_t j = 0; j < feats; ++j) {
        rmu[j] = state.momentum * rmu[j] + (1.0f - state.momentum) * mu[j];
        rvar[j] = state.momentum * rvar[j] + (1.0f - state.momentum) * vr[j];
    }
    if (cache) {
        cache->xhat = std::move(xhat);
        cache->inv_std = std::move(inv_std);
    }
    return y;
}

// standard batch-norm gradient, through the batch mean and variance
inline Tensor batchnorm_backward(BatchNormState& state, const BatchNormCache& cache, const Tensor& dy) {
    detail::require_rank2(dy, "batchnorm_backward");
    const std::size_t batch = dy.dim(0), feats = dy.dim(1);
    if (cache.xhat.dims() != dy.dims()) throw ShapeError("batchnorm_backward: cache/dy shape mismatch");
    Tensor dgamma = make_tensor({(long long)feats});
    Tensor dbeta = make_tensor({(long long)feats});
    float* dg = dgamma.row_ptr(0);
    float* db = dbeta.row_ptr(0);
    for (std::size_t r = 0; r < batch; ++r) {
        const float* pg = dy.row_ptr(r);
        const float* ph = cache.xhat.row_ptr(r);
        for (std::size_t j = 0; j < feats; ++j) {
            dg[j] += pg[j] * ph[j];
            db[j] += pg[j];
        }
    }
    Tensor dx = make_tensor({(long long)batch, (long long)feats});
    const float* gamma = state.gamma.row_ptr(0);
    const float* is = cache.inv_std.row_ptr(0);
    const float inv_b = 1.0f / static_cast<float>(batch);
    for (std::size_t r = 0; r < batch; ++r) {
        const float* pg = dy.row_ptr(r);
        const float* ph = cache.xhat.row_ptr(r);
        float* pd = dx.row_ptr(r);
        for (std::size_t j = 0; j < feats; ++j)
            pd[j] = gamma[j] * is[j] * (pg[j] - inv_b * db[j] - inv_b * ph[j] * dg[j]);
    }
    detail::add_scaled(state.ggamma, dgamma);
    detail::add_scaled(state.gbeta, dbeta);
    return dx;
}

}  // namespace fastnn
