#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "fastnn/conv.hpp"
#include "fastnn/gemm.hpp"
#include "fastnn/layers.hpp"

namespace fastnn {

enum class UnitKind { Binary, Gaussian, Relu };

struct Rbm {
    Tensor w;   // hidden × visible
    Tensor bv;  // visible
    Tensor bh;  // hidden
    UnitKind visible_kind = UnitKind::Binary;
    UnitKind hidden_kind = UnitKind::Binary;

    Rbm(std::size_t hidden, std::size_t visible)
        : w(make_tensor({(long long)hidden, (long long)visible})),
          bv(make_tensor({(long long)visible})),
          bh(make_tensor({(long long)hidden})) {}

    std::size_t hidden_units() const { return w.dim(0); }
    std::size_t visible_units() const { return w.dim(1); }

    void init(std::mt19937& rng) { glorot_fill(w, visible_units(), hidden_units(), rng); }
};

namespace detail {

inline float sigmoidf(float x) { return 1.0f / (1.0f + std::exp(-x)); }

inline void unit_mean_inplace(UnitKind kind, Tensor& a) {
    const std::size_t cols = a.last_dim();
    parallel_for(0, a.rows_total(), [&](std::size_t r0, std::size_t r1) {
        for (std::size_t r = r0; r < r1; ++r) {
            float* p = a.row_ptr(r);
            for (std::size_t j = 0; j < cols; ++j) {
                if (kind == UnitKind::Binary) p[j] = sigmoidf(p[j]);
                else if (kind == UnitKind::Relu) p[j] = p[j] > 0.0f ? p[j] : 0.0f;
                // gaussian: mean is the pre-activation itself
            }
        }
    });
}

// draws in row-major order so sampled traces are reproducible
inline void unit_sample_inplace(UnitKind kind, Tensor& a, std::mt19937& rng) {
    const std::size_t cols = a.last_dim();
    std::normal_distribution<float> stdnorm(0.0f, 1.0f);
    for (std::size_t r = 0; r < a.rows_total(); ++r) {
        float* p = a.row_ptr(r);
        for (std::size_t j = 0; j < cols; ++j) {
            if (kind == UnitKind::Binary) {
                std::bernoulli_distribution draw(sigmoidf(p[j]));
                p[j] = draw(rng) ? 1.0f : 0.0f;
            } else if (kind == UnitKind::Relu) {
                const float var = sigmoidf(p[j]);
                const float s = p[j] + stdnorm(rng) * std::sqrt(var);
                p[j] = s > 0.0f ? s : 0.0f;
            } else {
                p[j] = p[j] + stdnorm(rng);
            }
        }
    }
}

inline void add_row_bias(Tensor& a, const Tensor& bias) {
    const std::size_t cols = a.last_dim();
    parallel_for(0, a.rows_total(), [&](std::size_t r0, std::size_t r1) {
        for (std::size_t r = r0; r < r1; ++r) {
            float* p = a.row_ptr(r);
            const float* b = bias.row_ptr(0);
            for (std::size_t j = 0; j < cols; ++j) p[j] += b[j];
        }
    });
}

inline double sq_diff_per_row(const Tensor& a, const Tensor& b) {
    double acc = 0.0;
    const std::size_t cols = a.last_dim();
    for (std::size_t r = 0; r < a.rows_total(); ++r) {
        const float* pa = a.row_ptr(r);
        const float* pb = b.row_ptr(r);
        for (std::size_t j = 0; j < cols; ++j) {
            const double d = double(pa[j]) - double(pb[j]);
            acc += d * d;
        }
    }
    return acc;
}

}  // namespace detail

// pre-activation a = v·wᵀ + bh, then the hidden unit rule (mean or sample)
inline Tensor rbm_hidden_given_visible(const Rbm& rbm, const Tensor& v, std::mt19937& rng, bool sample) {
    detail::require_rank2(v, "rbm_hidden_given_visible");
    if (v.dim(1) != rbm.visible_units()) throw ShapeError("rbm_hidden_given_visible: visible extent mismatch");
    Tensor a = gemm(v, rbm.w, {.transpose_b = true});
    detail::add_row_bias(a, rbm.bh);
    if (sample) detail::unit_sample_inplace(rbm.hidden_kind, a, rng);
    else detail::unit_mean_inplace(rbm.hidden_kind, a);
    return a;
}

// symmetric contract: a = h·w + bv with the visible unit rule
inline Tensor rbm_visible_given_hidden(const Rbm& rbm, const Tensor& h, std::mt19937& rng, bool sample) {
    detail::require_rank2(h, "rbm_visible_given_hidden");
    if (h.dim(1) != rbm.hidden_units()) throw ShapeError("rbm_visible_given_hidden: hidden extent mismatch");
    Tensor a = gemm(h, rbm.w);
    detail::add_row_bias(a, rbm.bv);
    if (sample) detail::unit_sample_inplace(rbm.visible_kind, a, rng);
    else detail::unit_mean_inplace(rbm.visible_kind, a);
    return a;
}

// hidden means of the whole dataset; the DBN layer-to-layer transform
inline Tensor rbm_transform_up(const Rbm& rbm, const Tensor& v) {
    std::mt19937 unused(0);
    return rbm_hidden_given_visible(rbm, v, unused, false);
}

// CD-k: positive statistics from (v0, h0-mean), Gibbs chain on sampled hidden
// states with mean visible reconstructions, negative statistics from (vk, hk-mean).
// Returns the monitoring reconstruction error ‖v0 − v1-mean‖² / batch.
inline double cd_k_update(Rbm& rbm, const Tensor& v0, int k, float lr, std::mt19937& rng) {
    if (k < 1) throw ParamError("cd_k_update: k must be >= 1, got " + std::to_string(k));
    detail::require_rank2(v0, "cd_k_update");
    if (v0.dim(1) != rbm.visible_units()) throw ShapeError("cd_k_update: visible extent mismatch");
    const std::size_t batch = v0.dim(0);

    Tensor h0 = rbm_hidden_given_visible(rbm, v0, rng, false);
    Tensor hs = rbm_hidden_given_visible(rbm, v0, rng, true);
    Tensor vk;
    double recon = 0.0;
    for (int step = 1; step <= k; ++step) {
        vk = rbm_visible_given_hidden(rbm, hs, rng, false);
        if (step == 1) recon = detail::sq_diff_per_row(v0, vk) / double(batch);
        if (step < k) hs = rbm_hidden_given_visible(rbm, vk, rng, true);
    }
    Tensor hk = rbm_hidden_given_visible(rbm, vk, rng, false);

    Tensor pos = gemm(h0, v0, {.transpose_a = true});  // hidden × visible
    Tensor neg = gemm(hk, vk, {.transpose_a = true});
    const float scale = lr / static_cast<float>(batch);
    const std::size_t vis = rbm.visible_units(), hid = rbm.hidden_units();
    for (std::size_t i = 0; i < hid; ++i) {
        float* wr = rbm.w.row_ptr(i);
        const float* pp = pos.row_ptr(i);
        const float* pn = neg.row_ptr(i);
        for (std::size_t j = 0; j < vis; ++j) wr[j] += scale * (pp[j] - pn[j]);
    }
    float* bh = rbm.bh.row_ptr(0);
    for (std::size_t r = 0; r < batch; ++r) {
        const float* p0 = h0.row_ptr(r);
        const float* pk = hk.row_ptr(r);
        for (std::size_t j = 0; j < hid; ++j) bh[j] += scale * (p0[j] - pk[j]);
    }
    float* bv = rbm.bv.row_ptr(0);
    for (std::size_t r = 0; r < batch; ++r) {
        const float* p0 = v0.row_ptr(r);
        const float* pk = vk.row_ptr(r);
        for (std::size_t j = 0; j < vis; ++j) bv[j] += scale * (p0[j] - pk[j]);
    }
    return recon;
}

// F(v) = −v·bv − Σ_j softplus(a_j), averaged over the batch; binary units only
inline double rbm_free_energy(const Rbm& rbm, const Tensor& v) {
    if (rbm.visible_kind != UnitKind::Binary || rbm.hidden_kind != UnitKind::Binary)
        throw ParamError("rbm_free_energy: defined for binary-binary models only");
    detail::require_rank2(v, "rbm_free_energy");
    Tensor a = gemm(v, rbm.w, {.transpose_b = true});
    detail::add_row_bias(a, rbm.bh);
    const std::size_t batch = v.dim(0), vis = rbm.visible_units(), hid = rbm.hidden_units();
    const float* bv = rbm.bv.row_ptr(0);
    double total = 0.0;
    for (std::size_t r = 0; r < batch; ++r) {
        const float* pv = v.row_ptr(r);
        const float* pa = a.row_ptr(r);
        double f = 0.0;
        for (std::size_t j = 0; j < vis; ++j) f -= double(pv[j]) * bv[j];
        for (std::size_t j = 0; j < hid; ++j) {
            const double x = pa[j];
            f -= x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
        }
        total += f;
    }
    return total / double(batch);
}

// ---------------------------------------------------------------------------
// DBN greedy pretraining

struct DbnReport {
    std::vector<std::vector<double>> recon;  // [layer][epoch] mean reconstruction error
};

using DbnObserver = std::function<void(std::size_t layer, const Tensor& input)>;

// trains each RBM with CD-1 on the previous layer's hidden means;
// batches are taken in file order, epochs reuse the same slicing
inline DbnReport dbn_pretrain(std::vector<Rbm>& stack, const Tensor& data, std::size_t epochs, float lr,
                              std::size_t batch_size, std::mt19937& rng, const DbnObserver& observer = {}) {
    if (stack.empty()) throw ParamError("dbn_pretrain: empty stack");
    if (batch_size < 1) throw ParamError("dbn_pretrain: batch_size must be >= 1");
    std::size_t in = data.dim(1);
    for (std::size_t l = 0; l < stack.size(); ++l) {
        if (stack[l].visible_units() != in)
            throw ShapeError("dbn_pretrain: layer " + std::to_string(l) + " expects " +
                             std::to_string(stack[l].visible_units()) + " visible units but layer " +
                             std::to_string(l ? l - 1 : 0) + (l ? " provides " : "'s input provides ") +
                             std::to_string(in));
        in = stack[l].hidden_units();
    }
    DbnReport report;
    report.recon.resize(stack.size());
    Tensor cur = data;
    for (std::size_t l = 0; l < stack.size(); ++l) {
        if (observer) observer(l, cur);
        const std::size_t n = cur.dim(0);
        for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
            double sum = 0.0;
            std::size_t batches = 0;
            for (std::size_t lo = 0; lo < n; lo += batch_size) {
                const std::size_t hi = std::min(lo + batch_size, n);
                sum += cd_k_update(stack[l], slice_batch(cur, lo, hi), 1, lr, rng);
                ++batches;
            }
            report.recon[l].push_back(sum / double(batches));
        }
        if (l + 1 < stack.size()) cur = rbm_transform_up(stack[l], cur);
    }
    return report;
}

// ---------------------------------------------------------------------------
// convolutional RBM (non-pooled formulation)

struct Crbm {
    Tensor kernels;  // k × c_in × kh × kw
    Tensor bv;       // per input channel
    Tensor bh;       // per kernel
    UnitKind visible_kind = UnitKind::Binary;
    UnitKind hidden_kind = UnitKind::Binary;
    ConvShape shape;

    explicit Crbm(const ConvShape& s)
        : kernels(make_tensor({(long long)s.k, (long long)s.c_in, (long long)s.kh, (long long)s.kw})),
          bv(make_tensor({(long long)s.c_in})),
          bh(make_tensor({(long long)s.k})),
          shape(s) {
        if (s.kh > s.h || s.kw > s.w) throw ShapeError("crbm: kernel extents exceed visible extents");
    }

    void init(std::mt19937& rng) { glorot_fill(kernels, shape.c_in * shape.kh * shape.kw, shape.k * shape.kh * shape.kw, rng); }
};

namespace detail {

inline Tensor crbm_hidden_preact(const Crbm& m, const Tensor& v) {
    ConvShape s = m.shape;
    s.n = v.dim(0);
    Tensor a = conv_valid(v, m.kernels, s);
    const std::size_t oh = a.dim(2), k = s.k;
    parallel_for(0, s.n * k, [&](std::size_t m0, std::size_t m1) {
        for (std::size_t map = m0; map < m1; ++map) {
            const float b = m.bh.row_ptr(0)[map % k];
            for (std::size_t oy = 0; oy < oh; ++oy) {
                float* p = a.row_ptr(map * oh + oy);
                for (std::size_t ox = 0; ox < a.last_dim(); ++ox) p[ox] += b;
            }
        }
    });
    return a;
}

inline Tensor crbm_visible_preact(const Crbm& m, const Tensor& h) {
    const ConvShape& s = m.shape;
    Tensor kt = make_tensor({(long long)s.c_in, (long long)s.k, (long long)s.kh, (long long)s.kw});
    for (std::size_t f = 0; f < s.k; ++f)
        for (std::size_t c = 0; c < s.c_in; ++c)
            for (std::size_t di = 0; di < s.kh; ++di)
                for (std::size_t dj = 0; dj < s.kw; ++dj) kt.at(c, f, di, dj) = m.kernels.at(f, c, di, dj);
    ConvShape sb;
    sb.n = h.dim(0);
    sb.c_in = s.k;
    sb.k = s.c_in;
    sb.kh = s.kh;
    sb.kw = s.kw;
    sb.h = h.dim(2);
    sb.w = h.dim(3);
    Tensor a = conv_full(h, kt, sb);
    const std::size_t hrows = a.dim(2), c_in = s.c_in;
    parallel_for(0, sb.n * c_in, [&](std::size_t m0, std::size_t m1) {
        for (std::size_t map = m0; map < m1; ++map) {
            const float b = m.bv.row_ptr(0)[map % c_in];
            for (std::size_t y = 0; y < hrows; ++y) {
                float* p = a.row_ptr(map * hrows + y);
                for (std::size_t x = 0; x < a.last_dim(); ++x) p[x] += b;
            }
        }
    });
    return a;
}

// stats[f,c] += Σ_b valid-correlation of v[b,c] with h[b,f]
inline void crbm_corr_stats(Tensor& stats, const Tensor& v, const Tensor& h) {
    const std::size_t n = v.dim(0), c_in = v.dim(1), k = h.dim(1);
    const std::size_t oh = h.dim(2), ow = h.dim(3), kh = stats.dim(2), kw = stats.dim(3);
    parallel_for(0, k * c_in, [&](std::size_t m0, std::size_t m1) {
        for (std::size_t m = m0; m < m1; ++m) {
            const std::size_t f = m / c_in, c = m % c_in;
            float* dst = &stats.at(f, c, 0, 0);
            for (std::size_t img = 0; img < n; ++img)
                add_corr_map(dst, stats.stride_last(), &v.at(img, c, 0, 0), v.stride_last(), &h.at(img, f, 0, 0),
                             h.stride_last(), oh, ow, kh, kw);
        }
    });
}

}  // namespace detail

// CD-1 for the convolutional RBM; returns reconstruction error per image
inline double crbm_cd_update(Crbm& m, const Tensor& v0, float lr, std::mt19937& rng) {
    if (v0.rank() != 4 || v0.dim(1) != m.shape.c_in || v0.dim(2) != m.shape.h || v0.dim(3) != m.shape.w)
        throw ShapeError("crbm_cd_update: input does not match the model's visible shape");
    const std::size_t n = v0.dim(0);

    Tensor a0 = detail::crbm_hidden_preact(m, v0);
    Tensor h0 = a0.clone();
    detail::unit_mean_inplace(m.hidden_kind, h0);
    Tensor hs = a0.clone();
    detail::unit_sample_inplace(m.hidden_kind, hs, rng);

    Tensor v1 = detail::crbm_visible_preact(m, hs);
    detail::unit_mean_inplace(m.visible_kind, v1);
    const double recon = detail::sq_diff_per_row(v0, v1) / double(n);

    Tensor h1 = detail::crbm_hidden_preact(m, v1);
    detail::unit_mean_inplace(m.hidden_kind, h1);

    const ConvShape& s = m.shape;
    Tensor pos = make_tensor({(long long)s.k, (long long)s.c_in, (long long)s.kh, (long long)s.kw});
    Tensor neg = make_tensor({(long long)s.k, (long long)s.c_in, (long long)s.kh, (long long)s.kw});
    detail::crbm_corr_stats(pos, v0, h0);
    detail::crbm_corr_stats(neg, v1, h1);
    const float scale = lr / static_cast<float>(n);
    for (std::size_t r = 0; r < m.kernels.rows_total(); ++r) {
        float* kr = m.kernels.row_ptr(r);
        const float* pp = pos.row_ptr(r);
        const float* pn = neg.row_ptr(r);
        for (std::size_t j = 0; j < s.kw; ++j) kr[j] += scale * (pp[j] - pn[j]);
    }
    float* bh = m.bh.row_ptr(0);
    float* bv = m.bv.row_ptr(0);
    const std::size_t oh = h0.dim(2);
    for (std::size_t img = 0; img < n; ++img) {
        for (std::size_t f = 0; f < s.k; ++f)
            for (std::size_t y = 0; y < oh; ++y) {
                const float* p0 = &h0.at(img, f, y, 0);
                const float* p1 = &h1.at(img, f, y, 0);
                for (std::size_t x = 0; x < h0.dim(3); ++x) bh[f] += scale * (p0[x] - p1[x]);
            }
        for (std::size_t c = 0; c < s.c_in; ++c)
            for (std::size_t y = 0; y < s.h; ++y) {
                const float* p0 = &v0.at(img, c, y, 0);
                const float* p1 = &v1.at(img, c, y, 0);
                for (std::size_t x = 0; x < s.w; ++x) bv[c] += scale * (p0[x] - p1[x]);
            }
    }
    return recon;
}

// ---------------------------------------------------------------------------
// denoising-autoencoder corruption

struct MaskingNoise {
    float p = 0.0f;
};
struct GaussianNoise {
    float sigma = 0.0f;
};

inline Tensor denoising_corrupt(const Tensor& x, MaskingNoise noise, std::mt19937& rng) {
    if (noise.p < 0.0f || noise.p >= 1.0f) throw ParamError("denoising_corrupt: p must lie in [0, 1)");
    Tensor y = x.clone();
    if (noise.p == 0.0f) return y;
    std::bernoulli_distribution drop(noise.p);
    const std::size_t cols = y.last_dim();
    for (std::size_t r = 0; r < y.rows_total(); ++r) {
        float* p = y.row_ptr(r);
        for (std::size_t j = 0; j < cols; ++j)
            if (drop(rng)) p[j] = 0.0f;
    }
    return y;
}

inline Tensor denoising_corrupt(const Tensor& x, GaussianNoise noise, std::mt19937& rng) {
    if (noise.sigma < 0.0f) throw ParamError("denoising_corrupt: sigma must be >= 0");
    Tensor y = x.clone();
    if (noise.sigma == 0.0f) return y;
    std::normal_distribution<float> add(0.0f, noise.sigma);
    const std::size_t cols = y.last_dim();
    for (std::size_t r = 0; r < y.rows_total(); ++r) {
        float* p = y.row_ptr(r);
        for (std::size_t j = 0; j < cols; ++j) p[j] += add(rng);
    }
    return y;
}

}  // namespace fastnn
