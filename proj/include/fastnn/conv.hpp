#pragma once

#include <cstddef>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fastnn/fft.hpp"
#include "fastnn/gemm.hpp"
#include "fastnn/parallel.hpp"
#include "fastnn/simd.hpp"
#include "fastnn/tensor.hpp"

namespace fastnn {

// N images of c_in channels convolved with k kernels of kh x kw
struct ConvShape {
    std::size_t n = 1, c_in = 1, k = 1, kh = 1, kw = 1, h = 1, w = 1, pad = 0;
};

enum class ConvBackend { DirectValid, Im2colGemm, FftFull, PaddedValidFull };

inline const char* backend_name(ConvBackend b) {
    switch (b) {
        case ConvBackend::DirectValid: return "direct";
        case ConvBackend::Im2colGemm: return "im2col";
        case ConvBackend::FftFull: return "fft";
        case ConvBackend::PaddedValidFull: return "padded_valid";
    }
    return "?";
}

inline bool backend_is_valid_mode(ConvBackend b) {
    return b == ConvBackend::DirectValid || b == ConvBackend::Im2colGemm;
}

namespace detail {

inline void check_conv_inputs(const Tensor& x, const Tensor& kernels, const ConvShape& s, bool full) {
    if (x.rank() != 4 || kernels.rank() != 4) throw ShapeError("convolution expects rank-4 input and kernels");
    if (x.dim(0) != s.n || x.dim(1) != s.c_in || x.dim(2) != s.h || x.dim(3) != s.w)
        throw ShapeError("input dims do not match ConvShape");
    if (kernels.dim(0) != s.k || kernels.dim(1) != s.c_in || kernels.dim(2) != s.kh || kernels.dim(3) != s.kw)
        throw ShapeError("kernel dims do not match ConvShape");
    if (full) {
        if (s.pad != 0) throw ShapeError("full convolution does not take explicit padding");
    } else {
        if (s.kh > s.h + 2 * s.pad || s.kw > s.w + 2 * s.pad)
            throw ShapeError("kernel larger than padded input in valid convolution");
    }
}

// out(oy,ox) += sum over the kh x kw window of in at (oy+di, ox+dj) times
// kernel tap (di,dj): cross-correlation of one map with one kernel.
// Specialized fixed-size variants preload the taps; all variants follow the
// same accumulation order, so they agree bitwise.
#ifdef FASTNN_AVX2

inline void add_corr_map(float* out, std::size_t ldo, const float* in, std::size_t ldi, const float* ker,
                         std::size_t ldk, std::size_t kh, std::size_t kw, std::size_t oh, std::size_t ow) {
    const std::size_t oxt = ow / 8 * 8;
    const __m256i m = tail_mask8(ow - oxt);
    for (std::size_t oy = 0; oy < oh; ++oy) {
        float* po = out + oy * ldo;
        for (std::size_t ox = 0; ox < oxt; ox += 8) {
            __m256 acc = _mm256_loadu_ps(po + ox);
            for (std::size_t di = 0; di < kh; ++di) {
                const float* pi = in + (oy + di) * ldi + ox;
                const float* pk = ker + di * ldk;
                for (std::size_t dj = 0; dj < kw; ++dj)
                    acc = _mm256_fmadd_ps(_mm256_set1_ps(pk[dj]), _mm256_loadu_ps(pi + dj), acc);
            }
            _mm256_storeu_ps(po + ox, acc);
        }
        if (oxt < ow) {
            __m256 acc = _mm256_maskload_ps(po + oxt, m);
            for (std::size_t di = 0; di < kh; ++di) {
                const float* pi = in + (oy + di) * ldi + oxt;
                const float* pk = ker + di * ldk;
                for (std::size_t dj = 0; dj < kw; ++dj)
                    acc = _mm256_fmadd_ps(_mm256_set1_ps(pk[dj]), _mm256_maskload_ps(pi + dj, m), acc);
            }
            _mm256_maskstore_ps(po + oxt, m, acc);
        }
    }
}

template <int KH, int KW>
inline void add_corr_map_fixed(float* out, std::size_t ldo, const float* in, std::size_t ldi, const float* ker,
                               std::size_t ldk, std::size_t oh, std::size_t ow) {
    __m256 tap[KH * KW];
    for (int di = 0; di < KH; ++di)
        for (int dj = 0; dj < KW; ++dj) tap[di * KW + dj] = _mm256_set1_ps(ker[di * ldk + dj]);
    const std::size_t oxt = ow / 8 * 8;
    const __m256i m = tail_mask8(ow - oxt);
    for (std::size_t oy = 0; oy < oh; ++oy) {
        float* po = out + oy * ldo;
        for (std::size_t ox = 0; ox < oxt; ox += 8) {
            __m256 acc = _mm256_loadu_ps(po + ox);
            for (int di = 0; di < KH; ++di) {
                const float* pi = in + (oy + di) * ldi + ox;
                for (int dj = 0; dj < KW; ++dj) acc = _mm256_fmadd_ps(tap[di * KW + dj], _mm256_loadu_ps(pi + dj), acc);
            }
            _mm256_storeu_ps(po + ox, acc);
        }
        if (oxt < ow) {
            __m256 acc = _mm256_maskload_ps(po + oxt, m);
            for (int di = 0; di < KH; ++di) {
                const float* pi = in + (oy + di) * ldi + oxt;
                for (int dj = 0; dj < KW; ++dj)
                    acc = _mm256_fmadd_ps(tap[di * KW + dj], _mm256_maskload_ps(pi + dj, m), acc);
            }
            _mm256_maskstore_ps(po + oxt, m, acc);
        }
    }
}

#else

inline void add_corr_map(float* out, std::size_t ldo, const float* in, std::size_t ldi, const float* ker,
                         std::size_t ldk, std::size_t kh, std::size_t kw, std::size_t oh, std::size_t ow) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
        float* po = out + oy * ldo;
        for (std::size_t ox = 0; ox < ow; ++ox) {
            float acc = po[ox];
            for (std::size_t di = 0; di < kh; ++di) {
                const float* pi = in + (oy + di) * ldi + ox;
                const float* pk = ker + di * ldk;
                for (std::size_t dj = 0; dj < kw; ++dj) acc += pk[dj] * pi[dj];
            }
            po[ox] = acc;
        }
    }
}

template <int KH, int KW>
inline void add_corr_map_fixed(float* out, std::size_t ldo, const float* in, std::size_t ldi, const float* ker,
                               std::size_t ldk, std::size_t oh, std::size_t ow) {
    add_corr_map(out, ldo, in, ldi, ker, ldk, KH, KW, oh, ow);
}

#endif  // FASTNN_AVX2

// (n, c, h, w) -> (n, c, h + 2*ph, w + 2*pw) with a zero border
inline Tensor pad_spatial(const Tensor& x, std::size_t ph, std::size_t pw) {
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor out = make_tensor({static_cast<long long>(n), static_cast<long long>(c), static_cast<long long>(h + 2 * ph),
                              static_cast<long long>(w + 2 * pw)});
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t r = 0; r < h; ++r)
                std::memcpy(&out.at(b, ch, r + ph, pw), &x.at(b, ch, r, 0), w * sizeof(float));
    return out;
}

// kernels with both spatial axes reversed
inline Tensor flip_kernels(const Tensor& ker) {
    const std::size_t k = ker.dim(0), c = ker.dim(1), kh = ker.dim(2), kw = ker.dim(3);
    Tensor out = make_tensor(
        {static_cast<long long>(k), static_cast<long long>(c), static_cast<long long>(kh), static_cast<long long>(kw)});
    for (std::size_t f = 0; f < k; ++f)
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t di = 0; di < kh; ++di)
                for (std::size_t dj = 0; dj < kw; ++dj) out.at(f, ch, di, dj) = ker.at(f, ch, kh - 1 - di, kw - 1 - dj);
    return out;
}

inline std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

}  // namespace detail

// cross-correlation (no kernel flip) summed over input channels
inline Tensor conv_valid_direct(const Tensor& x, const Tensor& kernels, const ConvShape& shape) {
    detail::check_conv_inputs(x, kernels, shape, /*full=*/false);
    if (shape.pad > 0) {
        Tensor xp = detail::pad_spatial(x, shape.pad, shape.pad);
        ConvShape s = shape;
        s.pad = 0;
        s.h += 2 * shape.pad;
        s.w += 2 * shape.pad;
        return conv_valid_direct(xp, kernels, s);
    }
    const std::size_t oh = shape.h - shape.kh + 1, ow = shape.w - shape.kw + 1;
    Tensor out = make_tensor({static_cast<long long>(shape.n), static_cast<long long>(shape.k),
                              static_cast<long long>(oh), static_cast<long long>(ow)});
    const std::size_t ldi = x.stride_last(), ldk = kernels.stride_last(), ldo = out.stride_last();
    parallel_for(0, shape.n * shape.k, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t idx = lo; idx < hi; ++idx) {
            const std::size_t b = idx / shape.k, f = idx % shape.k;
            float* po = out.row_ptr((b * shape.k + f) * oh);
            for (std::size_t c = 0; c < shape.c_in; ++c) {
                const float* pi = x.row_ptr((b * shape.c_in + c) * shape.h);
                const float* pk = kernels.row_ptr((f * shape.c_in + c) * shape.kh);
                if (shape.kh == 3 && shape.kw == 3)
                    detail::add_corr_map_fixed<3, 3>(po, ldo, pi, ldi, pk, ldk, oh, ow);
                else if (shape.kh == 5 && shape.kw == 5)
                    detail::add_corr_map_fixed<5, 5>(po, ldo, pi, ldi, pk, ldk, oh, ow);
                else
                    detail::add_corr_map(po, ldo, pi, ldi, pk, ldk, shape.kh, shape.kw, oh, ow);
            }
        }
    });
    return out;
}

// receptive fields of one image as columns: row (c*kh + di)*kw + dj,
// column oy*ow + ox
inline Tensor im2col(const Tensor& img, const ConvShape& shape) {
    if (img.rank() != 3) throw ShapeError("im2col expects a rank-3 image (channels, height, width)");
    if (img.dim(0) != shape.c_in || img.dim(1) != shape.h || img.dim(2) != shape.w)
        throw ShapeError("image dims do not match ConvShape");
    if (shape.kh > shape.h + 2 * shape.pad || shape.kw > shape.w + 2 * shape.pad)
        throw ShapeError("kernel larger than padded input in im2col");
    const std::size_t oh = shape.h + 2 * shape.pad - shape.kh + 1;
    const std::size_t ow = shape.w + 2 * shape.pad - shape.kw + 1;
    const long long rows = static_cast<long long>(shape.c_in * shape.kh * shape.kw);
    Tensor out = make_tensor({rows, static_cast<long long>(oh * ow)});
    for (std::size_t c = 0; c < shape.c_in; ++c)
        for (std::size_t di = 0; di < shape.kh; ++di)
            for (std::size_t dj = 0; dj < shape.kw; ++dj) {
                float* row = out.row_ptr((c * shape.kh + di) * shape.kw + dj);
                for (std::size_t oy = 0; oy < oh; ++oy) {
                    const long long iy = static_cast<long long>(oy + di) - static_cast<long long>(shape.pad);
                    for (std::size_t ox = 0; ox < ow; ++ox) {
                        const long long ix = static_cast<long long>(ox + dj) - static_cast<long long>(shape.pad);
                        const bool inside = iy >= 0 && iy < static_cast<long long>(shape.h) && ix >= 0 &&
                                            ix < static_cast<long long>(shape.w);
                        row[oy * ow + ox] = inside ? img.at(c, iy, ix) : 0.0f;
                    }
                }
            }
    return out;
}

// same contract as conv_valid_direct, via one column matrix per image and a
// single kernel-matrix multiplication for all K kernels
inline Tensor conv_valid_im2col(const Tensor& x, const Tensor& kernels, const ConvShape& shape) {
    detail::check_conv_inputs(x, kernels, shape, /*full=*/false);
    const std::size_t oh = shape.h + 2 * shape.pad - shape.kh + 1;
    const std::size_t ow = shape.w + 2 * shape.pad - shape.kw + 1;
    const std::size_t ckk = shape.c_in * shape.kh * shape.kw;
    // kernels flattened to (k, c*kh*kw)
    Tensor km = make_tensor({static_cast<long long>(shape.k), static_cast<long long>(ckk)});
    for (std::size_t f = 0; f < shape.k; ++f) {
        float* row = km.row_ptr(f);
        for (std::size_t c = 0; c < shape.c_in; ++c)
            for (std::size_t di = 0; di < shape.kh; ++di) {
                const float* src = kernels.row_ptr((f * shape.c_in + c) * shape.kh + di);
                std::memcpy(row + (c * shape.kh + di) * shape.kw, src, shape.kw * sizeof(float));
            }
    }
    Tensor out = make_tensor({static_cast<long long>(shape.n), static_cast<long long>(shape.k),
                              static_cast<long long>(oh), static_cast<long long>(ow)});
    parallel_for(0, shape.n, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t b = lo; b < hi; ++b) {
            Tensor cols = im2col(x.item(b), shape);
            Tensor prod = gemm(km, cols);  // (k, oh*ow)
            for (std::size_t f = 0; f < shape.k; ++f) {
                const float* src = prod.row_ptr(f);
                for (std::size_t oy = 0; oy < oh; ++oy)
                    std::memcpy(out.row_ptr((b * shape.k + f) * oh + oy), src + oy * ow, ow * sizeof(float));
            }
        }
    });
    return out;
}

// true full convolution via the frequency domain; the input transform is
// computed once per image and reused across all K kernels
inline Tensor conv_full_fft(const Tensor& x, const Tensor& kernels, const ConvShape& shape) {
    detail::check_conv_inputs(x, kernels, shape, /*full=*/true);
    const std::size_t oh = shape.h + shape.kh - 1, ow = shape.w + shape.kw - 1;
    const std::size_t P = detail::next_pow2(oh), Q = detail::next_pow2(ow);
    const std::size_t plane = P * Q;

    // kernel spectra, shared across images
    std::vector<float> kre(shape.k * shape.c_in * plane, 0.0f), kim(shape.k * shape.c_in * plane, 0.0f);
    parallel_for(0, shape.k * shape.c_in, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            const std::size_t f = i / shape.c_in, c = i % shape.c_in;
            float* re = kre.data() + i * plane;
            float* im = kim.data() + i * plane;
            for (std::size_t di = 0; di < shape.kh; ++di) {
                const float* src = kernels.row_ptr((f * shape.c_in + c) * shape.kh + di);
                std::memcpy(re + di * Q, src, shape.kw * sizeof(float));
            }
            detail::fft2_raw(re, im, P, Q, /*inverse=*/false);
        }
    });

    Tensor out = make_tensor({static_cast<long long>(shape.n), static_cast<long long>(shape.k),
                              static_cast<long long>(oh), static_cast<long long>(ow)});
    parallel_for(0, shape.n, [&](std::size_t lo, std::size_t hi) {
        std::vector<float> xre(shape.c_in * plane), xim(shape.c_in * plane);
        std::vector<float> acc_re(plane), acc_im(plane);
        for (std::size_t b = lo; b < hi; ++b) {
            for (std::size_t c = 0; c < shape.c_in; ++c) {
                float* re = xre.data() + c * plane;
                float* im = xim.data() + c * plane;
                std::memset(re, 0, plane * sizeof(float));
                std::memset(im, 0, plane * sizeof(float));
                for (std::size_t r = 0; r < shape.h; ++r)
                    std::memcpy(re + r * Q, x.row_ptr((b * shape.c_in + c) * shape.h + r), shape.w * sizeof(float));
                detail::fft2_raw(re, im, P, Q, /*inverse=*/false);
            }
            for (std::size_t f = 0; f < shape.k; ++f) {
                std::memset(acc_re.data(), 0, plane * sizeof(float));
                std::memset(acc_im.data(), 0, plane * sizeof(float));
                for (std::size_t c = 0; c < shape.c_in; ++c) {
                    const float* ar = xre.data() + c * plane;
                    const float* ai = xim.data() + c * plane;
                    const float* br = kre.data() + (f * shape.c_in + c) * plane;
                    const float* bi = kim.data() + (f * shape.c_in + c) * plane;
                    for (std::size_t i = 0; i < plane; ++i) {
                        acc_re[i] += ar[i] * br[i] - ai[i] * bi[i];
                        acc_im[i] += ar[i] * bi[i] + ai[i] * br[i];
                    }
                }
                detail::fft2_raw(acc_re.data(), acc_im.data(), P, Q, /*inverse=*/true);
                for (std::size_t r = 0; r < oh; ++r)
                    std::memcpy(out.row_ptr((b * shape.k + f) * oh + r), acc_re.data() + r * Q, ow * sizeof(float));
            }
        }
    });
    return out;
}

// full convolution as a valid pass over the border-padded input with flipped
// kernels; mathematically identical to conv_full_fft
inline Tensor conv_full_padded_valid(const Tensor& x, const Tensor& kernels, const ConvShape& shape) {
    detail::check_conv_inputs(x, kernels, shape, /*full=*/true);
    Tensor xp = detail::pad_spatial(x, shape.kh - 1, shape.kw - 1);
    Tensor kf = detail::flip_kernels(kernels);
    ConvShape s = shape;
    s.h += 2 * (shape.kh - 1);
    s.w += 2 * (shape.kw - 1);
    return conv_valid_direct(xp, kf, s);
}

// --- heuristic dispatch ----------------------------------------------------

struct DispatchRule {
    bool full = false;
    std::size_t khkw_max = 0;  // rule applies when kh*kw <= khkw_max
    std::size_t hw_min = 0;    // ... and h*w >= hw_min
    ConvBackend backend = ConvBackend::DirectValid;
};

namespace detail {

inline std::vector<DispatchRule> default_rules() {
    constexpr std::size_t inf = static_cast<std::size_t>(-1);
    return {
        {false, 8, 0, ConvBackend::DirectValid},     // kernels below 3x3: direct
        {false, inf, 784, ConvBackend::Im2colGemm},  // large images, kernels >= 3x3
        {false, inf, 0, ConvBackend::DirectValid},
        {true, 25, 0, ConvBackend::PaddedValidFull},  // up to 5x5 stay spatial
        {true, inf, 0, ConvBackend::FftFull},
    };
}

// Parses "mode khkw_max hw_min backend [channels]" lines and appends the
// compiled defaults as a catch-all.  The trailing channels column is reserved
// and ignored.
inline std::vector<DispatchRule> parse_calibration(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open calibration file: " + path);
    std::vector<DispatchRule> rules;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string mode, backend;
        unsigned long long khkw_max = 0, hw_min = 0;
        if (!(ls >> mode)) continue;  // blank
        if (!(ls >> khkw_max >> hw_min >> backend))
            throw FormatError("calibration line " + std::to_string(lineno) + ": expected 'mode khkw_max hw_min backend'");
        unsigned long long reserved;
        ls >> reserved;  // optional channels column, ignored
        DispatchRule r;
        if (mode == "valid")
            r.full = false;
        else if (mode == "full")
            r.full = true;
        else
            throw FormatError("calibration line " + std::to_string(lineno) + ": unknown mode '" + mode + "'");
        if (backend == "direct")
            r.backend = ConvBackend::DirectValid;
        else if (backend == "im2col")
            r.backend = ConvBackend::Im2colGemm;
        else if (backend == "fft")
            r.backend = ConvBackend::FftFull;
        else if (backend == "padded_valid")
            r.backend = ConvBackend::PaddedValidFull;
        else
            throw FormatError("calibration line " + std::to_string(lineno) + ": unknown backend '" + backend + "'");
        if (backend_is_valid_mode(r.backend) == r.full)
            throw FormatError("calibration line " + std::to_string(lineno) + ": backend '" + backend +
                              "' is illegal for mode '" + mode + "'");
        r.khkw_max = static_cast<std::size_t>(khkw_max);
        r.hw_min = static_cast<std::size_t>(hw_min);
        rules.push_back(r);
    }
    for (const DispatchRule& d : default_rules()) rules.push_back(d);
    return rules;
}

inline std::vector<DispatchRule>& rule_table() {
    // picks up a machine calibration automatically when one has been written
    static std::vector<DispatchRule> rules = [] {
        if (const char* env = std::getenv("FASTNN_DATA_DIR")) {
            try {
                return parse_calibration(std::string(env) + "/conv_calibration.txt");
            } catch (const FormatError&) {
            }
        }
        return default_rules();
    }();
    return rules;
}

inline std::optional<ConvBackend>& forced_backend_slot() {
    static std::optional<ConvBackend> forced;
    return forced;
}

inline ConvBackend lookup(bool full, const ConvShape& s) {
    for (const DispatchRule& r : rule_table()) {
        if (r.full != full) continue;
        if (s.kh * s.kw <= r.khkw_max && s.h * s.w >= r.hw_min) return r.backend;
    }
    // unreachable: the table always ends with catch-all rows per mode
    return full ? ConvBackend::PaddedValidFull : ConvBackend::DirectValid;
}

}  // namespace detail

inline ConvBackend dispatch_valid(const ConvShape& shape) {
    const auto& forced = detail::forced_backend_slot();
    if (forced && backend_is_valid_mode(*forced)) return *forced;
    return detail::lookup(false, shape);
}

inline ConvBackend dispatch_full(const ConvShape& shape) {
    const auto& forced = detail::forced_backend_slot();
    if (forced && !backend_is_valid_mode(*forced)) return *forced;
    return detail::lookup(true, shape);
}

// overrides dispatch for the matching mode until cleared with nullopt
inline void set_forced_backend(std::optional<ConvBackend> backend) { detail::forced_backend_slot() = backend; }

// replaces the dispatch thresholds with the table at `path` (see
// detail::parse_calibration for the format)
inline void load_calibration(const std::string& path) { detail::rule_table() = detail::parse_calibration(path); }

inline void clear_calibration() { detail::rule_table() = detail::default_rules(); }

inline Tensor conv_valid_with(ConvBackend backend, const Tensor& x, const Tensor& kernels, const ConvShape& shape) {
    switch (backend) {
        case ConvBackend::DirectValid: return conv_valid_direct(x, kernels, shape);
        case ConvBackend::Im2colGemm: return conv_valid_im2col(x, kernels, shape);
        default: throw ShapeError("backend is not a valid-mode backend");
    }
}

inline Tensor conv_full_with(ConvBackend backend, const Tensor& x, const Tensor& kernels, const ConvShape& shape) {
    switch (backend) {
        case ConvBackend::FftFull: return conv_full_fft(x, kernels, shape);
        case ConvBackend::PaddedValidFull: return conv_full_padded_valid(x, kernels, shape);
        default: throw ShapeError("backend is not a full-mode backend");
    }
}

// dispatched entry points
inline Tensor conv_valid(const Tensor& x, const Tensor& kernels, const ConvShape& shape) {
    return conv_valid_with(dispatch_valid(shape), x, kernels, shape);
}

inline Tensor conv_full(const Tensor& x, const Tensor& kernels, const ConvShape& shape) {
    return conv_full_with(dispatch_full(shape), x, kernels, shape);
}

}  // namespace fastnn
