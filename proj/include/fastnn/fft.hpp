#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "fastnn/tensor.hpp"

namespace fastnn {

struct Complex2D {
    Tensor re, im;  // equal dims
};

namespace detail {

inline bool is_pow2(std::size_t n) { return n >= 1 && (n & (n - 1)) == 0; }

// twiddles w^k = exp(-2*pi*i*k/n) for k < n/2 (conjugated for the inverse)
inline void fill_twiddles(std::size_t n, bool inverse, std::vector<float>& wr, std::vector<float>& wi) {
    wr.resize(n / 2);
    wi.resize(n / 2);
    const double sign = inverse ? 1.0 : -1.0;
    for (std::size_t k = 0; k < n / 2; ++k) {
        const double ang = sign * 2.0 * 3.14159265358979323846 * static_cast<double>(k) / static_cast<double>(n);
        wr[k] = static_cast<float>(std::cos(ang));
        wi[k] = static_cast<float>(std::sin(ang));
    }
}

// iterative radix-2, elements at re/im[i*stride]
inline void fft1d(float* re, float* im, std::size_t n, std::size_t stride, const std::vector<float>& wr,
                  const std::vector<float>& wi) {
    if (n < 2) return;
    // bit-reversal permutation
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) {
            std::swap(re[i * stride], re[j * stride]);
            std::swap(im[i * stride], im[j * stride]);
        }
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t half = len >> 1;
        const std::size_t step = n / len;  // twiddle index stride
        for (std::size_t base = 0; base < n; base += len) {
            for (std::size_t k = 0; k < half; ++k) {
                const float tw_r = wr[k * step], tw_i = wi[k * step];
                float* ar = re + (base + k) * stride;
                float* ai = im + (base + k) * stride;
                float* br = re + (base + k + half) * stride;
                float* bi = im + (base + k + half) * stride;
                const float xr = *br * tw_r - *bi * tw_i;
                const float xi = *br * tw_i + *bi * tw_r;
                *br = *ar - xr;
                *bi = *ai - xi;
                *ar += xr;
                *ai += xi;
            }
        }
    }
}

// 2-D transform over contiguous h*w buffers (row stride w); scales by
// 1/(h*w) when inverse
inline void fft2_raw(float* re, float* im, std::size_t h, std::size_t w, bool inverse) {
    std::vector<float> wr, wi;
    fill_twiddles(w, inverse, wr, wi);
    for (std::size_t r = 0; r < h; ++r) fft1d(re + r * w, im + r * w, w, 1, wr, wi);
    if (h != w) fill_twiddles(h, inverse, wr, wi);
    for (std::size_t c = 0; c < w; ++c) fft1d(re + c, im + c, h, w, wr, wi);
    if (inverse) {
        const float scale = 1.0f / static_cast<float>(h * w);
        for (std::size_t i = 0; i < h * w; ++i) {
            re[i] *= scale;
            im[i] *= scale;
        }
    }
}

inline void check_pow2_dims(const Tensor& x, const char* who) {
    if (x.rank() != 2) throw ShapeError(std::string(who) + " expects a rank-2 tensor");
    if (!is_pow2(x.dim(0)) || !is_pow2(x.dim(1)))
        throw ShapeError(std::string(who) + " extents must be powers of two; got " + std::to_string(x.dim(0)) + "x" +
                         std::to_string(x.dim(1)));
}

}  // namespace detail

// forward 2-D DFT (unnormalized)
inline Complex2D fft2(const Tensor& x) {
    detail::check_pow2_dims(x, "fft2");
    const std::size_t h = x.dim(0), w = x.dim(1);
    std::vector<float> re(h * w), im(h * w, 0.0f);
    for (std::size_t r = 0; r < h; ++r) {
        const float* p = x.row_ptr(r);
        for (std::size_t c = 0; c < w; ++c) re[r * w + c] = p[c];
    }
    detail::fft2_raw(re.data(), im.data(), h, w, /*inverse=*/false);
    Complex2D out;
    out.re = make_tensor({static_cast<long long>(h), static_cast<long long>(w)});
    out.im = make_tensor({static_cast<long long>(h), static_cast<long long>(w)});
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) {
            out.re.at(r, c) = re[r * w + c];
            out.im.at(r, c) = im[r * w + c];
        }
    return out;
}

// inverse 2-D DFT with 1/(rows*cols) normalization; returns the real part
inline Tensor ifft2(const Complex2D& x) {
    detail::check_pow2_dims(x.re, "ifft2");
    if (x.re.dims() != x.im.dims()) throw ShapeError("ifft2: re/im dims differ");
    const std::size_t h = x.re.dim(0), w = x.re.dim(1);
    std::vector<float> re(h * w), im(h * w);
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) {
            re[r * w + c] = x.re.at(r, c);
            im[r * w + c] = x.im.at(r, c);
        }
    detail::fft2_raw(re.data(), im.data(), h, w, /*inverse=*/true);
    Tensor out = make_tensor({static_cast<long long>(h), static_cast<long long>(w)});
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) out.at(r, c) = re[r * w + c];
    return out;
}

// elementwise complex product
inline Complex2D hadamard(const Complex2D& a, const Complex2D& b) {
    if (a.re.rank() != 2 || b.re.rank() != 2) throw ShapeError("hadamard expects rank-2 tensors");
    if (a.re.dims() != b.re.dims() || a.im.dims() != b.im.dims() || a.re.dims() != a.im.dims())
        throw ShapeError("hadamard: dimension mismatch");
    const std::size_t h = a.re.dim(0), w = a.re.dim(1);
    Complex2D out;
    out.re = make_tensor({static_cast<long long>(h), static_cast<long long>(w)});
    out.im = make_tensor({static_cast<long long>(h), static_cast<long long>(w)});
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) {
            const float ar = a.re.at(r, c), ai = a.im.at(r, c);
            const float br = b.re.at(r, c), bi = b.im.at(r, c);
            out.re.at(r, c) = ar * br - ai * bi;
            out.im.at(r, c) = ar * bi + ai * br;
        }
    return out;
}

}  // namespace fastnn
