#pragma once

#include <array>
#include <cstddef>
#include <cstring>
#include <initializer_list>
#include <memory>
#include <string>
#include <type_traits>
#include <vector>

#include "fastnn/config.hpp"

namespace fastnn {

// Dense float tensor, rank 1..4, row-major.  The last dimension may be padded
// to a multiple of the SIMD lane count; padding positions always hold 0.0f.
// Copies are shallow views over shared storage; clone() deep-copies.
class Tensor {
public:
    Tensor() = default;

    std::size_t rank() const { return rank_; }
    std::size_t dim(std::size_t i) const {
        if (i >= rank_) throw BoundsError("dim index " + std::to_string(i) + " out of range for rank " + std::to_string(rank_));
        return dims_[i];
    }
    std::vector<std::size_t> dims() const { return std::vector<std::size_t>(dims_.begin(), dims_.begin() + rank_); }
    std::size_t last_dim() const { return rank_ ? dims_[rank_ - 1] : 0; }
    // physical extent of the last dimension (>= last_dim when padded)
    std::size_t stride_last() const { return stride_; }
    bool padded() const { return stride_ != last_dim(); }

    // number of logical elements
    std::size_t size() const {
        if (!rank_) return 0;
        std::size_t n = 1;
        for (std::size_t i = 0; i < rank_; ++i) n *= dims_[i];
        return n;
    }
    // flat count of rows of stride_last() floats
    std::size_t rows_total() const {
        if (!rank_) return 0;
        std::size_t n = 1;
        for (std::size_t i = 0; i + 1 < rank_; ++i) n *= dims_[i];
        return n;
    }
    std::size_t physical_size() const { return rows_total() * stride_; }

    float* data() { return ptr_; }
    const float* data() const { return ptr_; }
    float* row_ptr(std::size_t flat_row) { return ptr_ + flat_row * stride_; }
    const float* row_ptr(std::size_t flat_row) const { return ptr_ + flat_row * stride_; }

    bool empty() const { return rank_ == 0; }

    template <class... Ix>
    float& at(Ix... ix) {
        return ptr_[offset_of(ix...)];
    }
    template <class... Ix>
    const float& at(Ix... ix) const {
        return ptr_[offset_of(ix...)];
    }
    template <class... Ix>
    float& operator()(Ix... ix) {
        return ptr_[offset_of(ix...)];
    }
    template <class... Ix>
    const float& operator()(Ix... ix) const {
        return ptr_[offset_of(ix...)];
    }

    Tensor clone() const {
        Tensor out;
        out.rank_ = rank_;
        out.dims_ = dims_;
        out.stride_ = stride_;
        out.storage_ = std::shared_ptr<float[]>(new float[physical_size()]());
        out.ptr_ = out.storage_.get();
        std::memcpy(out.ptr_, ptr_, physical_size() * sizeof(float));
        return out;
    }

    void fill(float v) {
        const std::size_t rows = rows_total(), n = last_dim();
        for (std::size_t r = 0; r < rows; ++r) {
            float* p = row_ptr(r);
            for (std::size_t j = 0; j < n; ++j) p[j] = v;
        }
    }
    void zero() { std::memset(ptr_, 0, physical_size() * sizeof(float)); }

    // view of item i with the leading dimension dropped (rank >= 2)
    Tensor item(std::size_t i) const {
        if (rank_ < 2) throw ShapeError("item() requires rank >= 2");
        if (i >= dims_[0]) throw BoundsError("item index out of range");
        Tensor out;
        out.rank_ = rank_ - 1;
        for (std::size_t d = 1; d < rank_; ++d) out.dims_[d - 1] = dims_[d];
        out.stride_ = stride_;
        out.storage_ = storage_;
        out.ptr_ = ptr_ + i * (rows_total() / dims_[0]) * stride_;
        return out;
    }

    friend Tensor make_tensor(const std::vector<long long>& dims, bool padded);
    friend Tensor slice_batch(const Tensor& t, std::size_t lo, std::size_t hi);

private:
    template <class... Ix>
    std::size_t offset_of(Ix... ix) const {
        static_assert(sizeof...(Ix) >= 1 && (std::is_integral_v<Ix> && ...), "tensor indices must be integral");
        constexpr std::size_t n = sizeof...(Ix);
        if (n != rank_) throw ShapeError("index rank " + std::to_string(n) + " does not match tensor rank " + std::to_string(rank_));
        const long long raw[n] = {static_cast<long long>(ix)...};
        for (std::size_t d = 0; d < n; ++d)
            if (raw[d] < 0 || static_cast<std::size_t>(raw[d]) >= dims_[d])
                throw BoundsError("index " + std::to_string(raw[d]) + " out of range for dim " + std::to_string(d) +
                                  " (extent " + std::to_string(dims_[d]) + ")");
        std::size_t flat_row = 0;
        for (std::size_t d = 0; d + 1 < n; ++d) flat_row = flat_row * (d ? dims_[d] : 1) + static_cast<std::size_t>(raw[d]);
        return flat_row * stride_ + static_cast<std::size_t>(raw[n - 1]);
    }

    std::array<std::size_t, 4> dims_{{0, 0, 0, 0}};
    std::size_t rank_ = 0;
    std::size_t stride_ = 0;
    std::shared_ptr<float[]> storage_;
    float* ptr_ = nullptr;
};

inline Tensor make_tensor(const std::vector<long long>& dims, bool padded = true) {
    if (dims.empty() || dims.size() > 4)
        throw ShapeError("tensor rank must be 1..4; got " + std::to_string(dims.size()));
    for (long long d : dims)
        if (d <= 0) throw ShapeError("tensor extents must be positive; got " + std::to_string(d));
    Tensor t;
    t.rank_ = dims.size();
    for (std::size_t i = 0; i < t.rank_; ++i) t.dims_[i] = static_cast<std::size_t>(dims[i]);
    const std::size_t last = t.dims_[t.rank_ - 1];
    t.stride_ = padded ? round_up(last, static_cast<std::size_t>(vector_width())) : last;
    t.storage_ = std::shared_ptr<float[]>(new float[t.physical_size()]());  // zero-filled
    t.ptr_ = t.storage_.get();
    return t;
}

// view over items [lo, hi) of the leading dimension; shares storage
inline Tensor slice_batch(const Tensor& t, std::size_t lo, std::size_t hi) {
    if (t.rank() < 2) throw ShapeError("slice_batch requires rank >= 2");
    if (lo >= hi || hi > t.dim(0))
        throw BoundsError("slice [" + std::to_string(lo) + ", " + std::to_string(hi) + ") out of range for extent " +
                          std::to_string(t.dim(0)));
    Tensor out = t;
    std::size_t rows_per_item = t.rows_total() / t.dim(0);
    out.ptr_ += lo * rows_per_item * t.stride_last();
    out.dims_[0] = hi - lo;
    return out;
}

namespace detail {
inline void copy_logical(const Tensor& src, Tensor& dst) {
    const std::size_t rows = src.rows_total(), n = src.last_dim();
    for (std::size_t r = 0; r < rows; ++r)
        std::memcpy(dst.row_ptr(r), src.row_ptr(r), n * sizeof(float));
}
inline std::vector<long long> dims_ll(const Tensor& t) {
    std::vector<long long> d;
    for (std::size_t i = 0; i < t.rank(); ++i) d.push_back(static_cast<long long>(t.dim(i)));
    return d;
}
}  // namespace detail

// deep copy with the last dimension padded to the current lane count
inline Tensor copy_into_padded(const Tensor& src) {
    Tensor dst = make_tensor(detail::dims_ll(src), /*padded=*/true);
    detail::copy_logical(src, dst);
    return dst;
}

// deep copy with no padding (stride equals the last extent)
inline Tensor copy_unpadded(const Tensor& src) {
    Tensor dst = make_tensor(detail::dims_ll(src), /*padded=*/false);
    detail::copy_logical(src, dst);
    return dst;
}

// convenience: tensor filled from a row-major list of logical values
inline Tensor tensor_of(const std::vector<long long>& dims, std::initializer_list<float> values, bool padded = true) {
    Tensor t = make_tensor(dims, padded);
    if (values.size() != t.size())
        throw ShapeError("value count " + std::to_string(values.size()) + " does not match tensor size " +
                         std::to_string(t.size()));
    const std::size_t n = t.last_dim();
    auto it = values.begin();
    for (std::size_t r = 0; r < t.rows_total(); ++r) {
        float* p = t.row_ptr(r);
        for (std::size_t j = 0; j < n; ++j) p[j] = *it++;
    }
    return t;
}

inline bool padding_is_zero(const Tensor& t) {
    const std::size_t rows = t.rows_total(), n = t.last_dim(), s = t.stride_last();
    for (std::size_t r = 0; r < rows; ++r) {
        const float* p = t.row_ptr(r);
        for (std::size_t j = n; j < s; ++j)
            if (p[j] != 0.0f) return false;
    }
    return true;
}

}  // namespace fastnn
