#pragma once

#include <cstddef>

#include "fastnn/parallel.hpp"
#include "fastnn/tensor.hpp"

namespace fastnn {

template <class F>
void elementwise_inplace(Tensor& x, F&& f) {
    const std::size_t rows = x.rows_total(), n = x.last_dim();
    parallel_for(0, rows, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t r = lo; r < hi; ++r) {
            float* p = x.row_ptr(r);
            for (std::size_t j = 0; j < n; ++j) p[j] = f(p[j]);
        }
    });
}

// y[i] = f(x[i]) over logical elements; padding stays zero even when f(0) != 0
template <class F>
Tensor elementwise_apply(const Tensor& x, F&& f) {
    Tensor y = x.clone();
    elementwise_inplace(y, f);
    return y;
}

}  // namespace fastnn
