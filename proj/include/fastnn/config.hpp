#pragma once

#include <cstddef>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <thread>

namespace fastnn {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
// shape / dimension mismatches
struct ShapeError : Error {
    using Error::Error;
};
// index or slice range outside the tensor
struct BoundsError : Error {
    using Error::Error;
};
// malformed file content (bad magic, bad field)
struct FormatError : Error {
    using Error::Error;
};
// file shorter than its header promises
struct LengthError : Error {
    using Error::Error;
};
// mutually inconsistent inputs (e.g. image/label count mismatch)
struct ConsistencyError : Error {
    using Error::Error;
};
// required data files absent and not fetchable
struct DataMissingError : Error {
    using Error::Error;
};
// scalar argument outside its legal range (probability, step count, ...)
struct ParamError : Error {
    using Error::Error;
};
// mini-batch unusable for the requested operation
struct BatchError : Error {
    using Error::Error;
};
// ill-formed network description
struct SpecError : Error {
    using Error::Error;
};
// labels fail the one-hot contract
struct LabelError : Error {
    using Error::Error;
};
// dataset unusable (e.g. empty)
struct DataError : Error {
    using Error::Error;
};

inline std::size_t round_up(std::size_t n, std::size_t multiple) {
    return multiple == 0 ? n : (n + multiple - 1) / multiple * multiple;
}

namespace detail {
inline int& vector_width_slot() {
    static int lanes = 8;
    return lanes;
}
inline int& thread_count_slot() {
    static int threads = [] {
        if (const char* env = std::getenv("FASTNN_THREADS")) {
            int n = std::atoi(env);
            if (n >= 1) return n;
        }
        unsigned hc = std::thread::hardware_concurrency();
        return hc ? static_cast<int>(hc) : 1;
    }();
    return threads;
}
}  // namespace detail

// SIMD lane count used for last-dimension padding of new tensors.
inline int vector_width() { return detail::vector_width_slot(); }

inline void set_vector_width(int lanes) {
    if (lanes != 1 && lanes != 4 && lanes != 8 && lanes != 16)
        throw ShapeError("vector width must be one of 1, 4, 8, 16; got " + std::to_string(lanes));
    detail::vector_width_slot() = lanes;
}

inline int thread_count() { return detail::thread_count_slot(); }

// 0 restores the FASTNN_THREADS / hardware default
inline void set_thread_count(int threads) {
    if (threads < 0) throw ShapeError("thread count must be >= 0");
    if (threads == 0) {
        if (const char* env = std::getenv("FASTNN_THREADS")) {
            int n = std::atoi(env);
            if (n >= 1) {
                detail::thread_count_slot() = n;
                return;
            }
        }
        unsigned hc = std::thread::hardware_concurrency();
        detail::thread_count_slot() = hc ? static_cast<int>(hc) : 1;
        return;
    }
    detail::thread_count_slot() = threads;
}

}  // namespace fastnn
