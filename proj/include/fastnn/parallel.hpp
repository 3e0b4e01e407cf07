#pragma once

#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

#include "fastnn/config.hpp"

namespace fastnn {

// Persistent worker pool.  Work is handed out as contiguous index chunks so
// every output element is written by exactly one task; per-element arithmetic
// stays sequential, which keeps results independent of the thread count.
class ThreadPool {
public:
    static ThreadPool& instance() {
        static ThreadPool pool;
        return pool;
    }

    // f(chunk_begin, chunk_end); blocks until the whole range is done
    void run(std::size_t begin, std::size_t end, const std::function<void(std::size_t, std::size_t)>& f) {
        if (begin >= end) return;
        std::lock_guard<std::mutex> job_guard(job_mu_);  // one job at a time
        {
            std::unique_lock<std::mutex> lk(mu_);
            cv_done_.wait(lk, [&] { return active_ == 0; });  // let stragglers leave the claim loop
            ensure_workers(static_cast<std::size_t>(thread_count()) - 1);
            job_fn_ = &f;
            job_begin_ = begin;
            job_end_ = end;
            job_parts_ = workers_.size() + 1;
            next_part_.store(0, std::memory_order_relaxed);
            pending_ = job_parts_;
            ++job_id_;
            ++active_;  // the caller participates
        }
        cv_work_.notify_all();
        claim_and_run();
        std::unique_lock<std::mutex> lk(mu_);
        --active_;
        if (active_ == 0) cv_done_.notify_all();
        cv_done_.wait(lk, [&] { return pending_ == 0; });
        job_fn_ = nullptr;
    }

    ~ThreadPool() {
        {
            std::lock_guard<std::mutex> lk(mu_);
            stop_ = true;
        }
        cv_work_.notify_all();
        for (auto& w : workers_) w.join();
    }

private:
    ThreadPool() = default;

    void ensure_workers(std::size_t want) {  // mu_ held
        while (workers_.size() < want)
            workers_.emplace_back([this] { worker_loop(); });
    }

    void claim_and_run() {
        const std::size_t base = job_begin_, n = job_end_ - job_begin_, parts = job_parts_;
        for (;;) {
            std::size_t p = next_part_.fetch_add(1, std::memory_order_relaxed);
            if (p >= parts) return;
            std::size_t lo = base + n * p / parts;
            std::size_t hi = base + n * (p + 1) / parts;
            if (lo < hi) (*job_fn_)(lo, hi);
            std::lock_guard<std::mutex> lk(mu_);
            if (--pending_ == 0) cv_done_.notify_all();
        }
    }

    void worker_loop() {
        std::uint64_t seen = 0;
        for (;;) {
            {
                std::unique_lock<std::mutex> lk(mu_);
                cv_work_.wait(lk, [&] { return stop_ || (job_fn_ && job_id_ != seen); });
                if (stop_) return;
                seen = job_id_;
                ++active_;
            }
            claim_and_run();
            {
                std::lock_guard<std::mutex> lk(mu_);
                --active_;
                if (active_ == 0) cv_done_.notify_all();
            }
        }
    }

    std::mutex job_mu_;  // serializes whole jobs
    std::mutex mu_;
    std::condition_variable cv_work_, cv_done_;
    std::vector<std::thread> workers_;
    const std::function<void(std::size_t, std::size_t)>* job_fn_ = nullptr;
    std::size_t job_begin_ = 0, job_end_ = 0, job_parts_ = 0, pending_ = 0, active_ = 0;
    std::atomic<std::size_t> next_part_{0};
    std::uint64_t job_id_ = 0;
    bool stop_ = false;
};

namespace detail {
inline bool& in_pool_flag() {
    thread_local bool flag = false;
    return flag;
}
}  // namespace detail

// Runs f over chunks of [begin, end).  Nested calls and single-thread
// configurations run inline on the caller.
template <class F>
void parallel_for(std::size_t begin, std::size_t end, F&& f) {
    if (begin >= end) return;
    if (thread_count() <= 1 || detail::in_pool_flag() || end - begin == 1) {
        f(begin, end);
        return;
    }
    std::function<void(std::size_t, std::size_t)> fn = [&](std::size_t lo, std::size_t hi) {
        bool& flag = detail::in_pool_flag();
        bool prev = flag;
        flag = true;
        f(lo, hi);
        flag = prev;
    };
    ThreadPool::instance().run(begin, end, fn);
}

}  // namespace fastnn
