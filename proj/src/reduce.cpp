#include "rsmfc/reduce.hpp"

#include <atomic>
#include <cmath>
#include <condition_variable>
#include <limits>
#include <mutex>
#include <thread>
#include <vector>

namespace rsmfc {

namespace {

std::atomic<int> g_threads{1};

// Persistent pool. Chunk handout and completion accounting go through the
// mutex; chunks are coarse (kReduceChunk elements), so the lock traffic is
// noise next to the chunk work. Which worker runs which chunk never matters
// for results: boundaries are fixed and the caller combines chunk outputs in
// chunk-id order.
class WorkerPool {
public:
    static WorkerPool& instance() {
        static WorkerPool pool;
        return pool;
    }

    void run(std::size_t n_chunks, const std::function<void(std::size_t)>& chunk_fn) {
        const int workers = g_threads.load(std::memory_order_relaxed);
        if (workers <= 1 || n_chunks <= 1) {
            for (std::size_t c = 0; c < n_chunks; ++c) chunk_fn(c);
            return;
        }
        uint64_t gen;
        {
            std::unique_lock<std::mutex> lk(mu_);
            ensure_threads(workers - 1);
            job_ = &chunk_fn;
            next_chunk_ = 0;
            total_chunks_ = n_chunks;
            pending_ = n_chunks;
            gen = ++generation_;
        }
        cv_.notify_all();
        participate(gen);
        std::unique_lock<std::mutex> lk(mu_);
        done_cv_.wait(lk, [&] { return pending_ == 0; });
        job_ = nullptr;
    }

private:
    WorkerPool() = default;
    ~WorkerPool() {
        {
            std::unique_lock<std::mutex> lk(mu_);
            stop_ = true;
        }
        cv_.notify_all();
        for (auto& t : threads_) t.join();
    }

    void ensure_threads(int n) {
        while (static_cast<int>(threads_.size()) < n) {
            threads_.emplace_back([this] { worker_loop(); });
        }
    }

    void worker_loop() {
        uint64_t seen = 0;
        for (;;) {
            uint64_t gen;
            {
                std::unique_lock<std::mutex> lk(mu_);
                cv_.wait(lk, [&] { return stop_ || generation_ != seen; });
                if (stop_) return;
                gen = generation_;
            }
            seen = gen;
            participate(gen);
        }
    }

    // Pulls chunks of job `gen` until the job drains or a new one replaces it.
    void participate(uint64_t gen) {
        for (;;) {
            std::size_t c;
            const std::function<void(std::size_t)>* job;
            {
                std::unique_lock<std::mutex> lk(mu_);
                if (generation_ != gen || job_ == nullptr || next_chunk_ >= total_chunks_) {
                    return;
                }
                c = next_chunk_++;
                job = job_;
            }
            (*job)(c);
            {
                std::unique_lock<std::mutex> lk(mu_);
                if (generation_ == gen && --pending_ == 0) done_cv_.notify_all();
            }
        }
    }

    std::mutex mu_;
    std::condition_variable cv_, done_cv_;
    std::vector<std::thread> threads_;
    const std::function<void(std::size_t)>* job_ = nullptr;
    std::size_t next_chunk_ = 0;
    std::size_t total_chunks_ = 0;
    std::size_t pending_ = 0;
    uint64_t generation_ = 0;
    bool stop_ = false;
};

} // namespace

void set_worker_threads(int n) { g_threads.store(n < 1 ? 1 : n, std::memory_order_relaxed); }

int worker_threads() { return g_threads.load(std::memory_order_relaxed); }

std::size_t chunk_count(std::size_t n) { return n == 0 ? 0 : (n - 1) / kReduceChunk + 1; }

void parallel_for_chunks(std::size_t n,
                         const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
    const std::size_t chunks = chunk_count(n);
    WorkerPool::instance().run(chunks, [&](std::size_t c) {
        const std::size_t begin = c * kReduceChunk;
        const std::size_t end = std::min(n, begin + kReduceChunk);
        fn(c, begin, end);
    });
}

double deterministic_sum(std::span<const double> xs) {
    const std::size_t chunks = chunk_count(xs.size());
    std::vector<double> partial(chunks, 0.0);
    parallel_for_chunks(xs.size(), [&](std::size_t c, std::size_t begin, std::size_t end) {
        double s = 0.0;
        for (std::size_t i = begin; i < end; ++i) s += xs[i];
        partial[c] = s;
    });
    double total = 0.0;
    for (double s : partial) total += s;
    return total;
}

FiniteMean finite_mean(std::span<const double> xs) {
    const std::size_t chunks = chunk_count(xs.size());
    std::vector<double> partial(chunks, 0.0);
    std::vector<std::size_t> counts(chunks, 0);
    parallel_for_chunks(xs.size(), [&](std::size_t c, std::size_t begin, std::size_t end) {
        double s = 0.0;
        std::size_t m = 0;
        for (std::size_t i = begin; i < end; ++i) {
            if (std::isfinite(xs[i])) {
                s += xs[i];
                ++m;
            }
        }
        partial[c] = s;
        counts[c] = m;
    });
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t c = 0; c < chunks; ++c) {
        total += partial[c];
        count += counts[c];
    }
    if (count == 0) return {std::numeric_limits<double>::quiet_NaN(), 0};
    return {total / static_cast<double>(count), count};
}

} // namespace rsmfc
