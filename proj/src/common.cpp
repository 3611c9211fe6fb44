// saf/common.cpp
//
// Copyright 2026 The saf authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "saf/common.hpp"

#include <atomic>
#include <cstdlib>
#include <memory>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace saf {

namespace {

// Training allocates and frees tens-of-MB tensors every step; keeping those
// pages on the heap instead of handing them back to the kernel avoids
// re-faulting the same memory thousands of times.
#if defined(__GLIBC__)
__attribute__((constructor)) void tune_allocator() {
  mallopt(M_MMAP_MAX, 0);
  mallopt(M_TRIM_THRESHOLD, -1);
}
#endif

int read_env_threads() {
  const char* v = std::getenv("SAF_THREADS");
  if (v == nullptr || *v == '\0') return 1;
  int n = std::atoi(v);
  return n <= 0 ? 1 : n;
}

std::atomic<int> g_threads{-1};

// A worker must never re-enter dispatch(); nested parallel sections run
// serially on the calling thread.
thread_local bool t_in_pool_worker = false;

// Each dispatch publishes one Job; workers snapshot the shared_ptr, so a
// late waker can only see an exhausted chunk counter, never a dead closure.
struct Job {
  std::function<void(int64_t, int64_t)> fn;
  int64_t n = 0;
  int chunks = 0;
  std::atomic<int> next{0};
  std::atomic<int> remaining{0};
};

class Pool {
 public:
  explicit Pool(int helpers) {
    for (int i = 0; i < helpers; ++i) {
      threads_.emplace_back([this] { worker_loop(); });
    }
  }

  ~Pool() {
    {
      std::lock_guard<std::mutex> lk(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  // The calling thread participates, so the job completes even with zero
  // helpers awake.
  void dispatch(int64_t n, int chunks, const std::function<void(int64_t, int64_t)>& fn) {
    auto job = std::make_shared<Job>();
    job->fn = fn;
    job->n = n;
    job->chunks = chunks;
    job->remaining.store(chunks, std::memory_order_relaxed);
    {
      std::lock_guard<std::mutex> lk(mu_);
      current_ = job;
      ++generation_;
    }
    cv_.notify_all();

    const bool was_worker = t_in_pool_worker;
    t_in_pool_worker = true;
    run_chunks(*job);
    t_in_pool_worker = was_worker;

    std::unique_lock<std::mutex> lk(mu_);
    done_cv_.wait(lk, [&] { return job->remaining.load(std::memory_order_acquire) == 0; });
  }

 private:
  void run_chunks(Job& job) {
    for (;;) {
      const int c = job.next.fetch_add(1, std::memory_order_relaxed);
      if (c >= job.chunks) break;
      const int64_t begin = job.n * c / job.chunks;
      const int64_t end = job.n * (c + 1) / job.chunks;
      if (begin < end) job.fn(begin, end);
      if (job.remaining.fetch_sub(1, std::memory_order_acq_rel) == 1) {
        std::lock_guard<std::mutex> lk(mu_);
        done_cv_.notify_all();
      }
    }
  }

  void worker_loop() {
    t_in_pool_worker = true;
    uint64_t seen = 0;
    for (;;) {
      std::shared_ptr<Job> job;
      {
        std::unique_lock<std::mutex> lk(mu_);
        cv_.wait(lk, [&] { return stop_ || generation_ != seen; });
        if (stop_) return;
        seen = generation_;
        job = current_;
      }
      if (job) run_chunks(*job);
    }
  }

  std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable done_cv_;
  std::vector<std::thread> threads_;
  std::shared_ptr<Job> current_;
  uint64_t generation_ = 0;
  bool stop_ = false;
};

Pool* pool_for(int workers) {
  static std::mutex mu;
  static Pool* pool = nullptr;
  static int pool_workers = 0;
  std::lock_guard<std::mutex> lk(mu);
  if (pool == nullptr || pool_workers != workers) {
    delete pool;
    pool = new Pool(workers - 1);  // dispatcher participates
    pool_workers = workers;
  }
  return pool;
}

}  // namespace

int thread_count() {
  int n = g_threads.load(std::memory_order_relaxed);
  if (n < 0) {
    n = read_env_threads();
    g_threads.store(n, std::memory_order_relaxed);
  }
  return n;
}

void set_thread_count(int n) { g_threads.store(n <= 0 ? 1 : n, std::memory_order_relaxed); }

void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
  if (n <= 0) return;
  const int workers = thread_count();
  if (workers <= 1 || n == 1 || t_in_pool_worker) {
    fn(0, n);
    return;
  }
  int chunks = workers;
  if (static_cast<int64_t>(chunks) > n) chunks = static_cast<int>(n);
  pool_for(workers)->dispatch(n, chunks, fn);
}

}  // namespace saf
