#include "dpir/thread_pool.hpp"

#include <atomic>
#include <exception>
#include <latch>
#include <stdexcept>

namespace dpir {

ThreadPool::ThreadPool(std::size_t threads) {
  if (threads == 0) throw std::invalid_argument("thread pool needs at least one thread");
  threads_.reserve(threads);
  for (std::size_t i = 0; i < threads; ++i) threads_.emplace_back([this] { loop(); });
}

ThreadPool::~ThreadPool() {
  {
    std::lock_guard lock(mu_);
    stop_ = true;
  }
  cv_.notify_all();
  for (auto& t : threads_) t.join();
}

void ThreadPool::loop() {
  for (;;) {
    std::function<void()> job;
    {
      std::unique_lock lock(mu_);
      cv_.wait(lock, [this] { return stop_ || !queue_.empty(); });
      if (queue_.empty()) return;
      job = std::move(queue_.front());
      queue_.pop_front();
    }
    job();
  }
}

void ThreadPool::run(std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  if (jobs == 0) return;
  if (jobs == 1) {
    fn(0);
    return;
  }
  std::latch done(static_cast<std::ptrdiff_t>(jobs));
  std::mutex err_mu;
  std::exception_ptr error;
  {
    std::lock_guard lock(mu_);
    for (std::size_t j = 0; j < jobs; ++j) {
      queue_.emplace_back([&, j] {
        try {
          fn(j);
        } catch (...) {
          std::lock_guard l(err_mu);
          if (!error) error = std::current_exception();
        }
        done.count_down();
      });
    }
  }
  cv_.notify_all();
  done.wait();
  if (error) std::rethrow_exception(error);
}

void ThreadPool::for_each(std::size_t workers, std::size_t tasks,
                          const std::function<void(std::size_t)>& fn) {
  std::atomic<std::size_t> next{0};
  const std::size_t jobs = std::min(workers, tasks);
  run(jobs, [&](std::size_t) {
    for (std::size_t t = next.fetch_add(1); t < tasks; t = next.fetch_add(1)) fn(t);
  });
}

}  // namespace dpir
