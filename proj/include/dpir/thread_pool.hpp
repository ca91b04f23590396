#pragma once

#include <condition_variable>
#include <cstddef>
#include <deque>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace dpir {

// Fixed-size pool. run() blocks the caller until every job has finished,
// so each call is a barrier. Jobs must not call run() on the same pool.
class ThreadPool {
 public:
  explicit ThreadPool(std::size_t threads);
  ~ThreadPool();
  ThreadPool(const ThreadPool&) = delete;
  ThreadPool& operator=(const ThreadPool&) = delete;

  std::size_t size() const { return threads_.size(); }

  // Runs fn(job) for job in [0, jobs). The first exception is rethrown.
  void run(std::size_t jobs, const std::function<void(std::size_t)>& fn);

  // Runs fn(task) for task in [0, tasks) on at most `workers` concurrent jobs.
  void for_each(std::size_t workers, std::size_t tasks, const std::function<void(std::size_t)>& fn);

 private:
  void loop();

  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::function<void()>> queue_;
  bool stop_ = false;
  std::vector<std::thread> threads_;
};

}  // namespace dpir
