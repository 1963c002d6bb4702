#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <future>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "quadplan/locomotion_problem.hpp"
#include "quadplan/slq_solver.hpp"

namespace quadplan::sim {

struct PlanRequest {
  RobotState x0;
  GaitSchedule schedule;
  Terrain terrain;
  LocomotionSetup setup;
  SolverSettings solver;
};

struct PlanOutcome {
  std::shared_ptr<const LocomotionProblem> problem;
  std::optional<TrajectorySolution> solution;
  std::optional<ErrorCode> error;
  std::string message;
  double wall_ms = 0.0;

  bool ok() const { return solution && solution->converged(); }
};

inline PlanOutcome solve_plan(const PlanRequest& request) {
  PlanOutcome out;
  const auto start = std::chrono::steady_clock::now();
  try {
    auto problem = std::make_shared<LocomotionProblem>(request.x0, request.schedule, request.terrain, request.setup);
    out.problem = problem;
    out.solution = solve(*problem, request.solver);
    if (!out.solution->converged()) out.message = std::string("solver ") + status_name(out.solution->status);
  } catch (const Error& e) {
    out.error = e.code();
    out.message = e.what();
  }
  out.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return out;
}

/// Owns the solver; requests are served one at a time, in order.
class PlannerWorker {
 public:
  PlannerWorker() : thread_([this] { loop(); }) {}
  ~PlannerWorker() {
    {
      std::lock_guard lock(mutex_);
      stopping_ = true;
    }
    cv_.notify_all();
    thread_.join();
  }
  PlannerWorker(const PlannerWorker&) = delete;
  PlannerWorker& operator=(const PlannerWorker&) = delete;

  std::future<PlanOutcome> submit(PlanRequest request) {
    std::packaged_task<PlanOutcome()> task([r = std::move(request)] { return solve_plan(r); });
    auto future = task.get_future();
    {
      std::lock_guard lock(mutex_);
      queue_.push_back(std::move(task));
    }
    cv_.notify_one();
    return future;
  }

 private:
  void loop() {
    for (;;) {
      std::packaged_task<PlanOutcome()> task;
      {
        std::unique_lock lock(mutex_);
        cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
        if (queue_.empty()) return;
        task = std::move(queue_.front());
        queue_.pop_front();
      }
      task();
    }
  }

  std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<std::packaged_task<PlanOutcome()>> queue_;
  bool stopping_ = false;
  std::thread thread_;
};

}  // namespace quadplan::sim
