#pragma once

#include <chrono>

namespace chunkrt {

/// Time source injected into the engine so simulated runs are deterministic.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual double now() const = 0;
};

/// Simulated time, set explicitly by the event loop.
class VirtualClock final : public Clock {
 public:
  explicit VirtualClock(double t = 0.0) : t_(t) {}
  double now() const override { return t_; }
  void set(double t) { t_ = t; }
  void advance(double dt) { t_ += dt; }

 private:
  double t_;
};

/// Wall-clock seconds since construction, plus an offset.
class SteadyClock final : public Clock {
 public:
  explicit SteadyClock(double offset = 0.0) : start_(std::chrono::steady_clock::now()), offset_(offset) {}
  double now() const override {
    return offset_ + std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
  double offset_;
};

}  // namespace chunkrt
