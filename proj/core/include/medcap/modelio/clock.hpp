// Copyright 2026 The medcap Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <deque>
#include <memory>
#include <mutex>

namespace medcap::modelio {

class Clock {
 public:
  using time_point = std::chrono::steady_clock::time_point;
  using duration = std::chrono::steady_clock::duration;

  virtual ~Clock() = default;
  virtual time_point now() = 0;
  virtual void sleep_until(time_point deadline) = 0;
  void sleep_for(duration d) { sleep_until(now() + d); }
};

std::shared_ptr<Clock> system_clock();

/// Sliding-window limiter: at most `limit` acquisitions in any half-open
/// window [t, t + window).
class RateLimiter {
 public:
  RateLimiter(std::size_t limit, Clock::duration window, std::shared_ptr<Clock> clock);

  /// Blocks (through the clock) until a slot in the window is free.
  void acquire();

 private:
  std::size_t limit_;
  Clock::duration window_;
  std::shared_ptr<Clock> clock_;
  std::mutex mutex_;
  std::deque<Clock::time_point> stamps_;
};

/// Counting gate over in-flight requests.
class ConcurrencyGate {
 public:
  explicit ConcurrencyGate(std::size_t capacity);

  class Slot {
   public:
    explicit Slot(ConcurrencyGate& gate);
    ~Slot();
    Slot(const Slot&) = delete;
    Slot& operator=(const Slot&) = delete;

   private:
    ConcurrencyGate& gate_;
  };

  std::size_t in_flight() const;
  std::size_t peak() const;

 private:
  std::size_t capacity_;
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::size_t in_flight_ = 0;
  std::size_t peak_ = 0;
};

}  // namespace medcap::modelio
