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

#include "medcap/modelio/clock.hpp"

#include <thread>

namespace medcap::modelio {

namespace {

class SteadyClock final : public Clock {
 public:
  time_point now() override { return std::chrono::steady_clock::now(); }
  void sleep_until(time_point deadline) override { std::this_thread::sleep_until(deadline); }
};

}  // namespace

std::shared_ptr<Clock> system_clock() {
  static auto clock = std::make_shared<SteadyClock>();
  return clock;
}

RateLimiter::RateLimiter(std::size_t limit, Clock::duration window, std::shared_ptr<Clock> clock)
    : limit_(limit == 0 ? 1 : limit), window_(window), clock_(std::move(clock)) {}

void RateLimiter::acquire() {
  std::unique_lock lock(mutex_);
  for (;;) {
    const auto now = clock_->now();
    while (!stamps_.empty() && stamps_.front() + window_ <= now) stamps_.pop_front();
    if (stamps_.size() < limit_) {
      stamps_.push_back(now);
      return;
    }
    const auto wake = stamps_.front() + window_;
    lock.unlock();
    clock_->sleep_until(wake);
    lock.lock();
  }
}

ConcurrencyGate::ConcurrencyGate(std::size_t capacity) : capacity_(capacity == 0 ? 1 : capacity) {}

ConcurrencyGate::Slot::Slot(ConcurrencyGate& gate) : gate_(gate) {
  std::unique_lock lock(gate_.mutex_);
  gate_.cv_.wait(lock, [&] { return gate_.in_flight_ < gate_.capacity_; });
  ++gate_.in_flight_;
  gate_.peak_ = std::max(gate_.peak_, gate_.in_flight_);
}

ConcurrencyGate::Slot::~Slot() {
  {
    std::lock_guard lock(gate_.mutex_);
    --gate_.in_flight_;
  }
  gate_.cv_.notify_one();
}

std::size_t ConcurrencyGate::in_flight() const {
  std::lock_guard lock(mutex_);
  return in_flight_;
}

std::size_t ConcurrencyGate::peak() const {
  std::lock_guard lock(mutex_);
  return peak_;
}

}  // namespace medcap::modelio
