/*
 *    Copyright 2026 The Shadowworlds Authors.
 *
 *    Licensed under the Apache License, Version 2.0 (the "License");
 *    you may not use this file except in compliance with the License.
 *    You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 *    Unless required by applicable law or agreed to in writing, software
 *    distributed under the License is distributed on an "AS IS" BASIS,
 *    WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 *    See the License for the specific language governing permissions and
 *    limitations under the License.
 */

#pragma once

#include "shadowworlds/types.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace shadowworlds {

/// Line-oriented run trace. One event per line, stable field order, suitable
/// for golden-file comparison. The event index is the simulator's logical
/// clock: verdicts and vault timestamps reference it.
class Trace {
public:
    struct Event {
        uint64_t index;
        std::string name;
        std::string fields; // "k=v k=v" (already formatted)
    };

    uint64_t append(const std::string& name, const std::string& fields) {
        uint64_t idx = next_index_++;
        events_.push_back(Event{idx, name, fields});
        if (hook_) hook_(events_.back());
        return idx;
    }

    uint64_t next_index() const { return next_index_; }
    const std::vector<Event>& events() const { return events_; }

    /// Observers (taint scanner, scrub checker) run synchronously on append.
    void set_hook(std::function<void(const Event&)> h) { hook_ = std::move(h); }

    std::string render() const;

private:
    std::vector<Event> events_;
    uint64_t next_index_ = 0;
    std::function<void(const Event&)> hook_;
};

/// Cost counters. Simulated-step counting only; the harness never reads a
/// wall clock.
struct Metrics {
    uint64_t world_switches = 0;        // secure<->normal crossings
    uint64_t bytes_copied_cross_world = 0;
    uint64_t hash_ops = 0;              // page digest computations
    uint64_t ae_ops = 0;                // seal/unseal operations
    uint64_t page_zeroizations = 0;
    uint64_t page_copies = 0;           // N->S page copies
    uint64_t exceptions_forwarded = 0;
    uint64_t internal_exceptions = 0;
    uint64_t scrub_violations = 0;

    std::string render() const;
};

std::string format_fields(std::initializer_list<std::pair<const char*, std::string>> kv);

} // namespace shadowworlds
