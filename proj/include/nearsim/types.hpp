/*
 * Copyright 2026 The nearsim Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace nearsim {

using Addr = std::uint64_t;
using Cycle = std::uint64_t;

inline constexpr std::uint64_t kLineBytes = 64;

using CacheLine = std::array<std::uint8_t, kLineBytes>;

constexpr Addr line_index(Addr addr) { return addr / kLineBytes; }
constexpr Addr line_base(Addr addr) { return addr & ~(kLineBytes - 1); }
constexpr bool is_line_aligned(Addr addr) { return (addr % kLineBytes) == 0; }

constexpr std::uint64_t round_up(std::uint64_t value, std::uint64_t multiple) {
    return (value + multiple - 1) / multiple * multiple;
}

enum class RequesterKind : std::uint8_t { core, nmce, sparse, prefetcher, loader };

struct Requester {
    RequesterKind kind = RequesterKind::core;
    unsigned id = 0;

    static constexpr Requester core(unsigned id) { return {RequesterKind::core, id}; }
    static constexpr Requester nmce(unsigned id) { return {RequesterKind::nmce, id}; }
    static constexpr Requester sparse(unsigned id) { return {RequesterKind::sparse, id}; }
    static constexpr Requester prefetcher(unsigned id) { return {RequesterKind::prefetcher, id}; }
    static constexpr Requester loader() { return {RequesterKind::loader, 0}; }
};

std::string to_string(Requester who);

/// Raised when a simulated device touches memory it has no business touching.
/// The harness reports the device name and exits nonzero.
class SimFault : public std::runtime_error {
public:
    SimFault(Requester who, Addr addr, const std::string& what);

    Requester requester() const { return who_; }
    Addr address() const { return addr_; }

private:
    Requester who_;
    Addr addr_;
};

/// Malformed input detected before any simulation starts.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace nearsim
