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

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace shadowworlds {

using Bytes = std::vector<uint8_t>;

constexpr uint32_t kPageSize = 4096;
constexpr uint32_t kPageMask = kPageSize - 1;

// 2G/2G user/kernel virtual split.
constexpr uint32_t kUserSpaceTop = 0x80000000u;

inline constexpr uint32_t page_align_down(uint32_t a) { return a & ~kPageMask; }
inline constexpr uint32_t page_align_up(uint32_t a) { return (a + kPageMask) & ~kPageMask; }
inline constexpr bool is_page_aligned(uint32_t a) { return (a & kPageMask) == 0; }

/// Physical byte address on the simulated SoC.
struct PhysAddr {
    uint32_t value = 0;
    constexpr PhysAddr() = default;
    constexpr explicit PhysAddr(uint32_t v) : value(v) {}
    constexpr auto operator<=>(const PhysAddr&) const = default;
};

/// Guest virtual address.
struct VirtAddr {
    uint32_t value = 0;
    constexpr VirtAddr() = default;
    constexpr explicit VirtAddr(uint32_t v) : value(v) {}
    constexpr auto operator<=>(const VirtAddr&) const = default;
    constexpr bool is_user() const { return value < kUserSpaceTop; }
};

enum class WorldState { Secure, Normal, Monitor };

inline const char* world_name(WorldState w) {
    switch (w) {
        case WorldState::Secure: return "secure";
        case WorldState::Normal: return "normal";
        case WorldState::Monitor: return "monitor";
    }
    return "?";
}

enum class CpuMode : uint8_t { USR, SVC, ABT, IRQ, MON };

inline const char* cpu_mode_name(CpuMode m) {
    switch (m) {
        case CpuMode::USR: return "USR";
        case CpuMode::SVC: return "SVC";
        case CpuMode::ABT: return "ABT";
        case CpuMode::IRQ: return "IRQ";
        case CpuMode::MON: return "MON";
    }
    return "?";
}

constexpr int kGpRegs = 13;
constexpr int kFpRegs = 32;

/// Architectural register file shared across worlds. FP slots are gated by
/// fp_enabled; the runtime saves and clears them around world switches.
struct RegisterFile {
    std::array<uint32_t, kGpRegs> gp{};
    uint32_t sp = 0;
    uint32_t lr = 0;
    uint32_t pc = 0;
    CpuMode cpsr_mode = CpuMode::USR;
    std::array<uint64_t, kFpRegs> fp{};
    bool fp_enabled = false;

    void zero_gp() {
        gp.fill(0);
        sp = lr = pc = 0;
    }
    void zero_fp() { fp.fill(0); }
};

struct HapId {
    uint32_t value = 0;
    constexpr HapId() = default;
    constexpr explicit HapId(uint32_t v) : value(v) {}
    constexpr auto operator<=>(const HapId&) const = default;
};

/// Memory access permissions on a page.
struct Perms {
    bool r = false, w = false, x = false;
    constexpr auto operator<=>(const Perms&) const = default;
    std::string str() const {
        std::string s;
        s += r ? 'r' : '-';
        s += w ? 'w' : '-';
        s += x ? 'x' : '-';
        return s;
    }
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string hex_u32(uint32_t v);       // 0x%08x
std::string to_hex(const Bytes& b);
Bytes from_hex(const std::string& s);

} // namespace shadowworlds
