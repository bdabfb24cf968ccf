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

#include "shadowworlds/machine.hpp"
#include "shadowworlds/types.hpp"

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace shadowworlds {

// ---------------------------------------------------------------------------
// Marshal buffer & task_shared layout (ZONE_NORMAL, per HAP)
// ---------------------------------------------------------------------------

constexpr uint32_t kMarshalDataPages = 16; // 64 KiB data area
constexpr uint32_t kMarshalDataSize = kMarshalDataPages * kPageSize;
constexpr uint32_t kMarshalBlockPages = kMarshalDataPages + 3; // + futex, signal, task_shared

/// World-shared block: the only user-related memory the OS reads in
/// plaintext. data area | futex word page | signal page | task_shared page.
struct MarshalBuffer {
    PhysAddr base;

    PhysAddr data_area() const { return base; }
    PhysAddr futex_word() const { return PhysAddr(base.value + kMarshalDataSize); }
    PhysAddr signal_page() const { return PhysAddr(base.value + kMarshalDataSize + kPageSize); }
    PhysAddr task_shared() const { return PhysAddr(base.value + kMarshalDataSize + 2 * kPageSize); }
    uint32_t block_len() const { return kMarshalBlockPages * kPageSize; }
    bool contains(PhysAddr a) const {
        return a.value >= base.value && a.value - base.value < block_len();
    }
};

/// The OS-writable response record. The runtime reads it once into this
/// snapshot and decides on the snapshot only.
struct TaskSharedData {
    uint32_t fault_vaddr = 0;
    uint32_t pte_phys = 0;   // proposed S page
    uint32_t pte_perms = 0;  // r=1 w=2 x=4
    uint32_t n_page = 0;     // 0 = absent
    int32_t syscall_result = 0;
    uint32_t context_tag = 0; // 0 normal, 1 sigreturn
    uint32_t signal_pending = 0;
    uint32_t sig_signum = 0;
    uint32_t sig_handler = 0;
    uint32_t sig_return_pc = 0;
    std::array<uint8_t, 8> sig_pretcode{};
    uint32_t resume_pc = 0; // honored only by the verification-disabled build
};

TaskSharedData task_shared_load(const Machine& m, PhysAddr page, WorldState world);
void task_shared_store(Machine& m, PhysAddr page, const TaskSharedData& d, WorldState world);

/// The sigreturn trampoline bytes every honest frame carries
/// (mov r7, #173; svc 0 in ARM encoding).
constexpr std::array<uint8_t, 8> kCanonicalPretcode = {0xAD, 0x70, 0xA0, 0xE3,
                                                       0x00, 0x00, 0x00, 0xEF};

/// Signal frame as placed on the reserved marshal page.
struct SignalFrame {
    uint32_t signum = 0;
    uint32_t handler = 0;
    uint32_t return_pc = 0;
    std::array<uint8_t, 8> pretcode{};
};
SignalFrame signal_frame_load(const Machine& m, PhysAddr page, WorldState world);
void signal_frame_store(Machine& m, PhysAddr page, const SignalFrame& f, WorldState world);

// ---------------------------------------------------------------------------
// Memory-map tracking (Iago defense)
// ---------------------------------------------------------------------------

enum class RegionKind { Image, Library, ProtectedFile, SharedFile, Anon };
const char* region_kind_str(RegionKind k);

struct Region {
    uint32_t start = 0; // page aligned
    uint32_t len = 0;   // page multiple
    RegionKind kind = RegionKind::Anon;
    Perms perms;
    std::string name;         // library / protected / shared file name
    uint32_t file_offset = 0; // mapping offset within the file
    bool shared = false;
    uint32_t end() const { return start + len; }
};

/// Classification of a faulting address, from the runtime's own records.
struct Classified {
    enum What { None, Stack, Brk, Mapped } what = None;
    const Region* region = nullptr;
};

/// Trusted record of the guest address space: image segments, verified
/// mmap/munmap results, the brk span, and the stack derived from sp.
/// Decision rules are mirrored by the brute-force oracle in the tests.
class MemoryMapTracker {
public:
    void init(uint32_t brk_base, std::vector<Region> image_regions);

    uint32_t brk_base() const { return brk_base_; }
    uint32_t brk_limit() const { return brk_limit_; }

    /// Stack spans [sp, top of user space).
    static bool range_overlaps_stack(uint32_t start, uint32_t len, uint32_t sp) {
        return start + len > sp; // ranges are below top by construction
    }

    bool overlaps_tracked(uint32_t start, uint32_t len, uint32_t sp) const;

    /// mmap result verification. A negative-errno result is a plain failure
    /// (accepted, no update). Returns false on an Iago violation.
    bool verify_mmap(uint32_t result, uint32_t length, uint32_t sp, const Region& proto);
    bool verify_munmap(uint32_t addr, uint32_t length);
    bool verify_brk(uint32_t result, uint32_t sp);

    Classified classify(VirtAddr va, uint32_t sp) const;
    const Region* find_region(VirtAddr va) const;
    const std::vector<Region>& regions() const { return regions_; }

    /// Removes [addr, addr+len) from tracked regions (post-verify commit).
    void remove_range(uint32_t addr, uint32_t len);

private:
    std::vector<Region> regions_; // sorted by start, disjoint
    uint32_t brk_base_ = 0;
    uint32_t brk_limit_ = 0;
    void insert_region(Region r);
};

// ---------------------------------------------------------------------------
// Futex registrations
// ---------------------------------------------------------------------------

/// System-wide map from the physical address of a futex word to its waiters.
/// A HAP is registered for at most one futex at any time.
class FutexMap {
public:
    struct Waiter {
        HapId hap;
        VirtAddr vaddr;
    };

    bool register_wait(PhysAddr word, HapId hap, VirtAddr vaddr);
    void unregister(HapId hap);
    std::vector<Waiter> waiters(PhysAddr word) const;
    std::optional<PhysAddr> waiting_on(HapId hap) const;
    size_t registration_count(HapId hap) const;

private:
    std::map<uint32_t, std::vector<Waiter>> map_;
};

// ---------------------------------------------------------------------------
// Per-syscall marshal specifications
// ---------------------------------------------------------------------------

/// Declarative marshal spec: how each argument crosses the world boundary.
/// New syscalls register a marshal spec here plus a verify arm in the
/// runtime's response verifier.
struct SyscallSpec {
    enum class Role { Scalar, InPath, InBuf, OutBuf };
    struct ArgRole {
        Role role = Role::Scalar;
        int len_arg = -1; // index of the length argument for In/OutBuf
    };
    uint32_t number = 0;
    const char* name = "";
    std::vector<ArgRole> args;
};

const SyscallSpec* syscall_spec(uint32_t number);
const std::vector<SyscallSpec>& syscall_registry();

} // namespace shadowworlds
