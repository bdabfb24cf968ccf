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

#include "shadowworlds/syscalls.hpp"

#include "shadowworlds/guest.hpp"

#include <algorithm>
#include <cstring>

namespace shadowworlds {

namespace {
uint32_t rd32(const Bytes& b, size_t off) {
    return static_cast<uint32_t>(b[off]) | (static_cast<uint32_t>(b[off + 1]) << 8) |
           (static_cast<uint32_t>(b[off + 2]) << 16) | (static_cast<uint32_t>(b[off + 3]) << 24);
}
void wr32(Bytes& b, size_t off, uint32_t v) {
    b[off] = static_cast<uint8_t>(v);
    b[off + 1] = static_cast<uint8_t>(v >> 8);
    b[off + 2] = static_cast<uint8_t>(v >> 16);
    b[off + 3] = static_cast<uint8_t>(v >> 24);
}
} // namespace

TaskSharedData task_shared_load(const Machine& m, PhysAddr page, WorldState world) {
    Bytes b = m.phys_read(page, 64, world);
    TaskSharedData d;
    d.fault_vaddr = rd32(b, 0);
    d.pte_phys = rd32(b, 4);
    d.pte_perms = rd32(b, 8);
    d.n_page = rd32(b, 12);
    d.syscall_result = static_cast<int32_t>(rd32(b, 16));
    d.context_tag = rd32(b, 20);
    d.signal_pending = rd32(b, 24);
    d.sig_signum = rd32(b, 28);
    d.sig_handler = rd32(b, 32);
    d.sig_return_pc = rd32(b, 36);
    std::memcpy(d.sig_pretcode.data(), b.data() + 40, 8);
    d.resume_pc = rd32(b, 48);
    return d;
}

void task_shared_store(Machine& m, PhysAddr page, const TaskSharedData& d, WorldState world) {
    Bytes b(64, 0);
    wr32(b, 0, d.fault_vaddr);
    wr32(b, 4, d.pte_phys);
    wr32(b, 8, d.pte_perms);
    wr32(b, 12, d.n_page);
    wr32(b, 16, static_cast<uint32_t>(d.syscall_result));
    wr32(b, 20, d.context_tag);
    wr32(b, 24, d.signal_pending);
    wr32(b, 28, d.sig_signum);
    wr32(b, 32, d.sig_handler);
    wr32(b, 36, d.sig_return_pc);
    std::memcpy(b.data() + 40, d.sig_pretcode.data(), 8);
    wr32(b, 48, d.resume_pc);
    m.phys_write(page, b, world);
}

SignalFrame signal_frame_load(const Machine& m, PhysAddr page, WorldState world) {
    Bytes b = m.phys_read(page, 20, world);
    SignalFrame f;
    f.signum = rd32(b, 0);
    f.handler = rd32(b, 4);
    f.return_pc = rd32(b, 8);
    std::memcpy(f.pretcode.data(), b.data() + 12, 8);
    return f;
}

void signal_frame_store(Machine& m, PhysAddr page, const SignalFrame& f, WorldState world) {
    Bytes b(20, 0);
    wr32(b, 0, f.signum);
    wr32(b, 4, f.handler);
    wr32(b, 8, f.return_pc);
    std::memcpy(b.data() + 12, f.pretcode.data(), 8);
    m.phys_write(page, b, world);
}

const char* region_kind_str(RegionKind k) {
    switch (k) {
        case RegionKind::Image: return "image";
        case RegionKind::Library: return "library";
        case RegionKind::ProtectedFile: return "protected";
        case RegionKind::SharedFile: return "shared_file";
        case RegionKind::Anon: return "anon";
    }
    return "?";
}

void MemoryMapTracker::init(uint32_t brk_base, std::vector<Region> image_regions) {
    brk_base_ = page_align_up(brk_base);
    brk_limit_ = brk_base_;
    regions_.clear();
    for (auto& r : image_regions) insert_region(std::move(r));
}

void MemoryMapTracker::insert_region(Region r) {
    auto it = std::lower_bound(regions_.begin(), regions_.end(), r.start,
                               [](const Region& a, uint32_t s) { return a.start < s; });
    regions_.insert(it, std::move(r));
}

bool MemoryMapTracker::overlaps_tracked(uint32_t start, uint32_t len, uint32_t sp) const {
    if (range_overlaps_stack(start, len, sp)) return true;
    uint32_t end = start + len;
    if (brk_limit_ > brk_base_) {
        uint32_t bend = page_align_up(brk_limit_);
        if (start < bend && brk_base_ < end) return true;
    }
    for (const auto& r : regions_)
        if (start < r.end() && r.start < end) return true;
    return false;
}

namespace {
bool result_is_error(uint32_t r) { return r >= 0xFFFFF000u; }
} // namespace

bool MemoryMapTracker::verify_mmap(uint32_t result, uint32_t length, uint32_t sp,
                                   const Region& proto) {
    if (result_is_error(result)) return true; // plain failure, nothing recorded
    uint32_t len = page_align_up(length);
    if (len == 0) return false;
    if (!is_page_aligned(result)) return false;
    if (result < kPageSize) return false;           // NULL-page guard
    uint64_t end = static_cast<uint64_t>(result) + len;
    if (end > kUserSpaceTop) return false;
    if (overlaps_tracked(result, len, sp)) return false;
    Region r = proto;
    r.start = result;
    r.len = len;
    insert_region(std::move(r));
    return true;
}

bool MemoryMapTracker::verify_munmap(uint32_t addr, uint32_t length) {
    if (!is_page_aligned(addr) || length == 0) return false;
    uint32_t len = page_align_up(length);
    uint64_t end64 = static_cast<uint64_t>(addr) + len;
    if (end64 > kUserSpaceTop) return false;
    // Every page must belong to some unmappable region (image segments stay).
    for (uint32_t p = addr; p < addr + len; p += kPageSize) {
        const Region* r = find_region(VirtAddr(p));
        if (!r || r->kind == RegionKind::Image) return false;
    }
    remove_range(addr, len);
    return true;
}

bool MemoryMapTracker::verify_brk(uint32_t result, uint32_t sp) {
    if (result == brk_limit_) return true; // refused / no-op
    if (result < brk_base_) return false;
    uint64_t up = page_align_up(result);
    if (up > kUserSpaceTop) return false;
    uint32_t span = static_cast<uint32_t>(up) - brk_base_;
    if (span > 0) {
        if (range_overlaps_stack(brk_base_, span, sp)) return false;
        for (const auto& r : regions_)
            if (brk_base_ < r.end() && r.start < brk_base_ + span) return false;
    }
    brk_limit_ = result;
    return true;
}

const Region* MemoryMapTracker::find_region(VirtAddr va) const {
    for (const auto& r : regions_)
        if (va.value >= r.start && va.value < r.end()) return &r;
    return nullptr;
}

Classified MemoryMapTracker::classify(VirtAddr va, uint32_t sp) const {
    if (const Region* r = find_region(va)) return {Classified::Mapped, r};
    if (va.value >= sp && va.value < kUserSpaceTop) return {Classified::Stack, nullptr};
    if (va.value >= brk_base_ && va.value < page_align_up(brk_limit_) && brk_limit_ > brk_base_)
        return {Classified::Brk, nullptr};
    return {Classified::None, nullptr};
}

void MemoryMapTracker::remove_range(uint32_t addr, uint32_t len) {
    uint32_t end = addr + len;
    std::vector<Region> out;
    out.reserve(regions_.size());
    for (auto& r : regions_) {
        if (r.end() <= addr || r.start >= end) {
            out.push_back(std::move(r));
            continue;
        }
        if (r.start < addr) {
            Region head = r;
            head.len = addr - r.start;
            out.push_back(std::move(head));
        }
        if (r.end() > end) {
            Region tail = r;
            tail.file_offset = r.file_offset + (end - r.start);
            tail.start = end;
            tail.len = r.end() - end;
            out.push_back(std::move(tail));
        }
    }
    regions_ = std::move(out);
}

bool FutexMap::register_wait(PhysAddr word, HapId hap, VirtAddr vaddr) {
    for (const auto& [_, ws] : map_)
        for (const auto& w : ws)
            if (w.hap == hap) return false; // single-wait invariant
    map_[word.value].push_back({hap, vaddr});
    return true;
}

void FutexMap::unregister(HapId hap) {
    for (auto it = map_.begin(); it != map_.end();) {
        auto& ws = it->second;
        ws.erase(std::remove_if(ws.begin(), ws.end(),
                                [&](const Waiter& w) { return w.hap == hap; }),
                 ws.end());
        if (ws.empty())
            it = map_.erase(it);
        else
            ++it;
    }
}

std::vector<FutexMap::Waiter> FutexMap::waiters(PhysAddr word) const {
    auto it = map_.find(word.value);
    return it == map_.end() ? std::vector<Waiter>{} : it->second;
}

std::optional<PhysAddr> FutexMap::waiting_on(HapId hap) const {
    for (const auto& [word, ws] : map_)
        for (const auto& w : ws)
            if (w.hap == hap) return PhysAddr(word);
    return std::nullopt;
}

size_t FutexMap::registration_count(HapId hap) const {
    size_t n = 0;
    for (const auto& [_, ws] : map_)
        for (const auto& w : ws)
            if (w.hap == hap) n++;
    return n;
}

const std::vector<SyscallSpec>& syscall_registry() {
    using Role = SyscallSpec::Role;
    static const std::vector<SyscallSpec> regs = {
        {sysno::kOpen, "open", {{Role::InPath, -1}, {Role::Scalar, -1}}},
        {sysno::kClose, "close", {{Role::Scalar, -1}}},
        {sysno::kRead, "read", {{Role::Scalar, -1}, {Role::OutBuf, 2}, {Role::Scalar, -1}}},
        {sysno::kWrite, "write", {{Role::Scalar, -1}, {Role::InBuf, 2}, {Role::Scalar, -1}}},
        {sysno::kMmap2, "mmap",
         {{Role::Scalar, -1}, {Role::Scalar, -1}, {Role::Scalar, -1},
          {Role::Scalar, -1}, {Role::Scalar, -1}, {Role::Scalar, -1}}},
        {sysno::kMunmap, "munmap", {{Role::Scalar, -1}, {Role::Scalar, -1}}},
        {sysno::kBrk, "brk", {{Role::Scalar, -1}}},
        {sysno::kGetpid, "getpid", {}},
        {sysno::kExit, "_exit", {{Role::Scalar, -1}}},
        {sysno::kRtSigaction, "rt_sigaction", {{Role::Scalar, -1}, {Role::Scalar, -1}}},
        {sysno::kRtSigreturn, "rt_sigreturn", {}},
        {sysno::kFutex, "futex", {{Role::Scalar, -1}, {Role::Scalar, -1}, {Role::Scalar, -1}}},
        {sysno::kTzExecve, "tz_execve", {{Role::InPath, -1}, {Role::InPath, -1}}},
    };
    return regs;
}

const SyscallSpec* syscall_spec(uint32_t number) {
    for (const auto& s : syscall_registry())
        if (s.number == number) return &s;
    return nullptr;
}

} // namespace shadowworlds
