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

#include "shadowworlds/crypto.hpp"
#include "shadowworlds/machine.hpp"
#include "shadowworlds/types.hpp"

#include <map>
#include <optional>
#include <set>

namespace shadowworlds {

/// Secure-world page table for one HAP. Every mapped physical page must lie
/// in ZONE_TZ_APP; only the paging flows mutate it.
class TrustedPageTable {
public:
    struct Entry {
        PhysAddr phys;
        Perms perms;
        bool shared = false;
    };

    bool present(VirtAddr va) const { return entries_.count(page_align_down(va.value)) != 0; }
    const Entry* lookup(VirtAddr va) const {
        auto it = entries_.find(page_align_down(va.value));
        return it == entries_.end() ? nullptr : &it->second;
    }
    void install(VirtAddr va, Entry e) { entries_[page_align_down(va.value)] = e; }
    std::optional<Entry> remove(VirtAddr va) {
        auto it = entries_.find(page_align_down(va.value));
        if (it == entries_.end()) return std::nullopt;
        Entry e = it->second;
        entries_.erase(it);
        return e;
    }
    const std::map<uint32_t, Entry>& entries() const { return entries_; }

private:
    std::map<uint32_t, Entry> entries_; // vpage base -> entry
};

enum class FreshVerdict { Ok, NotAligned, OutsideZone, NotFresh };
const char* fresh_verdict_str(FreshVerdict v);

/// System-wide ledger of secure pages handed to trusted tables. A page is
/// installed at most once until released; pages flagged shared (futex
/// mappings) are the deliberate exception.
class FreshPageLedger {
public:
    FreshVerdict claim(const Machine& machine, PhysAddr p);
    /// Shared mappings: a page already claimed as shared may be claimed
    /// again; a fresh claim marks it shared.
    FreshVerdict claim_shared(const Machine& machine, PhysAddr p);
    void release(PhysAddr p);
    bool is_shared(PhysAddr p) const { return shared_.count(page_align_down(p.value)) != 0; }
    bool held(PhysAddr p) const { return allocated_.count(page_align_down(p.value)) != 0; }
    size_t size() const { return allocated_.size(); }

private:
    FreshVerdict check_zone(const Machine& machine, PhysAddr p) const;
    std::set<uint32_t> allocated_;
    std::set<uint32_t> shared_;
};

/// Fast (vaddr -> digest) lookup built from a manifest's integrity list.
class IntegrityIndex {
public:
    IntegrityIndex() = default;
    explicit IntegrityIndex(const std::vector<std::pair<uint32_t, crypto::Digest>>& entries);
    const crypto::Digest* find(uint32_t vaddr) const;
    size_t size() const { return map_.size(); }

private:
    std::map<uint32_t, crypto::Digest> map_;
};

} // namespace shadowworlds
