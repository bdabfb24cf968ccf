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

#include "shadowworlds/paging.hpp"

namespace shadowworlds {

const char* fresh_verdict_str(FreshVerdict v) {
    switch (v) {
        case FreshVerdict::Ok: return "ok";
        case FreshVerdict::NotAligned: return "not_aligned";
        case FreshVerdict::OutsideZone: return "outside_zone";
        case FreshVerdict::NotFresh: return "not_fresh";
    }
    return "?";
}

FreshVerdict FreshPageLedger::check_zone(const Machine& machine, PhysAddr p) const {
    if (!is_page_aligned(p.value)) return FreshVerdict::NotAligned;
    const Zone* z = machine.zone_of(p);
    if (!z || z->name != ZoneName::ZONE_TZ_APP ||
        !z->contains_range(p, machine.page_size()))
        return FreshVerdict::OutsideZone;
    return FreshVerdict::Ok;
}

FreshVerdict FreshPageLedger::claim(const Machine& machine, PhysAddr p) {
    FreshVerdict v = check_zone(machine, p);
    if (v != FreshVerdict::Ok) return v;
    if (allocated_.count(p.value)) return FreshVerdict::NotFresh;
    allocated_.insert(p.value);
    return FreshVerdict::Ok;
}

FreshVerdict FreshPageLedger::claim_shared(const Machine& machine, PhysAddr p) {
    FreshVerdict v = check_zone(machine, p);
    if (v != FreshVerdict::Ok) return v;
    if (allocated_.count(p.value)) {
        if (!shared_.count(p.value)) return FreshVerdict::NotFresh;
        return FreshVerdict::Ok;
    }
    allocated_.insert(p.value);
    shared_.insert(p.value);
    return FreshVerdict::Ok;
}

void FreshPageLedger::release(PhysAddr p) {
    allocated_.erase(page_align_down(p.value));
    shared_.erase(page_align_down(p.value));
}

IntegrityIndex::IntegrityIndex(const std::vector<std::pair<uint32_t, crypto::Digest>>& entries) {
    for (const auto& [vaddr, hash] : entries) map_[vaddr] = hash;
}

const crypto::Digest* IntegrityIndex::find(uint32_t vaddr) const {
    auto it = map_.find(vaddr);
    return it == map_.end() ? nullptr : &it->second;
}

} // namespace shadowworlds
