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

#include "shadowworlds/machine.hpp"

#include <algorithm>
#include <cstring>
#include <sstream>

namespace shadowworlds {

const char* zone_name_str(ZoneName n) {
    switch (n) {
        case ZoneName::ZONE_NORMAL: return "ZONE_NORMAL";
        case ZoneName::ZONE_TZ_RT: return "ZONE_TZ_RT";
        case ZoneName::ZONE_TZ_APP: return "ZONE_TZ_APP";
    }
    return "?";
}

const char* switch_reason_str(SwitchReason r) {
    switch (r) {
        case SwitchReason::Boot: return "boot";
        case SwitchReason::SvcForward: return "svc_forward";
        case SwitchReason::AbortForward: return "abort_forward";
        case SwitchReason::UndefForward: return "undef_forward";
        case SwitchReason::SignalDelivery: return "signal_delivery";
        case SwitchReason::BootHandoff: return "boot_handoff";
        case SwitchReason::HapStart: return "hap_start";
    }
    return "?";
}

ZoneConfig default_zone_config() {
    ZoneConfig c;
    c.zones = {
        {ZoneName::ZONE_NORMAL, PhysAddr(0x00000000), 768u << 20, ZoneSecurity::Nonsecure},
        {ZoneName::ZONE_TZ_RT, PhysAddr(0x30000000), 16u << 20, ZoneSecurity::Secure},
        {ZoneName::ZONE_TZ_APP, PhysAddr(0x31000000), 240u << 20, ZoneSecurity::Secure},
    };
    return c;
}

ZoneConfig parse_zone_config(const std::string& text) {
    ZoneConfig c;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string name, base_s, len_s;
        if (!(ls >> name)) continue;
        if (!(ls >> base_s >> len_s)) throw ParseError("zone line needs: name base length");
        ZoneName zn;
        if (name == "ZONE_NORMAL") zn = ZoneName::ZONE_NORMAL;
        else if (name == "ZONE_TZ_RT") zn = ZoneName::ZONE_TZ_RT;
        else if (name == "ZONE_TZ_APP") zn = ZoneName::ZONE_TZ_APP;
        else throw ParseError("unknown zone name: " + name);
        uint32_t base = static_cast<uint32_t>(std::stoul(base_s, nullptr, 0));
        uint32_t len = static_cast<uint32_t>(std::stoul(len_s, nullptr, 0));
        ZoneSecurity sec = (zn == ZoneName::ZONE_NORMAL) ? ZoneSecurity::Nonsecure : ZoneSecurity::Secure;
        c.zones.push_back({zn, PhysAddr(base), len, sec});
    }
    return c;
}

void validate_zone_config(const ZoneConfig& config, uint32_t page_size) {
    if (page_size == 0 || (page_size & (page_size - 1)) != 0)
        throw ConfigError("page size must be a power of two");
    if (config.zones.empty()) throw ConfigError("no zones configured");
    for (const auto& z : config.zones) {
        if (z.length == 0 || z.length % page_size != 0)
            throw ConfigError(std::string(zone_name_str(z.name)) + ": length not a page multiple");
        if (z.base.value % page_size != 0)
            throw ConfigError(std::string(zone_name_str(z.name)) + ": base not page aligned");
        uint64_t end = static_cast<uint64_t>(z.base.value) + z.length;
        if (end > (1ull << 32))
            throw ConfigError(std::string(zone_name_str(z.name)) + ": zone exceeds address space");
        bool want_secure = z.name != ZoneName::ZONE_NORMAL;
        if (want_secure != (z.security == ZoneSecurity::Secure))
            throw ConfigError(std::string(zone_name_str(z.name)) + ": wrong security attribute");
    }
    for (size_t i = 0; i < config.zones.size(); i++) {
        for (size_t j = i + 1; j < config.zones.size(); j++) {
            const Zone& a = config.zones[i];
            const Zone& b = config.zones[j];
            if (a.name == b.name) throw ConfigError("duplicate zone name");
            uint64_t a_end = static_cast<uint64_t>(a.base.value) + a.length;
            uint64_t b_end = static_cast<uint64_t>(b.base.value) + b.length;
            if (a.base.value < b_end && b.base.value < a_end)
                throw ConfigError("zones overlap");
        }
    }
}

Machine::Machine(ZoneConfig config, uint32_t page_size, Trace* trace, Metrics* metrics)
    : config_(std::move(config)), page_size_(page_size), trace_(trace), metrics_(metrics) {
    validate_zone_config(config_, page_size_);
    config_.locked = false;
}

const Zone* Machine::zone_of(PhysAddr a) const {
    for (const auto& z : config_.zones)
        if (z.contains(a)) return &z;
    return nullptr;
}

const Zone* Machine::zone_named(ZoneName n) const {
    for (const auto& z : config_.zones)
        if (z.name == n) return &z;
    return nullptr;
}

bool Machine::zone_lock() {
    if (world_ != WorldState::Secure) {
        permission_faults_++;
        if (trace_) trace_->append("PermFault", "op=zone_lock world=" + std::string(world_name(world_)));
        return false;
    }
    config_.locked = true;
    if (trace_) trace_->append("ZoneLock", "");
    return true;
}

bool Machine::zone_reconfigure(ZoneConfig config) {
    if (config_.locked || world_ != WorldState::Secure) {
        permission_faults_++;
        if (trace_) trace_->append("PermFault", "op=zone_reconfigure");
        return false;
    }
    validate_zone_config(config, page_size_);
    bool was_locked = config_.locked;
    config_ = std::move(config);
    config_.locked = was_locked;
    return true;
}

uint8_t* Machine::page_for_write(uint32_t page_base) {
    auto it = pages_.find(page_base);
    if (it == pages_.end()) {
        auto buf = std::make_unique<uint8_t[]>(page_size_);
        std::memset(buf.get(), 0, page_size_);
        it = pages_.emplace(page_base, std::move(buf)).first;
    }
    return it->second.get();
}

Bytes Machine::phys_read(PhysAddr addr, uint32_t len, WorldState world) const {
    Bytes out(len, 0);
    const Zone* z = zone_of(addr);
    if (!z || !z->contains_range(addr, len)) {
        const_cast<Machine*>(this)->bus_faults_++;
        if (trace_) trace_->append("BusFault", "op=read addr=" + hex_u32(addr.value));
        return out;
    }
    if (!readable(*z, world)) return out; // reads as zeros
    uint32_t pos = addr.value;
    uint32_t remaining = len;
    uint8_t* dst = out.data();
    while (remaining > 0) {
        uint32_t page_base = pos & ~(page_size_ - 1);
        uint32_t off = pos - page_base;
        uint32_t take = std::min(remaining, page_size_ - off);
        auto it = pages_.find(page_base);
        if (it != pages_.end()) std::memcpy(dst, it->second.get() + off, take);
        pos += take;
        dst += take;
        remaining -= take;
    }
    return out;
}

void Machine::phys_write(PhysAddr addr, const uint8_t* data, uint32_t len, WorldState world) {
    const Zone* z = zone_of(addr);
    if (!z || !z->contains_range(addr, len)) {
        bus_faults_++;
        if (trace_) trace_->append("BusFault", "op=write addr=" + hex_u32(addr.value));
        return;
    }
    if (world == WorldState::Normal && z->security == ZoneSecurity::Secure) return; // dropped
    uint32_t pos = addr.value;
    uint32_t remaining = len;
    const uint8_t* src = data;
    while (remaining > 0) {
        uint32_t page_base = pos & ~(page_size_ - 1);
        uint32_t off = pos - page_base;
        uint32_t take = std::min(remaining, page_size_ - off);
        std::memcpy(page_for_write(page_base) + off, src, take);
        pos += take;
        src += take;
        remaining -= take;
    }
}

uint32_t Machine::phys_read_u32(PhysAddr addr, WorldState world) const {
    Bytes b = phys_read(addr, 4, world);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void Machine::phys_write_u32(PhysAddr addr, uint32_t value, WorldState world) {
    uint8_t b[4] = {static_cast<uint8_t>(value), static_cast<uint8_t>(value >> 8),
                    static_cast<uint8_t>(value >> 16), static_cast<uint8_t>(value >> 24)};
    phys_write(addr, b, 4, world);
}

void Machine::zero_page(PhysAddr page) {
    std::memset(page_for_write(page.value & ~(page_size_ - 1)), 0, page_size_);
    if (metrics_) metrics_->page_zeroizations++;
    if (trace_) trace_->append("ZeroPage", "page=" + hex_u32(page.value));
}

void Machine::copy_page(PhysAddr dst, PhysAddr src) {
    Bytes data = phys_read(src, page_size_, WorldState::Secure);
    phys_write(dst, data, WorldState::Secure);
    if (metrics_) metrics_->page_copies++;
    if (trace_) trace_->append("CopyPage", "dst=" + hex_u32(dst.value) + " src=" + hex_u32(src.value));
}

void Machine::world_switch(WorldState target, SwitchReason reason) {
    if (target == world_) return;
    if (world_ != WorldState::Monitor && target != WorldState::Monitor)
        throw std::logic_error("world switch must pass through monitor");
    if (world_ != WorldState::Monitor) pre_monitor_ = world_;
    WorldState from = world_;
    world_ = target;
    if (trace_)
        trace_->append("WorldSwitch", format_fields({{"from", world_name(from)},
                                                     {"to", world_name(target)},
                                                     {"reason", switch_reason_str(reason)}}));
    // Metric counts completed secure<->normal crossings, not monitor hops.
    if (metrics_ && from == WorldState::Monitor && target != pre_monitor_)
        metrics_->world_switches++;
}

crypto::Digest Machine::zone_digest(ZoneName n) const {
    const Zone* z = zone_named(n);
    if (!z) throw ConfigError("no such zone");
    Bytes material;
    for (const auto& [base, buf] : pages_) {
        if (!z->contains(PhysAddr(base))) continue;
        for (int i = 0; i < 4; i++) material.push_back(static_cast<uint8_t>(base >> (8 * i)));
        material.insert(material.end(), buf.get(), buf.get() + page_size_);
    }
    return crypto::sha256(material);
}

const uint8_t* Machine::backing_page(PhysAddr page) const {
    auto it = pages_.find(page.value & ~(page_size_ - 1));
    return it == pages_.end() ? nullptr : it->second.get();
}

std::vector<PhysAddr> Machine::materialized_pages() const {
    std::vector<PhysAddr> out;
    out.reserve(pages_.size());
    for (const auto& [base, _] : pages_) out.push_back(PhysAddr(base));
    return out;
}

} // namespace shadowworlds
