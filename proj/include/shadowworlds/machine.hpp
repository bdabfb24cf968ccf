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
#include "shadowworlds/trace.hpp"
#include "shadowworlds/types.hpp"

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace shadowworlds {

enum class ZoneName { ZONE_NORMAL, ZONE_TZ_RT, ZONE_TZ_APP };
enum class ZoneSecurity { Secure, Nonsecure };

const char* zone_name_str(ZoneName n);

/// One physical memory region gated by the emulated address-space controller.
struct Zone {
    ZoneName name;
    PhysAddr base;
    uint32_t length = 0; // bytes, page multiple
    ZoneSecurity security;

    bool contains(PhysAddr a) const {
        return a.value >= base.value && a.value - base.value < length;
    }
    bool contains_range(PhysAddr a, uint32_t len) const {
        return contains(a) && len <= length - (a.value - base.value);
    }
};

struct ZoneConfig {
    std::vector<Zone> zones;
    bool locked = false;
};

/// Default layout: 768 MiB normal, 16 MiB runtime, 240 MiB app (1 GiB board).
ZoneConfig default_zone_config();

/// Parses "name base_hex length_hex" lines, one zone per line. Blank lines
/// and '#' comments ignored.
ZoneConfig parse_zone_config(const std::string& text);

enum class SwitchReason {
    Boot,
    SvcForward,
    AbortForward,
    UndefForward,
    SignalDelivery,
    BootHandoff,
    HapStart,
};
const char* switch_reason_str(SwitchReason r);

/// The simulated SoC: zoned byte-addressable memory, the world flag, the
/// architectural register file, and a lockable zone-permission table.
///
/// Access semantics follow the address-space controller model: a normal-world
/// read of a secure zone returns zeros and a normal-world write to one is
/// silently dropped. Violations are not faults; they proceed silently.
class Machine {
public:
    Machine(ZoneConfig config, uint32_t page_size, Trace* trace, Metrics* metrics);

    uint32_t page_size() const { return page_size_; }
    const ZoneConfig& config() const { return config_; }
    WorldState world() const { return world_; }
    RegisterFile& regs() { return regs_; }
    const RegisterFile& regs() const { return regs_; }

    const Zone* zone_of(PhysAddr a) const;
    const Zone* zone_named(ZoneName n) const;

    /// Secure-world-only; from the normal world a permission fault is
    /// recorded and the configuration is left unchanged.
    bool zone_lock();
    bool zones_locked() const { return config_.locked; }
    /// Fails (returns false) once the configuration is locked.
    bool zone_reconfigure(ZoneConfig config);

    Bytes phys_read(PhysAddr addr, uint32_t len, WorldState world) const;
    void phys_write(PhysAddr addr, const uint8_t* data, uint32_t len, WorldState world);
    void phys_write(PhysAddr addr, const Bytes& data, WorldState world) {
        phys_write(addr, data.data(), static_cast<uint32_t>(data.size()), world);
    }
    uint32_t phys_read_u32(PhysAddr addr, WorldState world) const;
    void phys_write_u32(PhysAddr addr, uint32_t value, WorldState world);

    /// Secure-world page primitives used by the runtime. Counted in metrics.
    void zero_page(PhysAddr page);
    void copy_page(PhysAddr dst, PhysAddr src);

    /// All transitions go through monitor; a direct secure<->normal switch is
    /// a simulator bug and throws.
    void world_switch(WorldState target, SwitchReason reason);

    uint64_t bus_faults() const { return bus_faults_; }
    uint64_t permission_faults() const { return permission_faults_; }

    /// Digest over the stored contents of one zone (order-stable, includes
    /// page indices so moved bytes change the digest).
    crypto::Digest zone_digest(ZoneName n) const;

    /// Raw backing-store access for the taint shadow / scrape scanner.
    /// Returns nullptr for never-materialized pages (all zeros).
    const uint8_t* backing_page(PhysAddr page) const;
    std::vector<PhysAddr> materialized_pages() const;

private:
    ZoneConfig config_;
    uint32_t page_size_;
    WorldState world_ = WorldState::Secure; // boot starts secure
    WorldState pre_monitor_ = WorldState::Secure;
    RegisterFile regs_;
    std::map<uint32_t, std::unique_ptr<uint8_t[]>> pages_; // page base -> bytes
    Trace* trace_;
    Metrics* metrics_;
    uint64_t bus_faults_ = 0;
    uint64_t permission_faults_ = 0;

    uint8_t* page_for_write(uint32_t page_base);
    bool readable(const Zone& z, WorldState w) const {
        return w != WorldState::Normal || z.security == ZoneSecurity::Nonsecure;
    }
};

void validate_zone_config(const ZoneConfig& config, uint32_t page_size);

} // namespace shadowworlds
