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

#include "shadowworlds/attest.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

namespace shadowworlds {

namespace {

void put_u32(Bytes& b, uint32_t v) {
    for (int i = 0; i < 4; i++) b.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

std::array<uint8_t, 32> derive(const std::array<uint8_t, 32>& seed, const char* label) {
    Bytes material(seed.begin(), seed.end());
    for (const char* p = label; *p; p++) material.push_back(static_cast<uint8_t>(*p));
    crypto::Digest d = crypto::sha256(material);
    std::array<uint8_t, 32> out{};
    std::memcpy(out.data(), d.data(), 32);
    return out;
}

struct Cursor {
    const uint8_t* p;
    const uint8_t* end;
    bool ok = true;
    uint32_t u32() {
        if (end - p < 4) { ok = false; return 0; }
        uint32_t v = 0;
        for (int i = 0; i < 4; i++) v |= static_cast<uint32_t>(p[i]) << (8 * i);
        p += 4;
        return v;
    }
    Bytes bytes(size_t n) {
        if (static_cast<size_t>(end - p) < n) { ok = false; return {}; }
        Bytes out(p, p + n);
        p += n;
        return out;
    }
};

constexpr char kManifestMagic[4] = {'H', 'A', 'P', 'M'};
constexpr char kKeysMagic[4] = {'H', 'K', 'E', 'Y'};
constexpr uint32_t kManifestVersion = 1;

} // namespace

DeviceKeys DeviceKeys::from_seed(const std::array<uint8_t, 32>& seed) {
    DeviceKeys k;
    k.sign = crypto::signing_key_from_seed(derive(seed, "sig"));
    k.wrap = crypto::wrap_key_from_seed(derive(seed, "wrap"));
    auto z = derive(seed, "zmk");
    std::memcpy(k.zmk.data(), z.data(), z.size());
    return k;
}

DevicePublic device_public(const DeviceKeys& keys) {
    return {keys.sign.public_key, keys.wrap.public_key};
}

Bytes keys_serialize(const std::array<uint8_t, 32>& seed) {
    Bytes out(kKeysMagic, kKeysMagic + 4);
    put_u32(out, 1);
    out.insert(out.end(), seed.begin(), seed.end());
    return out;
}

std::array<uint8_t, 32> keys_parse(const Bytes& data) {
    if (data.size() != 4 + 4 + 32 || std::memcmp(data.data(), kKeysMagic, 4) != 0)
        throw ParseError("bad keys file");
    std::array<uint8_t, 32> seed{};
    std::memcpy(seed.data(), data.data() + 8, 32);
    return seed;
}

DeviceKeys keys_load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open keys file: " + path);
    Bytes data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return DeviceKeys::from_seed(keys_parse(data));
}

Bytes manifest_canonical_bytes(const Manifest& m) {
    Bytes out(kManifestMagic, kManifestMagic + 4);
    put_u32(out, kManifestVersion);
    put_u32(out, static_cast<uint32_t>(m.app_key_wrapped.size()));
    out.insert(out.end(), m.app_key_wrapped.begin(), m.app_key_wrapped.end());
    put_u32(out, static_cast<uint32_t>(m.integrity_list.size()));
    for (const auto& e : m.integrity_list) {
        put_u32(out, e.vaddr);
        out.insert(out.end(), e.hash.begin(), e.hash.end());
    }
    put_u32(out, static_cast<uint32_t>(m.library_lists.size()));
    for (const auto& lib : m.library_lists) {
        put_u32(out, static_cast<uint32_t>(lib.name.size()));
        out.insert(out.end(), lib.name.begin(), lib.name.end());
        put_u32(out, static_cast<uint32_t>(lib.entries.size()));
        for (const auto& [off, h] : lib.entries) {
            put_u32(out, off);
            out.insert(out.end(), h.begin(), h.end());
        }
    }
    put_u32(out, static_cast<uint32_t>(m.protected_files.size()));
    for (const auto& name : m.protected_files) {
        put_u32(out, static_cast<uint32_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
    }
    return out;
}

Bytes manifest_serialize(const Manifest& m) {
    Bytes out = manifest_canonical_bytes(m);
    out.insert(out.end(), m.signature.begin(), m.signature.end());
    return out;
}

Manifest manifest_parse(const Bytes& data) {
    if (data.size() < 4 + 4 + crypto::kSigSize) throw ParseError("manifest too short");
    Cursor c{data.data(), data.data() + data.size() - crypto::kSigSize};
    Bytes magic = c.bytes(4);
    if (!c.ok || std::memcmp(magic.data(), kManifestMagic, 4) != 0)
        throw ParseError("bad manifest magic");
    if (c.u32() != kManifestVersion) throw ParseError("unsupported manifest version");
    Manifest m;
    uint32_t wlen = c.u32();
    if (wlen > 4096) throw ParseError("wrapped key too large");
    m.app_key_wrapped = c.bytes(wlen);
    uint32_t n = c.u32();
    if (n > 1u << 20) throw ParseError("integrity list too large");
    for (uint32_t i = 0; i < n; i++) {
        IntegrityEntry e;
        e.vaddr = c.u32();
        Bytes h = c.bytes(crypto::kDigestSize);
        if (!c.ok) throw ParseError("truncated manifest");
        std::memcpy(e.hash.data(), h.data(), h.size());
        m.integrity_list.push_back(e);
    }
    uint32_t nlib = c.u32();
    if (nlib > 64) throw ParseError("too many library lists");
    for (uint32_t i = 0; i < nlib; i++) {
        LibraryHashList lib;
        uint32_t nl = c.u32();
        if (nl > 256) throw ParseError("library name too long");
        Bytes nm = c.bytes(nl);
        lib.name.assign(nm.begin(), nm.end());
        uint32_t ne = c.u32();
        if (ne > 1u << 20) throw ParseError("library list too large");
        for (uint32_t j = 0; j < ne; j++) {
            uint32_t off = c.u32();
            Bytes h = c.bytes(crypto::kDigestSize);
            if (!c.ok) throw ParseError("truncated manifest");
            crypto::Digest d;
            std::memcpy(d.data(), h.data(), h.size());
            lib.entries.emplace_back(off, d);
        }
        m.library_lists.push_back(std::move(lib));
    }
    uint32_t np = c.u32();
    if (np > 1024) throw ParseError("too many protected files");
    for (uint32_t i = 0; i < np; i++) {
        uint32_t nl = c.u32();
        if (nl > 1024) throw ParseError("protected name too long");
        Bytes nm = c.bytes(nl);
        m.protected_files.emplace_back(nm.begin(), nm.end());
    }
    if (!c.ok || c.p != c.end) throw ParseError("malformed manifest");
    std::memcpy(m.signature.data(), data.data() + data.size() - crypto::kSigSize,
                crypto::kSigSize);
    return m;
}

Manifest manifest_load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open manifest: " + path);
    Bytes data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return manifest_parse(data);
}

namespace {

crypto::Digest page_digest(const Bytes& content, size_t offset) {
    uint8_t page[kPageSize] = {0};
    if (offset < content.size()) {
        size_t n = std::min<size_t>(kPageSize, content.size() - offset);
        std::memcpy(page, content.data() + offset, n);
    }
    return crypto::sha256(page, kPageSize);
}

} // namespace

LibraryHashList build_library_hash_list(const std::string& name, const Bytes& file) {
    LibraryHashList lib;
    lib.name = name;
    uint32_t pages = static_cast<uint32_t>(page_align_up(static_cast<uint32_t>(file.size()))) / kPageSize;
    if (pages == 0) pages = 1;
    for (uint32_t i = 0; i < pages; i++)
        lib.entries.emplace_back(i * kPageSize, page_digest(file, static_cast<size_t>(i) * kPageSize));
    return lib;
}

Manifest manifest_build(const GuestImage& image, const std::vector<std::string>& protected_files,
                        const std::vector<LibraryHashList>& libraries, const AppKey& app_key,
                        const DeviceKeys& device, crypto::Csprng& rng) {
    Manifest m;
    std::array<uint8_t, 32> eph{};
    rng.fill(eph.data(), eph.size());
    Bytes secret(app_key.begin(), app_key.end());
    m.app_key_wrapped = crypto::wrap_secret(device.wrap.public_key, eph, secret);
    for (const auto& seg : image.segments) {
        uint32_t pages = page_align_up(seg.mem_len) / kPageSize;
        for (uint32_t i = 0; i < pages; i++)
            m.integrity_list.push_back(
                {seg.vaddr.value + i * kPageSize, page_digest(seg.content, static_cast<size_t>(i) * kPageSize)});
    }
    std::sort(m.integrity_list.begin(), m.integrity_list.end(),
              [](const IntegrityEntry& a, const IntegrityEntry& b) { return a.vaddr < b.vaddr; });
    m.library_lists = libraries;
    for (auto& lib : m.library_lists)
        std::sort(lib.entries.begin(), lib.entries.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
    m.protected_files = protected_files;
    m.signature = crypto::sign(device.sign, manifest_canonical_bytes(m));
    return m;
}

bool manifest_verify(const Manifest& m, const DevicePublic& pub) {
    return crypto::verify(pub.verify_key, manifest_canonical_bytes(m), m.signature);
}

std::optional<AppKey> manifest_unwrap_app_key(const Manifest& m, const DeviceKeys& device) {
    auto secret = crypto::unwrap_secret(device.wrap, m.app_key_wrapped);
    if (!secret || secret->size() != crypto::kSymKeySize) return std::nullopt;
    AppKey k{};
    std::memcpy(k.data(), secret->data(), k.size());
    return k;
}

Bytes make_runtime_image(const Bytes& payload, const DeviceKeys& device) {
    Bytes out;
    put_u32(out, static_cast<uint32_t>(payload.size()));
    out.insert(out.end(), payload.begin(), payload.end());
    out.insert(out.end(), device.sign.public_key.begin(), device.sign.public_key.end());
    auto sig = crypto::sign(device.sign, payload);
    out.insert(out.end(), sig.begin(), sig.end());
    return out;
}

bool verify_runtime_image(const Bytes& image, const crypto::Digest& fused_pub_digest) {
    if (image.size() < 4 + crypto::kPubKeySize + crypto::kSigSize) return false;
    Cursor c{image.data(), image.data() + image.size()};
    uint32_t plen = c.u32();
    if (!c.ok || image.size() != 4u + plen + crypto::kPubKeySize + crypto::kSigSize) return false;
    Bytes payload = c.bytes(plen);
    std::array<uint8_t, crypto::kPubKeySize> pub{};
    Bytes pb = c.bytes(crypto::kPubKeySize);
    std::memcpy(pub.data(), pb.data(), pb.size());
    std::array<uint8_t, crypto::kSigSize> sig{};
    Bytes sb = c.bytes(crypto::kSigSize);
    std::memcpy(sig.data(), sb.data(), sb.size());
    Bytes pubbytes(pub.begin(), pub.end());
    if (crypto::sha256(pubbytes) != fused_pub_digest) return false;
    return crypto::verify(pub, payload, sig);
}

Bytes seal_device_seed(const crypto::SymKey& zmk, const std::array<uint8_t, 32>& seed) {
    // One sealing per device lifetime; a fixed-derivation nonce is fine.
    crypto::Digest d = crypto::sha256(reinterpret_cast<const uint8_t*>("device-seal"), 11);
    crypto::Nonce n{};
    std::memcpy(n.data(), d.data(), n.size());
    return crypto::ae_seal(zmk, n, seed.data(), seed.size());
}

std::optional<std::array<uint8_t, 32>> unseal_device_seed(const crypto::SymKey& zmk,
                                                          const Bytes& blob) {
    auto pt = crypto::ae_open(zmk, blob);
    if (!pt || pt->size() != 32) return std::nullopt;
    std::array<uint8_t, 32> seed{};
    std::memcpy(seed.data(), pt->data(), 32);
    return seed;
}

BootResult boot_sequence(Machine& machine, const BoardSecrets& board, const Bytes& runtime_image,
                         const Bytes& sealed_keys, const ManifestStore& store, Trace* trace) {
    BootResult r;
    auto step = [&](int n, const std::string& what) {
        if (trace) trace->append("BootStep", "n=" + std::to_string(n) + " what=" + what);
    };
    auto halt = [&](const std::string& why) {
        if (trace) trace->append("BootHalt", "reason=" + why);
        r.ok = false;
        r.halt_reason = why;
        return r;
    };

    // 1. Boot ROM verifies the runtime image against the fused key digest.
    step(1, "rom_verify");
    if (!verify_runtime_image(runtime_image, board.fused_pub_digest))
        return halt("RuntimeImageRejected");

    // 2. Runtime configures and locks the zone policy.
    step(2, "zone_lock");
    if (machine.world() != WorldState::Secure) return halt("BootNotSecure");
    if (!machine.zone_lock()) return halt("ZoneLockFailed");

    // 3. Hand off to the normal world (uboot -> Linux).
    step(3, "normal_world_start");
    machine.world_switch(WorldState::Monitor, SwitchReason::BootHandoff);
    machine.world_switch(WorldState::Normal, SwitchReason::BootHandoff);

    // 4. The OS returns the sealed key pair and the manifests.
    step(4, "keys_and_manifests");
    machine.world_switch(WorldState::Monitor, SwitchReason::BootHandoff);
    machine.world_switch(WorldState::Secure, SwitchReason::BootHandoff);

    // 5. Unseal the device key pair with the zeroizable master key.
    step(5, "unseal_keys");
    auto seed = unseal_device_seed(board.zmk, sealed_keys);
    if (!seed) return halt("KeyUnsealFailed");
    r.keys = DeviceKeys::from_seed(*seed);
    Bytes pubbytes(r.keys.sign.public_key.begin(), r.keys.sign.public_key.end());
    if (crypto::sha256(pubbytes) != board.fused_pub_digest) return halt("KeyFuseMismatch");
    r.manifests = store;
    for (const auto& [name, m] : store.manifests)
        for (const auto& lib : m.library_lists) r.library_lists.push_back(lib);

    // 6. Control returns to the OS.
    step(6, "return_to_os");
    machine.world_switch(WorldState::Monitor, SwitchReason::BootHandoff);
    machine.world_switch(WorldState::Normal, SwitchReason::BootHandoff);
    r.ok = true;
    return r;
}

} // namespace shadowworlds
