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

#include "shadowworlds/vault.hpp"

#include <algorithm>
#include <cstring>

namespace shadowworlds {

const char* vault_error_str(VaultError e) {
    switch (e) {
        case VaultError::None: return "none";
        case VaultError::AuthFail: return "auth_fail";
        case VaultError::HashMismatch: return "hash_mismatch";
        case VaultError::Replay: return "replay";
        case VaultError::BadIndex: return "bad_index";
        case VaultError::Capacity: return "capacity";
    }
    return "?";
}

crypto::Nonce vault_nonce(uint32_t file_id, uint32_t page_index, uint64_t epoch) {
    crypto::Nonce n{};
    for (int i = 0; i < 4; i++) n[i] = static_cast<uint8_t>(file_id >> (8 * i));
    for (int i = 0; i < 4; i++) n[4 + i] = static_cast<uint8_t>(page_index >> (8 * i));
    uint32_t e = static_cast<uint32_t>(epoch);
    for (int i = 0; i < 4; i++) n[8 + i] = static_cast<uint8_t>(e >> (8 * i));
    return n;
}

namespace {
constexpr char kMetaMagic[4] = {'H', 'V', 'M', 'T'};

void put_u32(Bytes& b, uint32_t v) {
    for (int i = 0; i < 4; i++) b.push_back(static_cast<uint8_t>(v >> (8 * i)));
}
void put_u64(Bytes& b, uint64_t v) {
    for (int i = 0; i < 8; i++) b.push_back(static_cast<uint8_t>(v >> (8 * i)));
}
uint32_t get_u32(const uint8_t* p) {
    uint32_t v = 0;
    for (int i = 0; i < 4; i++) v |= static_cast<uint32_t>(p[i]) << (8 * i);
    return v;
}
uint64_t get_u64(const uint8_t* p) {
    uint64_t v = 0;
    for (int i = 0; i < 8; i++) v |= static_cast<uint64_t>(p[i]) << (8 * i);
    return v;
}
} // namespace

Bytes VaultMeta::serialize() const {
    Bytes out;
    out.insert(out.end(), kMetaMagic, kMetaMagic + 4);
    put_u32(out, file_id);
    put_u64(out, real_length);
    put_u64(out, last_access);
    put_u64(out, epoch);
    put_u32(out, static_cast<uint32_t>(pages.size()));
    for (const auto& p : pages) {
        out.insert(out.end(), p.hash.begin(), p.hash.end());
        put_u64(out, p.epoch);
    }
    if (out.size() > kPageSize) throw ConfigError("vault meta exceeds one page");
    out.resize(kPageSize, 0);
    return out;
}

std::optional<VaultMeta> VaultMeta::parse(const Bytes& pt) {
    if (pt.size() != kPageSize || std::memcmp(pt.data(), kMetaMagic, 4) != 0) return std::nullopt;
    VaultMeta m;
    const uint8_t* p = pt.data() + 4;
    m.file_id = get_u32(p); p += 4;
    m.real_length = get_u64(p); p += 8;
    m.last_access = get_u64(p); p += 8;
    m.epoch = get_u64(p); p += 8;
    uint32_t count = get_u32(p); p += 4;
    if (count > kVaultMaxBodyPages) return std::nullopt;
    if (static_cast<size_t>(p - pt.data()) + count * 40u > kPageSize) return std::nullopt;
    for (uint32_t i = 0; i < count; i++) {
        PageRec rec;
        std::memcpy(rec.hash.data(), p, 32); p += 32;
        rec.epoch = get_u64(p); p += 8;
        m.pages.push_back(rec);
    }
    // Page-hash count tracks the real length.
    uint64_t expect = (m.real_length + kPageSize - 1) / kPageSize;
    if (expect != m.pages.size()) return std::nullopt;
    return m;
}

VaultFile::VaultFile(std::string name, uint32_t file_id) : name_(std::move(name)) {
    meta_.file_id = file_id;
}

Bytes VaultFile::seal_page(uint32_t page_index, const uint8_t* plaintext, const AppKey& key,
                           VaultError* err) {
    if (err) *err = VaultError::None;
    if (page_index > meta_.pages.size()) {
        if (err) *err = VaultError::BadIndex;
        return {};
    }
    if (page_index >= kVaultMaxBodyPages) {
        if (err) *err = VaultError::Capacity;
        return {};
    }
    uint64_t epoch = ++meta_.epoch;
    if (page_index == meta_.pages.size()) {
        meta_.pages.push_back({});
        meta_.real_length = std::max<uint64_t>(meta_.real_length,
                                               static_cast<uint64_t>(meta_.pages.size()) * kPageSize);
    }
    meta_.pages[page_index].hash = crypto::sha256(plaintext, kPageSize);
    meta_.pages[page_index].epoch = epoch;
    return crypto::ae_seal(key, vault_nonce(meta_.file_id, page_index, epoch), plaintext, kPageSize);
}

std::optional<Bytes> VaultFile::unseal_page(uint32_t page_index, const Bytes& blob,
                                            const AppKey& key, VaultError* err) const {
    if (err) *err = VaultError::None;
    if (page_index >= meta_.pages.size()) {
        if (err) *err = VaultError::BadIndex;
        return std::nullopt;
    }
    if (blob.size() != kVaultBlobSize) {
        if (err) *err = VaultError::AuthFail;
        return std::nullopt;
    }
    // Replay defense: the blob must carry exactly the nonce this page was
    // last sealed under.
    crypto::Nonce expect = vault_nonce(meta_.file_id, page_index, meta_.pages[page_index].epoch);
    if (std::memcmp(blob.data(), expect.data(), expect.size()) != 0) {
        if (err) *err = VaultError::Replay;
        return std::nullopt;
    }
    auto pt = crypto::ae_open(key, blob);
    if (!pt || pt->size() != kPageSize) {
        if (err) *err = VaultError::AuthFail;
        return std::nullopt;
    }
    if (crypto::sha256(*pt) != meta_.pages[page_index].hash) {
        if (err) *err = VaultError::HashMismatch;
        return std::nullopt;
    }
    return pt;
}

Bytes VaultFile::unseal_page_unchecked(const Bytes& blob, const AppKey& key) const {
    Bytes pt = crypto::ae_open_unchecked(key, blob);
    pt.resize(kPageSize, 0);
    return pt;
}

bool VaultFile::set_real_length(uint64_t len) {
    uint64_t expect = (len + kPageSize - 1) / kPageSize;
    if (expect != meta_.pages.size()) return false;
    meta_.real_length = len;
    return true;
}

Bytes VaultFile::seal_meta(const AppKey& key) {
    uint64_t epoch = ++meta_.epoch;
    Bytes pt = meta_.serialize();
    return crypto::ae_seal(key, vault_nonce(meta_.file_id, kVaultMetaPageIndex, epoch), pt.data(),
                           pt.size());
}

std::optional<VaultFile> VaultFile::open_meta(const std::string& name, const Bytes& blob,
                                              const AppKey& key, VaultError* err) {
    if (err) *err = VaultError::None;
    if (blob.size() != kVaultBlobSize) {
        if (err) *err = VaultError::AuthFail;
        return std::nullopt;
    }
    auto pt = crypto::ae_open(key, blob);
    if (!pt) {
        if (err) *err = VaultError::AuthFail;
        return std::nullopt;
    }
    auto meta = VaultMeta::parse(*pt);
    if (!meta) {
        if (err) *err = VaultError::AuthFail;
        return std::nullopt;
    }
    // The nonce must self-describe as this file's meta page.
    crypto::Nonce expect = vault_nonce(meta->file_id, kVaultMetaPageIndex, meta->epoch);
    if (std::memcmp(blob.data(), expect.data(), expect.size()) != 0) {
        if (err) *err = VaultError::Replay;
        return std::nullopt;
    }
    VaultFile f(name, meta->file_id);
    f.meta_ = *meta;
    return f;
}

VaultStore::VaultStore(std::vector<std::string> protected_names, AppKey key)
    : protected_names_(std::move(protected_names)), key_(key) {}

bool VaultStore::is_protected(const std::string& name) const {
    return std::find(protected_names_.begin(), protected_names_.end(), name) !=
           protected_names_.end();
}

VaultFile* VaultStore::find(const std::string& name) {
    auto it = open_.find(name);
    return it == open_.end() ? nullptr : &it->second;
}

VaultFile* VaultStore::create(const std::string& name) {
    if (!is_protected(name)) return nullptr;
    auto it = open_.find(name);
    if (it != open_.end()) return &it->second;
    uint32_t id = next_file_id_++;
    auto [pos, _] = open_.emplace(name, VaultFile(name, id));
    return &pos->second;
}

VaultFile* VaultStore::adopt(const std::string& name, const Bytes& meta_blob, VaultError* err) {
    if (!is_protected(name)) return nullptr;
    auto it = open_.find(name);
    if (it != open_.end()) return &it->second;
    auto f = VaultFile::open_meta(name, meta_blob, key_, err);
    if (!f) return nullptr;
    next_file_id_ = std::max(next_file_id_, f->file_id() + 1);
    auto [pos, _] = open_.emplace(name, std::move(*f));
    return &pos->second;
}

} // namespace shadowworlds
