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
#include "shadowworlds/types.hpp"

#include <map>
#include <optional>
#include <string>

namespace shadowworlds {

/// 256-bit per-application symmetric key. Plaintext only ever lives in the
/// secure world.
using AppKey = crypto::SymKey;

// On-disk framing: every page (meta or body) is one AE blob of
// nonce(12) || ciphertext(4096) || tag(16). Body page i starts at
// (1 + i) * kVaultBlobSize; the single leading meta page starts at 0.
constexpr uint32_t kVaultBlobSize = crypto::kNonceSize + kPageSize + crypto::kTagSize;
constexpr uint32_t kVaultMetaPages = 1;
constexpr uint32_t kVaultMaxBodyPages = 101; // meta page capacity bound
constexpr uint32_t kVaultMetaPageIndex = 0xFFFFFFFFu;

inline uint64_t vault_body_offset(uint32_t page_index) {
    return static_cast<uint64_t>(kVaultMetaPages + page_index) * kVaultBlobSize;
}

crypto::Nonce vault_nonce(uint32_t file_id, uint32_t page_index, uint64_t epoch);

enum class VaultError { None, AuthFail, HashMismatch, Replay, BadIndex, Capacity };
const char* vault_error_str(VaultError e);

struct VaultMeta {
    uint32_t file_id = 0;
    uint64_t real_length = 0;
    uint64_t last_access = 0;
    uint64_t epoch = 0; // monotone seal counter; per-page epochs are drawn from it
    struct PageRec {
        crypto::Digest hash{};
        uint64_t epoch = 0;
    };
    std::vector<PageRec> pages;

    Bytes serialize() const; // padded to one page
    static std::optional<VaultMeta> parse(const Bytes& plaintext);
};

/// One protected file: the secure-world authoritative copy of its meta plus
/// the seal/unseal primitives. Ciphertext blobs travel through the caller
/// (normal-world storage is not trusted with anything else).
class VaultFile {
public:
    VaultFile(std::string name, uint32_t file_id);

    const std::string& name() const { return name_; }
    uint32_t file_id() const { return meta_.file_id; }
    const VaultMeta& meta() const { return meta_; }
    uint32_t body_pages() const { return static_cast<uint32_t>(meta_.pages.size()); }

    /// Seals one page; page_index may extend the file by exactly one page.
    /// Updates the meta hash/epoch records. Returns the framed blob.
    Bytes seal_page(uint32_t page_index, const uint8_t* plaintext, const AppKey& key,
                    VaultError* err = nullptr);

    /// Full verification: expected nonce (replay), AE tag, then plaintext
    /// digest against the meta record.
    std::optional<Bytes> unseal_page(uint32_t page_index, const Bytes& blob, const AppKey& key,
                                     VaultError* err = nullptr) const;
    /// Tag/hash checks skipped; models the verification-disabled runtime.
    Bytes unseal_page_unchecked(const Bytes& blob, const AppKey& key) const;

    void touch(uint64_t now_seconds) { meta_.last_access = now_seconds; }
    /// real_length must stay consistent with the page count.
    bool set_real_length(uint64_t len);

    Bytes seal_meta(const AppKey& key);
    static std::optional<VaultFile> open_meta(const std::string& name, const Bytes& blob,
                                              const AppKey& key, VaultError* err = nullptr);

private:
    std::string name_;
    VaultMeta meta_;
};

/// Per-application store: the manifest's protected-file name list plus the
/// set of currently open vault files.
class VaultStore {
public:
    VaultStore() = default;
    VaultStore(std::vector<std::string> protected_names, AppKey key);

    bool is_protected(const std::string& name) const;
    const AppKey& key() const { return key_; }

    VaultFile* find(const std::string& name);
    /// Unlisted names are refused (nullptr): they fall through to ordinary
    /// file I/O. Creating an already-open file returns the existing one.
    VaultFile* create(const std::string& name);
    VaultFile* adopt(const std::string& name, const Bytes& meta_blob, VaultError* err = nullptr);

private:
    std::vector<std::string> protected_names_;
    AppKey key_{};
    std::map<std::string, VaultFile> open_;
    uint32_t next_file_id_ = 1;
};

} // namespace shadowworlds
