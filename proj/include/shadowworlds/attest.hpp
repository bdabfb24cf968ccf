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
#include "shadowworlds/guest.hpp"
#include "shadowworlds/machine.hpp"
#include "shadowworlds/vault.hpp"

#include <map>
#include <optional>
#include <string>

namespace shadowworlds {

/// Per-device key material. One seed derives the signing pair, the wrap pair
/// and the zeroizable master key; the API keeps the roles separate so a real
/// deployment can split them.
struct DeviceKeys {
    crypto::SigningKey sign;
    crypto::WrapKey wrap;
    crypto::SymKey zmk{};

    static DeviceKeys from_seed(const std::array<uint8_t, 32>& seed);
};

struct DevicePublic {
    std::array<uint8_t, crypto::kPubKeySize> verify_key{};
    std::array<uint8_t, crypto::kPubKeySize> wrap_key{};
};
DevicePublic device_public(const DeviceKeys& keys);

/// "HKEY" keys file: the 32-byte device seed.
Bytes keys_serialize(const std::array<uint8_t, 32>& seed);
std::array<uint8_t, 32> keys_parse(const Bytes& data);
DeviceKeys keys_load(const std::string& path);

struct IntegrityEntry {
    uint32_t vaddr;
    crypto::Digest hash;
};

struct LibraryHashList {
    std::string name;
    std::vector<std::pair<uint32_t, crypto::Digest>> entries; // (offset, hash), sorted
};

struct Manifest {
    Bytes app_key_wrapped;
    std::vector<IntegrityEntry> integrity_list; // sorted by vaddr
    std::vector<LibraryHashList> library_lists;
    std::vector<std::string> protected_files;
    std::array<uint8_t, crypto::kSigSize> signature{};
};

/// Canonical serialization of everything the signature covers.
Bytes manifest_canonical_bytes(const Manifest& m);
Bytes manifest_serialize(const Manifest& m); // canonical bytes + signature
Manifest manifest_parse(const Bytes& data);  // throws ParseError
Manifest manifest_load(const std::string& path);

/// Per-page digests over a library file's pages (zero-padded tail).
LibraryHashList build_library_hash_list(const std::string& name, const Bytes& file);

/// Hashes every loadable page of the image keyed by vaddr, wraps the app key
/// to the device, signs the result.
Manifest manifest_build(const GuestImage& image, const std::vector<std::string>& protected_files,
                        const std::vector<LibraryHashList>& libraries, const AppKey& app_key,
                        const DeviceKeys& device, crypto::Csprng& rng);

bool manifest_verify(const Manifest& m, const DevicePublic& pub);
std::optional<AppKey> manifest_unwrap_app_key(const Manifest& m, const DeviceKeys& device);

/// Signed runtime image: payload_len || payload || pubkey || signature.
Bytes make_runtime_image(const Bytes& payload, const DeviceKeys& device);
/// Boot-ROM check: the embedded pubkey must hash to the fused digest and
/// the signature must verify over the payload.
bool verify_runtime_image(const Bytes& image, const crypto::Digest& fused_pub_digest);

Bytes seal_device_seed(const crypto::SymKey& zmk, const std::array<uint8_t, 32>& seed);
std::optional<std::array<uint8_t, 32>> unseal_device_seed(const crypto::SymKey& zmk,
                                                          const Bytes& blob);

/// Secrets the SoC itself holds: the fused hash of the verification key and
/// the zeroizable master key. Only the secure world can read the zmk.
struct BoardSecrets {
    crypto::Digest fused_pub_digest{};
    crypto::SymKey zmk{};
};

struct ManifestStore {
    std::map<std::string, Manifest> manifests; // name -> manifest (untrusted until verified)
};

struct BootResult {
    bool ok = false;
    std::string halt_reason;
    DeviceKeys keys;           // unsealed, secure-world only
    ManifestStore manifests;   // installed (still verified per use)
    std::vector<LibraryHashList> library_lists; // aggregated at boot
};

/// The six-step boot chain. Leaves the machine in the normal world with
/// zones locked on success; on failure the machine halts where it stood.
BootResult boot_sequence(Machine& machine, const BoardSecrets& board, const Bytes& runtime_image,
                         const Bytes& sealed_keys, const ManifestStore& store, Trace* trace);

} // namespace shadowworlds
