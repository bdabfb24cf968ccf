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

#include "shadowworlds/types.hpp"

#include <array>
#include <cstdint>
#include <optional>

namespace shadowworlds::crypto {

constexpr size_t kDigestSize = 32;
constexpr size_t kSymKeySize = 32;
constexpr size_t kNonceSize = 12;
constexpr size_t kTagSize = 16;
constexpr size_t kSigSize = 64;
constexpr size_t kPubKeySize = 32;

using Digest = std::array<uint8_t, kDigestSize>;
using SymKey = std::array<uint8_t, kSymKeySize>;
using Nonce = std::array<uint8_t, kNonceSize>;

Digest sha256(const uint8_t* data, size_t len);
Digest sha256(const Bytes& data);

/// AES-256-GCM. Output framing is nonce || ciphertext || tag.
Bytes ae_seal(const SymKey& key, const Nonce& nonce, const uint8_t* pt, size_t len);
/// Returns plaintext, or nullopt on authentication failure / malformed blob.
std::optional<Bytes> ae_open(const SymKey& key, const Bytes& blob);
/// Test-only escape hatch: decrypt ignoring the authentication tag. Models a
/// verification-disabled runtime for attack-sensitivity checks.
Bytes ae_open_unchecked(const SymKey& key, const Bytes& blob);

/// Ed25519 signing pair, derived deterministically from a 32-byte seed.
struct SigningKey {
    std::array<uint8_t, 32> seed{};
    std::array<uint8_t, kPubKeySize> public_key{};
};
SigningKey signing_key_from_seed(const std::array<uint8_t, 32>& seed);
std::array<uint8_t, kSigSize> sign(const SigningKey& sk, const Bytes& msg);
bool verify(const std::array<uint8_t, kPubKeySize>& pub, const Bytes& msg,
            const std::array<uint8_t, kSigSize>& sig);

/// X25519 key-agreement pair for wrapping symmetric keys to a device.
struct WrapKey {
    std::array<uint8_t, 32> private_key{};
    std::array<uint8_t, kPubKeySize> public_key{};
};
WrapKey wrap_key_from_seed(const std::array<uint8_t, 32>& seed);
/// Ephemeral-static ECIES: eph_pub || nonce || ct || tag. The ephemeral seed
/// must come from the caller's CSPRNG so fixture generation stays replayable.
Bytes wrap_secret(const std::array<uint8_t, kPubKeySize>& recipient_pub,
                  const std::array<uint8_t, 32>& ephemeral_seed, const Bytes& secret);
std::optional<Bytes> unwrap_secret(const WrapKey& recipient, const Bytes& wrapped);

/// Deterministic ChaCha20-keystream CSPRNG. Same seed, same stream.
class Csprng {
public:
    explicit Csprng(uint64_t seed, const std::string& domain = "rng");
    void fill(uint8_t* out, size_t len);
    Bytes bytes(size_t len);
    uint32_t next_u32();
    uint64_t next_u64();
    /// Uniform in [0, bound), bound > 0.
    uint64_t below(uint64_t bound);

private:
    SymKey key_{};
    uint64_t counter_ = 0;
    std::array<uint8_t, 64> block_{};
    size_t avail_ = 0;
    void refill();
};

} // namespace shadowworlds::crypto
