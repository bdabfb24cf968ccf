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

#include "shadowworlds/crypto.hpp"

#include <openssl/evp.h>

#include <cstring>
#include <memory>
#include <stdexcept>

namespace shadowworlds::crypto {

namespace {

struct CtxFree {
    void operator()(EVP_CIPHER_CTX* c) const { EVP_CIPHER_CTX_free(c); }
    void operator()(EVP_MD_CTX* c) const { EVP_MD_CTX_free(c); }
    void operator()(EVP_PKEY* k) const { EVP_PKEY_free(k); }
    void operator()(EVP_PKEY_CTX* c) const { EVP_PKEY_CTX_free(c); }
};
using CipherCtx = std::unique_ptr<EVP_CIPHER_CTX, CtxFree>;
using MdCtx = std::unique_ptr<EVP_MD_CTX, CtxFree>;
using Pkey = std::unique_ptr<EVP_PKEY, CtxFree>;
using PkeyCtx = std::unique_ptr<EVP_PKEY_CTX, CtxFree>;

[[noreturn]] void fail(const char* what) {
    throw std::runtime_error(std::string("crypto: ") + what);
}

Pkey raw_private(int type, const uint8_t* key, size_t len) {
    EVP_PKEY* p = EVP_PKEY_new_raw_private_key(type, nullptr, key, len);
    if (!p) fail("raw private key");
    return Pkey(p);
}

Pkey raw_public(int type, const uint8_t* key, size_t len) {
    EVP_PKEY* p = EVP_PKEY_new_raw_public_key(type, nullptr, key, len);
    if (!p) fail("raw public key");
    return Pkey(p);
}

} // namespace

Digest sha256(const uint8_t* data, size_t len) {
    Digest out{};
    MdCtx ctx(EVP_MD_CTX_new());
    unsigned int n = 0;
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), data, len) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), out.data(), &n) != 1 || n != kDigestSize)
        fail("sha256");
    return out;
}

Digest sha256(const Bytes& data) { return sha256(data.data(), data.size()); }

Bytes ae_seal(const SymKey& key, const Nonce& nonce, const uint8_t* pt, size_t len) {
    CipherCtx ctx(EVP_CIPHER_CTX_new());
    if (!ctx || EVP_EncryptInit_ex(ctx.get(), EVP_aes_256_gcm(), nullptr, key.data(), nonce.data()) != 1)
        fail("gcm init");
    Bytes out(kNonceSize + len + kTagSize);
    std::memcpy(out.data(), nonce.data(), kNonceSize);
    int n = 0;
    if (EVP_EncryptUpdate(ctx.get(), out.data() + kNonceSize, &n, pt, static_cast<int>(len)) != 1)
        fail("gcm encrypt");
    int fin = 0;
    if (EVP_EncryptFinal_ex(ctx.get(), out.data() + kNonceSize + n, &fin) != 1) fail("gcm final");
    if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_GET_TAG, kTagSize,
                            out.data() + kNonceSize + len) != 1)
        fail("gcm tag");
    return out;
}

std::optional<Bytes> ae_open(const SymKey& key, const Bytes& blob) {
    if (blob.size() < kNonceSize + kTagSize) return std::nullopt;
    size_t ct_len = blob.size() - kNonceSize - kTagSize;
    CipherCtx ctx(EVP_CIPHER_CTX_new());
    if (!ctx || EVP_DecryptInit_ex(ctx.get(), EVP_aes_256_gcm(), nullptr, key.data(), blob.data()) != 1)
        fail("gcm init");
    Bytes out(ct_len);
    int n = 0;
    if (EVP_DecryptUpdate(ctx.get(), out.data(), &n, blob.data() + kNonceSize,
                          static_cast<int>(ct_len)) != 1)
        return std::nullopt;
    uint8_t tag[kTagSize];
    std::memcpy(tag, blob.data() + kNonceSize + ct_len, kTagSize);
    if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_TAG, kTagSize, tag) != 1) fail("gcm tag");
    int fin = 0;
    if (EVP_DecryptFinal_ex(ctx.get(), out.data() + n, &fin) != 1) return std::nullopt;
    return out;
}

Bytes ae_open_unchecked(const SymKey& key, const Bytes& blob) {
    if (blob.size() < kNonceSize + kTagSize) return {};
    size_t ct_len = blob.size() - kNonceSize - kTagSize;
    CipherCtx ctx(EVP_CIPHER_CTX_new());
    if (!ctx || EVP_DecryptInit_ex(ctx.get(), EVP_aes_256_gcm(), nullptr, key.data(), blob.data()) != 1)
        fail("gcm init");
    Bytes out(ct_len);
    int n = 0;
    EVP_DecryptUpdate(ctx.get(), out.data(), &n, blob.data() + kNonceSize, static_cast<int>(ct_len));
    return out;
}

SigningKey signing_key_from_seed(const std::array<uint8_t, 32>& seed) {
    SigningKey sk;
    sk.seed = seed;
    Pkey key = raw_private(EVP_PKEY_ED25519, seed.data(), seed.size());
    size_t publen = kPubKeySize;
    if (EVP_PKEY_get_raw_public_key(key.get(), sk.public_key.data(), &publen) != 1 ||
        publen != kPubKeySize)
        fail("ed25519 public");
    return sk;
}

std::array<uint8_t, kSigSize> sign(const SigningKey& sk, const Bytes& msg) {
    Pkey key = raw_private(EVP_PKEY_ED25519, sk.seed.data(), sk.seed.size());
    MdCtx ctx(EVP_MD_CTX_new());
    std::array<uint8_t, kSigSize> sig{};
    size_t siglen = kSigSize;
    if (!ctx || EVP_DigestSignInit(ctx.get(), nullptr, nullptr, nullptr, key.get()) != 1 ||
        EVP_DigestSign(ctx.get(), sig.data(), &siglen, msg.data(), msg.size()) != 1 ||
        siglen != kSigSize)
        fail("ed25519 sign");
    return sig;
}

bool verify(const std::array<uint8_t, kPubKeySize>& pub, const Bytes& msg,
            const std::array<uint8_t, kSigSize>& sig) {
    Pkey key = raw_public(EVP_PKEY_ED25519, pub.data(), pub.size());
    MdCtx ctx(EVP_MD_CTX_new());
    if (!ctx || EVP_DigestVerifyInit(ctx.get(), nullptr, nullptr, nullptr, key.get()) != 1)
        fail("ed25519 verify init");
    return EVP_DigestVerify(ctx.get(), sig.data(), sig.size(), msg.data(), msg.size()) == 1;
}

WrapKey wrap_key_from_seed(const std::array<uint8_t, 32>& seed) {
    WrapKey wk;
    wk.private_key = seed;
    // X25519 clamping is applied by OpenSSL internally; keep the stored copy raw.
    Pkey key = raw_private(EVP_PKEY_X25519, seed.data(), seed.size());
    size_t publen = kPubKeySize;
    if (EVP_PKEY_get_raw_public_key(key.get(), wk.public_key.data(), &publen) != 1 ||
        publen != kPubKeySize)
        fail("x25519 public");
    return wk;
}

namespace {

std::array<uint8_t, 32> x25519_shared(const std::array<uint8_t, 32>& priv,
                                      const std::array<uint8_t, kPubKeySize>& peer_pub) {
    Pkey mine = raw_private(EVP_PKEY_X25519, priv.data(), priv.size());
    Pkey theirs = raw_public(EVP_PKEY_X25519, peer_pub.data(), peer_pub.size());
    PkeyCtx ctx(EVP_PKEY_CTX_new(mine.get(), nullptr));
    std::array<uint8_t, 32> out{};
    size_t outlen = out.size();
    if (!ctx || EVP_PKEY_derive_init(ctx.get()) != 1 ||
        EVP_PKEY_derive_set_peer(ctx.get(), theirs.get()) != 1 ||
        EVP_PKEY_derive(ctx.get(), out.data(), &outlen) != 1 || outlen != out.size())
        fail("x25519 derive");
    return out;
}

SymKey kdf(const std::array<uint8_t, 32>& shared, const std::array<uint8_t, kPubKeySize>& eph_pub,
           const std::array<uint8_t, kPubKeySize>& recip_pub) {
    Bytes material;
    material.insert(material.end(), shared.begin(), shared.end());
    material.insert(material.end(), eph_pub.begin(), eph_pub.end());
    material.insert(material.end(), recip_pub.begin(), recip_pub.end());
    Digest d = sha256(material);
    SymKey k{};
    std::memcpy(k.data(), d.data(), k.size());
    return k;
}

} // namespace

Bytes wrap_secret(const std::array<uint8_t, kPubKeySize>& recipient_pub,
                  const std::array<uint8_t, 32>& ephemeral_seed, const Bytes& secret) {
    WrapKey eph = wrap_key_from_seed(ephemeral_seed);
    SymKey k = kdf(x25519_shared(eph.private_key, recipient_pub), eph.public_key, recipient_pub);
    Nonce nonce{}; // key is single-use by construction (fresh ephemeral per wrap)
    Bytes blob = ae_seal(k, nonce, secret.data(), secret.size());
    Bytes out;
    out.insert(out.end(), eph.public_key.begin(), eph.public_key.end());
    out.insert(out.end(), blob.begin(), blob.end());
    return out;
}

std::optional<Bytes> unwrap_secret(const WrapKey& recipient, const Bytes& wrapped) {
    if (wrapped.size() < kPubKeySize + kNonceSize + kTagSize) return std::nullopt;
    std::array<uint8_t, kPubKeySize> eph_pub{};
    std::memcpy(eph_pub.data(), wrapped.data(), kPubKeySize);
    SymKey k = kdf(x25519_shared(recipient.private_key, eph_pub), eph_pub, recipient.public_key);
    Bytes blob(wrapped.begin() + kPubKeySize, wrapped.end());
    return ae_open(k, blob);
}

Csprng::Csprng(uint64_t seed, const std::string& domain) {
    Bytes material(domain.begin(), domain.end());
    for (int i = 0; i < 8; i++) material.push_back(static_cast<uint8_t>(seed >> (8 * i)));
    Digest d = sha256(material);
    std::memcpy(key_.data(), d.data(), key_.size());
}

void Csprng::refill() {
    // ChaCha20 keystream: encrypt a zero block under (key, counter-derived iv).
    uint8_t iv[16] = {0};
    for (int i = 0; i < 8; i++) iv[8 + i] = static_cast<uint8_t>(counter_ >> (8 * i));
    counter_++;
    CipherCtx ctx(EVP_CIPHER_CTX_new());
    if (!ctx || EVP_EncryptInit_ex(ctx.get(), EVP_chacha20(), nullptr, key_.data(), iv) != 1)
        fail("chacha init");
    uint8_t zeros[64] = {0};
    int n = 0;
    if (EVP_EncryptUpdate(ctx.get(), block_.data(), &n, zeros, sizeof zeros) != 1 || n != 64)
        fail("chacha stream");
    avail_ = 64;
}

void Csprng::fill(uint8_t* out, size_t len) {
    while (len > 0) {
        if (avail_ == 0) refill();
        size_t take = std::min(len, avail_);
        std::memcpy(out, block_.data() + (64 - avail_), take);
        out += take;
        len -= take;
        avail_ -= take;
    }
}

Bytes Csprng::bytes(size_t len) {
    Bytes b(len);
    fill(b.data(), len);
    return b;
}

uint32_t Csprng::next_u32() {
    uint8_t b[4];
    fill(b, 4);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

uint64_t Csprng::next_u64() {
    uint64_t lo = next_u32(), hi = next_u32();
    return lo | (hi << 32);
}

uint64_t Csprng::below(uint64_t bound) {
    // Rejection sampling keeps the distribution uniform.
    uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
    uint64_t v;
    do {
        v = next_u64();
    } while (v >= limit);
    return v % bound;
}

} // namespace shadowworlds::crypto
