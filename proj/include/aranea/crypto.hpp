#pragma once

#include <array>
#include <cstring>
#include <mutex>

#include <sodium.h>

#include "aranea/cells.hpp"
#include "aranea/common.hpp"

namespace aranea {

namespace detail {
inline void ensure_sodium() {
    static std::once_flag once;
    std::call_once(once, [] {
        if (sodium_init() < 0) throw Error("libsodium init failed");
    });
}
} // namespace detail

using NodeId = std::array<std::uint8_t, 20>;
using Key16 = std::array<std::uint8_t, 16>;

inline std::array<std::uint8_t, 32> sha256(BytesView in) {
    detail::ensure_sodium();
    std::array<std::uint8_t, 32> out;
    crypto_hash_sha256(out.data(), in.data(), in.size());
    return out;
}

// X25519 identity for a relay. node_id is the truncated digest of the public
// part; the directory validates that binding on publish.
struct IdentityKeypair {
    std::array<std::uint8_t, 32> secret{};
    std::array<std::uint8_t, 32> public_key{};

    static IdentityKeypair generate(Rng& rng) {
        detail::ensure_sodium();
        IdentityKeypair kp;
        rng.fill(kp.secret);
        crypto_scalarmult_curve25519_base(kp.public_key.data(), kp.secret.data());
        return kp;
    }

    NodeId node_id() const { return node_id_of(public_key); }

    static NodeId node_id_of(const std::array<std::uint8_t, 32>& pub) {
        auto d = sha256(BytesView(pub.data(), pub.size()));
        NodeId id;
        std::memcpy(id.data(), d.data(), id.size());
        return id;
    }
};

// Per-hop key material. Client and relay copies are equal after a successful
// handshake; kf/df drive the forward direction, kb/db the backward one.
struct HopKeys {
    Key16 kf{}, kb{}, df{}, db{};
    bool operator==(const HopKeys&) const = default;
};

// Expands a shared secret into the four 16-byte hop keys via counter-tagged
// SHA-256 blocks.
inline HopKeys derive_keys(BytesView secret) {
    if (secret.empty()) throw HandshakeError("empty shared secret");
    Bytes buf(secret.begin(), secret.end());
    buf.push_back(0);
    HopKeys keys;
    for (int block = 0; block < 2; ++block) {
        buf.back() = static_cast<std::uint8_t>(block);
        auto d = sha256(buf);
        if (block == 0) {
            std::memcpy(keys.kf.data(), d.data(), 16);
            std::memcpy(keys.kb.data(), d.data() + 16, 16);
        } else {
            std::memcpy(keys.df.data(), d.data(), 16);
            std::memcpy(keys.db.data(), d.data() + 16, 16);
        }
    }
    return keys;
}

// One direction of one hop's onion layer: a position-addressable ChaCha20
// keystream XOR. Applying the same layer twice at the same position is the
// identity, so the transform serves as both wrap and peel.
class LayerState {
public:
    LayerState() = default;

    explicit LayerState(const Key16& key) {
        detail::ensure_sodium();
        auto expanded = sha256(BytesView(key.data(), key.size()));
        std::memcpy(key_.data(), expanded.data(), key_.size());
    }

    void apply(std::span<std::uint8_t> buf) {
        if (buf.empty()) return;
        const std::uint64_t block = pos_ / 64;
        const std::size_t skip = static_cast<std::size_t>(pos_ % 64);
        Bytes tmp(skip + buf.size(), 0);
        std::memcpy(tmp.data() + skip, buf.data(), buf.size());
        const std::uint8_t nonce[8] = {0};
        crypto_stream_chacha20_xor_ic(tmp.data(), tmp.data(), tmp.size(), nonce, block,
                                      key_.data());
        std::memcpy(buf.data(), tmp.data() + skip, buf.size());
        pos_ += buf.size();
    }

    std::uint64_t position() const { return pos_; }

private:
    std::array<std::uint8_t, 32> key_{};
    std::uint64_t pos_ = 0;
};

// Client applies layers exit-first so that each relay peels exactly one layer
// with its own forward key, entry first.
inline void wrap_forward(std::span<LayerState> hops_entry_first, std::span<std::uint8_t> payload) {
    for (std::size_t i = hops_entry_first.size(); i-- > 0;)
        hops_entry_first[i].apply(payload);
}

inline void peel_forward(LayerState& hop, std::span<std::uint8_t> payload) {
    hop.apply(payload);
}

// Running end-to-end integrity digest over the relay payload stream, seeded
// with df (forward) or db (backward). Tags are 4 truncated bytes; together
// with the 2-byte recognized field the false-accept bound is ~2^-48.
class RollingDigest {
public:
    RollingDigest() {
        detail::ensure_sodium();
        crypto_hash_sha256_init(&st_);
    }

    explicit RollingDigest(const Key16& seed) {
        detail::ensure_sodium();
        crypto_hash_sha256_init(&st_);
        crypto_hash_sha256_update(&st_, seed.data(), seed.size());
    }

    // Originator side: payload's digest field must still be zero. Absorbs the
    // payload, writes the resulting tag into the digest field, returns it.
    std::array<std::uint8_t, 4> seal(std::span<std::uint8_t, kCellPayloadSize> payload) {
        crypto_hash_sha256_update(&st_, payload.data(), payload.size());
        auto tag = current_tag();
        std::memcpy(payload.data() + 5, tag.data(), 4);
        return tag;
    }

    // Recognizer side: verifies the embedded tag against the running state.
    // The state advances only on acceptance.
    bool check(std::span<std::uint8_t, kCellPayloadSize> payload) {
        std::array<std::uint8_t, 4> claimed;
        std::memcpy(claimed.data(), payload.data() + 5, 4);
        std::memset(payload.data() + 5, 0, 4);
        crypto_hash_sha256_state trial = st_;
        crypto_hash_sha256_update(&trial, payload.data(), payload.size());
        crypto_hash_sha256_state snap = trial;
        std::array<std::uint8_t, 32> full;
        crypto_hash_sha256_final(&snap, full.data());
        const bool ok = std::memcmp(full.data(), claimed.data(), 4) == 0;
        std::memcpy(payload.data() + 5, claimed.data(), 4); // leave payload intact
        if (ok) st_ = trial;
        return ok;
    }

private:
    std::array<std::uint8_t, 4> current_tag() const {
        crypto_hash_sha256_state snap = st_;
        std::array<std::uint8_t, 32> full;
        crypto_hash_sha256_final(&snap, full.data());
        std::array<std::uint8_t, 4> tag;
        std::memcpy(tag.data(), full.data(), 4);
        return tag;
    }

    crypto_hash_sha256_state st_;
};

// True iff the payload is addressed to the hop holding this digest state:
// recognized field all-zero and the running digest matches.
inline bool recognized(std::span<std::uint8_t, kCellPayloadSize> payload, RollingDigest& digest) {
    if (payload[1] != 0 || payload[2] != 0) return false;
    return digest.check(payload);
}

// --- Handshake -------------------------------------------------------------
//
// One round trip of ephemeral/static X25519. The client sends its ephemeral
// public key in CREATE; the relay answers with a key-confirmation digest in
// CREATED. Both sides derive HopKeys from (shared point || ephemeral public).
// Resistance to man-in-the-middle comes from relay public keys being pinned
// in the directory.

inline constexpr std::size_t kHandshakeBlobSize = 32;
inline constexpr char kConfirmTag[] = "aranea/hs-confirm/v1";

// [u16 length][blob] framing used inside CREATE/CREATED payloads and
// EXTEND/EXTENDED data fields.
inline Bytes pack_blob(BytesView blob) {
    Bytes out(2 + blob.size());
    put_u16be(out.data(), static_cast<std::uint16_t>(blob.size()));
    std::memcpy(out.data() + 2, blob.data(), blob.size());
    return out;
}

inline Bytes unpack_blob(BytesView framed) {
    if (framed.size() < 2) throw HandshakeError("handshake blob truncated");
    const std::size_t len = get_u16be(framed.data());
    if (framed.size() < 2 + len) throw HandshakeError("handshake blob truncated");
    return Bytes(framed.begin() + 2, framed.begin() + 2 + len);
}

namespace detail {
inline std::array<std::uint8_t, 32> confirm_digest(const std::array<std::uint8_t, 32>& shared,
                                                   const std::array<std::uint8_t, 32>& eph_pub) {
    Bytes buf;
    buf.insert(buf.end(), kConfirmTag, kConfirmTag + sizeof(kConfirmTag) - 1);
    buf.insert(buf.end(), shared.begin(), shared.end());
    buf.insert(buf.end(), eph_pub.begin(), eph_pub.end());
    return sha256(buf);
}

inline HopKeys keys_from(const std::array<std::uint8_t, 32>& shared,
                         const std::array<std::uint8_t, 32>& eph_pub) {
    Bytes secret;
    secret.insert(secret.end(), shared.begin(), shared.end());
    secret.insert(secret.end(), eph_pub.begin(), eph_pub.end());
    return derive_keys(secret);
}
} // namespace detail

class ClientHandshake {
public:
    ClientHandshake(Rng& rng, const std::array<std::uint8_t, 32>& relay_pub)
        : relay_pub_(relay_pub) {
        detail::ensure_sodium();
        rng.fill(eph_secret_);
        crypto_scalarmult_curve25519_base(eph_public_.data(), eph_secret_.data());
    }

    // Blob for the CREATE payload (or EXTEND data), already length-framed.
    Bytes create_blob() const { return pack_blob(eph_public_); }

    // Consumes the framed CREATED/EXTENDED reply and yields the hop keys.
    HopKeys finish(BytesView created_framed) const {
        Bytes confirm = unpack_blob(created_framed);
        if (confirm.size() != 32) throw HandshakeError("bad confirmation blob size");
        std::array<std::uint8_t, 32> shared;
        if (crypto_scalarmult_curve25519(shared.data(), eph_secret_.data(), relay_pub_.data()) != 0)
            throw HandshakeError("key agreement failed");
        auto expect = detail::confirm_digest(shared, eph_public_);
        if (std::memcmp(expect.data(), confirm.data(), 32) != 0)
            throw HandshakeError("confirmation mismatch");
        return detail::keys_from(shared, eph_public_);
    }

private:
    std::array<std::uint8_t, 32> eph_secret_{};
    std::array<std::uint8_t, 32> eph_public_{};
    std::array<std::uint8_t, 32> relay_pub_{};
};

struct RelayHandshake {
    // Relay side: consumes the framed CREATE blob, returns the derived keys
    // and the framed reply blob for CREATED/EXTENDED.
    static std::pair<HopKeys, Bytes> respond(const IdentityKeypair& identity,
                                             BytesView create_framed) {
        Bytes eph = unpack_blob(create_framed);
        if (eph.size() != 32) throw HandshakeError("bad ephemeral key size");
        std::array<std::uint8_t, 32> eph_pub;
        std::memcpy(eph_pub.data(), eph.data(), 32);
        std::array<std::uint8_t, 32> shared;
        if (crypto_scalarmult_curve25519(shared.data(), identity.secret.data(), eph_pub.data()) != 0)
            throw HandshakeError("key agreement failed");
        auto confirm = detail::confirm_digest(shared, eph_pub);
        return {detail::keys_from(shared, eph_pub),
                pack_blob(BytesView(confirm.data(), confirm.size()))};
    }
};

} // namespace aranea
