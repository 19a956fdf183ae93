#pragma once

#include <array>
#include <cstring>

#include "aranea/common.hpp"

namespace aranea {

// Cell geometry. Every message between onion nodes is exactly one 512-byte
// cell; a byte stream of concatenated cells re-segments unambiguously.
inline constexpr std::size_t kCellSize = 512;
inline constexpr std::size_t kCellPayloadSize = 507; // kCellSize - 4 - 1
inline constexpr std::size_t kRelayHeaderSize = 11;
inline constexpr std::size_t kRelayDataSize = 496;   // kCellPayloadSize - kRelayHeaderSize

enum class CellCommand : std::uint8_t {
    Create = 1,
    Created = 2,
    Relay = 3,
    Destroy = 4,
};

enum class RelayCommand : std::uint8_t {
    Begin = 1,
    Connected = 2,
    Data = 3,
    End = 4,
    Extend = 5,
    Extended = 6,
    Resolve = 7,
    Resolved = 8,
};

// Stream END reason codes carried in the first data byte of a RELAY END cell.
enum class EndReason : std::uint8_t {
    Misc = 1,
    ResolveFailed = 2,
    ConnectRefused = 3,
    ExitPolicy = 4,
    Destroyed = 5,
    Done = 6,
    Timeout = 7,
    NoRoute = 8,
    Internal = 10,
};

using CellPayload = std::array<std::uint8_t, kCellPayloadSize>;

struct Cell {
    std::uint32_t circuit_id = 0;
    CellCommand command = CellCommand::Destroy;
    CellPayload payload{}; // zero-padded to exactly 507 bytes

    bool operator==(const Cell&) const = default;
};

// Relay sub-payload. Layout inside the 507-byte cell payload:
//   relay_cmd(1) recognized(2) stream_id(2) digest(4) length(2) data(496)
struct RelayPayload {
    RelayCommand relay_cmd = RelayCommand::Data;
    std::array<std::uint8_t, 2> recognized{}; // all-zero when addressed to this hop
    std::uint16_t stream_id = 0;              // 0 only for EXTEND/EXTENDED
    std::array<std::uint8_t, 4> digest{};     // running end-to-end digest, truncated
    std::uint16_t length = 0;                 // bytes of data in use, <= 496
    std::array<std::uint8_t, kRelayDataSize> data{};

    bool operator==(const RelayPayload&) const = default;

    BytesView used_data() const { return BytesView(data.data(), length); }
};

inline bool is_circuit_level(RelayCommand c) {
    return c == RelayCommand::Extend || c == RelayCommand::Extended;
}

namespace detail {
inline bool known_cell_command(std::uint8_t c) {
    return c >= 1 && c <= 4;
}
inline bool known_relay_command(std::uint8_t c) {
    return c >= 1 && c <= 8;
}
} // namespace detail

// Builds a cell from an arbitrary-length payload, zero-padding to 507 bytes.
inline Cell make_cell(std::uint32_t circuit_id, CellCommand cmd, BytesView payload = {}) {
    if (payload.size() > kCellPayloadSize)
        throw CodecError("cell payload exceeds 507 bytes");
    Cell c;
    c.circuit_id = circuit_id;
    c.command = cmd;
    std::memcpy(c.payload.data(), payload.data(), payload.size());
    return c;
}

inline std::array<std::uint8_t, kCellSize> encode_cell(const Cell& c) {
    std::array<std::uint8_t, kCellSize> out{};
    put_u32be(out.data(), c.circuit_id);
    out[4] = static_cast<std::uint8_t>(c.command);
    std::memcpy(out.data() + 5, c.payload.data(), kCellPayloadSize);
    return out;
}

inline Cell decode_cell(BytesView bytes) {
    if (bytes.size() < kCellSize) throw CodecError("short cell");
    if (bytes.size() > kCellSize) throw CodecError("long cell");
    if (!detail::known_cell_command(bytes[4]))
        throw CodecError("unknown command " + std::to_string(bytes[4]));
    Cell c;
    c.circuit_id = get_u32be(bytes.data());
    c.command = static_cast<CellCommand>(bytes[4]);
    std::memcpy(c.payload.data(), bytes.data() + 5, kCellPayloadSize);
    return c;
}

inline void validate_relay(const RelayPayload& p) {
    if (!detail::known_relay_command(static_cast<std::uint8_t>(p.relay_cmd)))
        throw CodecError("unknown relay command");
    if (p.length > kRelayDataSize)
        throw CodecError("relay length exceeds 496");
    const bool circuit_level = is_circuit_level(p.relay_cmd);
    if (circuit_level != (p.stream_id == 0))
        throw CodecError("stream_id must be zero exactly for EXTEND/EXTENDED");
}

inline CellPayload encode_relay(const RelayPayload& p) {
    validate_relay(p);
    CellPayload out{};
    out[0] = static_cast<std::uint8_t>(p.relay_cmd);
    out[1] = p.recognized[0];
    out[2] = p.recognized[1];
    put_u16be(out.data() + 3, p.stream_id);
    std::memcpy(out.data() + 5, p.digest.data(), 4);
    put_u16be(out.data() + 9, p.length);
    std::memcpy(out.data() + kRelayHeaderSize, p.data.data(), kRelayDataSize);
    return out;
}

inline RelayPayload decode_relay(BytesView payload) {
    if (payload.size() != kCellPayloadSize) throw CodecError("relay payload must be 507 bytes");
    if (!detail::known_relay_command(payload[0]))
        throw CodecError("unknown relay command " + std::to_string(payload[0]));
    RelayPayload p;
    p.relay_cmd = static_cast<RelayCommand>(payload[0]);
    p.recognized = {payload[1], payload[2]};
    p.stream_id = get_u16be(payload.data() + 3);
    std::memcpy(p.digest.data(), payload.data() + 5, 4);
    p.length = get_u16be(payload.data() + 9);
    std::memcpy(p.data.data(), payload.data() + kRelayHeaderSize, kRelayDataSize);
    validate_relay(p);
    return p;
}

// Convenience builder for relay payloads carrying data bytes.
inline RelayPayload make_relay(RelayCommand cmd, std::uint16_t stream_id, BytesView data = {}) {
    if (data.size() > kRelayDataSize) throw CodecError("relay data exceeds 496 bytes");
    RelayPayload p;
    p.relay_cmd = cmd;
    p.stream_id = stream_id;
    p.length = static_cast<std::uint16_t>(data.size());
    std::memcpy(p.data.data(), data.data(), data.size());
    return p;
}

} // namespace aranea
