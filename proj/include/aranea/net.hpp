#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>

#include "aranea/cells.hpp"
#include "aranea/common.hpp"

namespace aranea {

// host:port pair. In sim mode the host is a scenario node name; in socket
// mode it is an IP or resolvable name.
struct Address {
    std::string host;
    std::uint16_t port = 0;

    Address() = default;
    Address(std::string h, std::uint16_t p) : host(std::move(h)), port(p) {}

    static Address parse(const std::string& s) {
        auto pos = s.rfind(':');
        if (pos == std::string::npos || pos == 0 || pos + 1 >= s.size())
            throw ConfigError("bad address '" + s + "', expected host:port");
        int port = std::stoi(s.substr(pos + 1));
        if (port < 0 || port > 0xffff) throw ConfigError("bad port in '" + s + "'");
        return Address(s.substr(0, pos), static_cast<std::uint16_t>(port));
    }

    std::string str() const { return host + ":" + std::to_string(port); }

    bool operator==(const Address&) const = default;
    auto operator<=>(const Address&) const = default;
};

// One side of a bidirectional reliable byte pipe. Chunk boundaries are
// preserved by the sim transport and arbitrary on sockets; endpoints must
// re-frame with a Segmenter either way.
class Link {
public:
    virtual ~Link() = default;
    virtual void send(BytesView chunk) = 0;
    virtual void close() = 0;
    virtual bool is_open() const = 0;
    virtual Address peer() const = 0;
    virtual Address local() const = 0;
    // Dial metadata: the sim transport carries it to the acceptor (used for
    // transparent-funnel destination routing); sockets carry none.
    virtual const std::string& meta() const = 0;
    virtual std::uint64_t id() const = 0;
};

using LinkPtr = std::shared_ptr<Link>;

// A protocol actor attached to a Net. Callbacks are serialized: the sim is
// single-threaded, the socket transport holds a dispatch lock.
class Endpoint {
public:
    virtual ~Endpoint() = default;
    virtual void on_link_open(const LinkPtr&) {}
    virtual void on_bytes(const LinkPtr&, BytesView chunk) = 0;
    virtual void on_link_closed(const LinkPtr&) {}
};

// Transport environment: virtual or real clock, timers, dialing, listening.
// Endpoints must outlive the net they are attached to.
class Net {
public:
    virtual ~Net() = default;

    virtual double now() const = 0; // seconds
    virtual void schedule(double delay_s, std::function<void()> fn) = 0;
    virtual LinkPtr dial(const std::string& from_host, const Address& to, Endpoint& owner,
                         std::string meta = {}) = 0;
    virtual void listen(const Address& addr, Endpoint& owner) = 0;
    virtual void unlisten(const Address& addr) = 0;
    virtual Rng& rng() = 0;
};

// Re-frames a received byte stream into protocol messages.
class Segmenter {
public:
    enum class Mode {
        FixedCell,      // consecutive 512-byte cells
        LengthPrefixed, // u32 big-endian length + body (directory protocol)
        Raw,            // chunks pass through unchanged
    };

    explicit Segmenter(Mode mode) : mode_(mode) {}

    void feed(BytesView chunk, std::vector<Bytes>& out) {
        if (mode_ == Mode::Raw) {
            out.emplace_back(chunk.begin(), chunk.end());
            return;
        }
        buf_.insert(buf_.end(), chunk.begin(), chunk.end());
        if (mode_ == Mode::FixedCell) {
            std::size_t off = 0;
            while (buf_.size() - off >= kCellSize) {
                out.emplace_back(buf_.begin() + off, buf_.begin() + off + kCellSize);
                off += kCellSize;
            }
            buf_.erase(buf_.begin(), buf_.begin() + off);
        } else {
            std::size_t off = 0;
            while (buf_.size() - off >= 4) {
                const std::uint32_t len = get_u32be(buf_.data() + off);
                if (len > kMaxFrame) throw CodecError("frame too large");
                if (buf_.size() - off < 4 + len) break;
                out.emplace_back(buf_.begin() + off + 4, buf_.begin() + off + 4 + len);
                off += 4 + len;
            }
            buf_.erase(buf_.begin(), buf_.begin() + off);
        }
    }

    static Bytes frame(BytesView body) {
        Bytes out(4 + body.size());
        put_u32be(out.data(), static_cast<std::uint32_t>(body.size()));
        std::memcpy(out.data() + 4, body.data(), body.size());
        return out;
    }

private:
    static constexpr std::uint32_t kMaxFrame = 1u << 22;
    Mode mode_;
    Bytes buf_;
};

} // namespace aranea
