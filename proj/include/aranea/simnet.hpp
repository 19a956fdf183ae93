#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <sstream>

#include "aranea/net.hpp"

namespace aranea {

// --- Scenario description ----------------------------------------------
//
// Line-oriented text format:
//   seed 42
//   node relay1 relay exit proc_bw=500000
//   node bob echo port=80
//   link client relay1 latency_ms=10 bandwidth=1000000 jitter=0
//   default_link latency_ms=5 bandwidth=10000000 jitter=0
//   name example.sim bob
// Bare words after a node name are role flags, key=value pairs are
// attributes. '#' starts a comment.

struct LinkSpec {
    std::string a, b;
    std::int64_t latency_us = 0;
    double bandwidth = 0; // bytes/second, 0 = unlimited
    double jitter = 0;    // fraction of latency, in [0,1)
};

struct NodeSpec {
    std::string name;
    std::set<std::string> flags;
    std::map<std::string, std::string> attrs;

    bool has_flag(const std::string& f) const { return flags.count(f) > 0; }
    double attr_num(const std::string& k, double fallback) const {
        auto it = attrs.find(k);
        return it == attrs.end() ? fallback : std::stod(it->second);
    }
};

struct Scenario {
    std::uint64_t seed = 1;
    std::vector<NodeSpec> nodes;
    std::vector<LinkSpec> links;
    std::map<std::string, std::string> names; // dns name -> node
    std::optional<LinkSpec> default_link;

    const NodeSpec* find(const std::string& name) const {
        for (const auto& n : nodes)
            if (n.name == name) return &n;
        return nullptr;
    }

    std::vector<const NodeSpec*> with_flag(const std::string& f) const {
        std::vector<const NodeSpec*> out;
        for (const auto& n : nodes)
            if (n.has_flag(f)) out.push_back(&n);
        return out;
    }

    static Scenario parse(const std::string& text);
    static Scenario load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open scenario file: " + path);
        std::ostringstream ss;
        ss << in.rdbuf();
        return parse(ss.str());
    }
};

namespace detail {

inline std::vector<std::string> tokenize(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) out.push_back(tok);
    return out;
}

inline void apply_link_attr(LinkSpec& l, const std::string& key, const std::string& val,
                            int lineno) {
    try {
        if (key == "latency_ms")
            l.latency_us = std::llround(std::stod(val) * 1000.0);
        else if (key == "latency_us")
            l.latency_us = std::stoll(val);
        else if (key == "latency_s")
            l.latency_us = std::llround(std::stod(val) * 1e6);
        else if (key == "bandwidth")
            l.bandwidth = std::stod(val);
        else if (key == "jitter")
            l.jitter = std::stod(val);
        else
            throw ConfigError("unknown link attribute '" + key + "' on line " +
                              std::to_string(lineno));
    } catch (const std::invalid_argument&) {
        throw ConfigError("bad numeric value for '" + key + "' on line " + std::to_string(lineno));
    }
    if (l.latency_us < 0) throw ConfigError("negative latency on line " + std::to_string(lineno));
    if (l.bandwidth < 0) throw ConfigError("negative bandwidth on line " + std::to_string(lineno));
    if (l.jitter < 0 || l.jitter >= 1)
        throw ConfigError("jitter must be in [0,1) on line " + std::to_string(lineno));
}

} // namespace detail

inline Scenario Scenario::parse(const std::string& text) {
    Scenario sc;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        auto toks = detail::tokenize(line);
        if (toks.empty()) continue;
        const std::string& kind = toks[0];
        if (kind == "seed") {
            if (toks.size() != 2) throw ConfigError("seed takes one value, line " + std::to_string(lineno));
            sc.seed = std::stoull(toks[1]);
        } else if (kind == "node") {
            if (toks.size() < 2) throw ConfigError("node needs a name, line " + std::to_string(lineno));
            NodeSpec n;
            n.name = toks[1];
            for (std::size_t i = 2; i < toks.size(); ++i) {
                auto eq = toks[i].find('=');
                if (eq == std::string::npos)
                    n.flags.insert(toks[i]);
                else
                    n.attrs[toks[i].substr(0, eq)] = toks[i].substr(eq + 1);
            }
            if (sc.find(n.name)) throw ConfigError("duplicate node '" + n.name + "'");
            sc.nodes.push_back(std::move(n));
        } else if (kind == "link" || kind == "default_link") {
            LinkSpec l;
            std::size_t attr_start = 1;
            if (kind == "link") {
                if (toks.size() < 3) throw ConfigError("link needs two endpoints, line " + std::to_string(lineno));
                l.a = toks[1];
                l.b = toks[2];
                attr_start = 3;
            }
            for (std::size_t i = attr_start; i < toks.size(); ++i) {
                auto eq = toks[i].find('=');
                if (eq == std::string::npos)
                    throw ConfigError("link attributes must be key=value, line " + std::to_string(lineno));
                detail::apply_link_attr(l, toks[i].substr(0, eq), toks[i].substr(eq + 1), lineno);
            }
            if (kind == "link")
                sc.links.push_back(std::move(l));
            else
                sc.default_link = l;
        } else if (kind == "name") {
            if (toks.size() != 3) throw ConfigError("name takes <dns-name> <node>, line " + std::to_string(lineno));
            sc.names[toks[1]] = toks[2];
        } else {
            throw ConfigError("unknown directive '" + kind + "' on line " + std::to_string(lineno));
        }
    }
    for (const auto& l : sc.links) {
        if (!sc.find(l.a) || !sc.find(l.b))
            throw ConfigError("link references unknown node: " + l.a + " -- " + l.b);
    }
    for (const auto& [dns, node] : sc.names) {
        if (!sc.find(node)) throw ConfigError("name '" + dns + "' maps to unknown node " + node);
    }
    return sc;
}

// --- Traffic taps --------------------------------------------------------

struct TraceRecord {
    std::int64_t t_us = 0;
    int dir = 0; // +1: a->b in tap orientation, -1: b->a
    std::uint32_t len = 0;
};

struct ContentRecord {
    std::int64_t t_us = 0;
    int dir = 0;
    std::string kind; // "open", "data", "close"
    std::string src_host;
    Address dst_addr;
    Bytes data;
};

using TrafficTrace = std::vector<TraceRecord>;

// Passive observer of one topology edge. Records every traversal without
// perturbing delivery timing.
class Tap {
public:
    Tap(std::string a, std::string b, bool capture_content)
        : a_(std::move(a)), b_(std::move(b)), capture_content_(capture_content) {}

    const std::string& side_a() const { return a_; }
    const std::string& side_b() const { return b_; }
    const TrafficTrace& trace() const { return trace_; }
    const std::vector<ContentRecord>& content() const { return content_; }
    bool captures_content() const { return capture_content_; }

    void clear() {
        trace_.clear();
        content_.clear();
    }

    std::string csv() const {
        std::string out = "t_us,dir,len\n";
        for (const auto& r : trace_)
            out += std::to_string(r.t_us) + "," + std::to_string(r.dir) + "," +
                   std::to_string(r.len) + "\n";
        return out;
    }

    void record(std::int64_t t_us, const std::string& from_host, const Address& dst,
                const std::string& kind, BytesView data) {
        const int dir = from_host == a_ ? +1 : -1;
        if (kind == "data")
            trace_.push_back({t_us, dir, static_cast<std::uint32_t>(data.size())});
        if (capture_content_)
            content_.push_back({t_us, dir, kind, from_host, dst, Bytes(data.begin(), data.end())});
    }

private:
    std::string a_, b_;
    bool capture_content_;
    TrafficTrace trace_;
    std::vector<ContentRecord> content_;
};

inline TrafficTrace trace_from_csv(const std::string& csv) {
    TrafficTrace out;
    std::istringstream in(csv);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line.rfind("t_us", 0) == 0) continue;
        TraceRecord r;
        if (std::sscanf(line.c_str(), "%ld,%d,%u", &r.t_us, &r.dir, &r.len) != 3)
            throw CodecError("bad trace csv line: " + line);
        out.push_back(r);
    }
    return out;
}

// --- Deterministic discrete-event transport -------------------------------
//
// Single-threaded event loop over a virtual microsecond clock. Event order is
// (time, insertion sequence), and all randomness flows through one seeded
// RNG, so whole-system runs are bit-reproducible.

class SimNet final : public Net {
public:
    explicit SimNet(std::uint64_t seed) : rng_(seed) {}

    explicit SimNet(const Scenario& sc) : rng_(sc.seed), scenario_(sc) {
        for (const auto& n : sc.nodes) add_node(n.name, n.attr_num("proc_bw", 0));
        for (const auto& l : sc.links) add_link(l);
        if (sc.default_link) default_link_ = *sc.default_link;
        for (const auto& [dns, node] : sc.names) add_name(dns, node);
    }

    SimNet(const SimNet&) = delete;
    SimNet& operator=(const SimNet&) = delete;

    // -- topology -----------------------------------------------------

    void add_node(const std::string& name, double proc_bw = 0) {
        if (nodes_.count(name)) throw ConfigError("duplicate node " + name);
        nodes_[name] = NodeState{proc_bw, 0};
    }

    void add_link(const LinkSpec& spec) {
        if (!nodes_.count(spec.a) || !nodes_.count(spec.b))
            throw ConfigError("link references unknown node");
        edges_[edge_key(spec.a, spec.b)].cfg = spec;
    }

    void set_default_link(const LinkSpec& spec) { default_link_ = spec; }
    void add_name(const std::string& dns, const std::string& node) {
        if (!nodes_.count(node)) throw ConfigError("name maps to unknown node " + node);
        names_[dns] = node;
    }

    std::optional<std::string> resolve_name(const std::string& dns) const {
        auto it = names_.find(dns);
        if (it == names_.end()) return std::nullopt;
        return it->second;
    }

    bool has_node(const std::string& name) const { return nodes_.count(name) > 0; }
    const Scenario& scenario() const { return scenario_; }

    // -- Net interface --------------------------------------------------

    double now() const override { return static_cast<double>(now_us_) * 1e-6; }
    std::int64_t now_us() const { return now_us_; }

    void schedule(double delay_s, std::function<void()> fn) override {
        push_event(now_us_ + std::max<std::int64_t>(0, std::llround(delay_s * 1e6)),
                   std::move(fn));
    }

    LinkPtr dial(const std::string& from_host, const Address& to, Endpoint& owner,
                 std::string meta = {}) override;

    void listen(const Address& addr, Endpoint& owner) override {
        if (!nodes_.count(addr.host)) throw ConfigError("listen on unknown node " + addr.host);
        if (listeners_.count(addr)) throw ConfigError("address already in use: " + addr.str());
        listeners_[addr] = &owner;
    }

    void unlisten(const Address& addr) override { listeners_.erase(addr); }

    Rng& rng() override { return rng_; }

    // -- event loop -------------------------------------------------------

    // Processes every event with time <= t seconds; clock ends at t.
    std::size_t run_until(double t_s) {
        const std::int64_t t_us = std::llround(t_s * 1e6);
        std::size_t processed = 0;
        while (!events_.empty() && events_.top().t_us <= t_us) {
            processed += step();
        }
        now_us_ = std::max(now_us_, t_us);
        return processed;
    }

    // Drains the queue completely.
    std::size_t run_all() {
        std::size_t processed = 0;
        while (!events_.empty()) processed += step();
        return processed;
    }

    // Pumps events until cond() holds or the deadline/queue is exhausted.
    bool wait_until(const std::function<bool()>& cond, double deadline_s) {
        const std::int64_t limit = std::llround(deadline_s * 1e6);
        if (cond()) return true;
        while (!events_.empty() && events_.top().t_us <= limit) {
            step();
            if (cond()) return true;
        }
        now_us_ = std::max(now_us_, std::min(limit, now_us_));
        return cond();
    }

    // -- observation ------------------------------------------------------

    Tap& tap(const std::string& a, const std::string& b, bool capture_content = false) {
        auto& edge = edges_[edge_key(a, b)];
        if (!edge.cfg && !default_link_) throw ConfigError("tap on nonexistent link");
        taps_.push_back(std::make_unique<Tap>(a, b, capture_content));
        edge.taps.push_back(taps_.back().get());
        return *taps_.back();
    }

    void enable_event_log() { logging_ = true; }
    const std::vector<std::string>& event_log() const { return log_; }

    std::uint64_t messages_sent() const { return sent_; }
    std::uint64_t messages_delivered() const { return delivered_; }
    std::uint64_t messages_dropped() const { return dropped_; }

private:
    struct Event {
        std::int64_t t_us;
        std::uint64_t seq;
        std::function<void()> fn;
        bool operator>(const Event& o) const {
            return std::tie(t_us, seq) > std::tie(o.t_us, o.seq);
        }
    };

    struct NodeState {
        double proc_bw = 0;            // bytes/second through the node, 0 = unlimited
        std::int64_t busy_until_us = 0; // node processing queue tail
    };

    struct EdgeState {
        std::optional<LinkSpec> cfg;
        // Per direction (0: lo->hi in key order), shared by every connection
        // riding this edge.
        std::int64_t busy_until_us[2] = {0, 0};
        std::int64_t last_arrival_us[2] = {0, 0};
        std::vector<Tap*> taps;
    };

    struct Conn;
    class SimLink;
    friend class SimLink;

    static std::pair<std::string, std::string> edge_key(const std::string& a,
                                                        const std::string& b) {
        return a < b ? std::make_pair(a, b) : std::make_pair(b, a);
    }

    void push_event(std::int64_t t_us, std::function<void()> fn) {
        events_.push(Event{std::max(t_us, now_us_), seq_++, std::move(fn)});
    }

    std::size_t step() {
        Event ev = std::move(const_cast<Event&>(events_.top()));
        events_.pop();
        now_us_ = ev.t_us;
        ev.fn();
        return 1;
    }

    const LinkSpec* edge_cfg(EdgeState& e) {
        if (e.cfg) return &*e.cfg;
        if (default_link_) return &*default_link_;
        return nullptr;
    }

    void transmit(const std::shared_ptr<Conn>& conn, bool from_src, const std::string& kind,
                  Bytes data);

    std::int64_t now_us_ = 0;
    std::uint64_t seq_ = 0;
    std::priority_queue<Event, std::vector<Event>, std::greater<Event>> events_;
    Rng rng_;
    Scenario scenario_;

    std::map<std::string, NodeState> nodes_;
    std::map<std::pair<std::string, std::string>, EdgeState> edges_;
    std::optional<LinkSpec> default_link_;
    std::map<Address, Endpoint*> listeners_;
    std::map<std::string, std::string> names_;
    std::vector<std::unique_ptr<Tap>> taps_;

    bool logging_ = false;
    std::vector<std::string> log_;
    std::uint64_t sent_ = 0, delivered_ = 0, dropped_ = 0;
    std::uint64_t next_conn_id_ = 1;
    std::uint64_t next_link_id_ = 1;
};

struct SimNet::Conn {
    std::uint64_t id;
    std::string src_host, dst_host;
    Address src_addr, dst_addr;
    std::string meta;
    Endpoint* src_ep = nullptr;
    Endpoint* dst_ep = nullptr;
    bool src_open = true, dst_open = true;
    LinkPtr src_link, dst_link; // side views handed to the endpoints
};

class SimNet::SimLink final : public Link, public std::enable_shared_from_this<SimNet::SimLink> {
public:
    SimLink(SimNet* net, std::shared_ptr<Conn> conn, bool is_src, std::uint64_t id)
        : net_(net), conn_(std::move(conn)), is_src_(is_src), id_(id) {}

    void send(BytesView chunk) override {
        if (!side_open()) {
            ++net_->dropped_;
            return;
        }
        net_->transmit(conn_, is_src_, "data", Bytes(chunk.begin(), chunk.end()));
    }

    void close() override {
        if (!side_open()) return;
        side_open_ref() = false;
        net_->transmit(conn_, is_src_, "close", {});
    }

    bool is_open() const override { return conn_->src_open && conn_->dst_open; }

    Address peer() const override {
        return is_src_ ? conn_->dst_addr : conn_->src_addr;
    }
    Address local() const override {
        return is_src_ ? conn_->src_addr : conn_->dst_addr;
    }
    const std::string& meta() const override { return conn_->meta; }
    std::uint64_t id() const override { return id_; }

private:
    friend class SimNet;
    bool side_open() const { return is_src_ ? conn_->src_open : conn_->dst_open; }
    bool& side_open_ref() { return is_src_ ? conn_->src_open : conn_->dst_open; }

    SimNet* net_;
    std::shared_ptr<Conn> conn_;
    bool is_src_;
    std::uint64_t id_;
};

inline LinkPtr SimNet::dial(const std::string& from_host, const Address& to, Endpoint& owner,
                            std::string meta) {
    if (!nodes_.count(from_host)) throw NetError("dial from unknown node " + from_host);
    if (!nodes_.count(to.host)) throw NetError("no route to host " + to.host);
    auto& edge = edges_[edge_key(from_host, to.host)];
    if (!edge_cfg(edge)) throw NetError("no route to host " + to.host);
    auto lit = listeners_.find(to);
    if (lit == listeners_.end()) throw NetError("connection refused: " + to.str());

    auto conn = std::make_shared<Conn>();
    conn->id = next_conn_id_++;
    conn->src_host = from_host;
    conn->dst_host = to.host;
    conn->src_addr = Address(from_host, 0);
    conn->dst_addr = to;
    conn->meta = std::move(meta);
    conn->src_ep = &owner;
    conn->dst_ep = lit->second;

    auto src_link = std::make_shared<SimLink>(this, conn, true, next_link_id_++);
    auto dst_link = std::make_shared<SimLink>(this, conn, false, next_link_id_++);
    conn->src_link = src_link;
    conn->dst_link = dst_link;

    transmit(conn, true, "open", {});
    return src_link;
}

inline void SimNet::transmit(const std::shared_ptr<Conn>& conn, bool from_src,
                             const std::string& kind, Bytes data) {
    const std::string& src = from_src ? conn->src_host : conn->dst_host;
    const std::string& dst = from_src ? conn->dst_host : conn->src_host;
    auto& edge = edges_[edge_key(src, dst)];
    const LinkSpec* cfg = edge_cfg(edge);
    if (!cfg) {
        ++dropped_;
        return;
    }
    const int dir = edge_key(src, dst).first == src ? 0 : 1;
    const std::size_t len = data.size();

    // depart = tail of the directional serialization queue, arrival adds
    // propagation latency and the jitter draw.
    std::int64_t ser_us = 0;
    if (cfg->bandwidth > 0 && len > 0)
        ser_us = std::llround(static_cast<double>(len) * 1e6 / cfg->bandwidth);
    std::int64_t depart = std::max(now_us_, edge.busy_until_us[dir]) + ser_us;
    edge.busy_until_us[dir] = depart;

    std::int64_t jitter_us = 0;
    if (cfg->jitter > 0) {
        const double u = rng_.unit() * 2.0 * cfg->jitter - cfg->jitter;
        jitter_us = std::llround(u * static_cast<double>(cfg->latency_us));
    }
    std::int64_t arrival = depart + cfg->latency_us + jitter_us;
    arrival = std::max(arrival, edge.last_arrival_us[dir]); // FIFO per direction
    edge.last_arrival_us[dir] = arrival;

    // Node processing queue at the destination (shared across circuits; the
    // contention signal the clogging attack measures).
    auto& node = nodes_[dst];
    std::int64_t deliver = arrival;
    if (node.proc_bw > 0 && len > 0) {
        const std::int64_t proc_us =
            std::llround(static_cast<double>(len) * 1e6 / node.proc_bw);
        deliver = std::max(arrival, node.busy_until_us) + proc_us;
        node.busy_until_us = deliver;
    }

    if (kind == "data") ++sent_;

    push_event(deliver, [this, conn, from_src, kind, data = std::move(data), src, dst,
                         deliver]() {
        auto& e = edges_[edge_key(src, dst)];
        const Address& dst_addr = from_src ? conn->dst_addr : conn->src_addr;
        for (Tap* tap : e.taps) tap->record(deliver, src, dst_addr, kind, data);
        if (logging_)
            log_.push_back(std::to_string(deliver) + " " + kind + " " + src + "->" + dst +
                           " len=" + std::to_string(data.size()));

        Endpoint* ep = from_src ? conn->dst_ep : conn->src_ep;
        const LinkPtr& view = from_src ? conn->dst_link : conn->src_link;
        bool& open_flag = from_src ? conn->dst_open : conn->src_open;
        if (kind == "open") {
            ep->on_link_open(view);
        } else if (kind == "data") {
            if (!open_flag) {
                ++dropped_;
                return;
            }
            ++delivered_;
            ep->on_bytes(view, data);
        } else { // close
            if (!open_flag) return;
            open_flag = false;
            ep->on_link_closed(view);
        }
    });
}

} // namespace aranea
