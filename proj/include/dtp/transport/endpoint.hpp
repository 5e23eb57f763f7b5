#pragma once

#include <chrono>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <vector>

#include "dtp/core/clock.hpp"
#include "dtp/transport/connection_string.hpp"
#include "dtp/transport/fault.hpp"
#include "dtp/transport/link.hpp"

namespace dtp::transport {

/// Shared by all endpoints of one run: mem:// rendezvous and the time source
/// used for arrival stamps and scheduled faults.
struct TransportContext {
  MemHub hub;
  const VirtualClock* clock = nullptr;

  Timestamp now() const { return clock ? clock->now() : Timestamp{0}; }
};

struct EndpointStats {
  std::uint64_t bytes_in = 0;
  std::uint64_t bytes_out = 0;
  std::uint64_t reconnects = 0;

  bool operator==(const EndpointStats&) const = default;
};

enum class TapDirection { Inbound, Outbound };

/// Duplex byte stream addressed by a connection string. Framing is left to
/// the owner. Faults shape the bytes this endpoint sends.
class Endpoint {
 public:
  using Tap = std::function<void(TapDirection, Timestamp, ByteView)>;

  static std::unique_ptr<Endpoint> open(const ConnectionString& cs, Role role, TransportContext& ctx) {
    std::unique_ptr<Endpoint> ep(new Endpoint(cs, role, ctx));
    if (role == Role::Listen) {
      switch (cs.scheme) {
        case Scheme::Mem: ep->acceptor_ = std::make_unique<MemAcceptor>(ctx.hub, cs.address); break;
        case Scheme::Tcp: ep->acceptor_ = std::make_unique<TcpAcceptor>(cs); break;
        case Scheme::Pty: ep->acceptor_ = std::make_unique<PtyAcceptor>(cs.address); break;
      }
      ep->poll();
    } else {
      ep->link_ = ep->dial();
      ep->ever_connected_ = true;
      ep->sessions_ = 1;
    }
    return ep;
  }

  static std::unique_ptr<Endpoint> open(std::string_view cs, Role role, TransportContext& ctx) {
    return open(ConnectionString::parse(cs), role, ctx);
  }

  ~Endpoint() { close(); }

  const ConnectionString& connection() const { return cs_; }
  Role role() const { return role_; }

  /// Bound port of a tcp listener (resolves port 0 to the ephemeral port).
  int port() const { return acceptor_ ? acceptor_->port() : cs_.scheme == Scheme::Tcp ? cs_.port() : 0; }

  bool connected() {
    std::lock_guard lock(mu_);
    return link_ != nullptr;
  }

  /// Number of links established so far; changes whenever a new peer session begins.
  std::uint64_t sessions() const {
    std::lock_guard lock(mu_);
    return sessions_;
  }

  /// Accepts a waiting peer, applies due faults, releases delayed bytes.
  void poll() {
    std::lock_guard lock(mu_);
    poll_locked();
  }

  /// Connect role: dial again after a disconnect. Returns true on success.
  bool reconnect() {
    std::lock_guard lock(mu_);
    if (role_ != Role::Connect) throw TransportError("reconnect() on a listening endpoint");
    if (link_) return true;
    try {
      link_ = dial();
    } catch (const TransportError&) {
      return false;
    }
    ++stats_.reconnects;
    ++sessions_;
    return true;
  }

  void write(ByteView data) {
    std::lock_guard lock(mu_);
    poll_locked();
    if (drop_all_) return;
    if (!link_) throw TransportError("write on disconnected endpoint " + cs_.str());
    Bytes shaped(data.begin(), data.end());
    for (auto& c : corrupt_) {
      for (auto& b : shaped) b ^= corruption_mask(c.spec, c.index++);
    }
    auto now = ctx_.now();
    if (tap_) tap_(TapDirection::Outbound, now, shaped);
    stats_.bytes_out += shaped.size();
    if (latency_ && cs_.scheme != Scheme::Mem) {
      delayed_.push_back(Chunk{now + *latency_, std::move(shaped)});
      return;
    }
    try {
      link_->write(shaped, latency_ ? now + *latency_ : now);
    } catch (const TransportError&) {
      drop_link();
      throw;
    }
  }

  std::vector<Chunk> read() {
    std::lock_guard lock(mu_);
    poll_locked();
    if (!link_) return {};
    auto chunks = link_->read(ctx_.now());
    for (const auto& c : chunks) {
      stats_.bytes_in += c.data.size();
      if (tap_) tap_(TapDirection::Inbound, c.arrival, c.data);
    }
    if (link_->at_eof(ctx_.now())) drop_link();
    return chunks;
  }

  /// Concatenated payload of read().
  Bytes read_bytes() {
    Bytes out;
    for (auto& c : read()) out.insert(out.end(), c.data.begin(), c.data.end());
    return out;
  }

  bool wait_readable(std::chrono::milliseconds timeout) {
    Link* l;
    {
      std::lock_guard lock(mu_);
      l = link_.get();
    }
    return l ? l->wait_readable(timeout) : false;
  }

  void inject_fault(const FaultSpec& f) {
    validate(f);
    std::lock_guard lock(mu_);
    if ((std::holds_alternative<DropAll>(f) && latency_) ||
        (std::holds_alternative<Latency>(f) && drop_all_)) {
      throw ValidationError("drop_all and latency cannot be combined on one endpoint");
    }
    std::visit(
        [&](const auto& spec) {
          using T = std::decay_t<decltype(spec)>;
          if constexpr (std::is_same_v<T, DropAll>) {
            drop_all_ = true;
            if (link_) link_->close();
            link_.reset();
          } else if constexpr (std::is_same_v<T, Corrupt>) {
            corrupt_.push_back({spec, 0});
          } else if constexpr (std::is_same_v<T, Latency>) {
            latency_ = spec.delay;
          } else {
            disconnects_.push_back(spec.at);
          }
        },
        f);
    poll_locked();
  }

  EndpointStats stats() const {
    std::lock_guard lock(mu_);
    return stats_;
  }

  void set_tap(Tap tap) {
    std::lock_guard lock(mu_);
    tap_ = std::move(tap);
  }

  void close() {
    std::lock_guard lock(mu_);
    if (link_) link_->close();
    link_.reset();
    acceptor_.reset();
  }

 private:
  struct ActiveCorruption {
    Corrupt spec;
    std::uint64_t index = 0;
  };

  Endpoint(ConnectionString cs, Role role, TransportContext& ctx) : cs_(std::move(cs)), role_(role), ctx_(ctx) {}

  std::unique_ptr<Link> dial() {
    switch (cs_.scheme) {
      case Scheme::Mem: return ctx_.hub.connect(cs_.address);
      case Scheme::Tcp: return connect_tcp(cs_);
      case Scheme::Pty: return connect_pty(cs_.address);
    }
    throw TransportError("unreachable");
  }

  void drop_link() {
    if (link_) link_->close();
    link_.reset();
    if (acceptor_) acceptor_->reset();
  }

  void poll_locked() {
    auto now = ctx_.now();
    for (auto it = disconnects_.begin(); it != disconnects_.end();) {
      if (now >= *it) {
        drop_link();
        it = disconnects_.erase(it);
      } else {
        ++it;
      }
    }
    if (!link_ && acceptor_) {
      if (auto l = acceptor_->accept()) {
        if (drop_all_) {
          l->close();
        } else {
          link_ = std::move(l);
          if (ever_connected_) ++stats_.reconnects;
          ever_connected_ = true;
          ++sessions_;
        }
      }
    }
    while (link_ && !delayed_.empty() && delayed_.front().arrival <= now) {
      link_->write(delayed_.front().data, delayed_.front().arrival);
      delayed_.pop_front();
    }
  }

  ConnectionString cs_;
  Role role_;
  TransportContext& ctx_;
  mutable std::mutex mu_;
  std::unique_ptr<Acceptor> acceptor_;
  std::unique_ptr<Link> link_;
  bool ever_connected_ = false;
  std::uint64_t sessions_ = 0;
  EndpointStats stats_;
  Tap tap_;

  bool drop_all_ = false;
  std::optional<Duration> latency_;
  std::vector<ActiveCorruption> corrupt_;
  std::vector<Timestamp> disconnects_;
  std::deque<Chunk> delayed_;
};

}  // namespace dtp::transport
