#pragma once

#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/stat.h>
#include <termios.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "dtp/core/bytes.hpp"
#include "dtp/core/error.hpp"
#include "dtp/core/time.hpp"
#include "dtp/transport/connection_string.hpp"

namespace dtp::transport {

/// Bytes that became readable at `arrival`.
struct Chunk {
  Timestamp arrival;
  Bytes data;
};

/// One side of an established duplex byte stream.
class Link {
 public:
  virtual ~Link() = default;
  /// `arrival` is honoured by in-memory links; OS links deliver immediately.
  virtual void write(ByteView data, Timestamp arrival) = 0;
  /// Everything readable at `now`, without blocking.
  virtual std::vector<Chunk> read(Timestamp now) = 0;
  /// Peer closed and nothing left to read.
  virtual bool at_eof(Timestamp now) = 0;
  virtual bool wait_readable(std::chrono::milliseconds timeout) = 0;
  virtual void close() = 0;
};

// ---------------------------------------------------------------------------
// mem://

namespace detail {

struct MemQueue {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<Chunk> chunks;
  bool closed = false;
};

}  // namespace detail

class MemLink final : public Link {
 public:
  MemLink(std::shared_ptr<detail::MemQueue> in, std::shared_ptr<detail::MemQueue> out)
      : in_(std::move(in)), out_(std::move(out)) {}
  ~MemLink() override { close(); }

  void write(ByteView data, Timestamp arrival) override {
    if (data.empty()) return;
    std::lock_guard lock(out_->mu);
    if (out_->closed) throw TransportError("write on closed mem link");
    // arrivals never overtake earlier bytes
    if (!out_->chunks.empty() && out_->chunks.back().arrival > arrival) {
      arrival = out_->chunks.back().arrival;
    }
    out_->chunks.push_back(Chunk{arrival, Bytes(data.begin(), data.end())});
    out_->cv.notify_all();
  }

  std::vector<Chunk> read(Timestamp now) override {
    std::vector<Chunk> out;
    std::lock_guard lock(in_->mu);
    while (!in_->chunks.empty() && in_->chunks.front().arrival <= now) {
      out.push_back(std::move(in_->chunks.front()));
      in_->chunks.pop_front();
    }
    return out;
  }

  bool at_eof(Timestamp) override {
    std::lock_guard lock(in_->mu);
    return in_->closed && in_->chunks.empty();
  }

  bool wait_readable(std::chrono::milliseconds timeout) override {
    std::unique_lock lock(in_->mu);
    return in_->cv.wait_for(lock, timeout, [&] { return !in_->chunks.empty() || in_->closed; });
  }

  void close() override {
    for (auto& q : {in_, out_}) {
      std::lock_guard lock(q->mu);
      q->closed = true;
      q->cv.notify_all();
    }
  }

 private:
  std::shared_ptr<detail::MemQueue> in_;
  std::shared_ptr<detail::MemQueue> out_;
};

/// Rendezvous point for mem:// endpoints, keyed by channel name.
class MemHub {
 public:
  struct Channel {
    std::deque<std::unique_ptr<Link>> pending;
  };

  void bind(const std::string& name) {
    std::lock_guard lock(mu_);
    if (channels_.contains(name)) throw TransportError("mem channel '" + name + "' already bound");
    channels_.emplace(name, std::make_shared<Channel>());
  }

  void unbind(const std::string& name) {
    std::lock_guard lock(mu_);
    channels_.erase(name);
  }

  std::unique_ptr<Link> connect(const std::string& name) {
    std::lock_guard lock(mu_);
    auto it = channels_.find(name);
    if (it == channels_.end()) throw TransportError("connection refused: no listener on mem://" + name);
    auto a = std::make_shared<detail::MemQueue>();
    auto b = std::make_shared<detail::MemQueue>();
    it->second->pending.push_back(std::make_unique<MemLink>(a, b));
    return std::make_unique<MemLink>(b, a);
  }

  std::unique_ptr<Link> accept(const std::string& name) {
    std::lock_guard lock(mu_);
    auto it = channels_.find(name);
    if (it == channels_.end() || it->second->pending.empty()) return nullptr;
    auto link = std::move(it->second->pending.front());
    it->second->pending.pop_front();
    return link;
  }

 private:
  std::mutex mu_;
  std::map<std::string, std::shared_ptr<Channel>> channels_;
};

// ---------------------------------------------------------------------------
// File-descriptor links (tcp://, pty://)

namespace detail {

inline void set_nonblocking(int fd) {
  int flags = ::fcntl(fd, F_GETFL, 0);
  ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
}

inline std::string errno_text() { return std::strerror(errno); }

inline void make_raw(int fd) {
  termios tio{};
  if (::tcgetattr(fd, &tio) == 0) {
    ::cfmakeraw(&tio);
    ::tcsetattr(fd, TCSANOW, &tio);
  }
}

}  // namespace detail

class FdLink final : public Link {
 public:
  /// `socket` selects send(MSG_NOSIGNAL) over write().
  FdLink(int fd, bool socket) : fd_(fd), socket_(socket) { detail::set_nonblocking(fd_); }
  ~FdLink() override { close(); }

  void write(ByteView data, Timestamp) override {
    std::size_t off = 0;
    while (off < data.size()) {
      if (fd_ < 0) throw TransportError("write on closed link");
      ssize_t n = socket_ ? ::send(fd_, data.data() + off, data.size() - off, MSG_NOSIGNAL)
                          : ::write(fd_, data.data() + off, data.size() - off);
      if (n > 0) {
        off += static_cast<std::size_t>(n);
      } else if (n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK)) {
        pollfd p{fd_, POLLOUT, 0};
        ::poll(&p, 1, 100);
      } else if (n < 0 && errno == EINTR) {
        continue;
      } else {
        throw TransportError("write failed: " + detail::errno_text());
      }
    }
  }

  std::vector<Chunk> read(Timestamp now) override {
    std::vector<Chunk> out;
    if (fd_ < 0) return out;
    Chunk chunk{now, {}};
    std::uint8_t buf[4096];
    for (;;) {
      ssize_t n = ::read(fd_, buf, sizeof buf);
      if (n > 0) {
        chunk.data.insert(chunk.data.end(), buf, buf + n);
      } else if (n == 0) {
        eof_ = true;
        break;
      } else if (errno == EINTR) {
        continue;
      } else {
        // EIO on a pty whose master went away reads as end of stream
        if (errno != EAGAIN && errno != EWOULDBLOCK) eof_ = true;
        break;
      }
    }
    if (!chunk.data.empty()) out.push_back(std::move(chunk));
    return out;
  }

  bool at_eof(Timestamp) override { return eof_ || fd_ < 0; }

  bool wait_readable(std::chrono::milliseconds timeout) override {
    if (fd_ < 0) return true;
    pollfd p{fd_, POLLIN, 0};
    return ::poll(&p, 1, static_cast<int>(timeout.count())) > 0;
  }

  void close() override {
    if (fd_ >= 0) {
      if (socket_) ::shutdown(fd_, SHUT_RDWR);
      ::close(fd_);
      fd_ = -1;
    }
  }

 private:
  int fd_;
  bool socket_;
  bool eof_ = false;
};

/// Server side of a link: hands out established links as peers arrive.
class Acceptor {
 public:
  virtual ~Acceptor() = default;
  virtual std::unique_ptr<Link> accept() = 0;
  virtual void reset() {}
  virtual int port() const { return 0; }
};

class MemAcceptor final : public Acceptor {
 public:
  MemAcceptor(MemHub& hub, std::string name) : hub_(hub), name_(std::move(name)) { hub_.bind(name_); }
  ~MemAcceptor() override { hub_.unbind(name_); }
  std::unique_ptr<Link> accept() override { return hub_.accept(name_); }

 private:
  MemHub& hub_;
  std::string name_;
};

class TcpAcceptor final : public Acceptor {
 public:
  explicit TcpAcceptor(const ConnectionString& cs) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    hints.ai_flags = AI_PASSIVE;
    addrinfo* res = nullptr;
    auto port = std::to_string(cs.port());
    if (::getaddrinfo(cs.host().c_str(), port.c_str(), &hints, &res) != 0 || res == nullptr) {
      throw TransportError("cannot resolve '" + cs.host() + "'");
    }
    fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
    int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(fd_, res->ai_addr, res->ai_addrlen) != 0) {
      auto msg = detail::errno_text();
      ::freeaddrinfo(res);
      ::close(fd_);
      throw TransportError("bind " + cs.str() + " failed: " + msg);
    }
    ::freeaddrinfo(res);
    if (::listen(fd_, 8) != 0) {
      ::close(fd_);
      throw TransportError("listen failed: " + detail::errno_text());
    }
    detail::set_nonblocking(fd_);
    sockaddr_in addr{};
    socklen_t len = sizeof addr;
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
  }
  ~TcpAcceptor() override { ::close(fd_); }

  std::unique_ptr<Link> accept() override {
    int c = ::accept(fd_, nullptr, nullptr);
    if (c < 0) return nullptr;
    int one = 1;
    ::setsockopt(c, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    return std::make_unique<FdLink>(c, true);
  }

  int port() const override { return port_; }

 private:
  int fd_ = -1;
  int port_ = 0;
};

/// Creates a pseudo terminal and exposes its slave under `path` (symlink),
/// so a driver configured with a device path opens it like a serial port.
class PtyAcceptor final : public Acceptor {
 public:
  explicit PtyAcceptor(std::string path) : path_(std::move(path)) { create(); }
  ~PtyAcceptor() override { destroy(); }

  std::unique_ptr<Link> accept() override {
    if (handed_out_) return nullptr;
    handed_out_ = true;
    int fd = master_;
    master_ = -1;
    return std::make_unique<FdLink>(fd, false);
  }

  /// Previous session ended: offer a fresh terminal under the same path.
  void reset() override {
    destroy();
    create();
  }

 private:
  void create() {
    master_ = ::posix_openpt(O_RDWR | O_NOCTTY);
    if (master_ < 0 || ::grantpt(master_) != 0 || ::unlockpt(master_) != 0) {
      throw TransportError("cannot allocate pseudo terminal: " + detail::errno_text());
    }
    const char* slave_name = ::ptsname(master_);
    slave_hold_ = ::open(slave_name, O_RDWR | O_NOCTTY);
    if (slave_hold_ < 0) throw TransportError("cannot open pty slave: " + detail::errno_text());
    detail::make_raw(slave_hold_);
    struct stat st{};
    if (::lstat(path_.c_str(), &st) == 0) {
      if (!S_ISLNK(st.st_mode)) {
        ::close(master_);
        ::close(slave_hold_);
        throw TransportError("pty path exists and is not a link: " + path_);
      }
      ::unlink(path_.c_str());
    }
    if (::symlink(slave_name, path_.c_str()) != 0) {
      auto msg = detail::errno_text();
      ::close(master_);
      ::close(slave_hold_);
      throw TransportError("cannot create pty path " + path_ + ": " + msg);
    }
    handed_out_ = false;
  }

  void destroy() {
    if (master_ >= 0) ::close(master_);
    if (slave_hold_ >= 0) ::close(slave_hold_);
    master_ = slave_hold_ = -1;
    ::unlink(path_.c_str());
  }

  std::string path_;
  int master_ = -1;
  int slave_hold_ = -1;
  bool handed_out_ = false;
};

inline std::unique_ptr<Link> connect_tcp(const ConnectionString& cs) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  auto port = std::to_string(cs.port());
  if (::getaddrinfo(cs.host().c_str(), port.c_str(), &hints, &res) != 0 || res == nullptr) {
    throw TransportError("cannot resolve '" + cs.host() + "'");
  }
  int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  int rc = ::connect(fd, res->ai_addr, res->ai_addrlen);
  ::freeaddrinfo(res);
  if (rc != 0) {
    auto msg = detail::errno_text();
    ::close(fd);
    throw TransportError("connection refused: " + cs.str() + " (" + msg + ")");
  }
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return std::make_unique<FdLink>(fd, true);
}

inline std::unique_ptr<Link> connect_pty(const std::string& path) {
  int fd = ::open(path.c_str(), O_RDWR | O_NOCTTY | O_NONBLOCK);
  if (fd < 0) throw TransportError("connection refused: cannot open " + path + ": " + detail::errno_text());
  detail::make_raw(fd);
  return std::make_unique<FdLink>(fd, false);
}

}  // namespace dtp::transport
