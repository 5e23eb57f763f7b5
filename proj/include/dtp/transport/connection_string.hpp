#pragma once

#include <string>
#include <string_view>

#include "dtp/core/error.hpp"

namespace dtp::transport {

enum class Scheme { Tcp, Mem, Pty };

enum class Role { Listen, Connect };

/// `tcp://host:port`, `mem://channel`, `pty:///dev/path`.
struct ConnectionString {
  Scheme scheme = Scheme::Mem;
  std::string address;

  static ConnectionString parse(std::string_view s) {
    auto sep = s.find("://");
    if (sep == std::string_view::npos) {
      throw ValidationError("connection string lacks '://': '" + std::string(s) + "'");
    }
    auto scheme = s.substr(0, sep);
    ConnectionString cs;
    if (scheme == "tcp") {
      cs.scheme = Scheme::Tcp;
    } else if (scheme == "mem") {
      cs.scheme = Scheme::Mem;
    } else if (scheme == "pty") {
      cs.scheme = Scheme::Pty;
    } else {
      throw ValidationError("unknown scheme '" + std::string(scheme) + "'");
    }
    cs.address = std::string(s.substr(sep + 3));
    if (cs.address.empty()) throw ValidationError("empty address in '" + std::string(s) + "'");
    if (cs.scheme == Scheme::Tcp) {
      auto colon = cs.address.rfind(':');
      if (colon == std::string::npos || colon == 0 || colon + 1 == cs.address.size()) {
        throw ValidationError("tcp address must be host:port: '" + cs.address + "'");
      }
    }
    return cs;
  }

  std::string str() const {
    switch (scheme) {
      case Scheme::Tcp: return "tcp://" + address;
      case Scheme::Mem: return "mem://" + address;
      case Scheme::Pty: return "pty://" + address;
    }
    return {};
  }

  std::string host() const { return address.substr(0, address.rfind(':')); }

  int port() const {
    auto p = address.substr(address.rfind(':') + 1);
    try {
      std::size_t used = 0;
      int v = std::stoi(p, &used);
      if (used != p.size() || v < 0 || v > 65535) throw std::out_of_range(p);
      return v;
    } catch (const std::exception&) {
      throw ValidationError("invalid tcp port '" + p + "'");
    }
  }

  bool operator==(const ConnectionString&) const = default;
};

}  // namespace dtp::transport
