#pragma once

#include <atomic>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "dtp/core/envelope.hpp"
#include "dtp/core/error.hpp"

namespace dtp {

using PublisherId = std::uint32_t;
using SubscriptionId = std::uint64_t;

class Bus;

/// Publishing handle for one (publisher, topic) pair; owns the sequence counter.
class Publisher {
 public:
  Publisher() = default;

  /// Publishes the next envelope; returns the number of deliveries.
  std::size_t publish(Timestamp t, Bytes payload);

  const std::string& topic() const { return topic_; }
  const std::string& kind() const { return kind_; }
  PublisherId id() const { return id_; }
  std::uint64_t next_seq() const { return next_seq_; }

 private:
  friend class Bus;
  Publisher(Bus* bus, PublisherId id, std::string topic, std::string kind)
      : bus_(bus), id_(id), topic_(std::move(topic)), kind_(std::move(kind)) {}

  Bus* bus_ = nullptr;
  PublisherId id_ = 0;
  std::string topic_;
  std::string kind_;
  std::uint64_t next_seq_ = 1;
};

/// In-process topic bus. Delivery is synchronous on the publishing thread;
/// callbacks of one subscriber never run concurrently.
class Bus {
 public:
  using Handler = std::function<void(const Envelope&)>;

  Bus() = default;
  Bus(const Bus&) = delete;
  Bus& operator=(const Bus&) = delete;

  void register_kind(const std::string& kind) {
    std::lock_guard lock(mu_);
    kinds_.insert(kind);
  }

  bool is_registered(const std::string& kind) const {
    std::lock_guard lock(mu_);
    return kinds_.contains(kind);
  }

  SubscriptionId subscribe(const std::string& pattern, Handler handler) {
    if (!is_valid_pattern(pattern)) throw ValidationError("invalid topic pattern: '" + pattern + "'");
    std::lock_guard lock(mu_);
    auto sub = std::make_shared<Subscription>();
    sub->id = ++last_sub_id_;
    sub->pattern = pattern;
    sub->handler = std::move(handler);
    subs_.push_back(sub);
    return sub->id;
  }

  void unsubscribe(SubscriptionId id) {
    std::lock_guard lock(mu_);
    std::erase_if(subs_, [id](const auto& s) { return s->id == id; });
  }

  PublisherId new_publisher_id() { return ++last_pub_id_; }

  Publisher advertise(const std::string& topic, const std::string& kind) {
    if (!is_valid_topic(topic)) throw ValidationError("invalid topic: '" + topic + "'");
    if (!is_registered(kind)) throw RejectionError("unregistered payload kind: " + kind);
    return Publisher(this, new_publisher_id(), topic, kind);
  }

  /// Delivers `e` to every matching subscriber exactly once.
  std::size_t publish(PublisherId publisher, const Envelope& e) {
    if (!is_valid_topic(e.topic)) throw ValidationError("invalid topic: '" + e.topic + "'");
    std::vector<std::shared_ptr<Subscription>> targets;
    {
      std::lock_guard lock(mu_);
      if (!kinds_.contains(e.payload_kind)) {
        throw RejectionError("unregistered payload kind: " + e.payload_kind);
      }
      auto key = std::make_pair(publisher, e.topic);
      auto it = last_seq_.find(key);
      if (it != last_seq_.end() && e.seq <= it->second) {
        throw RejectionError("sequence regression on " + e.topic + ": " + std::to_string(e.seq) +
                             " after " + std::to_string(it->second));
      }
      last_seq_[key] = e.seq;
      for (const auto& s : subs_) {
        if (topic_matches(s->pattern, e.topic)) targets.push_back(s);
      }
    }
    for (const auto& s : targets) {
      std::lock_guard serial(s->mu);
      s->handler(e);
    }
    return targets.size();
  }

 private:
  struct Subscription {
    SubscriptionId id = 0;
    std::string pattern;
    Handler handler;
    std::recursive_mutex mu;
  };

  mutable std::mutex mu_;
  std::set<std::string> kinds_;
  std::vector<std::shared_ptr<Subscription>> subs_;
  std::map<std::pair<PublisherId, std::string>, std::uint64_t> last_seq_;
  SubscriptionId last_sub_id_ = 0;
  std::atomic<PublisherId> last_pub_id_{0};
};

inline std::size_t Publisher::publish(Timestamp t, Bytes payload) {
  if (bus_ == nullptr) throw Error("publisher not bound to a bus");
  Envelope e{topic_, next_seq_, t, kind_, std::move(payload)};
  auto n = bus_->publish(id_, e);
  ++next_seq_;
  return n;
}

}  // namespace dtp
