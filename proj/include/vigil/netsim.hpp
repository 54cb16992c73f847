#pragma once

#include <cstdint>
#include <optional>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

#include "vigil/common.hpp"
#include "vigil/messages.hpp"

namespace vigil::netsim {

enum class MessageKind { kVideoChunk, kEdgeReport, kReconfigCommand, kAck };

const char* to_string(MessageKind k);

// Endpoint id of the cloud coordinator; camera ids are >= 0.
inline constexpr int kCloud = -1;

struct Message {
  MessageKind kind = MessageKind::kVideoChunk;
  int src = kCloud;
  int dst = kCloud;
  std::int64_t size_bytes = 0;
  SimTime sent_at = 0;
  SimTime deliver_at = 0;  // assigned by the network
  std::uint64_t seq = 0;   // assigned by the network; submission order
  msg::Payload payload;
};

Message make_message(int src, int dst, SimTime sent_at, msg::Payload payload);

struct TimeReversal : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct LinkConfig {
  double capacity_mb_s = 100.0;  // 1 MB/s == 1 byte/us
  SimTime base_latency_us = 5000;
  double drop_probability = 0.0;  // hook, default off
};

// Deterministic store-and-forward network: one shared uplink (all nodes ->
// cloud) serialized by capacity, plus latency-only per-node downlinks.
// Single-scheduler use: submit messages, then advance the clock to collect
// deliveries in (deliver_at, src, seq) order.
class Network {
 public:
  explicit Network(LinkConfig uplink = {}, SimTime downlink_latency_us = 5000,
                   std::uint64_t drop_seed = 0);

  SimTime now() const { return now_; }

  // Accepts a message with sent_at >= now; scheduling happens lazily in
  // advance() in (sent_at, src, seq) order, so submission order between
  // producers does not matter.
  void submit(Message msg);

  // Delivers everything due by `until` and moves the clock there.
  std::vector<Message> advance(SimTime until);

  // Average delivered uplink throughput over [start, end), MB/s.
  double uplink_utilization(SimTime start, SimTime end) const;
  // Delivered uplink bytes binned by 100 ms of delivery time.
  const std::vector<std::int64_t>& uplink_bins() const { return uplink_bins_; }
  static constexpr SimTime kBinWidth = 100000;

  std::int64_t bytes_submitted() const { return bytes_submitted_; }
  std::int64_t bytes_delivered() const { return bytes_delivered_; }
  std::int64_t bytes_dropped() const { return bytes_dropped_; }
  std::int64_t bytes_in_flight() const {
    return bytes_submitted_ - bytes_delivered_ - bytes_dropped_;
  }

  const std::vector<Message>& delivery_log() const { return delivery_log_; }

 private:
  struct SendOrder {
    bool operator()(const Message& a, const Message& b) const;
  };
  struct DeliverOrder {
    bool operator()(const Message& a, const Message& b) const;
  };

  void schedule(Message msg);

  LinkConfig uplink_;
  SimTime downlink_latency_us_;
  SimTime now_ = 0;
  SimTime uplink_busy_until_ = 0;
  std::uint64_t next_seq_ = 0;
  Rng drop_rng_;

  std::priority_queue<Message, std::vector<Message>, SendOrder> pending_;
  std::priority_queue<Message, std::vector<Message>, DeliverOrder> in_flight_;

  std::vector<std::int64_t> uplink_bins_;
  std::int64_t bytes_submitted_ = 0;
  std::int64_t bytes_delivered_ = 0;
  std::int64_t bytes_dropped_ = 0;
  std::vector<Message> delivery_log_;
};

// CSV: deliver_at_ms,kind,src,dst,size_bytes
void write_delivery_log(std::ostream& out, const std::vector<Message>& log);
void write_delivery_log(const std::string& path, const std::vector<Message>& log);

}  // namespace vigil::netsim
