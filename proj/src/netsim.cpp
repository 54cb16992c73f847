#include "vigil/netsim.hpp"

#include <cmath>
#include <fstream>
#include <ostream>
#include <tuple>

namespace vigil::netsim {

const char* to_string(MessageKind k) {
  switch (k) {
    case MessageKind::kVideoChunk: return "video_chunk";
    case MessageKind::kEdgeReport: return "edge_report";
    case MessageKind::kReconfigCommand: return "reconfig_command";
    case MessageKind::kAck: return "ack";
  }
  return "unknown";
}

Message make_message(int src, int dst, SimTime sent_at, msg::Payload payload) {
  Message m;
  m.src = src;
  m.dst = dst;
  m.sent_at = sent_at;
  switch (payload.index()) {
    case 0:
      m.kind = MessageKind::kVideoChunk;
      m.size_bytes = std::get<msg::VideoChunk>(payload).size_bytes;
      break;
    case 1:
      m.kind = MessageKind::kEdgeReport;
      m.size_bytes =
          msg::report_size_bytes(std::get<msg::EdgeReport>(payload).detections.size());
      break;
    case 2:
      m.kind = MessageKind::kReconfigCommand;
      m.size_bytes = msg::kCommandSizeBytes;
      break;
    default:
      m.kind = MessageKind::kAck;
      m.size_bytes = msg::kAckSizeBytes;
      break;
  }
  m.payload = std::move(payload);
  return m;
}

bool Network::SendOrder::operator()(const Message& a, const Message& b) const {
  return std::tie(a.sent_at, a.src, a.seq) > std::tie(b.sent_at, b.src, b.seq);
}

bool Network::DeliverOrder::operator()(const Message& a, const Message& b) const {
  return std::tie(a.deliver_at, a.src, a.seq) > std::tie(b.deliver_at, b.src, b.seq);
}

Network::Network(LinkConfig uplink, SimTime downlink_latency_us, std::uint64_t drop_seed)
    : uplink_(uplink), downlink_latency_us_(downlink_latency_us), drop_rng_(drop_seed) {}

void Network::submit(Message msg) {
  if (msg.sent_at < now_) {
    throw TimeReversal("message sent at " + std::to_string(msg.sent_at) +
                       " while network clock is at " + std::to_string(now_));
  }
  msg.seq = next_seq_++;
  bytes_submitted_ += msg.size_bytes;
  pending_.push(std::move(msg));
}

void Network::schedule(Message msg) {
  if (uplink_.drop_probability > 0.0 && msg.dst == kCloud &&
      drop_rng_.uniform01() < uplink_.drop_probability) {
    bytes_dropped_ += msg.size_bytes;
    return;
  }
  if (msg.src == kCloud) {
    msg.deliver_at = msg.sent_at + downlink_latency_us_;
  } else {
    // 1 MB/s is exactly 1 byte/us, so tx time in us is bytes / (MB/s).
    const SimTime start = std::max(msg.sent_at, uplink_busy_until_);
    const auto tx_us = static_cast<SimTime>(
        std::llround(static_cast<double>(msg.size_bytes) / uplink_.capacity_mb_s));
    uplink_busy_until_ = start + tx_us;
    msg.deliver_at = start + tx_us + uplink_.base_latency_us;
  }
  in_flight_.push(std::move(msg));
}

std::vector<Message> Network::advance(SimTime until) {
  if (until < now_) {
    throw TimeReversal("advance to " + std::to_string(until) +
                       " behind network clock " + std::to_string(now_));
  }
  // Serialize in (sent_at, src, seq) order regardless of submission order.
  while (!pending_.empty() && pending_.top().sent_at <= until) {
    Message m = pending_.top();
    pending_.pop();
    schedule(std::move(m));
  }
  std::vector<Message> out;
  while (!in_flight_.empty() && in_flight_.top().deliver_at <= until) {
    Message m = in_flight_.top();
    in_flight_.pop();
    bytes_delivered_ += m.size_bytes;
    if (m.dst == kCloud) {
      const auto bin = static_cast<size_t>(m.deliver_at / kBinWidth);
      if (uplink_bins_.size() <= bin) uplink_bins_.resize(bin + 1, 0);
      uplink_bins_[bin] += m.size_bytes;
    }
    delivery_log_.push_back(m);
    out.push_back(std::move(m));
  }
  now_ = until;
  return out;
}

double Network::uplink_utilization(SimTime start, SimTime end) const {
  if (end <= start) return 0.0;
  std::int64_t bytes = 0;
  for (const auto& m : delivery_log_) {
    if (m.dst == kCloud && m.deliver_at >= start && m.deliver_at < end) {
      bytes += m.size_bytes;
    }
  }
  return static_cast<double>(bytes) / static_cast<double>(end - start);
}

void write_delivery_log(std::ostream& out, const std::vector<Message>& log) {
  out << "deliver_at_ms,kind,src,dst,size_bytes\n";
  for (const auto& m : log) {
    out << m.deliver_at / 1000 << ',' << to_string(m.kind) << ',' << m.src << ','
        << m.dst << ',' << m.size_bytes << '\n';
  }
}

void write_delivery_log(const std::string& path, const std::vector<Message>& log) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  write_delivery_log(out, log);
  if (!out) throw std::runtime_error(path + ": write failed");
}

}  // namespace vigil::netsim
