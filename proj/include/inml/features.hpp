#pragma once

#include "inml/model.hpp"

#include <cstdint>
#include <functional>
#include <list>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace inml {

struct PacketRecord {
  std::uint64_t ts_ns = 0;
  std::uint32_t src_ip = 0;
  std::uint32_t dst_ip = 0;
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  std::uint8_t proto = 0;
  std::uint16_t length = 0;
  std::uint8_t flags = 0;
  bool operator==(const PacketRecord&) const = default;
};

// Header: ts_ns,src_ip,dst_ip,src_port,dst_port,proto,len,flags. IPs are
// dotted quads or integers. Timestamps must not decrease. Empty input (no
// header either) is an empty trace.
std::vector<PacketRecord> parse_trace(std::string_view text);
std::vector<PacketRecord> load_trace(const std::string& path);
std::uint32_t parse_ipv4(std::string_view s);

enum class Provenance { packet, flow, aggregate, passthrough };
const char* provenance_name(Provenance p);

// Extractor ids. Packet: src_ip dst_ip src_port dst_port proto len flags
// ports_equal is_sm_ips_ports. Flow: pkt_count byte_count duration last_iat
// data_rate fwd_pkts rev_pkts fwd_bytes rev_bytes jitter_<i>. Aggregate
// (grouped by destination port): agg_pkts agg_bytes agg_flows. passthrough:
// taken from a dataset column, never from packets.
std::optional<Provenance> extractor_provenance(std::string_view id);

struct FeatureBinding {
  FeatureSpec spec;
  std::string extractor;
};

// Feature-spec file: {"schema": 1, "features": [...], "extract": {name: id}}.
std::vector<FeatureBinding> parse_feature_spec(std::string_view text);
std::vector<FeatureBinding> load_feature_spec(const std::string& path);

struct ExtractedVector {
  FeatureVector values;
  std::vector<Provenance> provenance;
  std::vector<bool> saturated;  // value clamped to 2^w - 1
};

// Packet-level features only; UnknownFeatureError for anything else.
ExtractedVector extract_packet_features(const PacketRecord& r, const std::vector<FeatureBinding>& spec);

// FNV-1a 32 over the canonical 5-tuple: the (ip, port) endpoints sorted
// ascending, each ip 4 bytes and port 2 bytes big-endian, then proto.
std::uint32_t flow_hash(const PacketRecord& r);

struct FlowConfig {
  std::size_t capacity = 1024;
  std::vector<std::uint64_t> jitter_edges_ns{1'000'000, 10'000'000};
  bool track_collisions = false;
};

struct FlowState {
  std::uint32_t key = 0;
  std::uint64_t first_seen = 0;
  std::uint64_t last_seen = 0;
  std::uint64_t pkt_count = 0;
  std::uint64_t byte_count = 0;
  std::uint64_t last_iat = 0;
  std::vector<std::uint64_t> jitter_bins;
  std::uint64_t fwd_pkts = 0, rev_pkts = 0, fwd_bytes = 0, rev_bytes = 0;
  // Endpoints of the packet that created the flow.
  std::uint32_t src_ip = 0, dst_ip = 0;
  std::uint16_t src_port = 0, dst_port = 0;
  std::uint8_t proto = 0;

  std::uint64_t duration() const { return last_seen - first_seen; }
  // byte_count * 8 / max(duration, 1), integer division; bits per ns.
  std::uint64_t data_rate() const;
  bool operator==(const FlowState&) const = default;
};

struct FlowUpdate {
  FlowState state;
  bool created = false;
  std::optional<std::uint32_t> evicted;
};

// Register-array model of per-flow state. Full tables evict the least
// recently updated flow.
class FlowTable {
 public:
  explicit FlowTable(FlowConfig cfg = {});

  FlowUpdate update(const PacketRecord& r);

  std::size_t size() const { return flows_.size(); }
  std::size_t n_bins() const { return cfg_.jitter_edges_ns.size() + 1; }
  const FlowConfig& config() const { return cfg_; }
  // K x (N + 1): N jitter counters plus the last-seen timestamp per flow slot.
  std::uint64_t jitter_memory_entries() const { return cfg_.capacity * (n_bins() + 1); }
  std::uint64_t active_jitter_entries() const { return flows_.size() * (n_bins() + 1); }
  std::uint64_t evictions() const { return evictions_; }
  std::uint64_t collisions() const { return collisions_; }
  std::uint64_t packets() const { return packets_; }
  const std::vector<std::string>& events() const { return events_; }

  // Flows sorted by key.
  std::vector<FlowState> snapshot() const;
  std::optional<FlowState> find(std::uint32_t key) const;

 private:
  FlowConfig cfg_;
  std::list<std::uint32_t> lru_;  // front = most recent
  struct Slot {
    FlowState state;
    std::list<std::uint32_t>::iterator pos;
    std::uint64_t tuple[3] = {0, 0, 0};
  };
  std::unordered_map<std::uint32_t, Slot> flows_;
  std::uint64_t evictions_ = 0, collisions_ = 0, packets_ = 0;
  std::vector<std::string> events_;
};

struct GroupTotals {
  std::uint64_t pkt_count = 0;
  std::uint64_t byte_count = 0;
  std::uint64_t flow_count = 0;
  bool operator==(const GroupTotals&) const = default;
};

using GroupRule = std::function<std::uint64_t(const FlowState&)>;
GroupRule group_by_dst_port();
GroupRule group_by_proto();

std::map<std::uint64_t, GroupTotals> aggregate_features(const FlowTable& table, const GroupRule& rule);

// Replays a trace, emitting one vector per packet with flow and aggregate
// features taken after that packet's update.
struct TraceExtraction {
  std::vector<ExtractedVector> vectors;
  std::vector<FlowState> flows;
  std::uint64_t jitter_memory_entries = 0;
  std::uint64_t evictions = 0;
  std::uint64_t collisions = 0;
};

TraceExtraction extract_trace(const std::vector<PacketRecord>& trace, const std::vector<FeatureBinding>& spec,
                              const FlowConfig& cfg = {});

}  // namespace inml
