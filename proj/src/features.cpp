#include "inml/features.hpp"

#include "inml/error.hpp"
#include "io.hpp"
#include "json_util.hpp"

#include <algorithm>
#include <charconv>
#include <set>

namespace inml {

using detail::json;

namespace {

std::uint64_t parse_u64(std::string_view s, std::size_t line, const char* col) {
  s = detail::trim(s);
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || p != s.data() + s.size())
    throw FormatError("line " + std::to_string(line) + ": bad " + col + " '" + std::string(s) + "'");
  return v;
}

std::uint64_t bounded(std::string_view s, std::size_t line, const char* col, std::uint64_t max) {
  std::uint64_t v = parse_u64(s, line, col);
  if (v > max) throw FormatError("line " + std::to_string(line) + ": " + col + " out of range");
  return v;
}

}  // namespace

std::uint32_t parse_ipv4(std::string_view s) {
  s = detail::trim(s);
  if (s.find('.') == std::string_view::npos) {
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || p != s.data() + s.size() || v > 0xffffffffULL)
      throw FormatError("bad address '" + std::string(s) + "'");
    return static_cast<std::uint32_t>(v);
  }
  auto parts = detail::split(s, '.');
  if (parts.size() != 4) throw FormatError("bad address '" + std::string(s) + "'");
  std::uint32_t ip = 0;
  for (auto& part : parts) {
    unsigned v = 0;
    auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (part.empty() || ec != std::errc() || p != part.data() + part.size() || v > 255)
      throw FormatError("bad address '" + std::string(s) + "'");
    ip = (ip << 8) | v;
  }
  return ip;
}

std::vector<PacketRecord> parse_trace(std::string_view text) {
  static const std::vector<std::string> kHeader{"ts_ns", "src_ip", "dst_ip", "src_port",
                                                "dst_port", "proto", "len", "flags"};
  std::vector<PacketRecord> out;
  std::size_t line_no = 0;
  bool header = false;
  std::uint64_t last_ts = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (detail::trim(line).empty()) continue;
    auto cols = detail::split(line, ',');
    if (!header) {
      std::vector<std::string> names;
      for (auto& c : cols) names.emplace_back(detail::trim(c));
      if (names != kHeader)
        throw FormatError("line " + std::to_string(line_no) + ": expected header ts_ns,src_ip,dst_ip,src_port,dst_port,proto,len,flags");
      header = true;
      continue;
    }
    if (cols.size() != kHeader.size())
      throw FormatError("line " + std::to_string(line_no) + ": expected 8 columns, got " + std::to_string(cols.size()));
    PacketRecord r;
    r.ts_ns = parse_u64(cols[0], line_no, "ts_ns");
    try {
      r.src_ip = parse_ipv4(cols[1]);
      r.dst_ip = parse_ipv4(cols[2]);
    } catch (const FormatError& e) {
      throw FormatError("line " + std::to_string(line_no) + ": " + e.what());
    }
    r.src_port = static_cast<std::uint16_t>(bounded(cols[3], line_no, "src_port", 0xffff));
    r.dst_port = static_cast<std::uint16_t>(bounded(cols[4], line_no, "dst_port", 0xffff));
    r.proto = static_cast<std::uint8_t>(bounded(cols[5], line_no, "proto", 0xff));
    r.length = static_cast<std::uint16_t>(bounded(cols[6], line_no, "len", 0xffff));
    r.flags = static_cast<std::uint8_t>(bounded(cols[7], line_no, "flags", 0xff));
    if (!out.empty() && r.ts_ns < last_ts)
      throw TimestampRegressionError("line " + std::to_string(line_no) + ": timestamp " + std::to_string(r.ts_ns) +
                                     " < previous " + std::to_string(last_ts));
    last_ts = r.ts_ns;
    out.push_back(r);
  }
  return out;
}

std::vector<PacketRecord> load_trace(const std::string& path) { return parse_trace(detail::read_file(path)); }

const char* provenance_name(Provenance p) {
  switch (p) {
    case Provenance::packet: return "packet";
    case Provenance::flow: return "flow";
    case Provenance::aggregate: return "aggregate";
    case Provenance::passthrough: return "passthrough";
  }
  return "?";
}

namespace {

const std::set<std::string, std::less<>> kPacket{"src_ip", "dst_ip", "src_port", "dst_port", "proto",
                                                 "len", "flags", "ports_equal", "is_sm_ips_ports"};
const std::set<std::string, std::less<>> kFlow{"pkt_count", "byte_count", "duration", "last_iat", "data_rate",
                                               "fwd_pkts", "rev_pkts", "fwd_bytes", "rev_bytes"};
const std::set<std::string, std::less<>> kAggregate{"agg_pkts", "agg_bytes", "agg_flows"};

std::optional<std::size_t> jitter_index(std::string_view id) {
  if (id.substr(0, 7) != "jitter_" || id.size() == 7) return std::nullopt;
  std::size_t i = 0;
  auto [p, ec] = std::from_chars(id.data() + 7, id.data() + id.size(), i);
  if (ec != std::errc() || p != id.data() + id.size()) return std::nullopt;
  return i;
}

std::uint64_t packet_value(const PacketRecord& r, std::string_view id) {
  if (id == "src_ip") return r.src_ip;
  if (id == "dst_ip") return r.dst_ip;
  if (id == "src_port") return r.src_port;
  if (id == "dst_port") return r.dst_port;
  if (id == "proto") return r.proto;
  if (id == "len") return r.length;
  if (id == "flags") return r.flags;
  if (id == "ports_equal") return r.src_port == r.dst_port ? 1 : 0;
  if (id == "is_sm_ips_ports") return (r.src_ip == r.dst_ip && r.src_port == r.dst_port) ? 1 : 0;
  throw UnknownFeatureError("'" + std::string(id) + "' is not a packet-level feature");
}

std::uint64_t flow_value(const FlowState& f, std::string_view id) {
  if (id == "pkt_count") return f.pkt_count;
  if (id == "byte_count") return f.byte_count;
  if (id == "duration") return f.duration();
  if (id == "last_iat") return f.last_iat;
  if (id == "data_rate") return f.data_rate();
  if (id == "fwd_pkts") return f.fwd_pkts;
  if (id == "rev_pkts") return f.rev_pkts;
  if (id == "fwd_bytes") return f.fwd_bytes;
  if (id == "rev_bytes") return f.rev_bytes;
  if (auto j = jitter_index(id)) {
    if (*j >= f.jitter_bins.size())
      throw UnknownFeatureError("'" + std::string(id) + "': only " + std::to_string(f.jitter_bins.size()) + " jitter bins");
    return f.jitter_bins[*j];
  }
  throw UnknownFeatureError("'" + std::string(id) + "' is not a flow feature");
}

void put(ExtractedVector& v, std::size_t i, const FeatureSpec& spec, std::uint64_t value, Provenance p) {
  v.provenance[i] = p;
  if (value > spec.max_value()) {
    v.values[i] = spec.max_value();
    v.saturated[i] = true;
  } else {
    v.values[i] = value;
  }
}

ExtractedVector blank(std::size_t n) {
  ExtractedVector v;
  v.values.assign(n, 0);
  v.provenance.assign(n, Provenance::packet);
  v.saturated.assign(n, false);
  return v;
}

void fnv(std::uint32_t& h, std::uint64_t v, int bytes) {
  for (int i = bytes - 1; i >= 0; --i) {
    h ^= static_cast<std::uint8_t>(v >> (8 * i));
    h *= 16777619u;
  }
}

}  // namespace

std::optional<Provenance> extractor_provenance(std::string_view id) {
  if (kPacket.count(id)) return Provenance::packet;
  if (kFlow.count(id) || jitter_index(id)) return Provenance::flow;
  if (kAggregate.count(id)) return Provenance::aggregate;
  if (id == "passthrough") return Provenance::passthrough;
  return std::nullopt;
}

std::vector<FeatureBinding> parse_feature_spec(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("feature spec: ") + e.what());
  }
  const json& feats = detail::require(j, "features", "feature spec");
  if (!feats.is_array() || feats.empty()) throw SchemaError("feature spec.features: expected a non-empty array");
  const json* extract = j.contains("extract") ? &j["extract"] : nullptr;
  if (extract && !extract->is_object()) throw SchemaError("feature spec.extract: expected an object");
  std::vector<FeatureBinding> out;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < feats.size(); ++i) {
    FeatureBinding b;
    b.spec = detail::parse_feature_json(feats[i], "feature spec.features[" + std::to_string(i) + "]");
    if (b.spec.width_bits < 1 || b.spec.width_bits > 32)
      throw FeatureError("feature '" + b.spec.name + "': width_bits must be in 1..32");
    if (b.spec.index != static_cast<int>(i)) throw FeatureError("feature '" + b.spec.name + "': index out of order");
    if (!seen.insert(b.spec.name).second) throw FeatureError("duplicate feature '" + b.spec.name + "'");
    b.extractor = b.spec.name;
    if (extract && extract->contains(b.spec.name))
      b.extractor = detail::get_string((*extract)[b.spec.name], "feature spec.extract." + b.spec.name);
    if (!extractor_provenance(b.extractor))
      throw UnknownFeatureError("feature '" + b.spec.name + "': unknown extractor '" + b.extractor + "'");
    out.push_back(std::move(b));
  }
  return out;
}

std::vector<FeatureBinding> load_feature_spec(const std::string& path) {
  return parse_feature_spec(detail::read_file(path));
}

ExtractedVector extract_packet_features(const PacketRecord& r, const std::vector<FeatureBinding>& spec) {
  ExtractedVector v = blank(spec.size());
  for (std::size_t i = 0; i < spec.size(); ++i) {
    auto p = extractor_provenance(spec[i].extractor);
    if (p != Provenance::packet)
      throw UnknownFeatureError("feature '" + spec[i].spec.name + "': '" + spec[i].extractor +
                                "' is not computable from a single packet");
    put(v, i, spec[i].spec, packet_value(r, spec[i].extractor), Provenance::packet);
  }
  return v;
}

std::uint32_t flow_hash(const PacketRecord& r) {
  std::uint64_t a = (std::uint64_t{r.src_ip} << 16) | r.src_port;
  std::uint64_t b = (std::uint64_t{r.dst_ip} << 16) | r.dst_port;
  if (b < a) std::swap(a, b);
  std::uint32_t h = 2166136261u;
  fnv(h, a, 6);
  fnv(h, b, 6);
  fnv(h, r.proto, 1);
  return h;
}

std::uint64_t FlowState::data_rate() const {
  unsigned __int128 bits = static_cast<unsigned __int128>(byte_count) * 8u;
  std::uint64_t d = std::max<std::uint64_t>(duration(), 1);
  unsigned __int128 r = bits / d;
  return r > UINT64_MAX ? UINT64_MAX : static_cast<std::uint64_t>(r);
}

FlowTable::FlowTable(FlowConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.capacity == 0) throw ArgumentError("flow table capacity must be positive");
  if (!std::is_sorted(cfg_.jitter_edges_ns.begin(), cfg_.jitter_edges_ns.end()) ||
      std::adjacent_find(cfg_.jitter_edges_ns.begin(), cfg_.jitter_edges_ns.end()) != cfg_.jitter_edges_ns.end())
    throw ArgumentError("jitter edges must be strictly increasing");
}

FlowUpdate FlowTable::update(const PacketRecord& r) {
  ++packets_;
  std::uint32_t key = flow_hash(r);
  std::uint64_t a = (std::uint64_t{r.src_ip} << 16) | r.src_port;
  std::uint64_t b = (std::uint64_t{r.dst_ip} << 16) | r.dst_port;
  std::uint64_t tuple[3] = {std::min(a, b), std::max(a, b), r.proto};
  FlowUpdate out;
  auto it = flows_.find(key);
  if (it == flows_.end()) {
    if (flows_.size() >= cfg_.capacity) {
      std::uint32_t victim = lru_.back();
      lru_.pop_back();
      flows_.erase(victim);
      ++evictions_;
      out.evicted = victim;
      events_.push_back("evict " + std::to_string(victim) + " at " + std::to_string(r.ts_ns));
    }
    lru_.push_front(key);
    Slot slot;
    slot.pos = lru_.begin();
    std::copy(tuple, tuple + 3, slot.tuple);
    FlowState& s = slot.state;
    s.key = key;
    s.first_seen = s.last_seen = r.ts_ns;
    s.jitter_bins.assign(n_bins(), 0);
    s.src_ip = r.src_ip;
    s.dst_ip = r.dst_ip;
    s.src_port = r.src_port;
    s.dst_port = r.dst_port;
    s.proto = r.proto;
    it = flows_.emplace(key, std::move(slot)).first;
    out.created = true;
  } else {
    lru_.splice(lru_.begin(), lru_, it->second.pos);
    if (cfg_.track_collisions && !std::equal(tuple, tuple + 3, it->second.tuple)) {
      ++collisions_;
      events_.push_back("collision " + std::to_string(key) + " at " + std::to_string(r.ts_ns));
    }
    FlowState& s = it->second.state;
    std::uint64_t iat = r.ts_ns - s.last_seen;
    s.last_iat = iat;
    auto& e = cfg_.jitter_edges_ns;
    std::size_t bin = std::upper_bound(e.begin(), e.end(), iat) - e.begin();
    ++s.jitter_bins[bin];
    s.last_seen = r.ts_ns;
  }
  FlowState& s = it->second.state;
  ++s.pkt_count;
  s.byte_count += r.length;
  if (r.src_ip == s.src_ip && r.src_port == s.src_port) {
    ++s.fwd_pkts;
    s.fwd_bytes += r.length;
  } else {
    ++s.rev_pkts;
    s.rev_bytes += r.length;
  }
  out.state = s;
  return out;
}

std::vector<FlowState> FlowTable::snapshot() const {
  std::vector<FlowState> out;
  out.reserve(flows_.size());
  for (auto& [k, slot] : flows_) out.push_back(slot.state);
  std::sort(out.begin(), out.end(), [](const FlowState& a, const FlowState& b) { return a.key < b.key; });
  return out;
}

std::optional<FlowState> FlowTable::find(std::uint32_t key) const {
  auto it = flows_.find(key);
  if (it == flows_.end()) return std::nullopt;
  return it->second.state;
}

GroupRule group_by_dst_port() {
  return [](const FlowState& f) { return std::uint64_t{f.dst_port}; };
}

GroupRule group_by_proto() {
  return [](const FlowState& f) { return std::uint64_t{f.proto}; };
}

std::map<std::uint64_t, GroupTotals> aggregate_features(const FlowTable& table, const GroupRule& rule) {
  std::map<std::uint64_t, GroupTotals> out;
  for (const FlowState& f : table.snapshot()) {
    GroupTotals& g = out[rule(f)];
    g.pkt_count += f.pkt_count;
    g.byte_count += f.byte_count;
    ++g.flow_count;
  }
  return out;
}

TraceExtraction extract_trace(const std::vector<PacketRecord>& trace, const std::vector<FeatureBinding>& spec,
                              const FlowConfig& cfg) {
  std::vector<Provenance> prov;
  for (auto& b : spec) {
    auto p = extractor_provenance(b.extractor);
    if (!p) throw UnknownFeatureError("feature '" + b.spec.name + "': unknown extractor '" + b.extractor + "'");
    if (*p == Provenance::passthrough)
      throw UnknownFeatureError("feature '" + b.spec.name + "' is a passthrough column and cannot be derived from packets");
    if (auto j = jitter_index(b.extractor); j && *j > cfg.jitter_edges_ns.size())
      throw UnknownFeatureError("feature '" + b.spec.name + "': jitter bin " + std::to_string(*j) + " does not exist");
    prov.push_back(*p);
  }
  FlowTable table(cfg);
  // Running totals keyed by destination port of the flow's first packet;
  // evicted flows stay counted.
  std::map<std::uint64_t, GroupTotals> agg;
  auto rule = group_by_dst_port();
  TraceExtraction out;
  out.vectors.reserve(trace.size());
  for (const PacketRecord& r : trace) {
    FlowUpdate u = table.update(r);
    GroupTotals& g = agg[rule(u.state)];
    g.pkt_count += 1;
    g.byte_count += r.length;
    if (u.created) ++g.flow_count;
    ExtractedVector v = blank(spec.size());
    for (std::size_t i = 0; i < spec.size(); ++i) {
      const std::string& id = spec[i].extractor;
      std::uint64_t value = 0;
      switch (prov[i]) {
        case Provenance::packet: value = packet_value(r, id); break;
        case Provenance::flow: value = flow_value(u.state, id); break;
        case Provenance::aggregate:
          value = id == "agg_pkts" ? g.pkt_count : id == "agg_bytes" ? g.byte_count : g.flow_count;
          break;
        case Provenance::passthrough: break;
      }
      put(v, i, spec[i].spec, value, prov[i]);
    }
    out.vectors.push_back(std::move(v));
  }
  out.flows = table.snapshot();
  out.jitter_memory_entries = table.jitter_memory_entries();
  out.evictions = table.evictions();
  out.collisions = table.collisions();
  return out;
}

}  // namespace inml
