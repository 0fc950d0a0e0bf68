#include "inml/pipeline.hpp"

#include "inml/error.hpp"
#include "io.hpp"
#include "json_util.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

namespace inml {

using detail::json;

ResourceProfile default_profile() { return {}; }

void validate_profile(const ResourceProfile& p) {
  auto pos = [&](long long v, const char* what) {
    if (v <= 0) throw ArgumentError(std::string("profile field '") + what + "' must be positive");
  };
  pos(p.n_stages, "n_stages");
  pos(p.max_tables_per_stage, "max_tables_per_stage");
  pos(p.sram_entries_budget != 0, "sram_entries_budget");
  pos(p.tcam_entries_budget != 0, "tcam_entries_budget");
  pos(p.max_key_bits, "max_key_bits");
  pos(p.max_action_bits, "max_action_bits");
  pos(p.metadata_bits_budget, "metadata_bits_budget");
  pos(p.adds_per_stage, "adds_per_stage");
  pos(p.sram_word_bits, "sram_word_bits");
  pos(p.max_extracted_features, "max_extracted_features");
}

ResourceProfile parse_profile_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("profile is not valid JSON: ") + e.what());
  }
  if (detail::get_int(detail::require(j, "schema", "profile"), "profile.schema") != 1)
    throw SchemaError("unsupported profile schema version");
  ResourceProfile p;
  auto i = [&](const char* key, int& dst) {
    if (j.contains(key)) dst = static_cast<int>(detail::get_int(j[key], std::string("profile.") + key));
  };
  auto u = [&](const char* key, std::uint64_t& dst) {
    if (j.contains(key)) dst = detail::get_uint(j[key], std::string("profile.") + key);
  };
  if (j.contains("name")) p.name = detail::get_string(j["name"], "profile.name");
  i("n_stages", p.n_stages);
  i("max_tables_per_stage", p.max_tables_per_stage);
  u("sram_entries_budget", p.sram_entries_budget);
  u("tcam_entries_budget", p.tcam_entries_budget);
  i("max_key_bits", p.max_key_bits);
  i("max_action_bits", p.max_action_bits);
  i("metadata_bits_budget", p.metadata_bits_budget);
  i("adds_per_stage", p.adds_per_stage);
  i("sram_word_bits", p.sram_word_bits);
  i("max_extracted_features", p.max_extracted_features);
  validate_profile(p);
  return p;
}

std::string emit_profile_json(const ResourceProfile& p) {
  json j = {{"schema", 1},
            {"name", p.name},
            {"n_stages", p.n_stages},
            {"max_tables_per_stage", p.max_tables_per_stage},
            {"sram_entries_budget", p.sram_entries_budget},
            {"tcam_entries_budget", p.tcam_entries_budget},
            {"max_key_bits", p.max_key_bits},
            {"max_action_bits", p.max_action_bits},
            {"metadata_bits_budget", p.metadata_bits_budget},
            {"adds_per_stage", p.adds_per_stage},
            {"sram_word_bits", p.sram_word_bits},
            {"max_extracted_features", p.max_extracted_features}};
  return j.dump(2) + "\n";
}

ResourceProfile load_profile(const std::string& path) { return parse_profile_json(detail::read_file(path)); }

const char* step_kind_name(StepKind k) {
  switch (k) {
    case StepKind::add: return "add";
    case StepKind::decide: return "decide";
    case StepKind::confidence: return "confidence";
  }
  return "?";
}

int StagedProgram::adds_in_stage(int stage) const {
  int n = 0;
  for (const auto& s : combine_steps)
    if (s.stage == stage && s.kind == StepKind::add) n += s.ops;
  return n;
}

// ---------------------------------------------------------------------------

std::vector<TernaryPattern> expand_range_to_ternary(std::uint64_t lo, std::uint64_t hi, int width) {
  if (width < 0 || width > 63) throw RangeError("pattern width must be in 0..63");
  const std::uint64_t full = (std::uint64_t{1} << width) - 1;
  if (lo > hi || hi > full)
    throw RangeError("range [" + std::to_string(lo) + ", " + std::to_string(hi) + "] invalid for width " +
                     std::to_string(width));
  std::vector<TernaryPattern> out;
  std::uint64_t cur = lo;
  while (true) {
    // Largest aligned block starting at cur that stays inside [cur, hi].
    int s = 0;
    while (s < width && (cur & ((std::uint64_t{1} << (s + 1)) - 1)) == 0 &&
           cur + ((std::uint64_t{1} << (s + 1)) - 1) <= hi)
      ++s;
    std::uint64_t block = (std::uint64_t{1} << s) - 1;
    out.push_back({cur, full & ~block});
    if (cur + block >= hi) break;
    cur += block + 1;
  }
  return out;
}

std::uint64_t tcam_rows(const TableDef& t) {
  switch (t.kind) {
    case MatchKind::exact: return 0;
    case MatchKind::ternary: return t.entries.size();
    case MatchKind::range: {
      std::uint64_t rows = 0;
      for (const auto& e : t.entries) {
        std::uint64_t r = 1;
        for (std::size_t d = 0; d < e.key.size(); ++d)
          r *= expand_range_to_ternary(e.key[d].value, e.key[d].hi, t.keys[d].width).size();
        rows += r;
      }
      return rows;
    }
  }
  return 0;
}

namespace {

bool has_lut(const CombineDescriptor& c) {
  return c.confidence == ConfidenceKind::vote_fraction || c.confidence == ConfidenceKind::margin_logistic ||
         c.confidence == ConfidenceKind::sum_table;
}

// The decision-step confidence lookup as a pseudo range table.
TableDef lut_table(const PipelineProgram& p) {
  TableDef t;
  t.name = "conf_lut";
  t.kind = MatchKind::range;
  const int w = std::max(1, p.combine.confidence_key_width);
  t.keys = {{"conf_key", w, false}};
  t.actions = {{p.combine.confidence_field, p.combine.confidence_bits + 1, false}};
  const auto& lut = p.combine_data.confidence_lut;
  const std::uint64_t top = (std::uint64_t{1} << std::min(w, 62)) - 1;
  for (std::size_t i = 0; i < lut.size(); ++i) {
    std::int64_t lo = std::max<std::int64_t>(lut[i].lo, 0);
    std::int64_t hi = i + 1 < lut.size() ? lut[i + 1].lo - 1 : static_cast<std::int64_t>(top);
    if (static_cast<std::uint64_t>(lo) > top) break;
    hi = std::min<std::int64_t>(hi, static_cast<std::int64_t>(top));
    if (hi < lo) continue;
    t.entries.push_back({{{static_cast<std::uint64_t>(lo), 0, static_cast<std::uint64_t>(hi)}}, {lut[i].conf_q}});
  }
  return t;
}

}  // namespace

int metadata_bits(const PipelineProgram& p) {
  int bits = 0;
  for (const auto& t : p.tables)
    for (const auto& a : t.actions) bits += a.width;
  const auto& c = p.combine;
  for (const auto& s : c.sums) bits += s.width;
  if (c.kind == CombineKind::vote_majority || c.kind == CombineKind::hyperplane_vote) {
    std::size_t voters = c.kind == CombineKind::vote_majority ? c.vote_fields.size() : c.hyperplane_classes.size();
    bits += c.n_classes * std::max(1, ceil_log2(voters + 1));
  }
  if (c.kind != CombineKind::code_lookup) {
    bits += std::max(1, ceil_log2(static_cast<std::uint64_t>(c.n_classes)));
    if (c.confidence != ConfidenceKind::none) bits += c.confidence_bits + 1;
  }
  return bits;
}

StagedProgram place_stages(const PipelineProgram& p, const ResourceProfile& prof) {
  validate_profile(prof);
  StagedProgram s;
  s.program = p;
  const std::size_t n = p.tables.size();

  std::map<std::string, std::size_t> producer;
  for (std::size_t i = 0; i < n; ++i)
    for (const auto& a : p.tables[i].actions)
      if (!producer.emplace(a.name, i).second) throw ProgramError("field '" + a.name + "' is written by two tables");
  auto is_feature = [&](const std::string& name) {
    return std::any_of(p.features.begin(), p.features.end(), [&](const FeatureSpec& f) { return f.name == name; });
  };

  s.table_level.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& k : p.tables[i].keys) {
      auto it = producer.find(k.name);
      if (it == producer.end()) {
        if (!is_feature(k.name))
          throw ProgramError("table '" + p.tables[i].name + "' reads '" + k.name + "', which nothing writes");
        continue;
      }
      if (it->second >= i)
        throw ProgramError("table '" + p.tables[i].name + "' reads '" + k.name + "' before it is written");
      s.table_level[i] = std::max(s.table_level[i], s.table_level[it->second] + 1);
    }
  }

  for (const auto& t : p.tables) {
    if (t.key_bits() > prof.max_key_bits)
      throw PlacementError(PlacementFailure::key_too_wide, "table '" + t.name + "' key is " +
                                                               std::to_string(t.key_bits()) + " bits, profile allows " +
                                                               std::to_string(prof.max_key_bits));
  }
  for (const auto& t : p.tables) {
    if (t.action_bits() > prof.max_action_bits)
      throw PlacementError(PlacementFailure::action_too_wide,
                           "table '" + t.name + "' action is " + std::to_string(t.action_bits()) +
                               " bits, profile allows " + std::to_string(prof.max_action_bits));
  }
  int meta = metadata_bits(p);
  if (meta > prof.metadata_bits_budget)
    throw PlacementError(PlacementFailure::metadata_overflow, "program carries " + std::to_string(meta) +
                                                                  " metadata bits, profile allows " +
                                                                  std::to_string(prof.metadata_bits_budget));
  std::uint64_t sram = 0, tcam = 0;
  for (const auto& t : p.tables) {
    if (t.kind == MatchKind::exact) sram += t.entries.size();
    else tcam += tcam_rows(t);
  }
  if (has_lut(p.combine)) tcam += tcam_rows(lut_table(p));
  if (sram > prof.sram_entries_budget)
    throw PlacementError(PlacementFailure::memory_overflow, "program needs " + std::to_string(sram) +
                                                                " SRAM entries, profile allows " +
                                                                std::to_string(prof.sram_entries_budget));
  if (tcam > prof.tcam_entries_budget)
    throw PlacementError(PlacementFailure::memory_overflow, "program needs " + std::to_string(tcam) +
                                                                " TCAM entries, profile allows " +
                                                                std::to_string(prof.tcam_entries_budget));

  // Greedy layered packing in (level, name) order.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (s.table_level[a] != s.table_level[b]) return s.table_level[a] < s.table_level[b];
    return p.tables[a].name < p.tables[b].name;
  });
  s.table_stage.assign(n, 0);
  std::vector<int> per_stage;
  for (auto i : order) {
    int earliest = 0;
    for (const auto& k : p.tables[i].keys) {
      auto it = producer.find(k.name);
      if (it != producer.end()) earliest = std::max(earliest, s.table_stage[it->second] + 1);
    }
    int st = earliest;
    while (st < static_cast<int>(per_stage.size()) && per_stage[st] >= prof.max_tables_per_stage) ++st;
    if (st >= static_cast<int>(per_stage.size())) per_stage.resize(st + 1, 0);
    ++per_stage[st];
    s.table_stage[i] = st;
  }
  for (int l : s.table_level) s.dependency_layers = std::max(s.dependency_layers, l + 1);
  int next = per_stage.empty() ? 0 : static_cast<int>(per_stage.size());

  const auto& c = p.combine;
  auto need = [&](const std::string& f) {
    if (!producer.count(f)) throw ProgramError("decision step reads '" + f + "', which nothing writes");
  };
  for (const auto& f : c.vote_fields) need(f);
  for (const auto& sum : c.sums)
    for (const auto& f : sum.addends) need(f);
  if (c.kind != CombineKind::code_lookup) {
    std::vector<std::size_t> terms;
    for (const auto& sum : c.sums) terms.push_back(sum.addends.size() + (sum.has_constant ? 1 : 0));
    while (std::any_of(terms.begin(), terms.end(), [](std::size_t t) { return t > 1; })) {
      int adds = 0;
      for (auto& t : terms) {
        adds += static_cast<int>(t / 2);
        t = (t + 1) / 2;
      }
      while (adds > 0) {
        int ops = std::min(adds, prof.adds_per_stage);
        s.combine_steps.push_back({next++, StepKind::add, ops});
        adds -= ops;
      }
    }
    int decide_ops = c.kind == CombineKind::sum_threshold ? 1 : std::max(1, c.n_classes - 1);
    s.combine_steps.push_back({next++, StepKind::decide, decide_ops});
    if (has_lut(c)) s.combine_steps.push_back({next++, StepKind::confidence, 1});
  } else {
    if (!p.tables.empty() && !producer.count(c.class_field)) throw ProgramError("class field '" + c.class_field + "' is never written");
  }
  s.stages_used = next;
  if (s.stages_used > prof.n_stages)
    throw PlacementError(PlacementFailure::stage_overflow, "program needs " + std::to_string(s.stages_used) +
                                                               " stages, profile has " + std::to_string(prof.n_stages));
  return s;
}

// ---------------------------------------------------------------------------

EntryBounds classification_entry_bounds(int branches, int features, const std::vector<int>& per_feature) {
  if (features < 1) throw ArgumentError("feature count must be at least 1");
  if (static_cast<int>(per_feature.size()) != features)
    throw ArgumentError("per-feature branch list has " + std::to_string(per_feature.size()) + " entries, expected " +
                        std::to_string(features));
  long long sum = 0;
  for (int b : per_feature) {
    if (b < 1) throw ArgumentError("every counted feature must be used by at least one branch");
    sum += b;
  }
  if (sum != branches) throw ArgumentError("per-feature branch counts do not sum to the branch count");
  const int B = branches, F = features;
  auto f = [](int b) { return ceil_log2(static_cast<std::uint64_t>(b) + 1); };

  EntryBounds r;
  r.branches = B;
  r.features = F;
  r.per_feature = per_feature;
  for (int b : per_feature) r.key_width += f(b);
  r.lower_bits = (F - 1) + f(B - (F - 1));
  // best[j][s]: widest key using j features over s branches (each >= 1).
  std::vector<int> best(B + 1, -1), nxt(B + 1, -1);
  best[0] = 0;
  for (int j = 0; j < F; ++j) {
    std::fill(nxt.begin(), nxt.end(), -1);
    for (int s0 = 0; s0 <= B; ++s0) {
      if (best[s0] < 0) continue;
      for (int b = 1; s0 + b <= B; ++b) nxt[s0 + b] = std::max(nxt[s0 + b], best[s0] + f(b));
    }
    std::swap(best, nxt);
  }
  r.upper_bits = best[B];
  int c = 0;
  while (static_cast<long long>(F) * (1LL << c) < static_cast<long long>(B) + F) ++c;
  r.even_split_bits = F * c;
  r.printed_upper_exponent = std::pow(std::ceil(std::log2(static_cast<double>(B) / F)), F);
  r.printed_lower_exponent = B - 1 + std::ceil(std::log2(static_cast<double>(B - (F - 1))));
  return r;
}

// ---------------------------------------------------------------------------

ResourceReport resource_report(const StagedProgram& s, const ResourceProfile& prof) {
  const auto& p = s.program;
  ResourceReport r;
  r.profile = prof.name;
  auto roundup = [&](int bits) {
    return static_cast<std::uint64_t>((bits + prof.sram_word_bits - 1) / prof.sram_word_bits) * prof.sram_word_bits;
  };
  auto usage = [&](const TableDef& t, int stage) {
    TableUsage u;
    u.name = t.name;
    u.stage = stage;
    u.kind = t.kind;
    u.entries = t.entries.size();
    u.key_bits = t.key_bits();
    u.action_bits = t.action_bits();
    if (t.kind == MatchKind::exact) {
      u.sram_entries = u.entries;
      u.sram_bits = u.entries * roundup(u.key_bits + u.action_bits);
    } else {
      u.tcam_entries = tcam_rows(t);
      u.sram_bits = u.tcam_entries * roundup(u.action_bits);
    }
    return u;
  };
  for (std::size_t i = 0; i < p.tables.size(); ++i) {
    r.tables.push_back(usage(p.tables[i], s.table_stage.empty() ? 0 : s.table_stage[i]));
    if (p.tables[i].role == TableRole::feature) ++r.feature_tables;
    if (p.tables[i].role == TableRole::tree || p.tables[i].role == TableRole::classify) ++r.tree_tables;
  }
  if (has_lut(p.combine)) {
    int stage = s.stages_used - 1;
    r.tables.push_back(usage(lut_table(p), std::max(stage, 0)));
  }
  for (const auto& u : r.tables) {
    r.total_entries += u.entries;
    r.sram_entries += u.sram_entries;
    r.sram_bits += u.sram_bits;
    r.tcam_entries += u.tcam_entries;
  }
  r.metadata_bits = p.tables.empty() && p.combine.sums.empty() ? 0 : metadata_bits(p);
  r.stages_used = s.stages_used;
  r.dependency_layers = s.dependency_layers;
  auto pct = [](double a, double b) { return b > 0 ? 100.0 * a / b : 0.0; };
  r.sram_pct = pct(static_cast<double>(r.sram_entries), static_cast<double>(prof.sram_entries_budget));
  r.tcam_pct = pct(static_cast<double>(r.tcam_entries), static_cast<double>(prof.tcam_entries_budget));
  r.metadata_pct = pct(r.metadata_bits, prof.metadata_bits_budget);
  r.stages_pct = pct(r.stages_used, prof.n_stages);

  // One bound per compiled tree, keyed on the features it actually tests.
  std::size_t tree_idx = 0;
  for (const auto& t : p.tables) {
    if (t.role != TableRole::tree && t.role != TableRole::classify) continue;
    if (tree_idx >= p.tree_stats.size()) break;
    const auto& st = p.tree_stats[tree_idx++];
    std::vector<int> used;
    for (int b : st.per_feature)
      if (b > 0) used.push_back(b);
    if (st.branches == 0 || used.empty()) continue;
    EntryBounds b = classification_entry_bounds(st.branches, static_cast<int>(used.size()), used);
    b.generated = static_cast<std::int64_t>(t.entries.size());
    r.bounds.push_back(std::move(b));
  }
  return r;
}

std::string report_text(const ResourceReport& r) {
  std::ostringstream o;
  char buf[256];
  o << "profile " << r.profile << "\n";
  std::snprintf(buf, sizeof buf, "%-16s %5s %-8s %10s %5s %6s %10s %10s\n", "table", "stage", "match", "entries", "key",
                "action", "sram_bits", "tcam_rows");
  o << buf;
  for (const auto& t : r.tables) {
    std::snprintf(buf, sizeof buf, "%-16s %5d %-8s %10llu %5d %6d %10llu %10llu\n", t.name.c_str(), t.stage,
                  match_kind_name(t.kind), static_cast<unsigned long long>(t.entries), t.key_bits, t.action_bits,
                  static_cast<unsigned long long>(t.sram_bits), static_cast<unsigned long long>(t.tcam_entries));
    o << buf;
  }
  std::snprintf(buf, sizeof buf,
                "totals: entries %llu, sram entries %llu (%.3f%%), sram bits %llu, tcam rows %llu (%.3f%%)\n",
                static_cast<unsigned long long>(r.total_entries), static_cast<unsigned long long>(r.sram_entries),
                r.sram_pct, static_cast<unsigned long long>(r.sram_bits),
                static_cast<unsigned long long>(r.tcam_entries), r.tcam_pct);
  o << buf;
  std::snprintf(buf, sizeof buf, "metadata bits %d (%.1f%%), stages %d (%.1f%%), dependency layers %d\n",
                r.metadata_bits, r.metadata_pct, r.stages_used, r.stages_pct, r.dependency_layers);
  o << buf;
  o << "feature tables " << r.feature_tables << ", tree tables " << r.tree_tables << "\n";
  for (std::size_t i = 0; i < r.bounds.size(); ++i) {
    const auto& b = r.bounds[i];
    std::snprintf(buf, sizeof buf,
                  "tree %zu: B=%d F=%d key %d bits, generated %lld, bounds 2^%d..2^%d (even split 2^%d; "
                  "as printed 2^%.0f..2^%.0f)\n",
                  i, b.branches, b.features, b.key_width, static_cast<long long>(b.generated), b.lower_bits,
                  b.upper_bits, b.even_split_bits, b.printed_lower_exponent, b.printed_upper_exponent);
    o << buf;
  }
  return o.str();
}

std::string report_json(const ResourceReport& r) {
  json tables = json::array();
  for (const auto& t : r.tables)
    tables.push_back({{"name", t.name},
                      {"stage", t.stage},
                      {"match_kind", match_kind_name(t.kind)},
                      {"entries", t.entries},
                      {"key_bits", t.key_bits},
                      {"action_bits", t.action_bits},
                      {"sram_entries", t.sram_entries},
                      {"sram_bits", t.sram_bits},
                      {"tcam_entries", t.tcam_entries}});
  json bounds = json::array();
  for (const auto& b : r.bounds)
    bounds.push_back({{"branches", b.branches},
                      {"features", b.features},
                      {"per_feature", b.per_feature},
                      {"key_width", b.key_width},
                      {"generated", b.generated},
                      {"lower_bits", b.lower_bits},
                      {"upper_bits", b.upper_bits},
                      {"even_split_bits", b.even_split_bits},
                      {"printed_lower_exponent", b.printed_lower_exponent},
                      {"printed_upper_exponent", b.printed_upper_exponent}});
  json j = {{"schema", 1},
            {"profile", r.profile},
            {"tables", tables},
            {"totals",
             {{"entries", r.total_entries},
              {"sram_entries", r.sram_entries},
              {"sram_bits", r.sram_bits},
              {"tcam_entries", r.tcam_entries},
              {"metadata_bits", r.metadata_bits},
              {"stages_used", r.stages_used},
              {"dependency_layers", r.dependency_layers},
              {"feature_tables", r.feature_tables},
              {"tree_tables", r.tree_tables}}},
            {"percent",
             {{"sram", r.sram_pct}, {"tcam", r.tcam_pct}, {"metadata", r.metadata_pct}, {"stages", r.stages_pct}}},
            {"bounds", bounds}};
  return j.dump(2) + "\n";
}

}  // namespace inml
