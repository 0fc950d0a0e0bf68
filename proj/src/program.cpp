#include "inml/program.hpp"

#include "inml/error.hpp"
#include "io.hpp"
#include "json_util.hpp"

#include <algorithm>
#include <cstdio>
#include <map>

namespace inml {

using detail::json;

const char* match_kind_name(MatchKind k) {
  switch (k) {
    case MatchKind::exact: return "exact";
    case MatchKind::range: return "range";
    case MatchKind::ternary: return "ternary";
  }
  return "?";
}

MatchKind match_kind_from_name(std::string_view s) {
  if (s == "exact") return MatchKind::exact;
  if (s == "range") return MatchKind::range;
  if (s == "ternary") return MatchKind::ternary;
  throw SchemaError("unknown match kind '" + std::string(s) + "'");
}

const char* table_role_name(TableRole r) {
  switch (r) {
    case TableRole::feature: return "feature";
    case TableRole::bin: return "bin";
    case TableRole::tree: return "tree";
    case TableRole::classify: return "classify";
    case TableRole::hyperplane: return "hyperplane";
    case TableRole::class_score: return "class_score";
  }
  return "?";
}

namespace {

TableRole table_role_from_name(std::string_view s) {
  for (auto r : {TableRole::feature, TableRole::bin, TableRole::tree, TableRole::classify, TableRole::hyperplane,
                 TableRole::class_score})
    if (s == table_role_name(r)) return r;
  throw SchemaError("unknown table role '" + std::string(s) + "'");
}

}  // namespace

const char* combine_kind_name(CombineKind k) {
  switch (k) {
    case CombineKind::code_lookup: return "code_lookup";
    case CombineKind::vote_majority: return "vote_majority";
    case CombineKind::weighted_sum_argmax: return "weighted_sum_argmax";
    case CombineKind::sum_argmin: return "sum_argmin";
    case CombineKind::sum_threshold: return "sum_threshold";
    case CombineKind::hyperplane_vote: return "hyperplane_vote";
  }
  return "?";
}

const char* confidence_kind_name(ConfidenceKind k) {
  switch (k) {
    case ConfidenceKind::none: return "none";
    case ConfidenceKind::field: return "field";
    case ConfidenceKind::vote_fraction: return "vote_fraction";
    case ConfidenceKind::margin_logistic: return "margin_logistic";
    case ConfidenceKind::sum_table: return "sum_table";
  }
  return "?";
}

namespace {

CombineKind combine_kind_from_name(std::string_view s) {
  for (auto k : {CombineKind::code_lookup, CombineKind::vote_majority, CombineKind::weighted_sum_argmax,
                 CombineKind::sum_argmin, CombineKind::sum_threshold, CombineKind::hyperplane_vote})
    if (s == combine_kind_name(k)) return k;
  throw SchemaError("unknown combine kind '" + std::string(s) + "'");
}

ConfidenceKind confidence_kind_from_name(std::string_view s) {
  for (auto k : {ConfidenceKind::none, ConfidenceKind::field, ConfidenceKind::vote_fraction,
                 ConfidenceKind::margin_logistic, ConfidenceKind::sum_table})
    if (s == confidence_kind_name(k)) return k;
  throw SchemaError("unknown confidence kind '" + std::string(s) + "'");
}

}  // namespace

int TableDef::key_bits() const {
  int b = 0;
  for (const auto& k : keys) b += k.width;
  return b;
}

int TableDef::action_bits() const {
  int b = 0;
  for (const auto& a : actions) b += a.width;
  return b;
}

std::vector<Field> PipelineProgram::metadata_fields() const {
  std::vector<Field> out;
  for (const auto& t : tables)
    for (const auto& a : t.actions) out.push_back(a);
  return out;
}

const TableDef* PipelineProgram::find_table(std::string_view name) const {
  for (const auto& t : tables)
    if (t.name == name) return &t;
  return nullptr;
}

std::size_t EntryDiff::change_count() const {
  std::size_t n = 0;
  for (const auto& t : tables) n += t.added.size() + t.removed.size() + t.modified.size() + (t.new_default ? 1 : 0);
  return n + (combine ? 1 : 0);
}

void canonicalize(TableDef& table) {
  std::stable_sort(table.entries.begin(), table.entries.end(),
                   [](const Entry& a, const Entry& b) { return a.key < b.key; });
}

// ---------------------------------------------------------------------------
// JSON

namespace {

json field_json(const Field& f) { return {{"name", f.name}, {"width", f.width}, {"signed", f.is_signed}}; }

Field parse_field(const json& j, const std::string& where) {
  Field f;
  f.name = detail::get_string(detail::require(j, "name", where), where + ".name");
  f.width = static_cast<int>(detail::get_int(detail::require(j, "width", where), where + ".width"));
  f.is_signed = j.contains("signed") && j["signed"].get<bool>();
  return f;
}

json features_json(const std::vector<FeatureSpec>& fs) {
  json a = json::array();
  for (const auto& f : fs) a.push_back({{"name", f.name}, {"index", f.index}, {"width_bits", f.width_bits}});
  return a;
}

json schema_json(const PipelineProgram& p) {
  json doc;
  doc["schema"] = 1;
  doc["kind"] = "program";
  doc["model_type"] = p.model_type;
  doc["strategy"] = p.strategy;
  doc["frac_bits"] = p.frac_bits;
  doc["features"] = features_json(p.features);
  json tables = json::array();
  for (const auto& t : p.tables) {
    json keys = json::array(), actions = json::array();
    for (const auto& k : t.keys) keys.push_back(field_json(k));
    for (const auto& a : t.actions) actions.push_back(field_json(a));
    tables.push_back({{"name", t.name},
                      {"role", table_role_name(t.role)},
                      {"match_kind", match_kind_name(t.kind)},
                      {"keys", keys},
                      {"actions", actions}});
  }
  doc["tables"] = std::move(tables);
  const auto& c = p.combine;
  json sums = json::array();
  for (const auto& s : c.sums)
    sums.push_back({{"name", s.name}, {"addends", s.addends}, {"has_constant", s.has_constant}, {"width", s.width}});
  json pairs = json::array();
  for (const auto& [a, b] : c.hyperplane_classes) pairs.push_back({a, b});
  doc["combine"] = {{"kind", combine_kind_name(c.kind)},
                    {"n_classes", c.n_classes},
                    {"class_field", c.class_field},
                    {"confidence_field", c.confidence_field},
                    {"vote_fields", c.vote_fields},
                    {"sums", sums},
                    {"hyperplane_classes", pairs},
                    {"binary_margin", c.binary_margin},
                    {"confidence", confidence_kind_name(c.confidence)},
                    {"confidence_bits", c.confidence_bits},
                    {"confidence_key_width", c.confidence_key_width}};
  return doc;
}

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

json key_json(const KeyMatch& k, MatchKind kind) {
  switch (kind) {
    case MatchKind::exact: return json::array({k.value});
    case MatchKind::ternary: return json::array({k.value, k.mask});
    case MatchKind::range: return json::array({k.value, k.hi});
  }
  return json::array();
}

KeyMatch parse_key(const json& j, MatchKind kind, const std::string& where) {
  if (!j.is_array()) throw SchemaError(where + ": expected an array");
  KeyMatch k;
  std::size_t want = kind == MatchKind::exact ? 1 : 2;
  if (j.size() != want) throw SchemaError(where + ": wrong key arity for " + match_kind_name(kind) + " match");
  k.value = detail::get_uint(j[0], where);
  if (kind == MatchKind::ternary) k.mask = detail::get_uint(j[1], where);
  if (kind == MatchKind::range) k.hi = detail::get_uint(j[1], where);
  return k;
}

json entry_json(const Entry& e, MatchKind kind) {
  json k = json::array();
  for (const auto& m : e.key) k.push_back(key_json(m, kind));
  return {{"k", k}, {"a", e.action}};
}

Entry parse_entry(const json& j, const TableDef& t, const std::string& where) {
  Entry e;
  const json& k = detail::require(j, "k", where);
  if (!k.is_array() || k.size() != t.keys.size()) throw SchemaError(where + ": key arity mismatch");
  for (std::size_t i = 0; i < k.size(); ++i) e.key.push_back(parse_key(k[i], t.kind, where));
  const json& a = detail::require(j, "a", where);
  if (!a.is_array() || a.size() != t.actions.size()) throw SchemaError(where + ": action arity mismatch");
  for (const auto& v : a) e.action.push_back(detail::get_int(v, where));
  return e;
}

std::vector<std::int64_t> parse_int_row(const json& j, const std::string& where) {
  if (!j.is_array()) throw SchemaError(where + ": expected an array");
  std::vector<std::int64_t> out;
  for (const auto& v : j) out.push_back(detail::get_int(v, where));
  return out;
}

json combine_data_json(const CombineData& d) {
  json lut = json::array();
  for (const auto& e : d.confidence_lut) lut.push_back({e.lo, e.conf_q});
  return {{"constants", d.constants}, {"threshold", d.threshold}, {"confidence_lut", lut}};
}

CombineData parse_combine_data(const json& j) {
  CombineData d;
  d.constants = parse_int_row(detail::require(j, "constants", "combine"), "combine.constants");
  d.threshold = detail::get_int(detail::require(j, "threshold", "combine"), "combine.threshold");
  for (const auto& e : detail::require(j, "confidence_lut", "combine")) {
    if (!e.is_array() || e.size() != 2) throw SchemaError("combine.confidence_lut: expected [lo, conf] rows");
    d.confidence_lut.push_back({detail::get_int(e[0], "lut"), detail::get_int(e[1], "lut")});
  }
  return d;
}

json tree_stats_json(const std::vector<TreeStats>& ts) {
  json a = json::array();
  for (const auto& s : ts) a.push_back({{"branches", s.branches}, {"per_feature", s.per_feature}});
  return a;
}

std::vector<TreeStats> parse_tree_stats(const json& j) {
  std::vector<TreeStats> out;
  for (const auto& s : j) {
    TreeStats t;
    t.branches = static_cast<int>(detail::get_int(detail::require(s, "branches", "tree_stats"), "branches"));
    for (const auto& v : detail::require(s, "per_feature", "tree_stats")) t.per_feature.push_back(static_cast<int>(detail::get_int(v, "per_feature")));
    out.push_back(std::move(t));
  }
  return out;
}

char hex_digit(unsigned v) { return "0123456789abcdef"[v & 15]; }

}  // namespace

std::string PipelineProgram::shape_hash() const {
  std::uint64_t h = fnv1a64(schema_json(*this).dump());
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) s[i] = hex_digit(static_cast<unsigned>(h));
  return s;
}

std::string emit_program_json(const PipelineProgram& p) {
  json doc = schema_json(p);
  json meta = json::array();
  for (const auto& f : p.metadata_fields()) meta.push_back(field_json(f));
  doc["metadata_fields"] = std::move(meta);
  doc["options"] = p.options_json.empty() ? json::object() : json::parse(p.options_json);
  doc["shape_hash"] = p.shape_hash();
  return doc.dump(2) + "\n";
}

std::string emit_entries_json(const PipelineProgram& p) {
  json doc;
  doc["schema"] = 1;
  doc["kind"] = "entries";
  doc["shape_hash"] = p.shape_hash();
  json tables = json::object();
  for (const auto& t : p.tables) {
    json entries = json::array();
    for (const auto& e : t.entries) entries.push_back(entry_json(e, t.kind));
    tables[t.name] = {{"default", t.default_action}, {"entries", std::move(entries)}};
  }
  doc["tables"] = std::move(tables);
  doc["combine"] = combine_data_json(p.combine_data);
  doc["tree_stats"] = tree_stats_json(p.tree_stats);
  doc["saturated_entries"] = p.saturated_entries;
  return doc.dump() + "\n";
}

namespace {

json parse_json(std::string_view text, const char* what) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string(what) + " is not valid JSON: " + e.what());
  }
}

PipelineProgram parse_schema(const json& doc) {
  if (detail::get_int(detail::require(doc, "schema", "program"), "schema") != 1)
    throw SchemaError("unsupported program schema version");
  PipelineProgram p;
  p.model_type = detail::get_string(detail::require(doc, "model_type", "program"), "model_type");
  p.strategy = detail::get_string(detail::require(doc, "strategy", "program"), "strategy");
  p.frac_bits = static_cast<int>(detail::get_int(detail::require(doc, "frac_bits", "program"), "frac_bits"));
  for (const auto& f : detail::require(doc, "features", "program")) {
    FeatureSpec fs;
    fs.name = detail::get_string(detail::require(f, "name", "feature"), "feature.name");
    fs.index = static_cast<int>(detail::get_int(detail::require(f, "index", "feature"), "feature.index"));
    fs.width_bits = static_cast<int>(detail::get_int(detail::require(f, "width_bits", "feature"), "feature.width_bits"));
    p.features.push_back(std::move(fs));
  }
  for (const auto& t : detail::require(doc, "tables", "program")) {
    TableDef td;
    td.name = detail::get_string(detail::require(t, "name", "table"), "table.name");
    td.role = table_role_from_name(detail::get_string(detail::require(t, "role", "table"), "table.role"));
    td.kind = match_kind_from_name(detail::get_string(detail::require(t, "match_kind", "table"), "table.match_kind"));
    for (const auto& k : detail::require(t, "keys", "table")) td.keys.push_back(parse_field(k, td.name + ".keys"));
    for (const auto& a : detail::require(t, "actions", "table")) td.actions.push_back(parse_field(a, td.name + ".actions"));
    td.default_action.assign(td.actions.size(), 0);
    p.tables.push_back(std::move(td));
  }
  const json& c = detail::require(doc, "combine", "program");
  auto& cd = p.combine;
  cd.kind = combine_kind_from_name(detail::get_string(detail::require(c, "kind", "combine"), "combine.kind"));
  cd.n_classes = static_cast<int>(detail::get_int(detail::require(c, "n_classes", "combine"), "combine.n_classes"));
  cd.class_field = c.value("class_field", "");
  cd.confidence_field = c.value("confidence_field", "");
  if (c.contains("vote_fields")) cd.vote_fields = c["vote_fields"].get<std::vector<std::string>>();
  if (c.contains("sums"))
    for (const auto& s : c["sums"]) {
      SumSpec ss;
      ss.name = detail::get_string(detail::require(s, "name", "sum"), "sum.name");
      ss.addends = detail::require(s, "addends", "sum").get<std::vector<std::string>>();
      ss.has_constant = s.value("has_constant", false);
      ss.width = static_cast<int>(detail::get_int(detail::require(s, "width", "sum"), "sum.width"));
      cd.sums.push_back(std::move(ss));
    }
  if (c.contains("hyperplane_classes"))
    for (const auto& pr : c["hyperplane_classes"]) cd.hyperplane_classes.emplace_back(pr.at(0).get<int>(), pr.at(1).get<int>());
  cd.binary_margin = c.value("binary_margin", false);
  cd.confidence = confidence_kind_from_name(c.value("confidence", "none"));
  cd.confidence_bits = c.value("confidence_bits", 8);
  cd.confidence_key_width = c.value("confidence_key_width", 0);
  if (doc.contains("options")) p.options_json = doc["options"].dump();
  p.combine_data.constants.assign(cd.sums.size(), 0);
  return p;
}

void fill_entries(PipelineProgram& p, const json& doc) {
  if (detail::get_int(detail::require(doc, "schema", "entries"), "schema") != 1)
    throw SchemaError("unsupported entries schema version");
  std::string hash = detail::get_string(detail::require(doc, "shape_hash", "entries"), "shape_hash");
  if (hash != p.shape_hash())
    throw ShapeMismatchError("entries shape hash " + hash + " does not match program shape " + p.shape_hash());
  const json& tables = detail::require(doc, "tables", "entries");
  for (auto& t : p.tables) {
    const json& tj = detail::require(tables, t.name.c_str(), "entries.tables");
    t.default_action = parse_int_row(detail::require(tj, "default", t.name), t.name + ".default");
    if (t.default_action.size() != t.actions.size()) throw SchemaError(t.name + ": default action arity mismatch");
    t.entries.clear();
    const json& es = detail::require(tj, "entries", t.name);
    t.entries.reserve(es.size());
    for (std::size_t i = 0; i < es.size(); ++i) t.entries.push_back(parse_entry(es[i], t, t.name + "[" + std::to_string(i) + "]"));
  }
  p.combine_data = parse_combine_data(detail::require(doc, "combine", "entries"));
  if (p.combine_data.constants.size() != p.combine.sums.size()) throw SchemaError("combine constants arity mismatch");
  p.tree_stats = doc.contains("tree_stats") ? parse_tree_stats(doc["tree_stats"]) : std::vector<TreeStats>{};
  p.saturated_entries = doc.value("saturated_entries", std::uint64_t{0});
}

}  // namespace

PipelineProgram parse_program(std::string_view program_json, std::string_view entries_json) {
  json doc = parse_json(program_json, "program file");
  PipelineProgram p = parse_schema(doc);
  if (doc.contains("shape_hash") && doc["shape_hash"].get<std::string>() != p.shape_hash())
    throw SchemaError("program file shape_hash does not match its contents");
  fill_entries(p, parse_json(entries_json, "entries file"));
  return p;
}

PipelineProgram with_entries(const PipelineProgram& p, std::string_view entries_json) {
  PipelineProgram out = p;
  fill_entries(out, parse_json(entries_json, "entries file"));
  return out;
}

void save_program(const PipelineProgram& p, const std::string& program_path, const std::string& entries_path) {
  std::string prog = emit_program_json(p);
  std::string ent = emit_entries_json(p);
  detail::write_file_atomic(entries_path, ent);
  detail::write_file_atomic(program_path, prog);
}

PipelineProgram load_program(const std::string& program_path, const std::string& entries_path) {
  return parse_program(detail::read_file(program_path), detail::read_file(entries_path));
}

// ---------------------------------------------------------------------------
// Diff

namespace {

using EntryMap = std::map<std::vector<KeyMatch>, std::vector<std::int64_t>>;

EntryMap to_map(const TableDef& t) {
  EntryMap m;
  for (const auto& e : t.entries) m.emplace(e.key, e.action);
  return m;
}

}  // namespace

EntryDiff diff_entries(const PipelineProgram& old_program, const PipelineProgram& new_program) {
  std::string h_old = old_program.shape_hash(), h_new = new_program.shape_hash();
  if (h_old != h_new)
    throw ShapeMismatchError("program shapes differ (" + h_old + " vs " + h_new + "); a full redeploy is required");
  EntryDiff d;
  d.shape_hash = h_new;
  for (std::size_t i = 0; i < new_program.tables.size(); ++i) {
    const auto& to = old_program.tables[i];
    const auto& tn = new_program.tables[i];
    TableDiff td;
    td.table = tn.name;
    EntryMap mo = to_map(to), mn = to_map(tn);
    for (const auto& [k, a] : mo)
      if (!mn.count(k)) td.removed.push_back({k, a});
    for (const auto& [k, a] : mn) {
      auto it = mo.find(k);
      if (it == mo.end()) td.added.push_back({k, a});
      else if (it->second != a) td.modified.push_back({k, a});
    }
    if (to.default_action != tn.default_action) td.new_default = tn.default_action;
    if (!td.empty()) d.tables.push_back(std::move(td));
  }
  if (!(old_program.combine_data == new_program.combine_data)) d.combine = new_program.combine_data;
  if (old_program.tree_stats != new_program.tree_stats) d.tree_stats = new_program.tree_stats;
  return d;
}

PipelineProgram apply_diff(const PipelineProgram& old_program, const EntryDiff& diff) {
  if (diff.shape_hash != old_program.shape_hash())
    throw ShapeMismatchError("diff was computed for shape " + diff.shape_hash + ", program has " + old_program.shape_hash());
  PipelineProgram p = old_program;
  for (const auto& td : diff.tables) {
    auto it = std::find_if(p.tables.begin(), p.tables.end(), [&](const TableDef& t) { return t.name == td.table; });
    if (it == p.tables.end()) throw ShapeMismatchError("diff names unknown table '" + td.table + "'");
    EntryMap m = to_map(*it);
    for (const auto& e : td.removed) m.erase(e.key);
    for (const auto& e : td.modified) m[e.key] = e.action;
    for (const auto& e : td.added) m[e.key] = e.action;
    it->entries.clear();
    for (auto& [k, a] : m) it->entries.push_back({k, a});
    if (td.new_default) it->default_action = *td.new_default;
  }
  if (diff.combine) p.combine_data = *diff.combine;
  if (diff.tree_stats) p.tree_stats = *diff.tree_stats;
  return p;
}

std::string emit_diff_json(const EntryDiff& d) {
  json doc;
  doc["schema"] = 1;
  doc["kind"] = "entry_diff";
  doc["shape_hash"] = d.shape_hash;
  json tables = json::array();
  for (const auto& td : d.tables) {
    // Keys are emitted in the table's match encoding; the kind tags them.
    auto rows = [](const std::vector<Entry>& es) {
      json a = json::array();
      for (const auto& e : es) {
        json k = json::array();
        for (const auto& m : e.key) k.push_back({m.value, m.mask, m.hi});
        a.push_back({{"k", k}, {"a", e.action}});
      }
      return a;
    };
    json t = {{"table", td.table}, {"added", rows(td.added)}, {"removed", rows(td.removed)}, {"modified", rows(td.modified)}};
    if (td.new_default) t["default"] = *td.new_default;
    tables.push_back(std::move(t));
  }
  doc["tables"] = std::move(tables);
  if (d.combine) doc["combine"] = combine_data_json(*d.combine);
  if (d.tree_stats) doc["tree_stats"] = tree_stats_json(*d.tree_stats);
  doc["changes"] = d.change_count();
  return doc.dump(2) + "\n";
}

EntryDiff parse_diff_json(std::string_view text) {
  json doc = parse_json(text, "diff file");
  EntryDiff d;
  d.shape_hash = detail::get_string(detail::require(doc, "shape_hash", "diff"), "shape_hash");
  for (const auto& t : detail::require(doc, "tables", "diff")) {
    TableDiff td;
    td.table = detail::get_string(detail::require(t, "table", "diff.tables"), "table");
    auto rows = [&](const char* key) {
      std::vector<Entry> es;
      for (const auto& e : detail::require(t, key, td.table)) {
        Entry en;
        for (const auto& m : detail::require(e, "k", td.table)) {
          if (!m.is_array() || m.size() != 3) throw SchemaError("diff key must be [value, mask, hi]");
          en.key.push_back({detail::get_uint(m[0], "k"), detail::get_uint(m[1], "k"), detail::get_uint(m[2], "k")});
        }
        en.action = parse_int_row(detail::require(e, "a", td.table), "a");
        es.push_back(std::move(en));
      }
      return es;
    };
    td.added = rows("added");
    td.removed = rows("removed");
    td.modified = rows("modified");
    if (t.contains("default")) td.new_default = parse_int_row(t["default"], "default");
    d.tables.push_back(std::move(td));
  }
  if (doc.contains("combine")) d.combine = parse_combine_data(doc["combine"]);
  if (doc.contains("tree_stats")) d.tree_stats = parse_tree_stats(doc["tree_stats"]);
  return d;
}

}  // namespace inml
