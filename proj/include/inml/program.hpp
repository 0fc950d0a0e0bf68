#pragma once

#include "inml/model.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace inml {

enum class MatchKind { exact, range, ternary };

const char* match_kind_name(MatchKind k);
MatchKind match_kind_from_name(std::string_view s);

struct Field {
  std::string name;
  int width = 0;
  bool is_signed = false;
  bool operator==(const Field&) const = default;
};

// One key dimension of an entry. exact: `value`; ternary: `value`/`mask`
// (mask bit 1 = care); range: [`value`, `hi`].
struct KeyMatch {
  std::uint64_t value = 0;
  std::uint64_t mask = 0;
  std::uint64_t hi = 0;
  auto operator<=>(const KeyMatch&) const = default;
};

struct Entry {
  std::vector<KeyMatch> key;
  std::vector<std::int64_t> action;
  bool operator==(const Entry&) const = default;
};

enum class TableRole { feature, bin, tree, classify, hyperplane, class_score };

const char* table_role_name(TableRole r);

struct TableDef {
  std::string name;
  TableRole role = TableRole::feature;
  MatchKind kind = MatchKind::exact;
  std::vector<Field> keys;     // features or metadata produced by earlier tables
  std::vector<Field> actions;  // metadata written on hit (or by the default)
  std::vector<Entry> entries;  // priority = list order
  std::vector<std::int64_t> default_action;

  int key_bits() const;
  int action_bits() const;
  bool operator==(const TableDef&) const = default;
};

enum class CombineKind { code_lookup, vote_majority, weighted_sum_argmax, sum_argmin, sum_threshold, hyperplane_vote };
enum class ConfidenceKind { none, field, vote_fraction, margin_logistic, sum_table };

const char* combine_kind_name(CombineKind k);
const char* confidence_kind_name(ConfidenceKind k);

struct SumSpec {
  std::string name;
  std::vector<std::string> addends;
  bool has_constant = false;
  int width = 0;  // signed
  bool operator==(const SumSpec&) const = default;
};

// Schema half of the final decision step. Changing any of it is a redeploy.
struct CombineDescriptor {
  CombineKind kind = CombineKind::code_lookup;
  int n_classes = 2;
  std::string class_field;
  std::string confidence_field;
  std::vector<std::string> vote_fields;
  std::vector<SumSpec> sums;
  std::vector<std::pair<int, int>> hyperplane_classes;  // (voted if < 0, voted if > 0)
  bool binary_margin = false;                           // class 1 iff sums[0] > 0
  ConfidenceKind confidence = ConfidenceKind::none;
  int confidence_bits = 8;
  int confidence_key_width = 0;
  bool operator==(const CombineDescriptor&) const = default;
};

// One row of a monotone confidence lookup: keys >= lo map to conf_q (until the
// next row). Confidence = conf_q / 2^confidence_bits.
struct LutEntry {
  std::int64_t lo = 0;
  std::int64_t conf_q = 0;
  bool operator==(const LutEntry&) const = default;
};

// Entry half of the decision step: constants and lookup rows. Updatable.
struct CombineData {
  std::vector<std::int64_t> constants;  // one per SumSpec (0 when !has_constant)
  std::int64_t threshold = 0;           // sum_threshold
  std::vector<LutEntry> confidence_lut;
  bool operator==(const CombineData&) const = default;
};

// Branch statistics of one compiled tree, for the entry-bound analysis.
struct TreeStats {
  int branches = 0;
  std::vector<int> per_feature;  // branches testing each model feature
  bool operator==(const TreeStats&) const = default;
};

struct PipelineProgram {
  std::string model_type;
  std::string strategy;
  std::vector<FeatureSpec> features;
  int frac_bits = 16;
  std::vector<TableDef> tables;
  CombineDescriptor combine;
  CombineData combine_data;
  std::vector<TreeStats> tree_stats;
  std::uint64_t saturated_entries = 0;  // NB log-likelihoods clamped to the action range
  std::string options_json;             // compile options, replayed by `update`

  std::vector<Field> metadata_fields() const;
  const TableDef* find_table(std::string_view name) const;
  // Depends only on schema: table names/kinds/fields/widths and the combine
  // descriptor. Never on entries, defaults, constants or lookup rows.
  std::string shape_hash() const;
  bool operator==(const PipelineProgram&) const = default;
};

struct TableDiff {
  std::string table;
  std::vector<Entry> added;
  std::vector<Entry> removed;   // action = old action
  std::vector<Entry> modified;  // action = new action
  std::optional<std::vector<std::int64_t>> new_default;

  bool empty() const { return added.empty() && removed.empty() && modified.empty() && !new_default; }
};

struct EntryDiff {
  std::string shape_hash;
  std::vector<TableDiff> tables;  // only tables that changed
  std::optional<CombineData> combine;
  std::optional<std::vector<TreeStats>> tree_stats;

  bool empty() const { return tables.empty() && !combine; }
  std::size_t change_count() const;
};

// Canonical entry order (sorted by key); the compiler emits disjoint patterns,
// so sorting never changes match results.
void canonicalize(TableDef& table);

EntryDiff diff_entries(const PipelineProgram& old_program, const PipelineProgram& new_program);
PipelineProgram apply_diff(const PipelineProgram& old_program, const EntryDiff& diff);

// program.json holds the schema, entries.json the control-plane state.
std::string emit_program_json(const PipelineProgram& p);
std::string emit_entries_json(const PipelineProgram& p);
std::string emit_diff_json(const EntryDiff& d);
EntryDiff parse_diff_json(std::string_view text);
PipelineProgram parse_program(std::string_view program_json, std::string_view entries_json);
// Replace the entry half of `p` from an entries document; shape hashes must match.
PipelineProgram with_entries(const PipelineProgram& p, std::string_view entries_json);

void save_program(const PipelineProgram& p, const std::string& program_path, const std::string& entries_path);
PipelineProgram load_program(const std::string& program_path, const std::string& entries_path);

}  // namespace inml
