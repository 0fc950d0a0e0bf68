#pragma once

#include "inml/program.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace inml {

struct ResourceProfile {
  std::string name = "generic-12";
  int n_stages = 12;
  int max_tables_per_stage = 8;
  std::uint64_t sram_entries_budget = std::uint64_t{1} << 20;
  std::uint64_t tcam_entries_budget = std::uint64_t{1} << 16;
  int max_key_bits = 512;
  int max_action_bits = 256;
  int metadata_bits_budget = 1024;
  int adds_per_stage = 4;
  int sram_word_bits = 8;
  int max_extracted_features = 64;

  bool operator==(const ResourceProfile&) const = default;
};

ResourceProfile default_profile();
void validate_profile(const ResourceProfile& p);
ResourceProfile parse_profile_json(std::string_view text);
std::string emit_profile_json(const ResourceProfile& p);
ResourceProfile load_profile(const std::string& path);

enum class StepKind { add, decide, confidence };
const char* step_kind_name(StepKind k);

// One stage of the decision step: `ops` parallel operations.
struct CombineStep {
  int stage = 0;
  StepKind kind = StepKind::add;
  int ops = 0;
};

struct StagedProgram {
  PipelineProgram program;
  std::vector<int> table_stage;  // parallel to program.tables
  std::vector<int> table_level;  // dependency layer of each table
  std::vector<CombineStep> combine_steps;
  int dependency_layers = 0;  // table layers only
  int stages_used = 0;

  int adds_in_stage(int stage) const;
};

// Metadata bits carried between stages: table action fields plus the sums,
// class and confidence registers of the decision step.
int metadata_bits(const PipelineProgram& p);

// TCAM rows a range table occupies after prefix expansion.
std::uint64_t tcam_rows(const TableDef& t);

StagedProgram place_stages(const PipelineProgram& p, const ResourceProfile& prof = default_profile());

struct TableUsage {
  std::string name;
  int stage = 0;
  MatchKind kind = MatchKind::exact;
  std::uint64_t entries = 0;
  int key_bits = 0;
  int action_bits = 0;
  std::uint64_t sram_entries = 0;
  std::uint64_t sram_bits = 0;  // entries * roundup(key + action, word)
  std::uint64_t tcam_entries = 0;
};

// Entry bounds for a tree classification table, as key-space exponents
// (entries <= 2^bits). Values saturate at UINT64_MAX.
struct EntryBounds {
  int branches = 0;
  int features = 0;
  std::vector<int> per_feature;
  int key_width = 0;        // sum of ceil(log2(b_i + 1)): ceiling for this tree
  int lower_bits = 0;       // F-1 single-use features, one feature takes the rest
  int upper_bits = 0;       // widest split of B over F features
  int even_split_bits = 0;  // F * ceil(log2(B/F + 1))
  double printed_upper_exponent = 0;  // ceil(log2(B/F))^F, as typeset
  double printed_lower_exponent = 0;  // B - 1 + ceil(log2(B - (F - 1))), as typeset
  std::int64_t generated = -1;        // entries actually emitted, when known

  std::uint64_t key_space() const { return pow2_sat(key_width); }
  std::uint64_t lower() const { return pow2_sat(lower_bits); }
  std::uint64_t upper() const { return pow2_sat(upper_bits); }
  std::uint64_t even_split() const { return pow2_sat(even_split_bits); }
  static std::uint64_t pow2_sat(int bits) { return bits >= 64 ? UINT64_MAX : std::uint64_t{1} << bits; }
};

EntryBounds classification_entry_bounds(int branches, int features, const std::vector<int>& per_feature);

struct ResourceReport {
  std::string profile;
  std::vector<TableUsage> tables;
  std::uint64_t total_entries = 0;
  std::uint64_t sram_entries = 0;
  std::uint64_t sram_bits = 0;
  std::uint64_t tcam_entries = 0;
  int metadata_bits = 0;
  int stages_used = 0;
  int dependency_layers = 0;
  int feature_tables = 0;
  int tree_tables = 0;
  double sram_pct = 0;
  double tcam_pct = 0;
  double metadata_pct = 0;
  double stages_pct = 0;
  std::vector<EntryBounds> bounds;  // one per compiled tree for tree models
};

ResourceReport resource_report(const StagedProgram& s, const ResourceProfile& prof = default_profile());
std::string report_text(const ResourceReport& r);
std::string report_json(const ResourceReport& r);

struct TernaryPattern {
  std::uint64_t value = 0;
  std::uint64_t mask = 0;  // 1 = care
  bool operator==(const TernaryPattern&) const = default;
};

// Minimal prefix cover of [lo, hi] in `width` bits.
std::vector<TernaryPattern> expand_range_to_ternary(std::uint64_t lo, std::uint64_t hi, int width);

}  // namespace inml
