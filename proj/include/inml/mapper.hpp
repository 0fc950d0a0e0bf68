#pragma once

#include "inml/model.hpp"
#include "inml/program.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace inml {

// Sorted distinct thresholds per feature. Interval j of feature i is
// (T[j-1], T[j]] with T[-1] = -1 and T[|T|] = 2^w - 1; code(v) = j.
struct IntervalSpec {
  std::vector<std::vector<std::int64_t>> thresholds;

  std::size_t n_features() const { return thresholds.size(); }
  int intervals(std::size_t f) const { return static_cast<int>(thresholds[f].size()) + 1; }
  int code_width(std::size_t f) const;
  std::uint64_t code(std::size_t f, std::uint64_t v) const;
  bool used(std::size_t f) const { return !thresholds[f].empty(); }
  bool empty() const;
};

// Thresholds >= 2^w - 1 never send a value right and are dropped.
IntervalSpec extract_intervals(std::span<const TreeModel> trees, const std::vector<FeatureSpec>& features);

enum class Strategy { per_feature, per_class, per_hyperplane };

const char* strategy_name(Strategy s);
Strategy strategy_from_name(std::string_view s);

struct QuantConfig {
  int frac_bits = 16;
  int action_width = 32;
  int confidence_bits = 8;
  // Bin count applied to every feature table of a per-value strategy
  // (0 = one entry per value). Explicit edges, when given, win.
  int bins = 0;
  std::vector<std::vector<std::uint64_t>> bin_edges;
};

struct CompileOptions {
  QuantConfig quant;
  Strategy strategy = Strategy::per_feature;
  // Classification/tree tables as ternary patterns; false expands every code
  // tuple into an exact entry.
  bool ternary = true;
  // Fixed-shape tree compilation: every tree keys on every feature with
  // codes of exactly this many bits (0 = minimal widths). Keeps the shape
  // hash stable across retraining.
  int code_bits = 0;
  bool emit_confidence = true;
  // Largest per-value table built without binning.
  std::uint64_t max_table_entries = std::uint64_t{1} << 20;
};

void validate_options(const CompileOptions& o);
std::string options_to_json(const CompileOptions& o);
CompileOptions options_from_json(std::string_view text);

// Round-half-even of v * 2^q; OverflowError unless it fits `width` signed bits.
std::int64_t quantize(const Rational& v, int q, int width);
std::int64_t quantize(const Real& v, int q, int width);

// Upper edges of the first n_bins - 1 bins (the last bin ends at 2^w - 1).
// Without a sample: equal width. With one: quantile edges, nudged apart so
// every bin is non-empty.
std::vector<std::uint64_t> bin_feature(int domain_width, int n_bins, std::span<const std::uint64_t> sample = {});

PipelineProgram compile_tree(const Model& model, const CompileOptions& o = {});
PipelineProgram compile_ensemble(const Model& model, const CompileOptions& o = {});
PipelineProgram compile_svm(const Model& model, const CompileOptions& o = {});
PipelineProgram compile_nb(const Model& model, const CompileOptions& o = {});
PipelineProgram compile_kmeans(const Model& model, const CompileOptions& o = {});

// Dispatches on the model type.
PipelineProgram compile(const Model& model, const CompileOptions& o = {});

}  // namespace inml
