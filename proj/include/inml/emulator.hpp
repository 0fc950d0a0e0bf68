#pragma once

#include "inml/model.hpp"
#include "inml/pipeline.hpp"

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace inml {

// Budgets large enough that placement only checks dependencies.
ResourceProfile unbounded_profile();

class Emulator {
 public:
  explicit Emulator(StagedProgram s);
  // Places on the unbounded profile.
  explicit Emulator(const PipelineProgram& p);
  ~Emulator();
  Emulator(Emulator&&) noexcept;
  Emulator& operator=(Emulator&&) noexcept;

  Prediction run(std::span<const std::uint64_t> x) const;
  // Order-preserving; threads <= 0 picks the hardware concurrency.
  std::vector<Prediction> run_batch(const std::vector<FeatureVector>& xs, int threads = 1) const;

  const StagedProgram& staged() const;
  // Ternary entry pairs actually compared by the load-time overlap check.
  std::uint64_t checked_pairs() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

Prediction run_vector(const StagedProgram& s, std::span<const std::uint64_t> x);
std::vector<Prediction> run_batch(const StagedProgram& s, const std::vector<FeatureVector>& xs, int threads = 1);

struct EquivalenceOptions {
  bool exhaustive = true;
  std::uint64_t samples = 100000;
  std::uint64_t seed = 0;
  std::uint64_t domain_guard = std::uint64_t{1} << 24;
  // Relative error is only taken where |oracle raw value| >= this.
  double relative_floor = 1.0;
  std::size_t max_recorded = 64;
  int threads = 0;
};

struct Mismatch {
  FeatureVector x;
  int oracle_class = 0;
  int pipeline_class = 0;
  bool tie = false;
};

struct EquivalenceReport {
  std::string mode;
  std::uint64_t inputs = 0;
  std::uint64_t mismatch_count = 0;
  std::uint64_t tie_count = 0;        // inputs where oracle or pipeline top scores tie
  std::uint64_t tie_mismatches = 0;   // mismatches on such inputs
  std::vector<Mismatch> mismatches;   // first max_recorded, in input order
  double max_score_deviation = 0;     // max |pipeline raw - 2^q * oracle raw|, in ulps
  double max_relative_error = 0;      // deviation / (2^q |oracle raw|), where |oracle raw| >= floor
  double max_confidence_deviation = 0;
  std::uint64_t bound_violations = 0;  // inputs whose deviation exceeds the rounding bound
  double score_bound = 0;              // per-score rounding bound in ulps
};

EquivalenceReport check_equivalence(const Model& model, const StagedProgram& s, const EquivalenceOptions& o = {});
std::string equivalence_json(const EquivalenceReport& r);

// Every single-key range table rewritten as one exact entry per key value.
PipelineProgram expand_ranges_exact(const PipelineProgram& p, std::uint64_t max_entries = std::uint64_t{1} << 20);

}  // namespace inml
