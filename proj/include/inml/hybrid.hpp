#pragma once

#include "inml/dataset.hpp"
#include "inml/emulator.hpp"
#include "inml/model.hpp"

#include <string>
#include <vector>

namespace inml {

enum class AcceptRule { all_classes, only_class_set };

struct HybridConfig {
  Rational threshold{1, 2};
  AcceptRule rule = AcceptRule::all_classes;
  std::vector<int> accept_classes;  // only_class_set
  // Resolution of the switch confidence; theta is floored to a multiple of 2^-b.
  int confidence_bits = 8;
};

enum class RouteKind { accept, forward };

struct RouteDecision {
  RouteKind kind = RouteKind::forward;
  int class_id = 0;
};

// Accept iff floor(conf * 2^b) >= floor(theta * 2^b) and the class is accepted.
RouteDecision route(const Prediction& small, const HybridConfig& cfg);

struct ClassMetrics {
  double precision = 0, recall = 0, f1 = 0;
  std::uint64_t support = 0;
};

struct Metrics {
  std::uint64_t n = 0;
  double accuracy = 0;
  double error = 0;
  double macro_f1 = 0;
  double positive_f1 = 0;  // class 1 (binary tasks)
  double f1 = 0;           // positive_f1 when k == 2, else macro_f1
  std::vector<ClassMetrics> per_class;
  std::vector<std::vector<std::uint64_t>> confusion;  // [true][predicted]
};

Metrics compute_metrics(const std::vector<int>& truth, const std::vector<int>& pred, int n_classes);

struct HybridReport {
  double threshold = 0;
  std::uint64_t n = 0;
  std::uint64_t n_accepted = 0;
  std::uint64_t n_forwarded = 0;
  double offload_fraction = 0;  // accepted on the switch
  // Same routing driven by the oracle's exact confidence.
  double oracle_offload_fraction = 0;
  double mean_switch_confidence = 0;
  double mean_oracle_confidence = 0;
  Metrics switch_only;        // small pipeline on every input
  Metrics large_only;         // large model on every input
  Metrics hybrid;             // routed
  Metrics switch_handled;     // accepted subset, switch predictions
  Metrics forwarded_large;    // forwarded subset, large-model predictions
  double error_switch = 0;    // error on the accepted subset
  double error_hybrid = 0;
  double error_large_on_forwarded = 0;
};

// Predictions computed once; sweep re-routes them per threshold.
struct HybridInputs {
  int n_classes = 2;
  std::vector<int> truth;
  std::vector<Prediction> small_pipeline;
  std::vector<Prediction> small_oracle;
  std::vector<Prediction> large;
};

// Features of each model are matched to dataset columns by name.
HybridInputs prepare_hybrid(const StagedProgram& small, const Model& small_model, const Model& large,
                            const Dataset& data, int threads = 0);
HybridReport evaluate_hybrid(const HybridInputs& in, const HybridConfig& cfg);
std::vector<HybridReport> sweep_thresholds(const HybridInputs& in, const HybridConfig& base,
                                           const std::vector<Rational>& thetas);

std::string hybrid_json(const std::vector<HybridReport>& reports);
// theta,offload,error_switch,error_hybrid,error_large_on_forwarded,n_switch,n_forwarded
std::string sweep_csv(const std::vector<HybridReport>& reports);

}  // namespace inml
