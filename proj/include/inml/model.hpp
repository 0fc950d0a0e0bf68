#pragma once

#include "inml/numeric.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace inml {

// Feature values are unsigned integers in [0, 2^width_bits).
using FeatureVector = std::vector<std::uint64_t>;

enum class FeatureKind { integer, fixed_point };

struct FeatureSpec {
  std::string name;
  int index = 0;
  int width_bits = 8;
  FeatureKind kind = FeatureKind::integer;
  Rational scale{1};  // real value = v * scale when kind == fixed_point

  std::uint64_t domain_size() const { return std::uint64_t{1} << width_bits; }
  std::uint64_t max_value() const { return domain_size() - 1; }
  bool operator==(const FeatureSpec&) const = default;
};

// Internal node: x[feature] <= threshold goes left. Leaf: class_id and the
// per-mode payloads (boosting weight, isolation depth, leaf purity).
struct TreeNode {
  bool is_leaf = true;
  int feature = -1;
  std::int64_t threshold = 0;
  int left = -1;
  int right = -1;
  int class_id = 0;
  Rational weight{0};
  int depth = 0;
  Rational confidence{1};

  bool operator==(const TreeNode&) const = default;
};

struct TreeModel {
  std::vector<TreeNode> nodes;
  int root = 0;

  int internal_count() const;
  bool operator==(const TreeModel&) const = default;
};

enum class EnsembleMode { bagging, boosting, isolation };

struct EnsembleModel {
  EnsembleMode mode = EnsembleMode::bagging;
  std::vector<TreeModel> trees;
  // boosting: k == 2 uses a single margin (bias.size() == 1); k > 2 sums per
  // class, tree i contributing to class tree_class[i].
  std::vector<Rational> bias;
  std::vector<int> tree_class;
  Rational weight_scale{1};
  // isolation: anomaly (class 1) iff summed depth < depth_threshold.
  std::int64_t depth_threshold = 0;
  Rational path_norm{1};

  bool operator==(const EnsembleModel&) const = default;
};

struct Hyperplane {
  std::vector<Rational> coefficients;
  Rational intercept{0};
  int class_a = 0;  // voted when value < 0
  int class_b = 1;  // voted when value > 0; value == 0 votes min(a, b)

  bool operator==(const Hyperplane&) const = default;
};

struct SVMModel {
  std::vector<Hyperplane> hyperplanes;
  bool operator==(const SVMModel&) const = default;
};

struct NBModel {
  std::vector<Rational> priors;                 // [class]
  std::vector<std::vector<Rational>> means;     // [class][feature]
  std::vector<std::vector<Rational>> variances; // [class][feature]
  bool operator==(const NBModel&) const = default;
};

struct KMeansModel {
  std::vector<std::vector<Rational>> centers;  // [cluster][feature]
  bool operator==(const KMeansModel&) const = default;
};

enum class ModelType { tree, forest, xgboost, isolation_forest, svm, nb, kmeans };

const char* model_type_name(ModelType t);
ModelType model_type_from_name(std::string_view name);

using ModelBody = std::variant<TreeModel, EnsembleModel, SVMModel, NBModel, KMeansModel>;

struct Model {
  std::vector<FeatureSpec> features;
  int n_classes = 2;
  ModelBody body;

  ModelType type() const;
  bool operator==(const Model&) const = default;
};

struct Prediction {
  int class_id = 0;
  std::vector<Real> scores;  // class_id == argmax(scores), lowest id on ties
  Real confidence{1};
  // Pre-decision values that quantization approximates: hyperplane values
  // (SVM), class log scores (NB), squared distances (K-Means), margins
  // (boosting), summed depth (isolation). Empty for tree/bagging.
  std::vector<Real> raw;
  bool tie = false;
};

struct Violation {
  std::string code;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
  bool has(std::string_view code) const;
};

ValidationReport validate_model(const Model& model);

// Parses without validating; used by tooling that wants to inspect broken files.
Model parse_model_unchecked(std::string_view text);
// Parses and validates; throws SchemaError/DomainError/FeatureError.
Model parse_model_file(std::string_view text);
std::string emit_model_file(const Model& model);

Model load_model(const std::string& path);
void save_model(const Model& model, const std::string& path);

Prediction evaluate_direct(const Model& model, std::span<const std::uint64_t> x);

// Shared by the oracle and the trainers: index of the leaf reached by x.
int tree_leaf(const TreeModel& tree, std::span<const std::uint64_t> x);

// Lowest index among maxima.
template <class T>
int argmax_lowest(const std::vector<T>& v) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

}  // namespace inml
