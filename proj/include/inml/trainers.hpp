#pragma once

#include "inml/dataset.hpp"
#include "inml/model.hpp"

#include <cstdint>
#include <vector>

namespace inml {

struct TrainParams {
  int max_depth = 8;
  int max_leaf_nodes = 0;  // 0 = unlimited
  int n_trees = 10;
  Rational bootstrap_fraction{1};
  std::uint64_t rng_seed = 0;
  int max_features = 0;  // features considered per split in forests; 0 = all
};

void validate_params(const TrainParams& p);

// Variance floor applied by the Gaussian NB trainer, in feature units squared.
inline const Rational kVarianceFloor{1, 1 << 20};

// Greedy CART with Gini impurity, best-first growth. Split thresholds are the
// floored midpoints between adjacent observed values.
TreeModel train_decision_tree(const Dataset& data, const TrainParams& p);
TreeModel train_decision_tree(const Dataset& data, const std::vector<std::size_t>& rows, const TrainParams& p,
                              std::uint64_t feature_seed);

// Bootstrap index lists drawn from Rng(seed): n_trees lists of
// max(1, round(fraction * n)) indices each, with replacement.
std::vector<std::vector<std::size_t>> bootstrap_samples(std::size_t n_rows, const TrainParams& p);

EnsembleModel train_random_forest(const Dataset& data, const TrainParams& p);
EnsembleModel train_random_forest(const Dataset& data, const std::vector<std::vector<std::size_t>>& samples,
                                  const TrainParams& p);

NBModel train_gaussian_nb(const Dataset& data);

struct KMeansTrace {
  KMeansModel model;
  std::vector<Rational> inertia;  // within-cluster squared distance per Lloyd iteration
  int iterations = 0;
};

KMeansModel train_kmeans(const Dataset& data, int k, std::uint64_t seed, int max_iters = 100);
KMeansTrace train_kmeans_traced(const Dataset& data, int k, std::uint64_t seed, int max_iters = 100);

// Wraps a trained body with the dataset's feature specs and class count.
Model make_model(const Dataset& data, ModelBody body);

double training_accuracy(const Model& model, const Dataset& data);

}  // namespace inml
