#include "inml/trainers.hpp"

#include "inml/error.hpp"
#include "inml/rng.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <queue>
#include <set>

namespace inml {

void validate_params(const TrainParams& p) {
  if (p.max_depth < 1) throw ArgumentError("max_depth must be >= 1");
  if (p.max_leaf_nodes < 0) throw ArgumentError("max_leaf_nodes must be >= 0");
  if (p.n_trees < 1) throw ArgumentError("n_trees must be >= 1");
  if (p.bootstrap_fraction <= 0 || p.bootstrap_fraction > 1) throw ArgumentError("bootstrap_fraction must be in (0, 1]");
  if (p.max_features < 0) throw ArgumentError("max_features must be >= 0");
}

Model make_model(const Dataset& data, ModelBody body) {
  Model m;
  m.features = data.features;
  m.n_classes = data.n_classes;
  m.body = std::move(body);
  return m;
}

double training_accuracy(const Model& model, const Dataset& data) {
  if (data.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t r = 0; r < data.size(); ++r)
    if (evaluate_direct(model, data.x[r]).class_id == data.y[r]) ++hit;
  return static_cast<double>(hit) / static_cast<double>(data.size());
}

// ---------------------------------------------------------------------------
// CART

namespace {

using i128 = __int128;

BigInt big(i128 v) {
  bool neg = v < 0;
  unsigned __int128 u = neg ? static_cast<unsigned __int128>(-v) : static_cast<unsigned __int128>(v);
  BigInt r = static_cast<std::uint64_t>(u >> 64);
  r <<= 64;
  r += static_cast<std::uint64_t>(u);
  return neg ? BigInt(-r) : r;
}

struct Split {
  int feature = -1;
  std::int64_t threshold = 0;
  // Sum over children of (sum of squared class counts) / child size, exact.
  i128 num = 0;
  i128 den = 1;
  std::vector<std::size_t> left, right;
};

struct Pending {
  int node;
  int depth;
  std::vector<std::size_t> rows;
  Split split;
  Rational gain;
  int order;
};

struct PendingLess {
  bool operator()(const Pending* a, const Pending* b) const {
    if (a->gain != b->gain) return a->gain < b->gain;
    return a->order > b->order;
  }
};

class CartBuilder {
 public:
  CartBuilder(const Dataset& data, const TrainParams& p, std::uint64_t feature_seed)
      : data_(data), p_(p), rng_(feature_seed) {}

  TreeModel build(std::vector<std::size_t> rows) {
    if (rows.empty()) throw EmptyDatasetError("cannot train on an empty dataset");
    tree_.nodes.clear();
    tree_.root = 0;
    tree_.nodes.push_back(make_leaf(rows, 0));
    std::vector<std::unique_ptr<Pending>> storage;
    std::priority_queue<Pending*, std::vector<Pending*>, PendingLess> queue;
    int order = 0;
    auto consider = [&](int node, int depth, std::vector<std::size_t> r) {
      if (depth >= p_.max_depth) return;
      auto split = best_split(r);
      if (!split) return;
      auto pend = std::make_unique<Pending>();
      pend->node = node;
      pend->depth = depth;
      pend->gain = Rational(big(split->num), big(split->den)) - parent_score(r);
      pend->rows = std::move(r);
      pend->split = std::move(*split);
      pend->order = order++;
      queue.push(pend.get());
      storage.push_back(std::move(pend));
    };
    consider(0, 0, std::move(rows));
    int leaves = 1;
    while (!queue.empty()) {
      if (p_.max_leaf_nodes > 0 && leaves >= p_.max_leaf_nodes) break;
      Pending* top = queue.top();
      queue.pop();
      int l = static_cast<int>(tree_.nodes.size());
      tree_.nodes.push_back(make_leaf(top->split.left, top->depth + 1));
      int r = static_cast<int>(tree_.nodes.size());
      tree_.nodes.push_back(make_leaf(top->split.right, top->depth + 1));
      TreeNode& n = tree_.nodes[top->node];
      n.is_leaf = false;
      n.feature = top->split.feature;
      n.threshold = top->split.threshold;
      n.left = l;
      n.right = r;
      n.class_id = 0;
      n.confidence = 1;
      n.depth = 0;
      ++leaves;
      consider(l, top->depth + 1, std::move(top->split.left));
      consider(r, top->depth + 1, std::move(top->split.right));
    }
    return tree_;
  }

 private:
  std::vector<std::size_t> class_counts(const std::vector<std::size_t>& rows) const {
    std::vector<std::size_t> c(data_.n_classes, 0);
    for (auto r : rows) ++c[data_.y[r]];
    return c;
  }

  TreeNode make_leaf(const std::vector<std::size_t>& rows, int depth) const {
    auto c = class_counts(rows);
    TreeNode leaf;
    leaf.is_leaf = true;
    leaf.class_id = argmax_lowest(c);
    leaf.confidence = Rational(static_cast<long long>(c[leaf.class_id]), static_cast<long long>(rows.size()));
    leaf.depth = depth;
    return leaf;
  }

  Rational parent_score(const std::vector<std::size_t>& rows) const {
    auto c = class_counts(rows);
    long long s = 0;
    for (auto v : c) s += static_cast<long long>(v) * static_cast<long long>(v);
    return Rational(s, static_cast<long long>(rows.size()));
  }

  std::vector<int> candidate_features() {
    std::vector<int> all(data_.features.size());
    std::iota(all.begin(), all.end(), 0);
    if (p_.max_features <= 0 || p_.max_features >= static_cast<int>(all.size())) return all;
    // Partial Fisher-Yates, then sorted so ties resolve by feature index.
    for (int i = 0; i < p_.max_features; ++i) {
      auto j = i + static_cast<int>(rng_.below(all.size() - i));
      std::swap(all[i], all[j]);
    }
    all.resize(p_.max_features);
    std::sort(all.begin(), all.end());
    return all;
  }

  std::optional<Split> best_split(const std::vector<std::size_t>& rows) {
    auto counts = class_counts(rows);
    if (std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; }) <= 1) return std::nullopt;
    const int k = data_.n_classes;
    const auto n = static_cast<i128>(rows.size());
    std::optional<Split> best;
    std::vector<std::size_t> sorted = rows;
    for (int f : candidate_features()) {
      std::stable_sort(sorted.begin(), sorted.end(),
                       [&](std::size_t a, std::size_t b) { return data_.x[a][f] < data_.x[b][f]; });
      std::vector<i128> lc(k, 0), rc(k, 0);
      for (auto r : sorted) ++rc[data_.y[r]];
      i128 sl = 0, sr = 0;
      for (auto v : rc) sr += v * v;
      for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
        int y = data_.y[sorted[i]];
        sl += 2 * lc[y] + 1;
        ++lc[y];
        sr -= 2 * rc[y] - 1;
        --rc[y];
        std::uint64_t a = data_.x[sorted[i]][f], b = data_.x[sorted[i + 1]][f];
        if (a == b) continue;
        i128 nl = static_cast<i128>(i + 1), nr = n - nl;
        i128 num = sl * nr + sr * nl, den = nl * nr;
        if (!best || num * best->den > best->num * den) {
          if (!best) best.emplace();
          best->feature = f;
          best->threshold = static_cast<std::int64_t>((a + b) / 2);
          best->num = num;
          best->den = den;
        }
      }
    }
    if (best) {
      for (auto r : rows)
        (static_cast<std::int64_t>(data_.x[r][best->feature]) <= best->threshold ? best->left : best->right).push_back(r);
    }
    return best;
  }

  const Dataset& data_;
  TrainParams p_;
  Rng rng_;
  TreeModel tree_;
};

}  // namespace

TreeModel train_decision_tree(const Dataset& data, const std::vector<std::size_t>& rows, const TrainParams& p,
                              std::uint64_t feature_seed) {
  validate_params(p);
  validate_dataset(data);
  return CartBuilder(data, p, feature_seed).build(rows);
}

TreeModel train_decision_tree(const Dataset& data, const TrainParams& p) {
  if (data.empty()) throw EmptyDatasetError("cannot train on an empty dataset");
  std::vector<std::size_t> rows(data.size());
  std::iota(rows.begin(), rows.end(), 0);
  TrainParams single = p;
  single.max_features = 0;
  return train_decision_tree(data, rows, single, p.rng_seed);
}

std::vector<std::vector<std::size_t>> bootstrap_samples(std::size_t n_rows, const TrainParams& p) {
  validate_params(p);
  if (n_rows == 0) throw EmptyDatasetError("cannot resample an empty dataset");
  Rng rng(p.rng_seed);
  auto size = static_cast<std::size_t>(round_half_even(p.bootstrap_fraction * static_cast<unsigned long long>(n_rows)));
  size = std::max<std::size_t>(size, 1);
  std::vector<std::vector<std::size_t>> out(p.n_trees);
  for (auto& s : out) {
    s.resize(size);
    for (auto& idx : s) idx = rng.below(n_rows);
  }
  return out;
}

EnsembleModel train_random_forest(const Dataset& data, const std::vector<std::vector<std::size_t>>& samples,
                                  const TrainParams& p) {
  validate_params(p);
  if (data.empty()) throw EmptyDatasetError("cannot train on an empty dataset");
  EnsembleModel e;
  e.mode = EnsembleMode::bagging;
  for (std::size_t t = 0; t < samples.size(); ++t)
    e.trees.push_back(train_decision_tree(data, samples[t], p, p.rng_seed ^ (0x9e3779b97f4a7c15ULL * (t + 1))));
  return e;
}

EnsembleModel train_random_forest(const Dataset& data, const TrainParams& p) {
  if (data.empty()) throw EmptyDatasetError("cannot train on an empty dataset");
  return train_random_forest(data, bootstrap_samples(data.size(), p), p);
}

// ---------------------------------------------------------------------------
// Gaussian NB

NBModel train_gaussian_nb(const Dataset& data) {
  if (data.empty()) throw EmptyDatasetError("cannot train on an empty dataset");
  validate_dataset(data);
  const int k = data.n_classes;
  const std::size_t f = data.features.size();
  std::vector<std::vector<std::size_t>> by_class(k);
  for (std::size_t r = 0; r < data.size(); ++r) by_class[data.y[r]].push_back(r);
  NBModel nb;
  for (int y = 0; y < k; ++y) {
    const auto& rows = by_class[y];
    if (rows.size() < 2)
      throw InsufficientClassRowsError("class " + std::to_string(y) + " has " + std::to_string(rows.size()) +
                                       " rows; at least 2 are needed for a variance");
    nb.priors.emplace_back(static_cast<long long>(rows.size()), static_cast<long long>(data.size()));
    std::vector<Rational> mean(f), var(f);
    for (std::size_t i = 0; i < f; ++i) {
      BigInt sum = 0;
      for (auto r : rows) sum += data.x[r][i];
      mean[i] = Rational(sum, static_cast<unsigned long long>(rows.size()));
      Rational ss = 0;
      for (auto r : rows) {
        Rational d = Rational(static_cast<unsigned long long>(data.x[r][i])) - mean[i];
        ss += d * d;
      }
      Rational v = ss / static_cast<unsigned long long>(rows.size() - 1);
      var[i] = v < kVarianceFloor ? kVarianceFloor : v;
    }
    nb.means.push_back(std::move(mean));
    nb.variances.push_back(std::move(var));
  }
  return nb;
}

// ---------------------------------------------------------------------------
// K-Means

namespace {

Rational sq_dist(const FeatureVector& x, const std::vector<Rational>& c) {
  Rational d2 = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    Rational d = Rational(static_cast<unsigned long long>(x[i])) - c[i];
    d2 += d * d;
  }
  return d2;
}

// Uniform-ish draw in [0, total) from 128 random bits.
BigInt draw_below(Rng& rng, const BigInt& total) {
  BigInt r = rng.next();
  r <<= 64;
  r += rng.next();
  return r % total;
}

}  // namespace

KMeansTrace train_kmeans_traced(const Dataset& data, int k, std::uint64_t seed, int max_iters) {
  if (data.empty()) throw EmptyDatasetError("cannot cluster an empty dataset");
  validate_dataset(data);
  std::set<FeatureVector> distinct(data.x.begin(), data.x.end());
  if (k < 1 || static_cast<std::size_t>(k) > distinct.size())
    throw KTooLargeError("k = " + std::to_string(k) + " exceeds the " + std::to_string(distinct.size()) + " distinct points");

  Rng rng(seed);
  auto to_center = [](const FeatureVector& x) {
    std::vector<Rational> c;
    for (auto v : x) c.emplace_back(static_cast<unsigned long long>(v));
    return c;
  };
  std::vector<std::vector<Rational>> centers;
  centers.push_back(to_center(data.x[rng.below(data.size())]));
  std::vector<Rational> nearest(data.size());
  for (std::size_t r = 0; r < data.size(); ++r) nearest[r] = sq_dist(data.x[r], centers[0]);
  while (static_cast<int>(centers.size()) < k) {
    // Initial centers are data points, so all weights are integers.
    BigInt total = 0;
    for (const auto& d : nearest) total += boost::multiprecision::numerator(d);
    BigInt pick = draw_below(rng, total);
    std::size_t chosen = 0;
    for (std::size_t r = 0; r < data.size(); ++r) {
      BigInt w = boost::multiprecision::numerator(nearest[r]);
      if (pick < w) {
        chosen = r;
        break;
      }
      pick -= w;
    }
    centers.push_back(to_center(data.x[chosen]));
    for (std::size_t r = 0; r < data.size(); ++r) nearest[r] = std::min(nearest[r], sq_dist(data.x[r], centers.back()));
  }

  KMeansTrace trace;
  std::vector<int> assign(data.size(), -1);
  for (int it = 0; it < max_iters; ++it) {
    bool changed = false;
    Rational inertia = 0;
    for (std::size_t r = 0; r < data.size(); ++r) {
      int best = 0;
      Rational bd = sq_dist(data.x[r], centers[0]);
      for (int j = 1; j < k; ++j) {
        Rational d = sq_dist(data.x[r], centers[j]);
        if (d < bd) {
          bd = d;
          best = j;
        }
      }
      inertia += bd;
      if (assign[r] != best) {
        assign[r] = best;
        changed = true;
      }
    }
    trace.inertia.push_back(inertia);
    trace.iterations = it + 1;
    if (!changed) break;
    std::vector<std::vector<Rational>> sums(k, std::vector<Rational>(data.features.size(), Rational(0)));
    std::vector<std::size_t> sizes(k, 0);
    for (std::size_t r = 0; r < data.size(); ++r) {
      ++sizes[assign[r]];
      for (std::size_t i = 0; i < data.features.size(); ++i) sums[assign[r]][i] += static_cast<unsigned long long>(data.x[r][i]);
    }
    for (int j = 0; j < k; ++j) {
      if (sizes[j] == 0) continue;  // empty cluster keeps its center
      for (std::size_t i = 0; i < data.features.size(); ++i)
        centers[j][i] = sums[j][i] / static_cast<unsigned long long>(sizes[j]);
    }
  }
  trace.model.centers = std::move(centers);
  return trace;
}

KMeansModel train_kmeans(const Dataset& data, int k, std::uint64_t seed, int max_iters) {
  return train_kmeans_traced(data, k, seed, max_iters).model;
}

}  // namespace inml
