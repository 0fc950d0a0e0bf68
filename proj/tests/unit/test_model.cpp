#include <doctest.h>

#include "../support/builders.hpp"
#include "inml/error.hpp"
#include "inml/model.hpp"
#include "inml/trainers.hpp"

#include <cmath>

using namespace inml;
using namespace inml::testing;

namespace {

std::string features_json(int n, int width = 4) {
  std::string s = "[";
  for (int i = 0; i < n; ++i) {
    if (i) s += ",";
    s += R"({"name":"f)" + std::to_string(i) + R"(","index":)" + std::to_string(i) + R"(,"width_bits":)" +
         std::to_string(width) + "}";
  }
  return s + "]";
}

}  // namespace

TEST_SUITE("model_ir") {
  TEST_CASE("minimal tree document parses to a single leaf") {
    std::string doc = R"({"schema":1,"model_type":"tree","n_classes":2,"features":)" + features_json(1) +
                      R"(,"params":{"root":0,"nodes":[{"leaf":true,"class":0}]}})";
    Model m = parse_model_file(doc);
    auto& t = std::get<TreeModel>(m.body);
    CHECK(t.internal_count() == 0);
    CHECK(evaluate_direct(m, FeatureVector{3}).class_id == 0);
  }

  TEST_CASE("svm document with three classes has three hyperplanes") {
    Rng rng(1);
    Model m = random_svm(rng, make_features({4, 4}), 3);
    Model back = parse_model_file(emit_model_file(m));
    CHECK(std::get<SVMModel>(back.body).hyperplanes.size() == 3);
  }

  TEST_CASE("nb with zero variance is a domain error") {
    Rng rng(2);
    Model m = random_nb(rng, make_features({3}), 2);
    std::get<NBModel>(m.body).variances[1][0] = 0;
    std::string text = emit_model_file(m);
    CHECK_THROWS_AS(parse_model_file(text), DomainError);
  }

  TEST_CASE("missing field is a schema error, bad feature index a feature error") {
    CHECK_THROWS_AS(parse_model_file(R"({"schema":1,"model_type":"tree","n_classes":2})"), SchemaError);
    TreeBuilder b;
    int l = b.leaf(0), r = b.leaf(1);
    Model m = wrap(make_features({4}), 2, b.done(b.split(3, 2, l, r)));
    CHECK_THROWS_AS(parse_model_file(emit_model_file(m)), FeatureError);
  }

  TEST_CASE("kmeans point at a centre") {
    KMeansModel km;
    km.centers = {{0, 0}, {5, 5}, {9, 2}};
    Model m = wrap(make_features({4, 4}), 3, km);
    Prediction p = evaluate_direct(m, FeatureVector{9, 2});
    CHECK(p.class_id == 2);
    CHECK(p.raw[2] == 0);
    CHECK(p.confidence == 1);
  }

  TEST_CASE("nb symmetric classes tie to class 0") {
    NBModel b;
    b.priors = {Rational(1, 2), Rational(1, 2)};
    b.means = {{3}, {3}};
    b.variances = {{2}, {2}};
    Model m = wrap(make_features({3}), 2, b);
    for (std::uint64_t v = 0; v < 8; ++v) {
      Prediction p = evaluate_direct(m, FeatureVector{v});
      CHECK(p.class_id == 0);
      CHECK(p.tie);
    }
  }

  TEST_CASE("forest voting 0,0,1 gives class 0 at 2/3") {
    EnsembleModel e;
    for (int c : {0, 0, 1}) {
      TreeBuilder b;
      e.trees.push_back(b.done(b.leaf(c)));
    }
    Model m = wrap(make_features({2}), 2, e);
    Prediction p = evaluate_direct(m, FeatureVector{1});
    CHECK(p.class_id == 0);
    CHECK(p.confidence == Real(2) / Real(3));
  }

  TEST_CASE("validate_model reports structural violations") {
    Rng rng(3);
    Model forest = random_bagging(rng, make_features({3, 3}), 4);
    CHECK(validate_model(forest).ok());

    TreeBuilder b;
    int l = b.leaf(0);
    int root = b.split(0, 1, l, 0);  // node 1 -> node 0 and itself via root
    TreeModel t = b.done(root);
    t.nodes[1].right = 1;
    Model cyclic = wrap(make_features({3}), 2, t);
    CHECK(validate_model(cyclic).has("TREE_NOT_ACYCLIC"));

    Model svm = random_svm(rng, make_features({3}), 3);
    std::get<SVMModel>(svm.body).hyperplanes.pop_back();
    CHECK(validate_model(svm).has("SVM_PAIR_COUNT"));
  }

  TEST_CASE("tree evaluation visits the leaf tree_leaf reports") {
    Rng rng(4);
    auto feats = make_features({3, 3});
    for (int i = 0; i < 20; ++i) {
      Model m = random_tree_model(rng, feats, {.max_depth = 5, .n_classes = 3});
      auto& t = std::get<TreeModel>(m.body);
      for (auto& x : full_domain(feats)) {
        int leaf = tree_leaf(t, x);
        REQUIRE(t.nodes[leaf].is_leaf);
        CHECK(evaluate_direct(m, x).class_id == t.nodes[leaf].class_id);
      }
    }
  }

  TEST_CASE("bagging vote counts sum to tree count and confidence is max fraction") {
    Rng rng(5);
    auto feats = make_features({3, 2});
    Model m = random_bagging(rng, feats, 7, {.max_depth = 4, .n_classes = 3});
    for (auto& x : full_domain(feats)) {
      Prediction p = evaluate_direct(m, x);
      Real total = 0;
      for (auto& s : p.scores) total += s;
      CHECK(total == 7);
      CHECK(p.confidence == p.scores[p.class_id] / Real(7));
    }
  }

  TEST_CASE("svm votes total k(k-1)/2") {
    Rng rng(6);
    auto feats = make_features({3, 3});
    for (int k : {2, 3, 4}) {
      Model m = random_svm(rng, feats, k);
      for (auto& x : full_domain(feats)) {
        Prediction p = evaluate_direct(m, x);
        Real total = 0;
        for (auto& s : p.scores) total += s;
        CHECK(total == k * (k - 1) / 2);
      }
    }
  }

  TEST_CASE("nb log-space argmax equals product-space argmax") {
    Rng rng(7);
    auto feats = make_features({2, 2, 2});
    for (int trial = 0; trial < 10; ++trial) {
      Model m = random_nb(rng, feats, 3);
      auto& b = std::get<NBModel>(m.body);
      for (auto& x : full_domain(feats)) {
        std::vector<double> prod;
        for (int y = 0; y < 3; ++y) {
          double p = to_double(b.priors[y]);
          for (std::size_t i = 0; i < x.size(); ++i) {
            double var = to_double(b.variances[y][i]);
            double d = static_cast<double>(x[i]) - to_double(b.means[y][i]);
            p *= std::exp(-d * d / (2 * var)) / std::sqrt(2 * M_PI * var);
          }
          prod.push_back(p);
        }
        Prediction pr = evaluate_direct(m, x);
        int best = argmax_lowest(prod);
        bool near_tie = false;
        for (int y = 0; y < 3; ++y)
          if (y != best && std::abs(prod[y] - prod[best]) <= 1e-12 * prod[best]) near_tie = true;
        if (!near_tie) CHECK(pr.class_id == best);
      }
    }
  }

  TEST_CASE("emit then parse is the identity") {
    Rng rng(8);
    auto feats = make_features({4, 3});
    std::vector<Model> models{random_tree_model(rng, feats),     random_bagging(rng, feats, 3),
                              random_boosting(rng, feats, 4, 2), random_boosting(rng, feats, 6, 3),
                              random_isolation(rng, feats, 3),   random_svm(rng, feats, 3),
                              random_nb(rng, feats, 2),          random_kmeans(rng, feats, 3)};
    std::get<NBModel>(models[6].body).variances[0][0] = Rational(1, 3);
    for (auto& m : models) {
      Model back = parse_model_file(emit_model_file(m));
      CHECK(back == m);
      CHECK(emit_model_file(back) == emit_model_file(m));
    }
  }

  TEST_CASE("feature vectors of the wrong shape are rejected") {
    Model m = stump_model();
    CHECK_THROWS_AS(evaluate_direct(m, FeatureVector{1, 2}), FeatureError);
    CHECK_THROWS_AS(evaluate_direct(m, FeatureVector{16}), FeatureError);
  }
}
