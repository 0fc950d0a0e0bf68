#include <doctest.h>

#include "../support/builders.hpp"
#include "inml/emulator.hpp"
#include "inml/error.hpp"
#include "inml/mapper.hpp"
#include "inml/pipeline.hpp"

using namespace inml;
using namespace inml::testing;

TEST_SUITE("emulator") {
  TEST_CASE("stump classifies like the oracle on every value") {
    Model m = stump_model();
    StagedProgram s = place_stages(compile_tree(m));
    for (std::uint64_t v = 0; v < 16; ++v) {
      FeatureVector x{v};
      CHECK(run_vector(s, x).class_id == evaluate_direct(m, x).class_id);
    }
    CHECK(run_vector(s, FeatureVector{3}).class_id == 0);
  }

  TEST_CASE("single-leaf program answers through the default") {
    TreeBuilder b;
    Model m = wrap(make_features({3, 3}), 3, b.done(b.leaf(2)));
    StagedProgram s = place_stages(compile_tree(m));
    for (auto& x : full_domain(m.features)) CHECK(run_vector(s, x).class_id == 2);
  }

  TEST_CASE("tied scores resolve to the lowest class") {
    EnsembleModel e;
    for (int c : {1, 0}) {
      TreeBuilder b;
      e.trees.push_back(b.done(b.leaf(c)));
    }
    Model m = wrap(make_features({2}), 2, e);
    Prediction p = run_vector(place_stages(compile_ensemble(m)), FeatureVector{1});
    CHECK(p.class_id == 0);
    CHECK(p.tie);
  }

  TEST_CASE("run_batch basics") {
    StagedProgram s = place_stages(compile_tree(figure3_model()));
    CHECK(run_batch(s, {}).empty());
    std::vector<FeatureVector> same(50, FeatureVector{9, 4});
    auto out = run_batch(s, same, 4);
    REQUIRE(out.size() == 50);
    for (auto& p : out) {
      CHECK(p.class_id == out[0].class_id);
      CHECK(p.confidence == out[0].confidence);
    }
  }

  TEST_CASE("batch equals per-vector runs and keeps order") {
    Rng rng(31);
    auto feats = make_features({6, 6, 6});
    Model m = random_bagging(rng, feats, 5);
    StagedProgram s = place_stages(compile_ensemble(m));
    std::vector<FeatureVector> xs;
    for (int i = 0; i < 500; ++i) xs.push_back({rng.below(64), rng.below(64), rng.below(64)});
    auto par = run_batch(s, xs, 0);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      Prediction one = run_vector(s, xs[i]);
      CHECK(par[i].class_id == one.class_id);
      CHECK(par[i].confidence == one.confidence);
    }
  }

  TEST_CASE("10^4 random inputs through a compiled forest match the oracle") {
    Rng rng(32);
    auto feats = make_features({8, 8, 8, 8});
    Model m = random_bagging(rng, feats, 10, {.max_depth = 7});
    StagedProgram s = place_stages(compile_ensemble(m), unbounded_profile());
    EquivalenceOptions o;
    o.exhaustive = false;
    o.samples = 10000;
    o.seed = 5;
    EquivalenceReport r = check_equivalence(m, s, o);
    CHECK(r.inputs == 10000);
    CHECK(r.mismatch_count == 0);
    // vote fractions are floored to 8 fraction bits
    CHECK(r.max_confidence_deviation < 1.0 / 256);
  }

  TEST_CASE("tree and bagging models are exact over small domains") {
    Rng rng(33);
    for (int trial = 0; trial < 10; ++trial) {
      auto feats = make_features({4, 4, 4});
      Model t = random_tree_model(rng, feats, {.max_depth = 6, .n_classes = 3});
      Model f = random_bagging(rng, feats, 4, {.max_depth = 5, .n_classes = 3});
      for (Model* m : {&t, &f}) {
        EquivalenceReport r = check_equivalence(*m, place_stages(compile(*m), unbounded_profile()));
        CHECK(r.mode == "exhaustive");
        CHECK(r.inputs == 4096);
        CHECK(r.mismatch_count == 0);
      }
    }
  }

  TEST_CASE("nb 2x3 bits at q=16 mismatches only on quantized ties") {
    Rng rng(34);
    auto feats = make_features({3, 3});
    for (int trial = 0; trial < 20; ++trial) {
      Model m = random_nb(rng, feats, 3);
      for (Strategy st : {Strategy::per_feature, Strategy::per_class}) {
        CompileOptions o;
        o.strategy = st;
        EquivalenceReport r = check_equivalence(m, place_stages(compile_nb(m, o)));
        CHECK(r.inputs == 64);
        CHECK(r.mismatch_count == r.tie_mismatches);
        CHECK(r.bound_violations == 0);
      }
    }
  }

  TEST_CASE("per-feature score deviation stays within the rounding bound") {
    Rng rng(35);
    auto feats = make_features({4, 4});
    for (int trial = 0; trial < 10; ++trial) {
      Model svm = random_svm(rng, feats, 3);
      Model km = random_kmeans(rng, feats, 3, 3);
      for (Model* m : {&svm, &km}) {
        EquivalenceReport r = check_equivalence(*m, place_stages(compile(*m)));
        CHECK(r.bound_violations == 0);
        CHECK(r.max_score_deviation <= r.score_bound);
      }
    }
  }

  TEST_CASE("program compiled from another model is caught") {
    Model a = stump_model(5), b = stump_model(9);
    EquivalenceReport r = check_equivalence(a, place_stages(compile_tree(b)));
    CHECK(r.mismatch_count == 4);
    REQUIRE(r.mismatches.size() == 4);
    CHECK(r.mismatches[0].x == FeatureVector{6});
    CHECK(r.mismatches[0].oracle_class == 1);
    CHECK(r.mismatches[0].pipeline_class == 0);
  }

  TEST_CASE("exhaustive mode refuses domains above the guard") {
    Model m = wrap(make_features({16, 9}), 2, std::get<TreeModel>(stump_model().body));
    StagedProgram s = place_stages(compile_tree(m));
    CHECK_THROWS_AS(check_equivalence(m, s), DomainTooLargeError);
    EquivalenceOptions o;
    o.domain_guard = std::uint64_t{1} << 26;
    o.exhaustive = false;
    o.samples = 1000;
    CHECK(check_equivalence(m, s, o).mismatch_count == 0);
  }

  TEST_CASE("equivalence reports are deterministic") {
    Rng rng(36);
    auto feats = make_features({5, 5});
    Model m = random_nb(rng, feats, 2);
    StagedProgram s = place_stages(compile_nb(m));
    EquivalenceOptions o;
    o.exhaustive = false;
    o.samples = 300;
    o.seed = 77;
    CHECK(equivalence_json(check_equivalence(m, s, o)) == equivalence_json(check_equivalence(m, s, o)));
  }

  TEST_CASE("exact expansion of range tables behaves identically") {
    Rng rng(37);
    auto feats = make_features({5, 4});
    for (int trial = 0; trial < 10; ++trial) {
      Model m = random_bagging(rng, feats, 3, {.max_depth = 5});
      PipelineProgram p = compile_ensemble(m);
      PipelineProgram e = expand_ranges_exact(p);
      bool any_range = false;
      for (auto& t : e.tables)
        if (t.keys.size() == 1) CHECK(t.kind != MatchKind::range);
      for (auto& t : p.tables) any_range = any_range || t.kind == MatchKind::range;
      CHECK(any_range);
      Emulator a(p), b(e);
      for (auto& x : full_domain(feats)) {
        Prediction pa = a.run(x), pb = b.run(x);
        CHECK(pa.class_id == pb.class_id);
        CHECK(pa.confidence == pb.confidence);
      }
    }
  }

  TEST_CASE("load-time guards") {
    PipelineProgram p = compile_tree(stump_model());
    // classify reads a field nobody writes
    PipelineProgram bad = p;
    for (auto& t : bad.tables)
      if (t.role == TableRole::classify) t.keys[0].name = "ghost";
    CHECK_THROWS_AS(Emulator{bad}, Error);

    // overlapping ternary rows for different leaves
    PipelineProgram fig = compile_tree(figure3_model());
    for (auto& t : fig.tables)
      if (t.role == TableRole::classify && t.entries.size() >= 2) {
        for (auto& k : t.entries[1].key) k.mask = 0;
        if (t.entries[1].action == t.entries[0].action) t.entries[1].action[0] ^= 1;
      }
    CHECK_THROWS_AS(Emulator{fig}, ProgramError);

    CHECK_THROWS_AS(run_vector(place_stages(p), FeatureVector{1, 2}), FeatureError);
  }

  TEST_CASE("ternary classify rows never overlap for compiled trees") {
    Rng rng(38);
    auto feats = make_features({4, 4});
    for (int trial = 0; trial < 30; ++trial) {
      Model m = random_tree_model(rng, feats, {.max_depth = 6, .n_classes = 4});
      PipelineProgram p = compile_tree(m);
      std::uint64_t expect = 0;
      for (auto& t : p.tables)
        if (t.kind == MatchKind::ternary) {
          std::uint64_t n = t.entries.size();
          expect += n * (n > 0 ? n - 1 : 0) / 2 <= 4096 ? n * (n > 0 ? n - 1 : 0) / 2 : 4096;
        }
      Emulator emu(p);
      CHECK(emu.checked_pairs() == expect);
    }
  }
}
