#include <doctest.h>

#include "../support/builders.hpp"
#include "inml/emulator.hpp"
#include "inml/error.hpp"
#include "inml/mapper.hpp"
#include "inml/pipeline.hpp"
#include "inml/trainers.hpp"

#include <set>

using namespace inml;
using namespace inml::testing;

namespace {

int count_role(const PipelineProgram& p, TableRole r) {
  int n = 0;
  for (auto& t : p.tables) n += t.role == r;
  return n;
}

std::uint64_t exhaustive_mismatches(const Model& m, const PipelineProgram& p) {
  Emulator emu(p);
  std::uint64_t bad = 0;
  for (auto& x : full_domain(m.features))
    if (emu.run(x).class_id != evaluate_direct(m, x).class_id) ++bad;
  return bad;
}

bool ternary_match(const KeyMatch& k, std::uint64_t v) { return (v & k.mask) == (k.value & k.mask); }

}  // namespace

TEST_SUITE("mapper") {
  TEST_CASE("figure-3 intervals") {
    Model m = figure3_model();
    const auto& t = std::get<TreeModel>(m.body);
    IntervalSpec iv = extract_intervals(std::span(&t, 1), m.features);
    CHECK(iv.intervals(0) == 4);
    CHECK(iv.code_width(0) == 2);
    CHECK(iv.intervals(1) == 3);
    CHECK(iv.code_width(1) == 2);
  }

  TEST_CASE("leaf-only tree has empty intervals") {
    TreeBuilder b;
    TreeModel t = b.done(b.leaf(1));
    auto feats = make_features({4, 4});
    IntervalSpec iv = extract_intervals(std::span(&t, 1), feats);
    CHECK(iv.empty());
    CHECK(iv.code_width(0) == 0);
  }

  TEST_CASE("two trees union their thresholds") {
    auto feats = make_features({4});
    TreeBuilder a;
    int l = a.leaf(0), r = a.leaf(1);
    TreeModel t1 = a.done(a.split(0, 5, l, r));
    TreeBuilder b;
    int l1 = b.leaf(0), l2 = b.leaf(1), l3 = b.leaf(0);
    int inner = b.split(0, 9, l2, l3);
    TreeModel t2 = b.done(b.split(0, 5, l1, inner));
    std::vector<TreeModel> trees{t1, t2};
    IntervalSpec iv = extract_intervals(trees, feats);
    CHECK(iv.thresholds[0] == std::vector<std::int64_t>{5, 9});
    CHECK(iv.intervals(0) == 3);
  }

  TEST_CASE("interval codes partition the domain") {
    Rng rng(21);
    auto feats = make_features({5, 3});
    for (int trial = 0; trial < 20; ++trial) {
      TreeModel t = random_tree(rng, feats, {.max_depth = 6});
      IntervalSpec iv = extract_intervals(std::span(&t, 1), feats);
      for (std::size_t f = 0; f < feats.size(); ++f) {
        std::uint64_t prev = 0;
        for (std::uint64_t v = 0; v < feats[f].domain_size(); ++v) {
          std::uint64_t c = iv.code(f, v);
          CHECK(c >= prev);
          CHECK(c <= prev + 1);
          CHECK(c < static_cast<std::uint64_t>(iv.intervals(f)));
          CHECK(c < (std::uint64_t{1} << iv.code_width(f)));
          prev = c;
        }
        CHECK(prev == static_cast<std::uint64_t>(iv.intervals(f) - 1));
      }
    }
  }

  TEST_CASE("figure-3 tree compiles to two feature tables and a 4-bit classify key") {
    PipelineProgram p = compile_tree(figure3_model());
    REQUIRE(count_role(p, TableRole::feature) == 2);
    CHECK(p.find_table("feat_f0")->entries.size() == 4);
    CHECK(p.find_table("feat_f1")->entries.size() == 3);
    CHECK(p.find_table("classify")->key_bits() == 4);
    CHECK(p.combine.kind == CombineKind::code_lookup);
    CHECK(exhaustive_mismatches(figure3_model(), p) == 0);
  }

  TEST_CASE("single-leaf tree compiles to a default-only classify table") {
    TreeBuilder b;
    Model m = wrap(make_features({4}), 2, b.done(b.leaf(0)));
    PipelineProgram p = compile_tree(m);
    CHECK(count_role(p, TableRole::feature) == 0);
    const TableDef* cls = p.find_table("classify");
    REQUIRE(cls);
    CHECK(cls->entries.empty());
    CHECK(cls->default_action[0] == 0);
    CHECK(exhaustive_mismatches(m, p) == 0);
  }

  TEST_CASE("stump tables and exhaustive equivalence") {
    Model m = stump_model();
    for (bool ternary : {true, false}) {
      CompileOptions o;
      o.ternary = ternary;
      PipelineProgram p = compile_tree(m, o);
      const TableDef* ft = p.find_table("feat_f0");
      REQUIRE(ft);
      REQUIRE(ft->entries.size() == 2);
      CHECK(ft->entries[0].key[0].value == 0);
      CHECK(ft->entries[0].key[0].hi == 5);
      CHECK(ft->entries[0].action[0] == 0);
      CHECK(ft->entries[1].key[0].value == 6);
      CHECK(ft->entries[1].key[0].hi == 15);
      CHECK(ft->entries[1].action[0] == 1);
      // classify: code 0 -> class 0, code 1 -> class 1 (default)
      Emulator emu(p);
      CHECK(emu.run(FeatureVector{3}).class_id == 0);
      CHECK(emu.run(FeatureVector{9}).class_id == 1);
      CHECK(exhaustive_mismatches(m, p) == 0);
    }
  }

  TEST_CASE("vacuous thresholds are dropped") {
    TreeBuilder b;
    int l = b.leaf(1), r = b.leaf(0);
    Model m = wrap(make_features({4}), 2, b.done(b.split(0, 15, l, r)));
    PipelineProgram p = compile_tree(m);
    CHECK(count_role(p, TableRole::feature) == 0);
    CHECK(exhaustive_mismatches(m, p) == 0);
  }

  TEST_CASE("classify patterns of different leaves never overlap and cover the code space") {
    Rng rng(22);
    auto feats = make_features({4, 3, 3});
    for (int trial = 0; trial < 30; ++trial) {
      Model m = random_tree_model(rng, feats, {.max_depth = 6, .n_classes = 3});
      PipelineProgram p = compile_tree(m, [] {
        CompileOptions o;
        o.emit_confidence = false;
        return o;
      }());
      const TableDef* cls = p.find_table("classify");
      const auto& e = cls->entries;
      for (std::size_t i = 0; i < e.size(); ++i)
        for (std::size_t j = i + 1; j < e.size(); ++j) {
          bool overlap = true;
          for (std::size_t d = 0; d < e[i].key.size(); ++d) {
            std::uint64_t common = e[i].key[d].mask & e[j].key[d].mask;
            if ((e[i].key[d].value & common) != (e[j].key[d].value & common)) overlap = false;
          }
          CHECK_FALSE(overlap);
        }
      // Every code tuple hits at most one entry; the rest fall to the default.
      std::uint64_t space = 1;
      for (auto& k : cls->keys) space <<= k.width;
      for (std::uint64_t code = 0; code < space; ++code) {
        int hits = 0;
        for (auto& en : e) {
          bool all = true;
          int shift = 0;
          for (std::size_t d = cls->keys.size(); d-- > 0;) {
            std::uint64_t v = (code >> shift) & ((std::uint64_t{1} << cls->keys[d].width) - 1);
            shift += cls->keys[d].width;
            all = all && ternary_match(en.key[d], v);
          }
          hits += all;
        }
        CHECK(hits <= 1);
      }
    }
  }

  TEST_CASE("ten trees on five features share five feature tables") {
    Rng rng(23);
    auto feats = make_features({3, 3, 3, 3, 3});
    EnsembleModel e;
    e.mode = EnsembleMode::bagging;
    for (int t = 0; t < 10; ++t) {
      // every tree touches every feature
      TreeBuilder b;
      int node = b.leaf(static_cast<int>(rng.below(2)));
      for (int f = 4; f >= 0; --f) node = b.split(f, static_cast<std::int64_t>(rng.below(7)), b.leaf(static_cast<int>(rng.below(2))), node);
      e.trees.push_back(b.done(node));
    }
    Model m = wrap(feats, 2, e);
    PipelineProgram p = compile_ensemble(m);
    CHECK(count_role(p, TableRole::feature) == 5);
    CHECK(count_role(p, TableRole::tree) == 10);
    CHECK(p.tables.size() == 15);
    CHECK(p.combine.kind == CombineKind::vote_majority);
  }

  TEST_CASE("one-tree bagging classifies like the tree") {
    Rng rng(24);
    auto feats = make_features({4, 4});
    for (int trial = 0; trial < 10; ++trial) {
      TreeModel t = random_tree(rng, feats, {.max_depth = 5, .n_classes = 3});
      Model tree = wrap(feats, 3, t);
      EnsembleModel e;
      e.trees = {t};
      Model bag = wrap(feats, 3, e);
      Emulator a(compile_tree(tree)), b(compile_ensemble(bag));
      for (auto& x : full_domain(feats)) CHECK(a.run(x).class_id == b.run(x).class_id);
    }
  }

  TEST_CASE("boosting margin sign matches the oracle over a 6-bit x 2 sweep") {
    Rng rng(25);
    auto feats = make_features({6, 6});
    for (int trial = 0; trial < 5; ++trial) {
      Model m = random_boosting(rng, feats, 2, 2, {.max_depth = 4});
      PipelineProgram p = compile_ensemble(m);
      CHECK(p.combine.binary_margin);
      Emulator emu(p);
      for (auto& x : full_domain(feats)) {
        Prediction want = evaluate_direct(m, x);
        Prediction got = emu.run(x);
        CHECK(got.class_id == want.class_id);
      }
    }
  }

  TEST_CASE("multiclass boosting and isolation are exact on dyadic payloads") {
    Rng rng(26);
    auto feats = make_features({4, 4});
    Model boost = random_boosting(rng, feats, 6, 3, {.max_depth = 4});
    Model iso = random_isolation(rng, feats, 5, {.max_depth = 4});
    CHECK(exhaustive_mismatches(boost, compile_ensemble(boost)) == 0);
    CHECK(exhaustive_mismatches(iso, compile_ensemble(iso)) == 0);
  }

  TEST_CASE("code width limit raises CodeWidthError") {
    Rng rng(27);
    auto feats = make_features({6});
    Model m = random_tree_model(rng, feats, {.max_depth = 6, .split_prob = 1.0, .vacuous_prob = 0});
    CompileOptions o;
    o.code_bits = 1;
    CHECK_THROWS_AS(compile_tree(m, o), CodeWidthError);
  }

  TEST_CASE("svm single hyperplane per_feature is exact over 16 values") {
    SVMModel s;
    s.hyperplanes = {{{Rational(1)}, Rational(-8), 0, 1}};
    Model m = wrap(make_features({4}), 2, s);
    PipelineProgram p = compile_svm(m);
    CHECK(count_role(p, TableRole::feature) == 1);
    CHECK(exhaustive_mismatches(m, p) == 0);
  }

  TEST_CASE("svm per_hyperplane votes total m") {
    Rng rng(28);
    auto feats = make_features({3, 3});
    Model m = random_svm(rng, feats, 4);
    CompileOptions o;
    o.strategy = Strategy::per_hyperplane;
    PipelineProgram p = compile_svm(m, o);
    CHECK(count_role(p, TableRole::hyperplane) == 6);
    Emulator emu(p);
    for (auto& x : full_domain(feats)) {
      Prediction got = emu.run(x);
      Real total = 0;
      for (auto& s : got.scores) total += s;
      CHECK(total == 6);
      CHECK(got.class_id == evaluate_direct(m, x).class_id);
    }
  }

  TEST_CASE("degenerate hyperplane votes for the lower class everywhere") {
    SVMModel s;
    s.hyperplanes = {{{Rational(0), Rational(0)}, Rational(0), 1, 0}};
    Model m = wrap(make_features({3, 3}), 2, s);
    for (Strategy st : {Strategy::per_feature, Strategy::per_hyperplane}) {
      CompileOptions o;
      o.strategy = st;
      Emulator emu(compile_svm(m, o));
      for (auto& x : full_domain(m.features)) CHECK(emu.run(x).class_id == 0);
    }
  }

  TEST_CASE("nb symmetric model always picks class 0") {
    NBModel b;
    b.priors = {Rational(1, 2), Rational(1, 2)};
    b.means = {{3, 4}, {3, 4}};
    b.variances = {{2, 5}, {2, 5}};
    Model m = wrap(make_features({3, 3}), 2, b);
    for (Strategy st : {Strategy::per_feature, Strategy::per_class}) {
      CompileOptions o;
      o.strategy = st;
      Emulator emu(compile_nb(m, o));
      for (auto& x : full_domain(m.features)) CHECK(emu.run(x).class_id == 0);
    }
  }

  TEST_CASE("nb 2x3-bit matches the oracle except at quantized ties") {
    Rng rng(29);
    auto feats = make_features({3, 3});
    for (int trial = 0; trial < 5; ++trial) {
      Model m = random_nb(rng, feats, 2);
      StagedProgram s = place_stages(compile_nb(m), unbounded_profile());
      EquivalenceReport r = check_equivalence(m, s);
      CHECK(r.inputs == 64);
      CHECK(r.mismatch_count == r.tie_mismatches);
    }
  }

  TEST_CASE("nb per_class carries k score fields, per_feature k*F") {
    Rng rng(30);
    auto feats = make_features({3, 3});
    Model m = random_nb(rng, feats, 3);
    CompileOptions pc;
    pc.strategy = Strategy::per_class;
    PipelineProgram a = compile_nb(m, pc);
    PipelineProgram b = compile_nb(m);
    int a_scores = 0, b_scores = 0;
    for (auto& f : a.metadata_fields()) a_scores += f.name[0] == 's';
    for (auto& f : b.metadata_fields()) b_scores += f.name.rfind("ll", 0) == 0;
    CHECK(a_scores == 3);
    CHECK(b_scores == 6);
  }

  TEST_CASE("kmeans centres (0,0),(7,7) exact on 64 inputs") {
    KMeansModel km;
    km.centers = {{0, 0}, {7, 7}};
    Model m = wrap(make_features({3, 3}), 2, km);
    for (Strategy st : {Strategy::per_feature, Strategy::per_class}) {
      CompileOptions o;
      o.strategy = st;
      CHECK(exhaustive_mismatches(m, compile_kmeans(m, o)) == 0);
    }
    Emulator emu(compile_kmeans(m));
    CHECK(emu.run(FeatureVector{7, 7}).class_id == 1);
    CHECK(emu.run(FeatureVector{7, 7}).raw[1] == 0);
  }

  TEST_CASE("kmeans per_class on 2 x 4 bits keys on 8 bits with 256 entries") {
    KMeansModel km;
    km.centers = {{1, 2}, {9, 12}, {15, 0}};
    Model m = wrap(make_features({4, 4}), 3, km);
    CompileOptions o;
    o.strategy = Strategy::per_class;
    PipelineProgram p = compile_kmeans(m, o);
    REQUIRE(count_role(p, TableRole::class_score) == 3);
    for (auto& t : p.tables) {
      CHECK(t.key_bits() == 8);
      CHECK(t.entries.size() == 256);
    }
  }

  TEST_CASE("per-value tables above the budget need binning") {
    KMeansModel km;
    km.centers = {{1}, {200}};
    Model m = wrap(make_features({12}), 2, km);
    CompileOptions o;
    o.max_table_entries = 1024;
    o.quant.frac_bits = 4;
    CHECK_THROWS_AS(compile_kmeans(m, o), BinningRequiredError);
    o.quant.bins = 16;
    PipelineProgram p = compile_kmeans(m, o);
    CHECK(p.tables[0].entries.size() == 16);
    CHECK(p.tables[0].kind == MatchKind::range);
  }

  TEST_CASE("bin_feature edges") {
    CHECK(bin_feature(4, 4) == std::vector<std::uint64_t>{3, 7, 11});
    auto ident = bin_feature(3, 8);
    CHECK(ident == std::vector<std::uint64_t>{0, 1, 2, 3, 4, 5, 6});
    std::vector<std::uint64_t> sample(90, 0);
    sample.insert(sample.end(), 10, 15);
    auto q = bin_feature(4, 2, sample);
    REQUIRE(q.size() == 1);
    CHECK(q[0] == 0);
    CHECK_THROWS_AS(bin_feature(3, 0), BinCountError);
    CHECK_THROWS_AS(bin_feature(3, 9), BinCountError);
  }

  TEST_CASE("quantize") {
    CHECK(quantize(Rational(0), 16, 32) == 0);
    CHECK(quantize(Rational(3, 2), 4, 16) == 24);
    CHECK(quantize(Rational(5, 32), 4, 16) == 2);   // 2.5 -> 2
    CHECK(quantize(Rational(7, 32), 4, 16) == 4);   // 3.5 -> 4
    CHECK(quantize(Rational(-5, 32), 4, 16) == -2);
    CHECK_THROWS_AS(quantize(Rational(1 << 20), 16, 16), OverflowError);
  }

  TEST_CASE("options are validated and round-trip") {
    CompileOptions o;
    o.quant.frac_bits = 16;
    o.quant.action_width = 17;
    CHECK_THROWS_AS(validate_options(o), ArgumentError);
    o.quant.action_width = 24;
    o.quant.bins = 8;
    o.strategy = Strategy::per_class;
    o.ternary = false;
    o.code_bits = 3;
    CompileOptions back = options_from_json(options_to_json(o));
    CHECK(options_to_json(back) == options_to_json(o));
  }

  TEST_CASE("entry diffs") {
    auto feats = make_features({4});
    CompileOptions o;
    o.code_bits = 2;
    PipelineProgram a = compile_tree(stump_model(5), o);
    PipelineProgram b = compile_tree(stump_model(9), o);
    CHECK(diff_entries(a, a).empty());
    CHECK(a.shape_hash() == b.shape_hash());
    EntryDiff d = diff_entries(a, b);
    CHECK_FALSE(d.empty());
    for (auto& t : d.tables) CHECK(t.table == "feat_f0");
    CHECK(apply_diff(a, d) == b);
    CHECK(emit_entries_json(apply_diff(a, d)) == emit_entries_json(b));

    EnsembleModel e;
    e.trees = {std::get<TreeModel>(stump_model(5).body)};
    PipelineProgram f = compile_ensemble(wrap(feats, 2, e), o);
    CHECK(f.shape_hash() != a.shape_hash());
    CHECK_THROWS_AS(diff_entries(a, f), ShapeMismatchError);
  }

  TEST_CASE("compile rejects invalid models") {
    Rng rng(31);
    Model m = random_nb(rng, make_features({3}), 2);
    std::get<NBModel>(m.body).variances[0][0] = -1;
    CHECK_THROWS_AS(compile(m), DomainError);
  }
}
