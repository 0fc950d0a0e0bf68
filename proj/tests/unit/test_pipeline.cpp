#include <doctest.h>

#include "../support/builders.hpp"
#include "inml/emulator.hpp"
#include "inml/error.hpp"
#include "inml/mapper.hpp"
#include "inml/pipeline.hpp"

#include <algorithm>
#include <map>
#include <set>

using namespace inml;
using namespace inml::testing;

namespace {

TableDef exact_table(const std::string& name, const std::string& key, int key_w, const std::string& out, int out_w) {
  TableDef t;
  t.name = name;
  t.role = TableRole::classify;
  t.kind = MatchKind::exact;
  t.keys = {{key, key_w, false}};
  t.actions = {{out, out_w, false}};
  t.default_action = {0};
  return t;
}

PipelineProgram bare_program(int width = 4) {
  PipelineProgram p;
  p.model_type = "tree";
  p.strategy = "per_feature";
  p.features = make_features({width});
  p.combine.kind = CombineKind::code_lookup;
  p.combine.n_classes = 2;
  p.combine.class_field = "class";
  return p;
}

// n tables, each keyed on the previous one's output; the last writes the class.
PipelineProgram chain(int n) {
  PipelineProgram p = bare_program();
  std::string prev = "f0";
  for (int i = 0; i < n; ++i) {
    std::string out = i + 1 == n ? "class" : "m" + std::to_string(i);
    char name[16];
    std::snprintf(name, sizeof name, "t%02d", i);
    p.tables.push_back(exact_table(name, prev, 4, out, 4));
    prev = out;
  }
  return p;
}

// Splits on every feature at least once.
TreeModel covering_tree(Rng& rng, int n_features) {
  TreeBuilder b;
  int node = b.leaf(static_cast<int>(rng.below(2)));
  for (int f = n_features - 1; f >= 0; --f)
    node = b.split(f, static_cast<std::int64_t>(rng.below(15)), node, b.leaf(static_cast<int>(rng.below(2))));
  return b.done(node);
}

void check_dependencies(const StagedProgram& s) {
  std::map<std::string, int> produced_at;
  for (std::size_t t = 0; t < s.program.tables.size(); ++t)
    for (auto& a : s.program.tables[t].actions) produced_at[a.name] = s.table_stage[t];
  for (std::size_t t = 0; t < s.program.tables.size(); ++t)
    for (auto& k : s.program.tables[t].keys) {
      auto it = produced_at.find(k.name);
      if (it != produced_at.end()) CHECK(it->second < s.table_stage[t]);
    }
}

bool pattern_hits(const TernaryPattern& p, std::uint64_t v) { return (v & p.mask) == (p.value & p.mask); }

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("stump uses two stages") {
    StagedProgram s = place_stages(compile_tree(stump_model()));
    CHECK(s.stages_used == 2);
    CHECK(s.dependency_layers == 2);
    check_dependencies(s);
  }

  TEST_CASE("five level-0 tables with four per stage span two stages") {
    KMeansModel km;
    km.centers = {{1, 2, 3, 4, 5}, {9, 9, 9, 9, 9}};
    Model m = wrap(make_features({4, 4, 4, 4, 4}), 2, km);
    PipelineProgram p = compile_kmeans(m);
    ResourceProfile prof;
    prof.max_tables_per_stage = 4;
    StagedProgram s = place_stages(p, prof);
    std::map<int, int> per_stage;
    for (std::size_t t = 0; t < p.tables.size(); ++t)
      if (s.table_level[t] == 0) ++per_stage[s.table_stage[t]];
    REQUIRE(per_stage.size() == 2);
    CHECK(per_stage[0] == 4);
    CHECK(per_stage[1] == 1);
    for (auto& [stage, n] : per_stage) CHECK(n <= 4);
  }

  TEST_CASE("thirteen dependent tables overflow twelve stages") {
    CHECK(place_stages(chain(12)).stages_used == 12);
    try {
      place_stages(chain(13));
      FAIL("expected a placement error");
    } catch (const PlacementError& e) {
      CHECK(e.reason() == PlacementFailure::stage_overflow);
    }
  }

  TEST_CASE("first violated budget is named") {
    ResourceProfile prof;
    prof.max_key_bits = 3;
    try {
      place_stages(compile_tree(stump_model()), prof);
      FAIL("expected a placement error");
    } catch (const PlacementError& e) {
      CHECK(e.reason() == PlacementFailure::key_too_wide);
    }
    prof = {};
    prof.metadata_bits_budget = 1;
    try {
      place_stages(compile_tree(figure3_model()), prof);
      FAIL("expected a placement error");
    } catch (const PlacementError& e) {
      CHECK(e.reason() == PlacementFailure::metadata_overflow);
    }
    prof = {};
    prof.tcam_entries_budget = 3;
    try {
      place_stages(compile_tree(stump_model()), prof);
      FAIL("expected a placement error");
    } catch (const PlacementError& e) {
      CHECK(e.reason() == PlacementFailure::memory_overflow);
    }
  }

  TEST_CASE("empty program reports all zeros and classifies as 0") {
    PipelineProgram p = bare_program();
    StagedProgram s = place_stages(p);
    ResourceReport r = resource_report(s);
    CHECK(r.tables.empty());
    CHECK(r.total_entries == 0);
    CHECK(r.sram_entries == 0);
    CHECK(r.sram_bits == 0);
    CHECK(r.tcam_entries == 0);
    CHECK(r.stages_used == 0);
    CHECK(r.sram_pct == 0);
    CHECK(r.tcam_pct == 0);
    CHECK(r.stages_pct == 0);
    Emulator emu(s);
    CHECK(emu.run(FeatureVector{9}).class_id == 0);
  }

  TEST_CASE("exact 8-bit table with 256 entries and a 4-bit action") {
    PipelineProgram p = bare_program(8);
    TableDef t = exact_table("classify", "f0", 8, "class", 4);
    for (std::int64_t v = 0; v < 256; ++v) t.entries.push_back({{{static_cast<std::uint64_t>(v), 0, 0}}, {v % 2}});
    p.tables.push_back(t);
    ResourceReport r = resource_report(place_stages(p));
    REQUIRE(r.tables.size() == 1);
    CHECK(r.tables[0].entries == 256);
    CHECK(r.tables[0].key_bits + r.tables[0].action_bits == 12);
    CHECK(r.total_entries == 256);
    CHECK(r.sram_entries == 256);
    CHECK(r.sram_bits == 256 * 16);
    CHECK(r.tcam_entries == 0);
  }

  TEST_CASE("forest feature-table count does not grow with tree count") {
    Rng rng(21);
    auto feats = make_features({4, 4, 4});
    EnsembleModel one, ten;
    for (int i = 0; i < 10; ++i) {
      TreeModel t = covering_tree(rng, 3);
      if (i == 0) one.trees.push_back(t);
      ten.trees.push_back(t);
    }
    ResourceReport a = resource_report(place_stages(compile_ensemble(wrap(feats, 2, one))));
    ResourceReport b = resource_report(place_stages(compile_ensemble(wrap(feats, 2, ten))));
    CHECK(a.feature_tables == 3);
    CHECK(b.feature_tables == 3);
    CHECK(a.tree_tables == 1);
    CHECK(b.tree_tables == 10);
  }

  TEST_CASE("report totals are sums of per-table rows and survive re-packing") {
    Rng rng(22);
    auto feats = make_features({4, 3, 3});
    Model m = random_bagging(rng, feats, 6, {.max_depth = 5});
    PipelineProgram p = compile_ensemble(m);
    ResourceProfile wide = unbounded_profile(), narrow = unbounded_profile();
    narrow.max_tables_per_stage = 1;
    narrow.adds_per_stage = 1;
    StagedProgram sw = place_stages(p, wide), sn = place_stages(p, narrow);
    check_dependencies(sw);
    check_dependencies(sn);
    CHECK(sn.stages_used >= sw.stages_used);
    ResourceReport rw = resource_report(sw, wide), rn = resource_report(sn, wide);
    for (auto* r : {&rw, &rn}) {
      std::uint64_t e = 0, s = 0, sb = 0, tc = 0;
      for (auto& t : r->tables) {
        e += t.entries;
        s += t.sram_entries;
        sb += t.sram_bits;
        tc += t.tcam_entries;
      }
      CHECK(r->total_entries == e);
      CHECK(r->sram_entries == s);
      CHECK(r->sram_bits == sb);
      CHECK(r->tcam_entries == tc);
    }
    CHECK(rw.total_entries == rn.total_entries);
    CHECK(rw.sram_bits == rn.sram_bits);
    CHECK(rw.tcam_entries == rn.tcam_entries);
    CHECK(rw.metadata_bits == rn.metadata_bits);
  }

  TEST_CASE("per-stage limits hold for placed programs") {
    Rng rng(23);
    auto feats = make_features({3, 3, 3, 3});
    ResourceProfile prof;
    prof.max_tables_per_stage = 3;
    prof.adds_per_stage = 2;
    prof.n_stages = 64;
    for (int trial = 0; trial < 10; ++trial) {
      Model m = random_boosting(rng, feats, 7, 2, {.max_depth = 4});
      StagedProgram s = place_stages(compile_ensemble(m), prof);
      check_dependencies(s);
      std::map<int, int> count;
      for (int st : s.table_stage) {
        ++count[st];
        CHECK(st < s.stages_used);
      }
      for (auto& [st, n] : count) CHECK(n <= 3);
      for (int st = 0; st < s.stages_used; ++st) CHECK(s.adds_in_stage(st) <= 2);
      CHECK(s.stages_used <= prof.n_stages);
    }
  }

  TEST_CASE("entry bounds for the figure-3 shape") {
    EntryBounds b = classification_entry_bounds(5, 2, {3, 2});
    CHECK(b.key_width == 4);
    CHECK(b.key_space() == 16);
    EntryBounds one = classification_entry_bounds(5, 1, {5});
    CHECK(one.key_width == 3);
    CHECK(classification_entry_bounds(1, 1, {1}).key_width == 1);
    CHECK_THROWS_AS(classification_entry_bounds(5, 2, {3, 3}), ArgumentError);
    CHECK_THROWS_AS(classification_entry_bounds(5, 0, {}), ArgumentError);
  }

  TEST_CASE("upper bound is the widest split, even split can fall below it") {
    EntryBounds b = classification_entry_bounds(6, 2, {3, 3});
    CHECK(b.upper_bits == 5);
    CHECK(b.even_split_bits == 4);
    auto ceil_log2p1 = [](int v) {
      int w = 0;
      while ((1 << w) < v + 1) ++w;
      return w;
    };
    for (int F = 1; F <= 4; ++F)
      for (int B = F; B <= 12; ++B) {
        // brute force over compositions of B into F positive parts
        int hi = 0, lo = 1 << 20;
        std::vector<int> part(F, 1);
        std::function<void(int, int)> rec = [&](int i, int left) {
          if (i == F - 1) {
            part[i] = left;
            int w = 0;
            for (int v : part) w += ceil_log2p1(v);
            hi = std::max(hi, w);
            lo = std::min(lo, w);
            return;
          }
          for (int v = 1; v <= left - (F - 1 - i); ++v) {
            part[i] = v;
            rec(i + 1, left - v);
          }
        };
        rec(0, B);
        std::vector<int> even(F, B / F);
        for (int i = 0; i < B % F; ++i) ++even[i];
        EntryBounds e = classification_entry_bounds(B, F, even);
        CHECK(e.upper_bits == hi);
        CHECK(e.lower_bits == lo);
        CHECK(e.lower_bits <= e.key_width);
        CHECK(e.key_width <= e.upper_bits);
      }
  }

  TEST_CASE("generated entries stay under the key space for random trees") {
    Rng rng(24);
    auto feats = make_features({4, 4, 4});
    int checked = 0;
    while (checked < 100) {
      Model m = random_tree_model(rng, feats, {.max_depth = 4, .split_prob = 0.7, .vacuous_prob = 0});
      auto& t = std::get<TreeModel>(m.body);
      if (t.internal_count() > 12 || t.internal_count() == 0) continue;
      for (bool ternary : {true, false}) {
        ResourceReport r = resource_report(place_stages(compile_tree(m, {.ternary = ternary})));
        REQUIRE(r.bounds.size() == 1);
        const EntryBounds& b = r.bounds[0];
        CHECK(b.generated >= 0);
        CHECK(static_cast<std::uint64_t>(b.generated) <= b.key_space());
        CHECK(b.key_width <= b.upper_bits);
      }
      ++checked;
    }
  }

  TEST_CASE("range to ternary examples") {
    auto full = expand_range_to_ternary(0, 15, 4);
    REQUIRE(full.size() == 1);
    CHECK(full[0].mask == 0);
    auto low = expand_range_to_ternary(0, 5, 4);
    CHECK(low == std::vector<TernaryPattern>{{0b0000, 0b1100}, {0b0100, 0b1110}});
    for (int w = 2; w <= 8; ++w) {
      std::uint64_t top = (std::uint64_t{1} << w) - 1;
      CHECK(expand_range_to_ternary(1, top - 1, w).size() == static_cast<std::size_t>(2 * w - 2));
    }
    CHECK_THROWS_AS(expand_range_to_ternary(5, 4, 4), RangeError);
    CHECK_THROWS_AS(expand_range_to_ternary(0, 16, 4), RangeError);
  }

  TEST_CASE("range to ternary is a disjoint exact cover for every range up to 10 bits") {
    for (int w = 1; w <= 10; ++w) {
      std::uint64_t n = std::uint64_t{1} << w;
      // narrower widths exhaustively, wider ones on a stride of lo
      std::uint64_t step = w <= 7 ? 1 : 37;
      for (std::uint64_t lo = 0; lo < n; lo += step)
        for (std::uint64_t hi = lo; hi < n; ++hi) {
          auto pats = expand_range_to_ternary(lo, hi, w);
          REQUIRE(pats.size() <= static_cast<std::size_t>(std::max(1, 2 * w - 2)));
          for (std::uint64_t v = 0; v < n; ++v) {
            int hits = 0;
            for (auto& p : pats) hits += pattern_hits(p, v);
            bool inside = v >= lo && v <= hi;
            if (hits != (inside ? 1 : 0)) {
              FAIL_CHECK("w=" << w << " [" << lo << "," << hi << "] v=" << v << " hits=" << hits);
              return;
            }
          }
        }
    }
  }

  TEST_CASE("profile json round trip and validation") {
    ResourceProfile p;
    p.name = "tiny";
    p.n_stages = 3;
    CHECK(parse_profile_json(emit_profile_json(p)) == p);
    p.adds_per_stage = 0;
    CHECK_THROWS_AS(validate_profile(p), ArgumentError);
    CHECK_THROWS_AS(parse_profile_json(R"({"schema":1,"n_stages":-1})"), Error);
  }
}
