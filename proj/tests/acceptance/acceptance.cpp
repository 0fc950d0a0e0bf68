// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include "../support/builders.hpp"
#include "inml/emulator.hpp"
#include "inml/error.hpp"
#include "inml/features.hpp"
#include "inml/hybrid.hpp"
#include "inml/mapper.hpp"
#include "inml/pipeline.hpp"
#include "inml/program.hpp"
#include "inml/trainers.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

using namespace inml;
using namespace inml::testing;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool cond, const std::string& what) {
    if (!cond && pass) detail << "first failure: " << what << "; ";
    pass = pass && cond;
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int tree_depth(const TreeModel& t, int node) {
  const TreeNode& n = t.nodes[node];
  if (n.is_leaf) return 0;
  return 1 + std::max(tree_depth(t, n.left), tree_depth(t, n.right));
}

// ---------------------------------------------------------------------------

Outcome tree_and_bagging_exactness() {
  Outcome o;
  auto t0 = Clock::now();
  Rng rng(1001);
  const std::vector<std::vector<int>> shapes{{4, 4, 4}, {6, 6}, {3, 4, 5}, {12}, {2, 3, 3, 4}};
  std::uint64_t inputs = 0, mismatches = 0;
  int trees = 0, ensembles = 0;
  for (int i = 0; i < 100; ++i) {
    auto feats = make_features(shapes[i % shapes.size()]);
    int depth = 1 + static_cast<int>(rng.below(8));
    int classes = 2 + static_cast<int>(rng.below(3));
    Model m = random_tree_model(rng, feats, {.max_depth = depth, .n_classes = classes});
    o.require(tree_depth(std::get<TreeModel>(m.body), std::get<TreeModel>(m.body).root) <= 8, "tree depth > 8");
    EquivalenceReport r = check_equivalence(m, place_stages(compile(m), unbounded_profile()));
    o.require(r.mode == "exhaustive" && r.inputs == 4096, "tree domain not exhaustive over 12 bits");
    inputs += r.inputs;
    mismatches += r.mismatch_count;
    ++trees;
  }
  for (int i = 0; i < 20; ++i) {
    auto feats = make_features(shapes[i % shapes.size()]);
    int n_trees = 1 + i % 10;
    int depth = 1 + static_cast<int>(rng.below(8));
    Model m = random_bagging(rng, feats, n_trees, {.max_depth = depth, .n_classes = 2 + i % 3});
    EquivalenceReport r = check_equivalence(m, place_stages(compile(m), unbounded_profile()));
    o.require(r.mode == "exhaustive" && r.inputs == 4096, "bagging domain not exhaustive over 12 bits");
    inputs += r.inputs;
    mismatches += r.mismatch_count;
    ++ensembles;
  }
  double s = seconds_since(t0);
  o.require(mismatches == 0, "mismatches found");
  o.require(s < 120, "runtime over 2 min");
  o.detail << trees << " trees + " << ensembles << " ensembles, " << inputs << " inputs, " << mismatches
           << " mismatches, " << s << " s";
  return o;
}

Dataset noisy_dataset(Rng& rng, int n_features, int width, std::size_t n, int n_classes) {
  Dataset d;
  std::vector<int> widths(n_features, width);
  d.features = make_features(widths);
  d.n_classes = n_classes;
  for (std::size_t i = 0; i < n; ++i) {
    FeatureVector x;
    for (int f = 0; f < n_features; ++f) x.push_back(rng.below(std::uint64_t{1} << width));
    d.x.push_back(x);
    d.y.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(n_classes))));
  }
  for (int c = 0; c < n_classes; ++c) d.y[c] = c;
  return d;
}

Outcome depth_independence() {
  Outcome o;
  Rng rng(1002);
  Dataset data = noisy_dataset(rng, 5, 8, 4000, 2);
  for (int depth = 2; depth <= 10; ++depth) {
    TrainParams p;
    p.max_depth = depth;
    Model m = make_model(data, train_decision_tree(data, p));
    const auto& t = std::get<TreeModel>(m.body);
    int got_depth = tree_depth(t, t.root);
    StagedProgram s = place_stages(compile(m));
    o.detail << "d" << depth << ":" << s.dependency_layers << "L/" << s.stages_used << "S ";
    o.require(got_depth == depth, "tree did not reach depth " + std::to_string(depth));
    o.require(s.dependency_layers == 2, "depth " + std::to_string(depth) + " uses " +
                                            std::to_string(s.dependency_layers) + " layers");
    o.require(s.combine_steps.empty(), "single tree has combine steps");
  }
  return o;
}

Outcome feature_sharing() {
  Outcome o;
  Rng rng(1003);
  Dataset data = noisy_dataset(rng, 5, 8, 3000, 2);
  TrainParams p;
  p.n_trees = 10;
  p.max_depth = 6;
  p.rng_seed = 3;
  Model m = make_model(data, train_random_forest(data, p));
  o.require(std::get<EnsembleModel>(m.body).trees.size() == 10, "forest does not have 10 trees");
  ResourceReport r = resource_report(place_stages(compile(m)));
  o.detail << "feature tables " << r.feature_tables << ", tree tables " << r.tree_tables << ", stages "
           << r.stages_used;
  o.require(r.feature_tables == 5, "feature tables != 5");
  o.require(r.tree_tables == 10, "tree tables != 10");
  return o;
}

// Gaussian blobs downscaled to two 6-bit features, three classes.
Dataset blobs6(Rng& rng, std::size_t n) {
  Dataset d;
  d.features = make_features({6, 6});
  d.n_classes = 3;
  std::normal_distribution<double> g(0.0, 6.0);
  std::mt19937_64 eng(rng.next());
  const double cx[3] = {16, 44, 30}, cy[3] = {16, 20, 48};
  for (std::size_t i = 0; i < n; ++i) {
    int y = static_cast<int>(i % 3);
    FeatureVector x;
    for (double c : {cx[y], cy[y]}) {
      double v = std::clamp(c + g(eng), 0.0, 63.0);
      x.push_back(static_cast<std::uint64_t>(v));
    }
    d.x.push_back(x);
    d.y.push_back(y);
  }
  return d;
}

Outcome quantization_error() {
  Outcome o;
  auto t0 = Clock::now();
  Rng rng(1004);
  auto feats = make_features({6, 6});
  const int q = 16, F = 2;
  struct Case {
    std::string family;
    Model model;
  };
  std::vector<Case> cases;
  for (int i = 0; i < 10; ++i) {
    cases.push_back({"svm", random_svm(rng, feats, 2 + i % 3)});
    cases.push_back({"nb", random_nb(rng, feats, 2 + i % 3)});
    cases.push_back({"kmeans", random_kmeans(rng, feats, 2 + i % 3, 3)});
  }
  Dataset data = blobs6(rng, 3000);
  cases.push_back({"nb", make_model(data, train_gaussian_nb(data))});
  cases.push_back({"kmeans", make_model(data, train_kmeans(data, 3, 7))});
  Model km5 = make_model(data, train_kmeans(data, 5, 8));
  km5.n_classes = 5;
  cases.push_back({"kmeans", km5});

  double worst_rel_ratio = 0;
  std::uint64_t svm_mm = 0, km_mm = 0, nb_mm = 0, nb_tie_mm = 0, inputs = 0;
  for (auto& c : cases) {
    CompileOptions opt;
    opt.quant.frac_bits = q;
    opt.strategy = Strategy::per_feature;
    StagedProgram s = place_stages(compile(c.model, opt));
    const Real scale = boost::multiprecision::ldexp(Real(1), q);
    Emulator emu(s);
    for (auto& x : full_domain(feats)) {
      Prediction want = evaluate_direct(c.model, x);
      Prediction got = emu.run(x);
      ++inputs;
      // relative error against F * 2^-q / |oracle|, wherever |oracle| >= 2^-q * F
      for (std::size_t j = 0; j < want.raw.size() && j < got.raw.size(); ++j) {
        Real oracle = abs(want.raw[j]);
        if (oracle * scale < F) continue;
        Real rel = abs(got.raw[j] / scale - want.raw[j]) / oracle;
        Real bound = Real(F) / scale / oracle;
        worst_rel_ratio = std::max(worst_rel_ratio, static_cast<double>(rel / bound));
        o.require(rel <= bound, c.family + " relative error above F*2^-q/|score|");
      }
      o.require(got.raw.size() == want.raw.size(), c.family + " pipeline exposes no raw scores");
      if (want.class_id != got.class_id) {
        if (c.family == "svm") ++svm_mm;
        if (c.family == "kmeans") ++km_mm;
        if (c.family == "nb") {
          ++nb_mm;
          if (want.tie || got.tie) ++nb_tie_mm;
        }
      }
    }
    o.require(s.program.saturated_entries == 0, c.family + " saturated entries");
  }
  double secs = seconds_since(t0);
  o.require(svm_mm == 0, "svm misclassifications");
  o.require(km_mm == 0, "kmeans misclassifications");
  o.require(nb_mm == nb_tie_mm, "nb mismatch outside a quantized tie");
  o.require(secs < 60, "runtime over 1 min");
  o.detail << cases.size() << " models, " << inputs << " inputs, worst error/bound " << worst_rel_ratio
           << ", mismatches svm " << svm_mm << " kmeans " << km_mm << " nb " << nb_mm << " (ties " << nb_tie_mm
           << "), " << secs << " s";
  return o;
}

int code_width(int thresholds) {
  int w = 0;
  while ((1 << w) < thresholds + 1) ++w;
  return w;
}

// Min and max of sum ceil(log2(b_i + 1)) over compositions of B into F
// positive parts.
std::pair<int, int> composition_extremes(int B, int F) {
  int lo = 1 << 30, hi = 0;
  std::vector<int> part(F, 1);
  std::function<void(int, int)> rec = [&](int i, int left) {
    if (i == F - 1) {
      part[i] = left;
      int w = 0;
      for (int v : part) w += code_width(v);
      lo = std::min(lo, w);
      hi = std::max(hi, w);
      return;
    }
    for (int v = 1; v <= left - (F - 1 - i); ++v) {
      part[i] = v;
      rec(i + 1, left - v);
    }
  };
  rec(0, B);
  return {lo, hi};
}

Outcome entry_bounds_consistency() {
  Outcome o;
  Rng rng(1005);
  auto feats = make_features({5, 5, 5, 5});
  int checked = 0;
  std::int64_t max_generated = 0;
  while (checked < 100) {
    Model m = random_tree_model(rng, feats, {.max_depth = 5, .split_prob = 0.75, .vacuous_prob = 0});
    if (std::get<TreeModel>(m.body).internal_count() == 0) continue;
    ResourceReport r = resource_report(place_stages(compile(m), unbounded_profile()));
    if (r.bounds.size() != 1) {
      o.require(false, "tree report carries no bounds");
      break;
    }
    const EntryBounds& b = r.bounds[0];
    int sum_codes = 0;
    for (int v : b.per_feature) sum_codes += code_width(v);
    auto [lo, hi] = composition_extremes(b.branches, b.features);
    int even = 0;
    for (int i = 0; i < b.features; ++i) even += code_width(b.branches / b.features + (i < b.branches % b.features));
    int single = (b.features - 1) + code_width(b.branches - (b.features - 1));
    o.require(b.generated >= 0 && static_cast<std::uint64_t>(b.generated) <= (std::uint64_t{1} << sum_codes),
              "generated entries above 2^(sum of code widths)");
    o.require(b.key_width == sum_codes, "key width differs from summed code widths");
    o.require(b.lower_bits == lo && b.upper_bits == hi, "bounds differ from brute-force extremes");
    o.require(b.lower_bits <= even && even <= b.upper_bits, "even split outside bounds");
    o.require(b.lower_bits <= single && single <= b.upper_bits, "single-feature extreme outside bounds");
    o.require(b.lower_bits <= b.key_width && b.key_width <= b.upper_bits, "tree key width outside bounds");
    max_generated = std::max(max_generated, b.generated);
    ++checked;
  }
  o.detail << checked << " trees, largest table " << max_generated << " entries";
  return o;
}

Outcome ternary_expansion() {
  Outcome o;
  std::uint64_t ranges = 0, patterns = 0;
  for (int w = 1; w <= 10 && o.pass; ++w) {
    const std::uint64_t n = std::uint64_t{1} << w, full = n - 1;
    const std::size_t cap = static_cast<std::size_t>(std::max(1, 2 * w - 2));
    for (std::uint64_t lo = 0; lo < n && o.pass; ++lo)
      for (std::uint64_t hi = lo; hi < n; ++hi) {
        auto pats = expand_range_to_ternary(lo, hi, w);
        ++ranges;
        patterns += pats.size();
        if (pats.size() > cap) {
          o.require(false, "w=" + std::to_string(w) + " range uses " + std::to_string(pats.size()) + " patterns");
          break;
        }
        // a prefix pattern matches exactly one aligned block; blocks must tile [lo, hi]
        std::vector<std::pair<std::uint64_t, std::uint64_t>> blocks;
        bool prefix = true;
        for (auto& p : pats) {
          std::uint64_t m = p.mask & full;
          std::uint64_t dont = full & ~m;
          prefix = prefix && ((dont + 1) & dont) == 0 && (p.value & dont) == 0 && p.value <= full;
          blocks.emplace_back(p.value & m, (p.value & m) | dont);
        }
        if (!prefix) {
          o.require(false, "non-prefix pattern at w=" + std::to_string(w));
          break;
        }
        std::sort(blocks.begin(), blocks.end());
        std::uint64_t next = lo;
        bool tiles = !blocks.empty();
        for (auto& [a, b] : blocks) {
          tiles = tiles && a == next;
          next = b + 1;
        }
        tiles = tiles && next == hi + 1;
        if (!tiles) {
          o.require(false, "patterns for [" + std::to_string(lo) + "," + std::to_string(hi) + "] at w=" +
                               std::to_string(w) + " are not a disjoint cover");
          break;
        }
      }
  }
  o.detail << ranges << " ranges at widths 1..10, " << patterns << " patterns";
  return o;
}

Outcome entries_only_update() {
  Outcome o;
  Rng rng(1007);
  Dataset data = two_blobs(rng, 3000, 30);
  TrainParams p;
  p.n_trees = 6;
  p.max_depth = 4;
  p.rng_seed = 11;
  CompileOptions opt;
  opt.code_bits = 4;
  Model a = make_model(data, train_random_forest(data, p));
  Dataset resampled = data;
  resampled.x.clear();
  resampled.y.clear();
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::size_t j = rng.below(data.size());
    resampled.x.push_back(data.x[j]);
    resampled.y.push_back(data.y[j]);
  }
  p.rng_seed = 12;
  Model b = make_model(resampled, train_random_forest(resampled, p));
  PipelineProgram pa = compile(a, opt), pb = compile(b, opt);
  o.require(pa.shape_hash() == pb.shape_hash(), "shape hash changed");
  EntryDiff d = diff_entries(pa, pb);
  o.require(!d.empty() && d.change_count() > 0, "diff is empty");
  PipelineProgram applied = apply_diff(pa, parse_diff_json(emit_diff_json(d)));
  o.require(emit_entries_json(applied) == emit_entries_json(pb), "applied entries differ from the recompile");
  o.require(emit_program_json(applied) == emit_program_json(pb), "applied program differs from the recompile");
  o.detail << "shape " << pa.shape_hash() << ", " << d.change_count() << " entry changes over " << d.tables.size()
           << " tables";
  return o;
}

Outcome hybrid_monotonicity() {
  Outcome o;
  Rng rng(1008);
  Dataset train = two_blobs(rng, 10000, 30);
  Dataset test = two_blobs(rng, 10000, 30);
  TrainParams ps;
  ps.n_trees = 5;
  ps.max_depth = 3;
  ps.rng_seed = 21;
  Model small = make_model(train, train_random_forest(train, ps));
  TrainParams pl;
  pl.n_trees = 50;
  pl.max_depth = 10;
  pl.rng_seed = 22;
  Model large = make_model(train, train_random_forest(train, pl));
  HybridInputs in = prepare_hybrid(place_stages(compile(small)), small, large, test);
  std::vector<Rational> thetas{Rational(0), Rational(1, 2), Rational(3, 5), Rational(7, 10),
                               Rational(4, 5), Rational(9, 10), Rational(1)};
  auto reports = sweep_thresholds(in, HybridConfig{}, thetas);
  double prev = 2;
  for (auto& r : reports) {
    o.require(r.offload_fraction <= prev, "offload increases at theta " + std::to_string(r.threshold));
    prev = r.offload_fraction;
    o.require(r.hybrid.f1 >= r.switch_only.f1, "hybrid F1 below switch-only F1 at theta " + std::to_string(r.threshold));
    o.detail << r.threshold << ":" << r.offload_fraction << "/" << r.hybrid.f1 << " ";
  }
  // theta = 1: forwarded inputs carry exactly the large model's errors
  const HybridReport& top = reports.back();
  HybridConfig c1;
  c1.threshold = 1;
  std::uint64_t fwd = 0, fwd_err = 0, hyb_err = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    RouteDecision d = route(in.small_pipeline[i], c1);
    int large_cls = evaluate_direct(large, test.x[i]).class_id;
    int final_cls = d.kind == RouteKind::accept ? d.class_id : large_cls;
    if (d.kind == RouteKind::forward) {
      ++fwd;
      fwd_err += large_cls != test.y[i];
    }
    hyb_err += final_cls != test.y[i];
  }
  double want = fwd ? static_cast<double>(fwd_err) / static_cast<double>(fwd) : 0.0;
  o.require(top.n_forwarded == fwd, "forwarded count at theta=1");
  o.require(std::abs(top.error_large_on_forwarded - want) < 1e-12, "large-model error on forwarded inputs");
  o.require(std::abs(top.forwarded_large.error - want) < 1e-12, "hybrid error on forwarded inputs");
  o.require(std::abs(top.error_hybrid - static_cast<double>(hyb_err) / static_cast<double>(test.size())) < 1e-12,
            "hybrid error at theta=1");
  o.detail << "| theta=1 forwarded " << fwd << ", error there " << want;
  return o;
}

PacketRecord packet(double ms, bool flow_a, bool reverse) {
  PacketRecord r;
  r.ts_ns = static_cast<std::uint64_t>(std::llround(ms * 1e6));
  if (flow_a) {
    r.src_ip = parse_ipv4("10.0.0.1");
    r.dst_ip = parse_ipv4("10.0.0.2");
    r.src_port = 1234;
    r.dst_port = 80;
    r.proto = 6;
    r.length = 100;
    if (reverse) {
      std::swap(r.src_ip, r.dst_ip);
      std::swap(r.src_port, r.dst_port);
      r.length = 1000;
    }
  } else {
    r.src_ip = parse_ipv4("10.0.0.3");
    r.dst_ip = parse_ipv4("10.0.0.4");
    r.src_port = 5000;
    r.dst_port = 53;
    r.proto = 17;
    r.length = 200;
  }
  return r;
}

Outcome flow_features() {
  Outcome o;
  // Bins: [0, 1ms), [1ms, 10ms), [10ms, inf). Flow A has 12 packets, B has 8.
  // A inter-arrivals (ms): .5 1 .5 10 .9 8 25 .1 1 10 .5 -> 5 / 3 / 3
  // B inter-arrivals (ms): .1 30 0 1 8.7 .999 10       -> 3 / 2 / 2
  const std::vector<std::tuple<double, bool, bool>> trace{
      {0.0, true, false},     {0.2, false, false},   {0.3, false, false},  {0.5, true, true},
      {1.5, true, false},     {2.0, true, true},     {12.0, true, false},  {12.9, true, false},
      {20.9, true, true},     {30.3, false, false},  {30.3, false, false}, {31.3, false, false},
      {40.0, false, false},   {40.999, false, false}, {45.9, true, false}, {46.0, true, false},
      {47.0, true, true},     {50.999, false, false}, {57.0, true, false}, {57.5, true, false}};
  FlowConfig cfg;
  cfg.capacity = 16;
  FlowTable table(cfg);
  for (auto& [ms, a, rev] : trace) table.update(packet(ms, a, rev));
  o.require(table.packets() == 20 && table.size() == 2, "trace did not produce 2 flows from 20 packets");

  auto a = table.find(flow_hash(packet(0, true, false)));
  auto b = table.find(flow_hash(packet(0, false, false)));
  o.require(a.has_value() && b.has_value(), "flows missing");
  if (!a || !b) return o;
  o.require(flow_hash(packet(0, true, true)) == a->key, "reverse direction hashes to another flow");

  o.require(a->first_seen == 0 && a->last_seen == 57'500'000, "flow A timestamps");
  o.require(a->duration() == 57'500'000, "flow A duration");
  o.require(a->pkt_count == 12 && a->byte_count == 4800, "flow A counts");
  o.require(a->fwd_pkts == 8 && a->rev_pkts == 4 && a->fwd_bytes == 800 && a->rev_bytes == 4000, "flow A directions");
  o.require(a->last_iat == 500'000, "flow A last inter-arrival");
  o.require(a->jitter_bins == std::vector<std::uint64_t>({5, 3, 3}), "flow A jitter bins");
  o.require(a->data_rate() == 4800 * 8 / 57'500'000, "flow A data rate");

  o.require(b->first_seen == 200'000 && b->last_seen == 50'999'000, "flow B timestamps");
  o.require(b->duration() == 50'799'000, "flow B duration");
  o.require(b->pkt_count == 8 && b->byte_count == 1600, "flow B counts");
  o.require(b->fwd_pkts == 8 && b->rev_pkts == 0, "flow B directions");
  o.require(b->last_iat == 10'000'000, "flow B last inter-arrival");
  o.require(b->jitter_bins == std::vector<std::uint64_t>({3, 2, 2}), "flow B jitter bins");

  const std::uint64_t K = cfg.capacity, N = 3;
  o.require(table.n_bins() == N, "bin count");
  o.require(table.jitter_memory_entries() == K * (N + 1), "jitter memory != K*(N+1)");
  o.require(table.active_jitter_entries() == 2 * (N + 1), "active jitter memory != 2*(N+1)");
  o.detail << "A " << a->pkt_count << " pkts bins {5,3,3}, B " << b->pkt_count << " pkts bins {3,2,2}, memory "
           << table.jitter_memory_entries() << " = " << K << "x(" << N << "+1)";
  return o;
}

Outcome strategy_equivalence() {
  Outcome o;
  Rng rng(1010);
  auto feats = make_features({4, 4});
  std::vector<Model> models;
  for (int i = 0; i < 10; ++i) {
    models.push_back(random_nb(rng, feats, 2 + i % 3));
    models.push_back(random_kmeans(rng, feats, 2 + i % 3, 1 + i % 4));
  }
  std::uint64_t inputs = 0, flagged = 0, disagreements = 0;
  for (auto& m : models) {
    CompileOptions pf, pc;
    pf.strategy = Strategy::per_feature;
    pc.strategy = Strategy::per_class;
    Emulator ef(place_stages(compile(m, pf))), ec(place_stages(compile(m, pc)));
    for (auto& x : full_domain(feats)) {
      Prediction want = evaluate_direct(m, x), a = ef.run(x), b = ec.run(x);
      ++inputs;
      bool tie = want.tie || a.tie || b.tie;
      if (tie) {
        ++flagged;
        continue;
      }
      if (a.class_id != b.class_id || a.class_id != want.class_id) ++disagreements;
    }
  }
  o.require(disagreements == 0, "strategies or oracle disagree off a flagged tie");
  o.detail << models.size() << " models, " << inputs << " inputs, " << flagged << " flagged ties, " << disagreements
           << " disagreements";
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"tree/bagging exactness", tree_and_bagging_exactness},
      {"depth independence", depth_independence},
      {"feature sharing", feature_sharing},
      {"quantization error", quantization_error},
      {"entry-count bounds", entry_bounds_consistency},
      {"ternary expansion", ternary_expansion},
      {"entries-only update", entries_only_update},
      {"hybrid monotonicity and limits", hybrid_monotonicity},
      {"flow features", flow_features},
      {"strategy equivalence", strategy_equivalence},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome r;
    try {
      r = criteria[i].second();
    } catch (const std::exception& e) {
      r.pass = false;
      r.detail << "exception: " << e.what();
    }
    failed += !r.pass;
    std::printf("criterion %zu %s: %s  [%s]\n", i + 1, criteria[i].first.c_str(), r.pass ? "PASS" : "FAIL",
                r.detail.str().c_str());
    std::fflush(stdout);
  }
  return failed ? 1 : 0;
}
