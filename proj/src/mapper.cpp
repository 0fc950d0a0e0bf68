#include "inml/mapper.hpp"

#include "inml/error.hpp"
#include "inml/pipeline.hpp"
#include "json_util.hpp"

#include <boost/math/constants/constants.hpp>

#include <algorithm>
#include <functional>
#include <set>

namespace inml {

using detail::json;

int IntervalSpec::code_width(std::size_t f) const { return ceil_log2(thresholds[f].size() + 1); }

std::uint64_t IntervalSpec::code(std::size_t f, std::uint64_t v) const {
  const auto& t = thresholds[f];
  return static_cast<std::uint64_t>(
      std::lower_bound(t.begin(), t.end(), static_cast<std::int64_t>(v)) - t.begin());
}

bool IntervalSpec::empty() const {
  return std::all_of(thresholds.begin(), thresholds.end(), [](const auto& t) { return t.empty(); });
}

IntervalSpec extract_intervals(std::span<const TreeModel> trees, const std::vector<FeatureSpec>& features) {
  std::vector<std::set<std::int64_t>> sets(features.size());
  for (const auto& tree : trees)
    for (const auto& n : tree.nodes) {
      if (n.is_leaf) continue;
      if (n.feature < 0 || n.feature >= static_cast<int>(features.size()))
        throw FeatureError("tree tests feature " + std::to_string(n.feature) + " outside the feature spec");
      if (n.threshold >= 0 && static_cast<std::uint64_t>(n.threshold) < features[n.feature].max_value())
        sets[n.feature].insert(n.threshold);
    }
  IntervalSpec iv;
  for (auto& s : sets) iv.thresholds.emplace_back(s.begin(), s.end());
  return iv;
}

const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::per_feature: return "per_feature";
    case Strategy::per_class: return "per_class";
    case Strategy::per_hyperplane: return "per_hyperplane";
  }
  return "?";
}

Strategy strategy_from_name(std::string_view s) {
  if (s == "per_feature") return Strategy::per_feature;
  if (s == "per_class") return Strategy::per_class;
  if (s == "per_hyperplane") return Strategy::per_hyperplane;
  throw ArgumentError("unknown strategy '" + std::string(s) + "'");
}

void validate_options(const CompileOptions& o) {
  const auto& q = o.quant;
  if (q.frac_bits < 1) throw ArgumentError("frac_bits must be at least 1");
  if (q.action_width < q.frac_bits + 2) throw ArgumentError("action_width must be at least frac_bits + 2");
  if (q.action_width > 56) throw ArgumentError("action_width above 56 bits is not supported");
  if (q.confidence_bits < 1 || q.confidence_bits > 16) throw ArgumentError("confidence_bits must be in 1..16");
  if (q.bins < 0) throw BinCountError("bin count must be non-negative");
  if (o.code_bits < 0 || o.code_bits > 16) throw ArgumentError("code_bits must be in 0..16");
  if (o.max_table_entries < 1) throw ArgumentError("max_table_entries must be positive");
}

std::string options_to_json(const CompileOptions& o) {
  json j = {{"frac_bits", o.quant.frac_bits},
            {"action_width", o.quant.action_width},
            {"confidence_bits", o.quant.confidence_bits},
            {"bins", o.quant.bins},
            {"bin_edges", o.quant.bin_edges},
            {"strategy", strategy_name(o.strategy)},
            {"ternary", o.ternary},
            {"code_bits", o.code_bits},
            {"emit_confidence", o.emit_confidence},
            {"max_table_entries", o.max_table_entries}};
  return j.dump();
}

CompileOptions options_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("options are not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw SchemaError("options must be an object");
  CompileOptions o;
  try {
    o.quant.frac_bits = j.value("frac_bits", o.quant.frac_bits);
    o.quant.action_width = j.value("action_width", o.quant.action_width);
    o.quant.confidence_bits = j.value("confidence_bits", o.quant.confidence_bits);
    o.quant.bins = j.value("bins", o.quant.bins);
    if (j.contains("bin_edges")) o.quant.bin_edges = j["bin_edges"].get<std::vector<std::vector<std::uint64_t>>>();
    if (j.contains("strategy")) o.strategy = strategy_from_name(j["strategy"].get<std::string>());
    o.ternary = j.value("ternary", o.ternary);
    o.code_bits = j.value("code_bits", o.code_bits);
    o.emit_confidence = j.value("emit_confidence", o.emit_confidence);
    o.max_table_entries = j.value("max_table_entries", o.max_table_entries);
  } catch (const json::type_error& e) {
    throw SchemaError(std::string("bad option type: ") + e.what());
  }
  validate_options(o);
  return o;
}

std::int64_t quantize(const Rational& v, int q, int width) {
  BigInt r = round_half_even(Rational(v * pow2(static_cast<unsigned>(q))));
  if (!fits_signed(r, width))
    throw OverflowError("value " + format_rational(v) + " does not fit " + std::to_string(width) + " signed bits at q=" +
                        std::to_string(q));
  return to_i64(r);
}

std::int64_t quantize(const Real& v, int q, int width) {
  BigInt r = round_half_even(Real(boost::multiprecision::ldexp(v, q)));
  if (!fits_signed(r, width))
    throw OverflowError("value does not fit " + std::to_string(width) + " signed bits at q=" + std::to_string(q));
  return to_i64(r);
}

std::vector<std::uint64_t> bin_feature(int domain_width, int n_bins, std::span<const std::uint64_t> sample) {
  if (domain_width < 1 || domain_width > 32) throw BinCountError("domain width must be in 1..32");
  const std::uint64_t domain = std::uint64_t{1} << domain_width;
  if (n_bins < 1 || static_cast<std::uint64_t>(n_bins) > domain)
    throw BinCountError("bin count " + std::to_string(n_bins) + " outside [1, 2^" + std::to_string(domain_width) + "]");
  const std::uint64_t n = static_cast<std::uint64_t>(n_bins);
  std::vector<std::uint64_t> edges(n - 1);
  if (sample.empty()) {
    for (std::uint64_t j = 0; j + 1 < n; ++j) edges[j] = (j + 1) * domain / n - 1;
    return edges;
  }
  std::vector<std::uint64_t> s(sample.begin(), sample.end());
  std::sort(s.begin(), s.end());
  const std::uint64_t count = s.size();
  for (std::uint64_t j = 0; j + 1 < n; ++j) {
    std::uint64_t rank = ((j + 1) * count + n - 1) / n;  // ceil((j+1)N/n)
    edges[j] = std::min(s[rank == 0 ? 0 : rank - 1], domain - 1);
  }
  // Strictly increasing, and leave room for the remaining bins.
  for (std::uint64_t j = 0; j + 1 < n; ++j) {
    if (j > 0 && edges[j] <= edges[j - 1]) edges[j] = edges[j - 1] + 1;
    edges[j] = std::min(edges[j], domain - 1 - (n - 1 - j));
  }
  for (std::uint64_t j = n - 1; j-- > 1;)
    if (edges[j - 1] >= edges[j]) edges[j - 1] = edges[j] - 1;
  return edges;
}

namespace {

int class_width(int k) { return std::max(1, ceil_log2(static_cast<std::uint64_t>(k))); }

std::int64_t floor_conf(const Real& c, int bits) {
  Real scaled = boost::multiprecision::floor(boost::multiprecision::ldexp(c, bits));
  std::int64_t v = scaled.convert_to<std::int64_t>();
  return std::clamp<std::int64_t>(v, 0, std::int64_t{1} << bits);
}

std::int64_t floor_conf(const Rational& c, int bits) {
  return std::clamp<std::int64_t>(to_i64(floor(Rational(c * pow2(static_cast<unsigned>(bits))))), 0,
                                  std::int64_t{1} << bits);
}

int sum_width(const CompileOptions& o, std::size_t terms) {
  return o.quant.action_width + ceil_log2(std::max<std::size_t>(terms, 1));
}

void require_valid(const Model& m) {
  auto r = validate_model(m);
  if (!r.ok()) {
    const auto& v = r.violations.front();
    if (v.code.rfind("FEATURE", 0) == 0) throw FeatureError(v.code + ": " + v.message);
    throw DomainError(v.code + ": " + v.message);
  }
}

PipelineProgram skeleton(const Model& m, const CompileOptions& o, std::string strategy) {
  PipelineProgram p;
  p.model_type = model_type_name(m.type());
  p.strategy = std::move(strategy);
  p.features = m.features;
  p.options_json = options_to_json(o);
  p.combine.n_classes = m.n_classes;
  p.combine.class_field = "class";
  p.combine.confidence_bits = o.quant.confidence_bits;
  return p;
}

void finish(PipelineProgram& p) {
  for (auto& t : p.tables) canonicalize(t);
  p.combine_data.constants.resize(p.combine.sums.size(), 0);
}

// Value ranges [lo, hi] of each interval of feature f.
std::vector<std::pair<std::uint64_t, std::uint64_t>> interval_ranges(const std::vector<std::int64_t>& thresholds,
                                                                     std::uint64_t max_value) {
  std::vector<std::pair<std::uint64_t, std::uint64_t>> out;
  std::uint64_t lo = 0;
  for (auto t : thresholds) {
    out.emplace_back(lo, static_cast<std::uint64_t>(t));
    lo = static_cast<std::uint64_t>(t) + 1;
  }
  out.emplace_back(lo, max_value);
  return out;
}

// ---------------------------------------------------------------------------
// Tree tables

using Box = std::vector<std::pair<int, int>>;  // per model feature, inclusive local-code range

struct LeafBox {
  int leaf;
  Box box;
};

// Reachable leaves in left-first order with the code box each one covers.
std::vector<LeafBox> leaf_boxes(const TreeModel& tree, const std::vector<FeatureSpec>& fs, const IntervalSpec& local) {
  std::vector<LeafBox> out;
  Box init;
  for (std::size_t f = 0; f < fs.size(); ++f) init.emplace_back(0, local.intervals(f) - 1);
  std::vector<std::pair<int, Box>> stack{{tree.root, init}};
  while (!stack.empty()) {
    auto [id, box] = std::move(stack.back());
    stack.pop_back();
    const auto& n = tree.nodes[id];
    if (n.is_leaf) {
      out.push_back({id, std::move(box)});
      continue;
    }
    const auto& th = local.thresholds[n.feature];
    if (n.threshold < 0) {
      stack.emplace_back(n.right, std::move(box));
      continue;
    }
    if (static_cast<std::uint64_t>(n.threshold) >= fs[n.feature].max_value()) {
      stack.emplace_back(n.left, std::move(box));
      continue;
    }
    int j = static_cast<int>(std::lower_bound(th.begin(), th.end(), n.threshold) - th.begin());
    Box left = box, right = std::move(box);
    left[n.feature].second = std::min(left[n.feature].second, j);
    right[n.feature].first = std::max(right[n.feature].first, j + 1);
    if (right[n.feature].first <= right[n.feature].second) stack.emplace_back(n.right, std::move(right));
    if (left[n.feature].first <= left[n.feature].second) stack.emplace_back(n.left, std::move(left));
  }
  return out;
}

struct KeyDim {
  int feature;
  int width;
  int n_codes;
};

// Fills entries/default of a table keyed on one code field per KeyDim. The
// last reachable leaf becomes the default and gets no entries.
void fill_tree_table(TableDef& t, const TreeModel& tree, const std::vector<LeafBox>& boxes,
                     const std::vector<KeyDim>& dims, const std::function<std::vector<std::int64_t>(const TreeNode&)>& act,
                     bool ternary, std::uint64_t max_entries) {
  t.default_action = act(tree.nodes[boxes.back().leaf]);
  for (std::size_t b = 0; b + 1 < boxes.size(); ++b) {
    const auto& box = boxes[b].box;
    std::vector<std::vector<KeyMatch>> per_dim;
    for (const auto& d : dims) {
      auto [lo, hi] = box[d.feature];
      std::vector<KeyMatch> opts;
      if (ternary) {
        std::uint64_t h = hi == d.n_codes - 1 ? (std::uint64_t{1} << d.width) - 1 : static_cast<std::uint64_t>(hi);
        for (const auto& pat : expand_range_to_ternary(static_cast<std::uint64_t>(lo), h, d.width))
          opts.push_back({pat.value, pat.mask, 0});
      } else {
        for (int c = lo; c <= hi; ++c) opts.push_back({static_cast<std::uint64_t>(c), 0, 0});
      }
      per_dim.push_back(std::move(opts));
    }
    auto action = act(tree.nodes[boxes[b].leaf]);
    std::vector<std::size_t> idx(per_dim.size(), 0);
    while (true) {
      Entry e;
      for (std::size_t d = 0; d < per_dim.size(); ++d) e.key.push_back(per_dim[d][idx[d]]);
      e.action = action;
      t.entries.push_back(std::move(e));
      if (t.entries.size() > max_entries)
        throw DomainTooLargeError("table '" + t.name + "' exceeds " + std::to_string(max_entries) + " entries");
      std::size_t d = 0;
      for (; d < per_dim.size(); ++d) {
        if (++idx[d] < per_dim[d].size()) break;
        idx[d] = 0;
      }
      if (d == per_dim.size()) break;
    }
  }
}

TreeStats tree_stats(const TreeModel& tree, std::size_t n_features) {
  TreeStats s;
  s.per_feature.assign(n_features, 0);
  for (const auto& n : tree.nodes)
    if (!n.is_leaf) {
      ++s.branches;
      ++s.per_feature[n.feature];
    }
  return s;
}

// Code-field layout of one tree: which features it keys on and how wide.
std::vector<KeyDim> tree_dims(const IntervalSpec& local, const std::vector<FeatureSpec>& fs, const CompileOptions& o,
                              int limit) {
  std::vector<KeyDim> dims;
  for (std::size_t f = 0; f < fs.size(); ++f) {
    if (!o.code_bits && !local.used(f)) continue;
    int need = local.code_width(f);
    int width = o.code_bits ? o.code_bits : need;
    if (need > (o.code_bits ? o.code_bits : limit))
      throw CodeWidthError("feature '" + fs[f].name + "' needs a " + std::to_string(need) + "-bit code, limit is " +
                           std::to_string(o.code_bits ? o.code_bits : limit));
    dims.push_back({static_cast<int>(f), width, local.intervals(f)});
  }
  return dims;
}

std::vector<LutEntry> vote_fraction_lut(int voters, int bits) {
  std::vector<LutEntry> lut;
  for (int v = 0; v <= voters; ++v)
    lut.push_back({v, floor_conf(Rational(v, std::max(voters, 1)), bits)});
  return lut;
}

// Rows: keys >= ceil(2^q * logit(l / 2^b)) map to l, for l = 2^(b-1) .. 2^b - 1.
std::vector<LutEntry> logistic_lut(int q, int bits) {
  std::vector<LutEntry> lut;
  const std::int64_t full = std::int64_t{1} << bits;
  for (std::int64_t l = full / 2; l < full; ++l) {
    Real p = Real(l) / Real(full);
    Real lo = boost::multiprecision::ceil(boost::multiprecision::ldexp(boost::multiprecision::log(p / (1 - p)), q));
    std::int64_t key = lo.convert_to<std::int64_t>();
    if (!lut.empty() && lut.back().lo == key) lut.back().conf_q = l;
    else lut.push_back({key, l});
  }
  return lut;
}

}  // namespace

// ---------------------------------------------------------------------------

PipelineProgram compile_tree(const Model& m, const CompileOptions& o) {
  validate_options(o);
  require_valid(m);
  const auto* tree = std::get_if<TreeModel>(&m.body);
  if (!tree) throw ArgumentError("compile_tree needs a tree model");
  PipelineProgram p = skeleton(m, o, o.ternary ? "ternary" : "exact");
  const TreeModel trees[] = {*tree};
  IntervalSpec iv = extract_intervals(trees, m.features);
  auto dims = tree_dims(iv, m.features, o, 64);
  const int bits = o.quant.confidence_bits;

  TableDef cls;
  cls.name = "classify";
  cls.role = TableRole::classify;
  cls.kind = o.ternary ? MatchKind::ternary : MatchKind::exact;
  for (const auto& d : dims) {
    const auto& f = m.features[d.feature];
    std::string code = "code_" + f.name;
    TableDef t;
    t.name = "feat_" + f.name;
    t.role = TableRole::feature;
    t.kind = MatchKind::range;
    t.keys = {{f.name, f.width_bits, false}};
    t.actions = {{code, d.width, false}};
    auto ranges = interval_ranges(iv.thresholds[d.feature], f.max_value());
    for (std::size_t j = 0; j < ranges.size(); ++j)
      t.entries.push_back({{{ranges[j].first, 0, ranges[j].second}}, {static_cast<std::int64_t>(j)}});
    t.default_action = {0};
    p.tables.push_back(std::move(t));
    cls.keys.push_back({code, d.width, false});
  }
  cls.actions = {{"class", class_width(m.n_classes), false}};
  if (o.emit_confidence) {
    cls.actions.push_back({"conf", bits + 1, false});
    p.combine.confidence = ConfidenceKind::field;
    p.combine.confidence_field = "conf";
  }
  auto boxes = leaf_boxes(*tree, m.features, iv);
  fill_tree_table(
      cls, *tree, boxes, dims,
      [&](const TreeNode& leaf) {
        std::vector<std::int64_t> a{leaf.class_id};
        if (o.emit_confidence) a.push_back(floor_conf(leaf.confidence, bits));
        return a;
      },
      o.ternary, o.max_table_entries);
  p.tables.push_back(std::move(cls));
  p.combine.kind = CombineKind::code_lookup;
  p.frac_bits = 0;
  p.tree_stats.push_back(tree_stats(*tree, m.features.size()));
  finish(p);
  return p;
}

PipelineProgram compile_ensemble(const Model& m, const CompileOptions& o) {
  validate_options(o);
  require_valid(m);
  const auto* e = std::get_if<EnsembleModel>(&m.body);
  if (!e) throw ArgumentError("compile_ensemble needs an ensemble model");
  PipelineProgram p = skeleton(m, o, o.ternary ? "ternary" : "exact");
  const int q = o.quant.frac_bits, aw = o.quant.action_width, bits = o.quant.confidence_bits;
  const std::size_t n_trees = e->trees.size();
  const std::size_t F = m.features.size();

  IntervalSpec global = extract_intervals(e->trees, m.features);
  std::vector<IntervalSpec> local;
  std::vector<std::vector<KeyDim>> dims;
  for (std::size_t t = 0; t < n_trees; ++t) {
    local.push_back(extract_intervals(std::span(&e->trees[t], 1), m.features));
    dims.push_back(tree_dims(local.back(), m.features, o, aw));
  }
  auto code_field = [&](std::size_t t, int f) { return "t" + std::to_string(t) + "_" + m.features[f].name; };

  // Shared feature tables: one action field per tree keyed on the feature.
  for (std::size_t f = 0; f < F; ++f) {
    if (!o.code_bits && !global.used(f)) continue;
    const auto& fs = m.features[f];
    TableDef t;
    t.name = "feat_" + fs.name;
    t.role = TableRole::feature;
    t.kind = MatchKind::range;
    t.keys = {{fs.name, fs.width_bits, false}};
    std::vector<std::size_t> users;
    for (std::size_t tr = 0; tr < n_trees; ++tr)
      for (const auto& d : dims[tr])
        if (d.feature == static_cast<int>(f)) {
          t.actions.push_back({code_field(tr, d.feature), d.width, false});
          users.push_back(tr);
        }
    for (const auto& [lo, hi] : interval_ranges(global.thresholds[f], fs.max_value())) {
      Entry en{{{lo, 0, hi}}, {}};
      for (auto tr : users) en.action.push_back(static_cast<std::int64_t>(local[tr].code(f, lo)));
      t.entries.push_back(std::move(en));
    }
    t.default_action.assign(t.actions.size(), 0);
    p.tables.push_back(std::move(t));
  }

  std::function<std::vector<std::int64_t>(const TreeNode&)> act;
  Field out;
  std::string prefix;
  switch (e->mode) {
    case EnsembleMode::bagging:
      prefix = "vote";
      out = {"", class_width(m.n_classes), false};
      act = [](const TreeNode& l) { return std::vector<std::int64_t>{l.class_id}; };
      break;
    case EnsembleMode::boosting:
      prefix = "w";
      out = {"", aw, true};
      act = [&](const TreeNode& l) { return std::vector<std::int64_t>{quantize(Rational(l.weight * e->weight_scale), q, aw)}; };
      break;
    case EnsembleMode::isolation:
      prefix = "d";
      out = {"", aw, true};
      act = [&](const TreeNode& l) {
        if (!fits_signed(std::int64_t{l.depth}, aw)) throw OverflowError("leaf depth does not fit the action width");
        return std::vector<std::int64_t>{l.depth};
      };
      break;
  }

  std::vector<std::string> outputs;
  for (std::size_t tr = 0; tr < n_trees; ++tr) {
    TableDef t;
    t.name = "tree" + std::to_string(tr);
    t.role = TableRole::tree;
    t.kind = o.ternary ? MatchKind::ternary : MatchKind::exact;
    for (const auto& d : dims[tr]) t.keys.push_back({code_field(tr, d.feature), d.width, false});
    out.name = prefix + std::to_string(tr);
    outputs.push_back(out.name);
    t.actions = {out};
    auto boxes = leaf_boxes(e->trees[tr], m.features, local[tr]);
    fill_tree_table(t, e->trees[tr], boxes, dims[tr], act, o.ternary, o.max_table_entries);
    p.tables.push_back(std::move(t));
    p.tree_stats.push_back(tree_stats(e->trees[tr], F));
  }

  auto& c = p.combine;
  if (o.emit_confidence) c.confidence_field = "conf";
  switch (e->mode) {
    case EnsembleMode::bagging:
      p.frac_bits = 0;
      c.kind = CombineKind::vote_majority;
      c.vote_fields = outputs;
      if (o.emit_confidence) {
        c.confidence = ConfidenceKind::vote_fraction;
        c.confidence_key_width = ceil_log2(n_trees + 1);
        p.combine_data.confidence_lut = vote_fraction_lut(static_cast<int>(n_trees), bits);
      }
      break;
    case EnsembleMode::boosting: {
      p.frac_bits = q;
      c.kind = CombineKind::weighted_sum_argmax;
      if (m.n_classes == 2) {
        c.binary_margin = true;
        c.sums.push_back({"margin", outputs, true, sum_width(o, n_trees + 1)});
        p.combine_data.constants.push_back(quantize(e->bias[0], q, aw));
      } else {
        for (int k = 0; k < m.n_classes; ++k) {
          SumSpec s{"score" + std::to_string(k), {}, true, 0};
          for (std::size_t tr = 0; tr < n_trees; ++tr)
            if (e->tree_class[tr] == k) s.addends.push_back(outputs[tr]);
          s.width = sum_width(o, s.addends.size() + 1);
          c.sums.push_back(std::move(s));
          p.combine_data.constants.push_back(quantize(e->bias[k], q, aw));
        }
      }
      if (o.emit_confidence) {
        c.confidence = ConfidenceKind::margin_logistic;
        int w = 0;
        for (const auto& s : c.sums) w = std::max(w, s.width);
        c.confidence_key_width = w + 1;
        p.combine_data.confidence_lut = logistic_lut(q, bits);
      }
      break;
    }
    case EnsembleMode::isolation: {
      p.frac_bits = 0;
      c.kind = CombineKind::sum_threshold;
      c.sums.push_back({"depth_sum", outputs, false, sum_width(o, n_trees)});
      p.combine_data.constants.push_back(0);
      p.combine_data.threshold = e->depth_threshold;
      if (o.emit_confidence) {
        c.confidence = ConfidenceKind::sum_table;
        c.confidence_key_width = c.sums[0].width;
        std::int64_t max_sum = 0;
        for (const auto& t : e->trees) {
          int d = 0;
          for (const auto& n : t.nodes)
            if (n.is_leaf) d = std::max(d, n.depth);
          max_sum += d;
        }
        const Real norm = to_real(e->path_norm) * Real(static_cast<std::int64_t>(n_trees));
        for (std::int64_t s = 0; s <= max_sum; ++s) {
          Real score = boost::multiprecision::pow(Real(2), -Real(s) / norm);
          std::int64_t cq = floor_conf(s < e->depth_threshold ? score : Real(1) - score, bits);
          auto& lut = p.combine_data.confidence_lut;
          if (lut.empty() || lut.back().conf_q != cq) lut.push_back({s, cq});
        }
      }
      break;
    }
  }
  finish(p);
  return p;
}

// ---------------------------------------------------------------------------
// Classical models

namespace {

// Per-feature value domain. Unbinned: one code per value; binned: one code
// per bin, represented by the bin midpoint.
struct ValueDomain {
  std::vector<std::pair<std::uint64_t, std::uint64_t>> bins;  // empty = unbinned
  std::uint64_t domain = 0;

  bool binned() const { return !bins.empty(); }
  std::uint64_t size() const { return binned() ? bins.size() : domain; }
  Rational rep(std::uint64_t c) const {
    if (!binned()) return Rational(BigInt(c));
    return Rational(BigInt(bins[c].first) + BigInt(bins[c].second), BigInt(2));
  }
};

std::vector<ValueDomain> value_domains(const Model& m, const CompileOptions& o, bool per_value) {
  const auto& q = o.quant;
  if (!q.bin_edges.empty() && q.bin_edges.size() != m.features.size())
    throw BinCountError("bin_edges must list one edge vector per feature");
  std::vector<ValueDomain> out;
  for (std::size_t f = 0; f < m.features.size(); ++f) {
    const auto& fs = m.features[f];
    ValueDomain d;
    d.domain = fs.domain_size();
    std::vector<std::uint64_t> edges;
    bool binned = false;
    if (!q.bin_edges.empty() && !q.bin_edges[f].empty()) {
      edges = q.bin_edges[f];
      binned = true;
      for (std::size_t j = 0; j < edges.size(); ++j)
        if (edges[j] >= fs.max_value() || (j && edges[j] <= edges[j - 1]))
          throw BinCountError("bin edges of '" + fs.name + "' must be strictly increasing and below 2^w - 1");
    } else if (q.bins > 0 && static_cast<std::uint64_t>(q.bins) < d.domain) {
      edges = bin_feature(fs.width_bits, q.bins);
      binned = true;
    }
    if (binned) {
      std::uint64_t lo = 0;
      for (auto e : edges) {
        d.bins.emplace_back(lo, e);
        lo = e + 1;
      }
      d.bins.emplace_back(lo, fs.max_value());
    } else if (per_value && d.domain > o.max_table_entries) {
      throw BinningRequiredError("feature '" + fs.name + "' has " + std::to_string(d.domain) +
                                 " values, above the table budget; set a bin count");
    }
    out.push_back(std::move(d));
  }
  return out;
}

// Feature table whose action is a vector of partial scores (one per column).
TableDef vector_table(const FeatureSpec& fs, const ValueDomain& d, const std::vector<Field>& cols,
                      const std::function<std::vector<std::int64_t>(const Rational&)>& row) {
  TableDef t;
  t.name = "feat_" + fs.name;
  t.role = TableRole::feature;
  t.kind = d.binned() ? MatchKind::range : MatchKind::exact;
  t.keys = {{fs.name, fs.width_bits, false}};
  t.actions = cols;
  for (std::uint64_t c = 0; c < d.size(); ++c) {
    KeyMatch k = d.binned() ? KeyMatch{d.bins[c].first, 0, d.bins[c].second} : KeyMatch{c, 0, 0};
    t.entries.push_back({{k}, row(d.rep(c))});
  }
  t.default_action.assign(cols.size(), 0);
  return t;
}

// Key fields of a joint (all-feature) table, emitting bin tables as needed.
std::vector<Field> joint_keys(PipelineProgram& p, const Model& m, const std::vector<ValueDomain>& doms,
                              std::uint64_t max_entries) {
  std::vector<Field> keys;
  long double space = 1;
  for (std::size_t f = 0; f < m.features.size(); ++f) {
    const auto& fs = m.features[f];
    const auto& d = doms[f];
    space *= static_cast<long double>(d.size());
    if (!d.binned()) {
      keys.push_back({fs.name, fs.width_bits, false});
      continue;
    }
    TableDef t;
    t.name = "bin_" + fs.name;
    t.role = TableRole::bin;
    t.kind = MatchKind::range;
    t.keys = {{fs.name, fs.width_bits, false}};
    int w = std::max(1, ceil_log2(d.size()));
    t.actions = {{"bin_" + fs.name, w, false}};
    for (std::uint64_t c = 0; c < d.size(); ++c)
      t.entries.push_back({{{d.bins[c].first, 0, d.bins[c].second}}, {static_cast<std::int64_t>(c)}});
    t.default_action = {0};
    p.tables.push_back(std::move(t));
    keys.push_back({"bin_" + fs.name, w, false});
  }
  if (space > static_cast<long double>(max_entries))
    throw BinningRequiredError("joint key space of " + std::to_string(static_cast<double>(space)) +
                               " entries exceeds the table budget; set a bin count");
  return keys;
}

// Enumerates every code tuple of the joint domain in key order, calling
// fn(codes, entry index).
void for_each_tuple(const std::vector<ValueDomain>& doms,
                    const std::function<void(const std::vector<std::uint64_t>&)>& fn) {
  std::vector<std::uint64_t> codes(doms.size(), 0);
  while (true) {
    fn(codes);
    std::size_t d = doms.size();
    while (d-- > 0) {
      if (++codes[d] < doms[d].size()) break;
      codes[d] = 0;
    }
    if (d == static_cast<std::size_t>(-1)) break;
  }
}

TableDef joint_table(std::string name, TableRole role, const std::vector<Field>& keys, Field out) {
  TableDef t;
  t.name = std::move(name);
  t.role = role;
  t.kind = MatchKind::exact;
  t.keys = keys;
  t.actions = {std::move(out)};
  t.default_action = {0};
  return t;
}

Entry joint_entry(const std::vector<std::uint64_t>& codes, std::int64_t action) {
  Entry e;
  for (auto c : codes) e.key.push_back({c, 0, 0});
  e.action = {action};
  return e;
}

void check_strategy(const CompileOptions& o, std::initializer_list<Strategy> ok, const char* what) {
  for (auto s : ok)
    if (o.strategy == s) return;
  throw ArgumentError(std::string(what) + " does not support strategy " + strategy_name(o.strategy));
}

void set_argmax_confidence(PipelineProgram& p, const CompileOptions& o) {
  if (!o.emit_confidence) return;
  auto& c = p.combine;
  c.confidence = ConfidenceKind::margin_logistic;
  c.confidence_field = "conf";
  int w = 0;
  for (const auto& s : c.sums) w = std::max(w, s.width);
  c.confidence_key_width = w + 1;
  p.combine_data.confidence_lut = logistic_lut(o.quant.frac_bits, o.quant.confidence_bits);
}

Real gaussian_log_density(const Rational& x, const Rational& mean, const Rational& var) {
  static const Real log_two_pi = boost::multiprecision::log(boost::math::constants::two_pi<Real>());
  Rational d = x - mean;
  return -(log_two_pi + boost::multiprecision::log(to_real(var))) / 2 - to_real(Rational(d * d / (2 * var)));
}

// Log-space score; very unlikely values clamp to the most negative action value.
std::int64_t quantize_log(const Real& v, const CompileOptions& o, std::uint64_t& saturated) {
  const int q = o.quant.frac_bits, aw = o.quant.action_width;
  const std::int64_t floor_v = -(std::int64_t{1} << (aw - 1));
  Real scaled = boost::multiprecision::ldexp(v, q);
  if (scaled < Real(floor_v)) {
    ++saturated;
    return floor_v;
  }
  return quantize(v, q, aw);
}

}  // namespace

PipelineProgram compile_svm(const Model& m, const CompileOptions& o) {
  validate_options(o);
  require_valid(m);
  const auto* svm = std::get_if<SVMModel>(&m.body);
  if (!svm) throw ArgumentError("compile_svm needs an SVM model");
  check_strategy(o, {Strategy::per_feature, Strategy::per_hyperplane}, "SVM");
  PipelineProgram p = skeleton(m, o, strategy_name(o.strategy));
  const int q = o.quant.frac_bits, aw = o.quant.action_width;
  const auto& hs = svm->hyperplanes;
  const std::size_t F = m.features.size();
  auto& c = p.combine;
  c.kind = CombineKind::hyperplane_vote;
  for (const auto& h : hs) c.hyperplane_classes.emplace_back(h.class_a, h.class_b);

  if (o.strategy == Strategy::per_feature) {
    p.frac_bits = q;
    auto doms = value_domains(m, o, true);
    for (std::size_t f = 0; f < F; ++f) {
      std::vector<Field> cols;
      for (std::size_t j = 0; j < hs.size(); ++j) cols.push_back({"hv" + std::to_string(j) + "_" + m.features[f].name, aw, true});
      p.tables.push_back(vector_table(m.features[f], doms[f], cols, [&](const Rational& x) {
        std::vector<std::int64_t> row;
        for (const auto& h : hs) row.push_back(quantize(Rational(h.coefficients[f] * x), q, aw));
        return row;
      }));
    }
    for (std::size_t j = 0; j < hs.size(); ++j) {
      SumSpec s{"h" + std::to_string(j), {}, true, sum_width(o, F + 1)};
      for (std::size_t f = 0; f < F; ++f) s.addends.push_back("hv" + std::to_string(j) + "_" + m.features[f].name);
      c.sums.push_back(std::move(s));
      p.combine_data.constants.push_back(quantize(hs[j].intercept, q, aw));
    }
  } else {
    p.frac_bits = 0;
    auto doms = value_domains(m, o, false);
    auto keys = joint_keys(p, m, doms, o.max_table_entries);
    // Partial products per feature code, computed once.
    std::vector<std::vector<std::vector<Rational>>> part(hs.size(), std::vector<std::vector<Rational>>(F));
    for (std::size_t j = 0; j < hs.size(); ++j)
      for (std::size_t f = 0; f < F; ++f)
        for (std::uint64_t cde = 0; cde < doms[f].size(); ++cde) part[j][f].push_back(hs[j].coefficients[f] * doms[f].rep(cde));
    for (std::size_t j = 0; j < hs.size(); ++j) {
      const auto& h = hs[j];
      std::string vote = "vote" + std::to_string(j);
      TableDef t = joint_table("hp" + std::to_string(j), TableRole::hyperplane, keys, {vote, 1, false});
      for_each_tuple(doms, [&](const std::vector<std::uint64_t>& codes) {
        Rational v = h.intercept;
        for (std::size_t f = 0; f < F; ++f) v += part[j][f][codes[f]];
        int voted = v > 0 ? h.class_b : (v < 0 ? h.class_a : std::min(h.class_a, h.class_b));
        t.entries.push_back(joint_entry(codes, voted == h.class_b && h.class_b != h.class_a ? 1 : 0));
      });
      p.tables.push_back(std::move(t));
      c.vote_fields.push_back(vote);
    }
  }
  if (o.emit_confidence) {
    c.confidence = ConfidenceKind::vote_fraction;
    c.confidence_field = "conf";
    c.confidence_key_width = ceil_log2(static_cast<std::uint64_t>(m.n_classes));
    p.combine_data.confidence_lut = vote_fraction_lut(m.n_classes - 1, o.quant.confidence_bits);
  }
  finish(p);
  return p;
}

PipelineProgram compile_nb(const Model& m, const CompileOptions& o) {
  validate_options(o);
  require_valid(m);
  const auto* nb = std::get_if<NBModel>(&m.body);
  if (!nb) throw ArgumentError("compile_nb needs a naive Bayes model");
  check_strategy(o, {Strategy::per_feature, Strategy::per_class}, "naive Bayes");
  PipelineProgram p = skeleton(m, o, strategy_name(o.strategy));
  const int q = o.quant.frac_bits, aw = o.quant.action_width;
  const int k = m.n_classes;
  const std::size_t F = m.features.size();
  p.frac_bits = q;
  auto& c = p.combine;
  c.kind = CombineKind::weighted_sum_argmax;
  std::vector<Real> log_prior;
  for (const auto& pr : nb->priors) log_prior.push_back(boost::multiprecision::log(to_real(pr)));

  if (o.strategy == Strategy::per_feature) {
    auto doms = value_domains(m, o, true);
    for (std::size_t f = 0; f < F; ++f) {
      std::vector<Field> cols;
      for (int y = 0; y < k; ++y) cols.push_back({"ll" + std::to_string(y) + "_" + m.features[f].name, aw, true});
      p.tables.push_back(vector_table(m.features[f], doms[f], cols, [&](const Rational& x) {
        std::vector<std::int64_t> row;
        for (int y = 0; y < k; ++y)
          row.push_back(quantize_log(gaussian_log_density(x, nb->means[y][f], nb->variances[y][f]), o, p.saturated_entries));
        return row;
      }));
    }
    for (int y = 0; y < k; ++y) {
      SumSpec s{"score" + std::to_string(y), {}, true, sum_width(o, F + 1)};
      for (std::size_t f = 0; f < F; ++f) s.addends.push_back("ll" + std::to_string(y) + "_" + m.features[f].name);
      c.sums.push_back(std::move(s));
      p.combine_data.constants.push_back(quantize_log(log_prior[y], o, p.saturated_entries));
    }
  } else {
    auto doms = value_domains(m, o, false);
    auto keys = joint_keys(p, m, doms, o.max_table_entries);
    for (int y = 0; y < k; ++y) {
      std::vector<std::vector<Real>> part(F);
      for (std::size_t f = 0; f < F; ++f)
        for (std::uint64_t cde = 0; cde < doms[f].size(); ++cde)
          part[f].push_back(gaussian_log_density(doms[f].rep(cde), nb->means[y][f], nb->variances[y][f]));
      std::string field = "s" + std::to_string(y);
      TableDef t = joint_table("class" + std::to_string(y), TableRole::class_score, keys, {field, aw, true});
      for_each_tuple(doms, [&](const std::vector<std::uint64_t>& codes) {
        Real v = log_prior[y];
        for (std::size_t f = 0; f < F; ++f) v += part[f][codes[f]];
        t.entries.push_back(joint_entry(codes, quantize_log(v, o, p.saturated_entries)));
      });
      p.tables.push_back(std::move(t));
      c.sums.push_back({"score" + std::to_string(y), {field}, false, aw});
    }
  }
  set_argmax_confidence(p, o);
  finish(p);
  return p;
}

PipelineProgram compile_kmeans(const Model& m, const CompileOptions& o) {
  validate_options(o);
  require_valid(m);
  const auto* km = std::get_if<KMeansModel>(&m.body);
  if (!km) throw ArgumentError("compile_kmeans needs a K-Means model");
  check_strategy(o, {Strategy::per_feature, Strategy::per_class}, "K-Means");
  PipelineProgram p = skeleton(m, o, strategy_name(o.strategy));
  const int q = o.quant.frac_bits, aw = o.quant.action_width;
  const std::size_t k = km->centers.size();
  const std::size_t F = m.features.size();
  p.frac_bits = q;
  auto& c = p.combine;
  c.kind = CombineKind::sum_argmin;
  auto sq = [](const Rational& x, const Rational& cj) {
    Rational d = x - cj;
    return Rational(d * d);
  };

  if (o.strategy == Strategy::per_feature) {
    auto doms = value_domains(m, o, true);
    for (std::size_t f = 0; f < F; ++f) {
      std::vector<Field> cols;
      for (std::size_t j = 0; j < k; ++j) cols.push_back({"sq" + std::to_string(j) + "_" + m.features[f].name, aw, true});
      p.tables.push_back(vector_table(m.features[f], doms[f], cols, [&](const Rational& x) {
        std::vector<std::int64_t> row;
        for (std::size_t j = 0; j < k; ++j) row.push_back(quantize(sq(x, km->centers[j][f]), q, aw));
        return row;
      }));
    }
    for (std::size_t j = 0; j < k; ++j) {
      SumSpec s{"dist" + std::to_string(j), {}, false, sum_width(o, F)};
      for (std::size_t f = 0; f < F; ++f) s.addends.push_back("sq" + std::to_string(j) + "_" + m.features[f].name);
      c.sums.push_back(std::move(s));
    }
  } else {
    auto doms = value_domains(m, o, false);
    auto keys = joint_keys(p, m, doms, o.max_table_entries);
    for (std::size_t j = 0; j < k; ++j) {
      std::vector<std::vector<Rational>> part(F);
      for (std::size_t f = 0; f < F; ++f)
        for (std::uint64_t cde = 0; cde < doms[f].size(); ++cde) part[f].push_back(sq(doms[f].rep(cde), km->centers[j][f]));
      std::string field = "s" + std::to_string(j);
      TableDef t = joint_table("class" + std::to_string(j), TableRole::class_score, keys, {field, aw, true});
      for_each_tuple(doms, [&](const std::vector<std::uint64_t>& codes) {
        Rational v = 0;
        for (std::size_t f = 0; f < F; ++f) v += part[f][codes[f]];
        t.entries.push_back(joint_entry(codes, quantize(v, q, aw)));
      });
      p.tables.push_back(std::move(t));
      c.sums.push_back({"dist" + std::to_string(j), {field}, false, aw});
    }
  }
  finish(p);
  return p;
}

PipelineProgram compile(const Model& m, const CompileOptions& o) {
  switch (m.type()) {
    case ModelType::tree: return compile_tree(m, o);
    case ModelType::forest:
    case ModelType::xgboost:
    case ModelType::isolation_forest: return compile_ensemble(m, o);
    case ModelType::svm: return compile_svm(m, o);
    case ModelType::nb: return compile_nb(m, o);
    case ModelType::kmeans: return compile_kmeans(m, o);
  }
  throw ArgumentError("unknown model type");
}

}  // namespace inml
