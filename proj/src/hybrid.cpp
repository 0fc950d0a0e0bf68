#include "inml/hybrid.hpp"

#include "inml/error.hpp"
#include "json_util.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace inml {

using detail::json;

namespace {

std::int64_t conf_units(const Real& c, int bits) {
  Real scaled = boost::multiprecision::floor(boost::multiprecision::ldexp(c, bits));
  return static_cast<std::int64_t>(scaled);
}

std::int64_t theta_units(const Rational& t, int bits) {
  return to_i64(floor(Rational(t * pow2(static_cast<unsigned>(bits)))));
}

bool class_accepted(int c, const HybridConfig& cfg) {
  if (cfg.rule == AcceptRule::all_classes) return true;
  return std::find(cfg.accept_classes.begin(), cfg.accept_classes.end(), c) != cfg.accept_classes.end();
}

double ratio(std::uint64_t a, std::uint64_t b) { return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b); }

std::vector<FeatureVector> project(const Dataset& data, const std::vector<FeatureSpec>& want) {
  auto cols = feature_columns(want, data.features);
  std::vector<FeatureVector> out(data.size());
  for (std::size_t r = 0; r < data.size(); ++r) {
    out[r].resize(cols.size());
    for (std::size_t i = 0; i < cols.size(); ++i) {
      std::uint64_t v = data.x[r][cols[i]];
      if (v > want[i].max_value())
        throw FeatureError("row " + std::to_string(r) + ": value " + std::to_string(v) + " of '" + want[i].name +
                           "' exceeds width " + std::to_string(want[i].width_bits));
      out[r][i] = v;
    }
  }
  return out;
}

json metrics_json(const Metrics& m) {
  json pc = json::array();
  for (auto& c : m.per_class)
    pc.push_back({{"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}, {"support", c.support}});
  return {{"n", m.n},           {"accuracy", m.accuracy},       {"error", m.error},
          {"macro_f1", m.macro_f1}, {"positive_f1", m.positive_f1}, {"f1", m.f1},
          {"per_class", pc},    {"confusion", m.confusion}};
}

}  // namespace

RouteDecision route(const Prediction& small, const HybridConfig& cfg) {
  RouteDecision d;
  d.class_id = small.class_id;
  bool confident = conf_units(small.confidence, cfg.confidence_bits) >= theta_units(cfg.threshold, cfg.confidence_bits);
  d.kind = confident && class_accepted(small.class_id, cfg) ? RouteKind::accept : RouteKind::forward;
  return d;
}

Metrics compute_metrics(const std::vector<int>& truth, const std::vector<int>& pred, int k) {
  if (truth.size() != pred.size()) throw ArgumentError("metrics: length mismatch");
  Metrics m;
  m.n = truth.size();
  m.confusion.assign(k, std::vector<std::uint64_t>(k, 0));
  std::uint64_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= k || pred[i] < 0 || pred[i] >= k)
      throw LabelError("metrics: label out of range at row " + std::to_string(i));
    ++m.confusion[truth[i]][pred[i]];
    if (truth[i] == pred[i]) ++correct;
  }
  m.accuracy = ratio(correct, m.n);
  m.error = m.n == 0 ? 0.0 : 1.0 - m.accuracy;
  m.per_class.resize(k);
  double sum_f1 = 0;
  for (int c = 0; c < k; ++c) {
    std::uint64_t tp = m.confusion[c][c], predicted = 0, actual = 0;
    for (int o = 0; o < k; ++o) {
      predicted += m.confusion[o][c];
      actual += m.confusion[c][o];
    }
    ClassMetrics& cm = m.per_class[c];
    cm.support = actual;
    cm.precision = ratio(tp, predicted);
    cm.recall = ratio(tp, actual);
    cm.f1 = cm.precision + cm.recall > 0 ? 2 * cm.precision * cm.recall / (cm.precision + cm.recall) : 0.0;
    sum_f1 += cm.f1;
  }
  m.macro_f1 = k > 0 ? sum_f1 / k : 0.0;
  m.positive_f1 = k == 2 ? m.per_class[1].f1 : 0.0;
  m.f1 = k == 2 ? m.positive_f1 : m.macro_f1;
  return m;
}

HybridInputs prepare_hybrid(const StagedProgram& small, const Model& small_model, const Model& large,
                            const Dataset& data, int threads) {
  if (data.empty()) throw EmptyDatasetError("hybrid: empty dataset");
  const int k = small.program.combine.n_classes;
  if (large.n_classes != k || small_model.n_classes != k)
    throw ArgumentError("hybrid: small pipeline, small model and large model disagree on class count");
  HybridInputs in;
  in.n_classes = k;
  for (int y : data.y) {
    if (y < 0 || y >= k) throw LabelError("hybrid: label " + std::to_string(y) + " outside 0.." + std::to_string(k - 1));
  }
  in.truth = data.y;
  Emulator emu(small);
  in.small_pipeline = emu.run_batch(project(data, small.program.features), threads);
  auto xs_small = project(data, small_model.features);
  auto xs_large = project(data, large.features);
  in.small_oracle.reserve(data.size());
  in.large.reserve(data.size());
  for (std::size_t r = 0; r < data.size(); ++r) {
    in.small_oracle.push_back(evaluate_direct(small_model, xs_small[r]));
    in.large.push_back(evaluate_direct(large, xs_large[r]));
  }
  return in;
}

HybridReport evaluate_hybrid(const HybridInputs& in, const HybridConfig& cfg) {
  if (cfg.confidence_bits < 1 || cfg.confidence_bits > 16) throw ArgumentError("hybrid: confidence_bits must be in 1..16");
  if (cfg.threshold < 0 || cfg.threshold > 1) throw ArgumentError("hybrid: threshold must be in [0, 1]");
  const std::size_t n = in.truth.size();
  HybridReport r;
  r.threshold = to_double(cfg.threshold);
  r.n = n;
  std::vector<int> sw(n), lg(n), hy(n);
  std::vector<int> acc_truth, acc_pred, fwd_truth, fwd_pred;
  std::uint64_t oracle_accepted = 0;
  Real sum_conf = 0, sum_oracle = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sw[i] = in.small_pipeline[i].class_id;
    lg[i] = in.large[i].class_id;
    RouteDecision d = route(in.small_pipeline[i], cfg);
    if (d.kind == RouteKind::accept) {
      hy[i] = d.class_id;
      acc_truth.push_back(in.truth[i]);
      acc_pred.push_back(d.class_id);
    } else {
      hy[i] = lg[i];
      fwd_truth.push_back(in.truth[i]);
      fwd_pred.push_back(lg[i]);
    }
    if (route(in.small_oracle[i], cfg).kind == RouteKind::accept) ++oracle_accepted;
    sum_conf += in.small_pipeline[i].confidence;
    sum_oracle += in.small_oracle[i].confidence;
  }
  r.n_accepted = acc_truth.size();
  r.n_forwarded = fwd_truth.size();
  r.offload_fraction = ratio(r.n_accepted, n);
  r.oracle_offload_fraction = ratio(oracle_accepted, n);
  if (n) {
    r.mean_switch_confidence = to_double(Real(sum_conf / n));
    r.mean_oracle_confidence = to_double(Real(sum_oracle / n));
  }
  r.switch_only = compute_metrics(in.truth, sw, in.n_classes);
  r.large_only = compute_metrics(in.truth, lg, in.n_classes);
  r.hybrid = compute_metrics(in.truth, hy, in.n_classes);
  r.switch_handled = compute_metrics(acc_truth, acc_pred, in.n_classes);
  r.forwarded_large = compute_metrics(fwd_truth, fwd_pred, in.n_classes);
  r.error_switch = r.switch_handled.error;
  r.error_hybrid = r.hybrid.error;
  r.error_large_on_forwarded = r.forwarded_large.error;
  return r;
}

std::vector<HybridReport> sweep_thresholds(const HybridInputs& in, const HybridConfig& base,
                                           const std::vector<Rational>& thetas) {
  std::vector<HybridReport> out;
  for (const Rational& t : thetas) {
    HybridConfig c = base;
    c.threshold = t;
    out.push_back(evaluate_hybrid(in, c));
  }
  return out;
}

std::string hybrid_json(const std::vector<HybridReport>& reports) {
  json arr = json::array();
  for (auto& r : reports) {
    arr.push_back({{"threshold", r.threshold},
                   {"n", r.n},
                   {"n_accepted", r.n_accepted},
                   {"n_forwarded", r.n_forwarded},
                   {"offload_fraction", r.offload_fraction},
                   {"oracle_offload_fraction", r.oracle_offload_fraction},
                   {"mean_switch_confidence", r.mean_switch_confidence},
                   {"mean_oracle_confidence", r.mean_oracle_confidence},
                   {"error_switch", r.error_switch},
                   {"error_hybrid", r.error_hybrid},
                   {"error_large_on_forwarded", r.error_large_on_forwarded},
                   {"switch_only", metrics_json(r.switch_only)},
                   {"large_only", metrics_json(r.large_only)},
                   {"hybrid", metrics_json(r.hybrid)},
                   {"switch_handled", metrics_json(r.switch_handled)},
                   {"forwarded_large", metrics_json(r.forwarded_large)}});
  }
  return json{{"schema", 1}, {"kind", "hybrid"}, {"sweep", arr}}.dump(2) + "\n";
}

std::string sweep_csv(const std::vector<HybridReport>& reports) {
  std::ostringstream os;
  os << "theta,offload,error_switch,error_hybrid,error_large_on_forwarded,n_switch,n_forwarded\n";
  char buf[256];
  for (auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%.6g,%.6f,%.6f,%.6f,%.6f,%llu,%llu\n", r.threshold, r.offload_fraction,
                  r.error_switch, r.error_hybrid, r.error_large_on_forwarded,
                  static_cast<unsigned long long>(r.n_accepted), static_cast<unsigned long long>(r.n_forwarded));
    os << buf;
  }
  return os.str();
}

}  // namespace inml
