#include "inml/inml.h"

#include "inml/dataset.hpp"
#include "inml/emulator.hpp"
#include "inml/error.hpp"
#include "inml/features.hpp"
#include "inml/hybrid.hpp"
#include "inml/mapper.hpp"
#include "inml/model.hpp"
#include "inml/pipeline.hpp"
#include "inml/program.hpp"
#include "inml/trainers.hpp"

#include "../io.hpp"
#include "../json_util.hpp"

#include <chrono>
#include <cstdlib>
#include <cstring>
#include <new>
#include <sstream>

struct inml_model {
  inml::Model m;
};
struct inml_program {
  inml::PipelineProgram p;
};
struct inml_profile {
  inml::ResourceProfile p;
};
struct inml_dataset {
  inml::Dataset d;
};

namespace {

using inml::detail::json;

thread_local std::string g_last_error;

template <class F>
int guard(F&& f) {
  try {
    f();
    g_last_error.clear();
    return INML_OK;
  } catch (const inml::PlacementError& e) {
    g_last_error = std::string(inml::placement_failure_name(e.reason())) + ": " + e.what();
    return static_cast<int>(e.code());
  } catch (const inml::Error& e) {
    g_last_error = e.what();
    return static_cast<int>(e.code());
  } catch (const json::exception& e) {
    g_last_error = std::string("json: ") + e.what();
    return INML_ESCHEMA;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return INML_EINTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return INML_EINTERNAL;
  }
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void need(const void* p, const char* what) {
  if (!p) throw inml::ArgumentError(std::string(what) + " is null");
}

json parse_opt(const char* text, const char* what) {
  if (!text || !*text) return json::object();
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw inml::SchemaError(std::string(what) + ": " + e.what());
  }
  if (!j.is_object()) throw inml::SchemaError(std::string(what) + ": expected an object");
  return j;
}

std::optional<std::vector<inml::FeatureSpec>> features_from(const char* text) {
  if (!text || !*text) return std::nullopt;
  json j = json::parse(text);
  if (!j.is_array()) throw inml::SchemaError("features: expected an array");
  std::vector<inml::FeatureSpec> out;
  for (std::size_t i = 0; i < j.size(); ++i)
    out.push_back(inml::detail::parse_feature_json(j[i], "features[" + std::to_string(i) + "]"));
  return out;
}

std::string features_to(const std::vector<inml::FeatureSpec>& fs) {
  json a = json::array();
  for (auto& f : fs) a.push_back(inml::detail::feature_to_json(f));
  return a.dump();
}

std::vector<inml::FeatureVector> project(const inml::Dataset& d, const std::vector<inml::FeatureSpec>& want) {
  auto cols = inml::feature_columns(want, d.features);
  std::vector<inml::FeatureVector> xs;
  xs.reserve(d.size());
  for (auto& row : d.x) {
    inml::FeatureVector v;
    for (auto c : cols) v.push_back(row[c]);
    xs.push_back(std::move(v));
  }
  return xs;
}

const inml::ResourceProfile& profile_or_default(const inml_profile* prof) {
  static const inml::ResourceProfile def = inml::default_profile();
  return prof ? prof->p : def;
}

std::string fmt_double(double v) {
  std::ostringstream o;
  o.precision(10);
  o << v;
  return o.str();
}

int int_or(const json& j, const char* key, int def) { return j.contains(key) ? j.at(key).get<int>() : def; }

}  // namespace

extern "C" {

const char* inml_version(void) { return "0.1.0"; }
const char* inml_last_error(void) { return g_last_error.c_str(); }
const char* inml_error_name(int code) { return inml::error_code_name(static_cast<inml::ErrorCode>(code)); }
void inml_string_free(char* s) { std::free(s); }

int inml_profile_default(inml_profile** out) {
  return guard([&] {
    need(out, "out");
    *out = new inml_profile{inml::default_profile()};
  });
}

int inml_profile_load(const char* path, inml_profile** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new inml_profile{inml::load_profile(path)};
  });
}

int inml_profile_parse(const char* text, inml_profile** out) {
  return guard([&] {
    need(text, "json");
    need(out, "out");
    *out = new inml_profile{inml::parse_profile_json(text)};
  });
}

int inml_profile_to_json(const inml_profile* p, char** out) {
  return guard([&] {
    need(p, "profile");
    need(out, "out");
    *out = dup(inml::emit_profile_json(p->p));
  });
}

void inml_profile_free(inml_profile* p) { delete p; }

int inml_dataset_load_csv(const char* path, const char* features_json, int n_classes, int require_label,
                          inml_dataset** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    std::optional<int> k;
    if (n_classes > 0) k = n_classes;
    *out = new inml_dataset{inml::load_dataset_csv(path, features_from(features_json), k, require_label != 0)};
  });
}

int inml_dataset_parse_csv(const char* text, const char* features_json, int n_classes, int require_label,
                           inml_dataset** out) {
  return guard([&] {
    need(text, "text");
    need(out, "out");
    std::optional<int> k;
    if (n_classes > 0) k = n_classes;
    *out = new inml_dataset{inml::parse_dataset_csv(text, features_from(features_json), k, require_label != 0)};
  });
}

size_t inml_dataset_size(const inml_dataset* d) { return d ? d->d.size() : 0; }
void inml_dataset_free(inml_dataset* d) { delete d; }

int inml_model_load(const char* path, inml_model** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new inml_model{inml::load_model(path)};
  });
}

int inml_model_parse(const char* text, inml_model** out) {
  return guard([&] {
    need(text, "text");
    need(out, "out");
    *out = new inml_model{inml::parse_model_file(text)};
  });
}

int inml_model_to_json(const inml_model* m, char** out) {
  return guard([&] {
    need(m, "model");
    need(out, "out");
    *out = dup(inml::emit_model_file(m->m));
  });
}

int inml_model_features_json(const inml_model* m, char** out) {
  return guard([&] {
    need(m, "model");
    need(out, "out");
    *out = dup(features_to(m->m.features));
  });
}

int inml_model_validate(const inml_model* m, char** report_json) {
  return guard([&] {
    need(m, "model");
    need(report_json, "out");
    inml::ValidationReport r = inml::validate_model(m->m);
    json issues = json::array();
    for (auto& i : r.violations) issues.push_back({{"code", i.code}, {"message", i.message}});
    *report_json = dup(json{{"ok", r.ok()}, {"issues", issues}}.dump(2));
  });
}

int inml_model_predict(const inml_model* m, const uint64_t* x, size_t n, int* class_id, double* confidence) {
  return guard([&] {
    need(m, "model");
    if (n) need(x, "x");
    inml::Prediction p = inml::evaluate_direct(m->m, std::span<const std::uint64_t>(x, n));
    if (class_id) *class_id = p.class_id;
    if (confidence) *confidence = p.confidence.convert_to<double>();
  });
}

void inml_model_free(inml_model* m) { delete m; }

int inml_train(const inml_dataset* data, const char* kind, const char* params_json, inml_model** out) {
  return guard([&] {
    need(data, "dataset");
    need(kind, "kind");
    need(out, "out");
    json j = parse_opt(params_json, "train params");
    inml::TrainParams p;
    p.max_depth = int_or(j, "max_depth", p.max_depth);
    p.max_leaf_nodes = int_or(j, "max_leaf_nodes", p.max_leaf_nodes);
    p.n_trees = int_or(j, "n_trees", p.n_trees);
    p.max_features = int_or(j, "max_features", p.max_features);
    if (j.contains("bootstrap_fraction"))
      p.bootstrap_fraction = inml::detail::get_rational(j["bootstrap_fraction"], "bootstrap_fraction");
    if (j.contains("seed")) p.rng_seed = inml::detail::get_uint(j["seed"], "seed");
    inml::validate_params(p);
    const std::string k = kind;
    inml::ModelBody body;
    if (k == "tree")
      body = inml::train_decision_tree(data->d, p);
    else if (k == "forest")
      body = inml::train_random_forest(data->d, p);
    else if (k == "nb")
      body = inml::train_gaussian_nb(data->d);
    else if (k == "kmeans")
      body = inml::train_kmeans(data->d, int_or(j, "k", 2), p.rng_seed, int_or(j, "max_iters", 100));
    else
      throw inml::ArgumentError("unknown model kind '" + k + "' (tree, forest, nb, kmeans)");
    inml::Model m = inml::make_model(data->d, std::move(body));
    auto report = inml::validate_model(m);
    if (!report.ok()) throw inml::DomainError("trained model failed validation: " + report.violations.front().message);
    *out = new inml_model{std::move(m)};
  });
}

int inml_compile(const inml_model* m, const char* options_json, inml_program** out) {
  return guard([&] {
    need(m, "model");
    need(out, "out");
    inml::CompileOptions o;
    if (options_json && *options_json) o = inml::options_from_json(options_json);
    *out = new inml_program{inml::compile(m->m, o)};
  });
}

int inml_program_load(const char* program_path, const char* entries_path, inml_program** out) {
  return guard([&] {
    need(program_path, "program path");
    need(entries_path, "entries path");
    need(out, "out");
    *out = new inml_program{inml::load_program(program_path, entries_path)};
  });
}

int inml_program_parse(const char* program_json, const char* entries_json, inml_program** out) {
  return guard([&] {
    need(program_json, "program json");
    need(entries_json, "entries json");
    need(out, "out");
    *out = new inml_program{inml::parse_program(program_json, entries_json)};
  });
}

int inml_program_to_json(const inml_program* p, char** program_json, char** entries_json) {
  return guard([&] {
    need(p, "program");
    need(program_json, "out");
    need(entries_json, "out");
    std::string a = inml::emit_program_json(p->p), b = inml::emit_entries_json(p->p);
    char* pa = dup(a);
    try {
      *entries_json = dup(b);
    } catch (...) {
      std::free(pa);
      throw;
    }
    *program_json = pa;
  });
}

int inml_program_shape_hash(const inml_program* p, char** out) {
  return guard([&] {
    need(p, "program");
    need(out, "out");
    *out = dup(p->p.shape_hash());
  });
}

int inml_program_features_json(const inml_program* p, char** out) {
  return guard([&] {
    need(p, "program");
    need(out, "out");
    *out = dup(features_to(p->p.features));
  });
}

void inml_program_free(inml_program* p) { delete p; }

int inml_place(const inml_program* p, const inml_profile* prof, char** placement_json) {
  return guard([&] {
    need(p, "program");
    need(placement_json, "out");
    inml::StagedProgram s = inml::place_stages(p->p, profile_or_default(prof));
    json tables = json::array();
    for (std::size_t t = 0; t < s.program.tables.size(); ++t)
      tables.push_back({{"name", s.program.tables[t].name}, {"stage", s.table_stage[t]}, {"level", s.table_level[t]}});
    json steps = json::array();
    for (auto& c : s.combine_steps)
      steps.push_back({{"stage", c.stage}, {"kind", inml::step_kind_name(c.kind)}, {"ops", c.ops}});
    json doc{{"schema", 1},
             {"profile", profile_or_default(prof).name},
             {"stages_used", s.stages_used},
             {"dependency_layers", s.dependency_layers},
             {"tables", tables},
             {"combine_steps", steps}};
    *placement_json = dup(doc.dump(2));
  });
}

int inml_report(const inml_program* p, const inml_profile* prof, int as_json, char** out) {
  return guard([&] {
    need(p, "program");
    need(out, "out");
    const auto& pr = profile_or_default(prof);
    inml::ResourceReport r = inml::resource_report(inml::place_stages(p->p, pr), pr);
    *out = dup(as_json ? inml::report_json(r) : inml::report_text(r));
  });
}

int inml_run(const inml_program* p, const uint64_t* x, size_t n, int* class_id, double* confidence) {
  return guard([&] {
    need(p, "program");
    if (n) need(x, "x");
    inml::Emulator emu(p->p);
    inml::Prediction r = emu.run(std::span<const std::uint64_t>(x, n));
    if (class_id) *class_id = r.class_id;
    if (confidence) *confidence = r.confidence.convert_to<double>();
  });
}

int inml_run_batch(const inml_program* p, const inml_dataset* data, int threads, char** csv) {
  return guard([&] {
    need(p, "program");
    need(data, "dataset");
    need(csv, "out");
    inml::Emulator emu(p->p);
    auto preds = emu.run_batch(project(data->d, p->p.features), threads);
    std::string s = "class,confidence\n";
    for (auto& r : preds) s += std::to_string(r.class_id) + "," + fmt_double(r.confidence.convert_to<double>()) + "\n";
    *csv = dup(s);
  });
}

int inml_check(const inml_model* m, const inml_program* p, const char* options_json, char** report_json) {
  return guard([&] {
    need(m, "model");
    need(p, "program");
    need(report_json, "out");
    json j = parse_opt(options_json, "check options");
    inml::EquivalenceOptions o;
    if (j.contains("exhaustive")) o.exhaustive = j["exhaustive"].get<bool>();
    if (j.contains("samples")) o.samples = j["samples"].get<std::uint64_t>();
    if (j.contains("seed")) o.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("domain_guard")) o.domain_guard = j["domain_guard"].get<std::uint64_t>();
    o.threads = int_or(j, "threads", o.threads);
    inml::StagedProgram s = inml::place_stages(p->p, inml::unbounded_profile());
    *report_json = dup(inml::equivalence_json(inml::check_equivalence(m->m, s, o)));
  });
}

int inml_diff(const inml_program* old_p, const inml_program* new_p, char** diff_json) {
  return guard([&] {
    need(old_p, "old program");
    need(new_p, "new program");
    need(diff_json, "out");
    *diff_json = dup(inml::emit_diff_json(inml::diff_entries(old_p->p, new_p->p)));
  });
}

int inml_apply_diff(const inml_program* old_p, const char* diff_json, inml_program** out) {
  return guard([&] {
    need(old_p, "program");
    need(diff_json, "diff");
    need(out, "out");
    *out = new inml_program{inml::apply_diff(old_p->p, inml::parse_diff_json(diff_json))};
  });
}

int inml_update(const inml_program* old_p, const inml_model* m, char** diff_json, inml_program** out) {
  return guard([&] {
    need(old_p, "program");
    need(m, "model");
    need(diff_json, "out");
    need(out, "out");
    inml::CompileOptions o;
    if (!old_p->p.options_json.empty()) o = inml::options_from_json(old_p->p.options_json);
    inml::PipelineProgram next = inml::compile(m->m, o);
    if (next.shape_hash() != old_p->p.shape_hash())
      throw inml::ShapeMismatchError("new model changes the program schema (shape " + old_p->p.shape_hash() + " -> " +
                                     next.shape_hash() + "); run a full compile");
    inml::EntryDiff d = inml::diff_entries(old_p->p, next);
    inml::PipelineProgram applied = inml::apply_diff(old_p->p, d);
    char* s = dup(inml::emit_diff_json(d));
    *out = new inml_program{std::move(applied)};
    *diff_json = s;
  });
}

int inml_hybrid(const inml_program* small_p, const inml_model* small_m, const inml_model* large_m,
                const inml_dataset* data, const inml_profile* prof, const char* config_json, char** report_json,
                char** curve_csv) {
  return guard([&] {
    need(small_p, "small program");
    need(small_m, "small model");
    need(large_m, "large model");
    need(data, "dataset");
    need(report_json, "out");
    need(curve_csv, "out");
    json j = parse_opt(config_json, "hybrid config");
    inml::HybridConfig base;
    std::vector<inml::Rational> thetas;
    if (j.contains("thetas")) {
      for (std::size_t i = 0; i < j["thetas"].size(); ++i)
        thetas.push_back(inml::detail::get_rational(j["thetas"][i], "thetas[" + std::to_string(i) + "]"));
    } else {
      thetas = {0, inml::Rational(1, 2), inml::Rational(6, 10), inml::Rational(7, 10), inml::Rational(8, 10),
                inml::Rational(9, 10), 1};
    }
    if (thetas.empty()) throw inml::ArgumentError("hybrid: empty threshold list");
    for (std::size_t i = 1; i < thetas.size(); ++i)
      if (thetas[i] < thetas[i - 1]) throw inml::ArgumentError("hybrid: thresholds must be sorted");
    if (j.contains("rule")) {
      std::string r = j["rule"].get<std::string>();
      if (r == "all_classes")
        base.rule = inml::AcceptRule::all_classes;
      else if (r == "only_class_set")
        base.rule = inml::AcceptRule::only_class_set;
      else
        throw inml::ArgumentError("hybrid: unknown rule '" + r + "'");
    }
    if (j.contains("accept_classes")) base.accept_classes = j["accept_classes"].get<std::vector<int>>();
    base.confidence_bits = int_or(j, "confidence_bits", small_p->p.combine.confidence_bits);
    inml::StagedProgram s = inml::place_stages(small_p->p, profile_or_default(prof));
    inml::HybridInputs in = inml::prepare_hybrid(s, small_m->m, large_m->m, data->d, int_or(j, "threads", 0));
    auto reports = inml::sweep_thresholds(in, base, thetas);
    char* a = dup(inml::hybrid_json(reports));
    try {
      *curve_csv = dup(inml::sweep_csv(reports));
    } catch (...) {
      std::free(a);
      throw;
    }
    *report_json = a;
  });
}

int inml_bench(const inml_program* p, const inml_dataset* data, const inml_profile* prof, int repeat, int threads,
               char** report_json) {
  return guard([&] {
    need(p, "program");
    need(data, "dataset");
    need(report_json, "out");
    if (repeat < 1) throw inml::ArgumentError("bench: repeat must be at least 1");
    const auto& pr = profile_or_default(prof);
    inml::StagedProgram s = inml::place_stages(p->p, pr);
    inml::ResourceReport rep = inml::resource_report(s, pr);
    inml::Emulator emu(s);
    auto xs = project(data->d, p->p.features);
    std::uint32_t digest = 2166136261u;
    std::vector<inml::Prediction> out;
    auto t0 = std::chrono::steady_clock::now();
    for (int r = 0; r < repeat; ++r) out = emu.run_batch(xs, threads);
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    for (auto& o : out) {
      digest ^= static_cast<std::uint32_t>(o.class_id);
      digest *= 16777619u;
    }
    std::uint64_t records = static_cast<std::uint64_t>(xs.size()) * static_cast<std::uint64_t>(repeat);
    char hex[9];
    std::snprintf(hex, sizeof hex, "%08x", digest);
    json doc{{"schema", 1},
             {"records", records},
             {"rows", xs.size()},
             {"repeat", repeat},
             {"seconds", secs},
             {"records_per_sec", secs > 0 ? static_cast<double>(records) / secs : 0.0},
             {"output_digest", hex},
             {"stages_used", rep.stages_used},
             {"total_entries", rep.total_entries},
             {"sram_bits", rep.sram_bits},
             {"tcam_entries", rep.tcam_entries},
             {"metadata_bits", rep.metadata_bits}};
    *report_json = dup(doc.dump(2));
  });
}

int inml_extract(const char* trace_path, const char* spec_path, const char* flow_json, char** csv,
                 char** summary_json) {
  return guard([&] {
    need(trace_path, "trace path");
    need(spec_path, "spec path");
    need(csv, "out");
    need(summary_json, "out");
    json j = parse_opt(flow_json, "flow config");
    inml::FlowConfig cfg;
    if (j.contains("capacity")) cfg.capacity = j["capacity"].get<std::size_t>();
    if (j.contains("jitter_edges_ns")) cfg.jitter_edges_ns = j["jitter_edges_ns"].get<std::vector<std::uint64_t>>();
    if (j.contains("track_collisions")) cfg.track_collisions = j["track_collisions"].get<bool>();
    auto spec = inml::load_feature_spec(spec_path);
    auto trace = inml::load_trace(trace_path);
    inml::TraceExtraction ex = inml::extract_trace(trace, spec, cfg);
    std::string s;
    for (std::size_t i = 0; i < spec.size(); ++i) s += (i ? "," : "") + spec[i].spec.name;
    s += "\n";
    std::uint64_t saturated = 0;
    for (auto& v : ex.vectors) {
      for (std::size_t i = 0; i < v.values.size(); ++i) {
        s += (i ? "," : "") + std::to_string(v.values[i]);
        saturated += v.saturated[i];
      }
      s += "\n";
    }
    json doc{{"schema", 1},
             {"packets", trace.size()},
             {"flows", ex.flows.size()},
             {"jitter_memory_entries", ex.jitter_memory_entries},
             {"evictions", ex.evictions},
             {"collisions", ex.collisions},
             {"saturated_values", saturated}};
    char* a = dup(s);
    try {
      *summary_json = dup(doc.dump(2));
    } catch (...) {
      std::free(a);
      throw;
    }
    *csv = a;
  });
}

}  // extern "C"
