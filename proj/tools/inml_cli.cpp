// inml command-line front end. Talks to the library only through inml.h.

#include "inml/inml.h"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Failure {
  int code;
  std::string message;
};

void check(int rc) {
  if (rc != INML_OK) throw Failure{rc, inml_last_error()};
}

std::string take(char* s) {
  std::string out = s ? s : "";
  inml_string_free(s);
  return out;
}

template <class T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using Model = std::unique_ptr<inml_model, Deleter<inml_model, inml_model_free>>;
using Program = std::unique_ptr<inml_program, Deleter<inml_program, inml_program_free>>;
using Profile = std::unique_ptr<inml_profile, Deleter<inml_profile, inml_profile_free>>;
using Data = std::unique_ptr<inml_dataset, Deleter<inml_dataset, inml_dataset_free>>;

struct Global {
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  std::string profile;
  int threads = 0;
};

// All files land or none do: everything is staged next to its target first.
void write_all(const std::vector<std::pair<fs::path, std::string>>& files) {
  std::vector<std::pair<fs::path, fs::path>> staged;
  auto cleanup = [&] {
    for (auto& [tmp, dst] : staged) fs::remove(tmp);
  };
  for (auto& [path, body] : files) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp." + std::to_string(::getpid());
    std::ofstream f(tmp, std::ios::binary);
    f << body;
    f.close();
    if (!f) {
      fs::remove(tmp);
      cleanup();
      throw Failure{INML_EIO, "cannot write " + path.string()};
    }
    staged.emplace_back(tmp, path);
  }
  for (auto& [tmp, dst] : staged) fs::rename(tmp, dst);
}

Model load_model(const std::string& path) {
  inml_model* m = nullptr;
  check(inml_model_load(path.c_str(), &m));
  return Model(m);
}

Program load_program(const std::string& dir) {
  inml_program* p = nullptr;
  check(inml_program_load((fs::path(dir) / "program.json").c_str(), (fs::path(dir) / "entries.json").c_str(), &p));
  return Program(p);
}

Profile load_profile(const Global& g) {
  inml_profile* p = nullptr;
  std::string path = g.profile;
  if (path.empty())
    if (const char* env = std::getenv("INML_PROFILE")) path = env;
  if (path.empty())
    check(inml_profile_default(&p));
  else
    check(inml_profile_load(path.c_str(), &p));
  return Profile(p);
}

Data load_data(const std::string& path, const char* features_json, bool require_label) {
  inml_dataset* d = nullptr;
  check(inml_dataset_load_csv(path.c_str(), features_json, 0, require_label ? 1 : 0, &d));
  return Data(d);
}

fs::path out(const Global& g, const std::string& name) { return fs::path(g.out_dir) / name; }

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string data, kind = "tree", name = "model.json", bootstrap = "1";
  int max_depth = 8, max_leaf_nodes = 0, n_trees = 10, max_features = 0, k = 2, max_iters = 100;
};

int cmd_train(const Global& g, const TrainArgs& a) {
  Data d = load_data(a.data, nullptr, true);
  json p{{"max_depth", a.max_depth}, {"max_leaf_nodes", a.max_leaf_nodes}, {"n_trees", a.n_trees},
         {"max_features", a.max_features}, {"bootstrap_fraction", a.bootstrap}, {"seed", g.seed},
         {"k", a.k}, {"max_iters", a.max_iters}};
  inml_model* raw = nullptr;
  check(inml_train(d.get(), a.kind.c_str(), p.dump().c_str(), &raw));
  Model m(raw);
  char* text = nullptr;
  check(inml_model_to_json(m.get(), &text));
  write_all({{out(g, a.name), take(text)}});
  std::cout << "trained " << a.kind << " on " << inml_dataset_size(d.get()) << " rows -> " << out(g, a.name).string()
            << "\n";
  return 0;
}

struct CompileArgs {
  std::string model, strategy = "per_feature", diff_dir;
  int frac_bits = 16, action_width = 32, confidence_bits = 8, bins = 0, code_bits = 0;
  bool exact = false, no_confidence = false;
  std::uint64_t max_table_entries = std::uint64_t{1} << 20;
};

std::string compile_options(const CompileArgs& a) {
  json o{{"frac_bits", a.frac_bits},   {"action_width", a.action_width}, {"confidence_bits", a.confidence_bits},
         {"bins", a.bins},             {"strategy", a.strategy},         {"ternary", !a.exact},
         {"code_bits", a.code_bits},   {"emit_confidence", !a.no_confidence},
         {"max_table_entries", a.max_table_entries}};
  return o.dump();
}

int cmd_compile(const Global& g, const CompileArgs& a) {
  Model m = load_model(a.model);
  Profile prof = load_profile(g);
  inml_program* raw = nullptr;
  check(inml_compile(m.get(), compile_options(a).c_str(), &raw));
  Program p(raw);
  char *rt = nullptr, *rj = nullptr;
  check(inml_report(p.get(), prof.get(), 0, &rt));
  std::string report_text = take(rt);
  check(inml_report(p.get(), prof.get(), 1, &rj));
  std::string report_json = take(rj);

  if (!a.diff_dir.empty()) {
    Program old = load_program(a.diff_dir);
    char* d = nullptr;
    check(inml_diff(old.get(), p.get(), &d));
    write_all({{out(g, "diff.json"), take(d)}});
    std::cout << "wrote " << out(g, "diff.json").string() << "\n";
    return 0;
  }
  char *pj = nullptr, *ej = nullptr;
  check(inml_program_to_json(p.get(), &pj, &ej));
  std::string program = take(pj), entries = take(ej);
  write_all({{out(g, "program.json"), program},
             {out(g, "entries.json"), entries},
             {out(g, "report.txt"), report_text},
             {out(g, "report.json"), report_json}});
  std::cout << report_text;
  return 0;
}

struct UpdateArgs {
  std::string program, model;
};

int cmd_update(const Global& g, const UpdateArgs& a) {
  Program old = load_program(a.program);
  Model m = load_model(a.model);
  auto t0 = std::chrono::steady_clock::now();
  char* d = nullptr;
  inml_program* raw = nullptr;
  check(inml_update(old.get(), m.get(), &d, &raw));
  double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  Program next(raw);
  std::string diff = take(d);
  char *pj = nullptr, *ej = nullptr;
  check(inml_program_to_json(next.get(), &pj, &ej));
  take(pj);
  json timing{{"schema", 1}, {"diff_ms", ms}};
  write_all({{out(g, "diff.json"), diff}, {out(g, "entries.json"), take(ej)}, {out(g, "update_timing.json"), timing.dump(2)}});
  json dj = json::parse(diff);
  std::cout << "diff: " << dj["tables"].size() << " table(s), " << dj["changes"] << " change(s), computed in " << ms
            << " ms\n";
  return 0;
}

int cmd_place(const Global& g, const std::string& dir) {
  Program p = load_program(dir);
  Profile prof = load_profile(g);
  char* s = nullptr;
  check(inml_place(p.get(), prof.get(), &s));
  std::string doc = take(s);
  write_all({{out(g, "placement.json"), doc}});
  std::cout << doc << "\n";
  return 0;
}

int cmd_report(const Global& g, const std::string& dir, bool as_json) {
  Program p = load_program(dir);
  Profile prof = load_profile(g);
  char* s = nullptr;
  check(inml_report(p.get(), prof.get(), as_json ? 1 : 0, &s));
  std::cout << take(s);
  if (as_json) std::cout << "\n";
  return 0;
}

int cmd_run(const Global& g, const std::string& dir, const std::string& input) {
  Program p = load_program(dir);
  Data d = load_data(input, nullptr, false);
  char* s = nullptr;
  check(inml_run_batch(p.get(), d.get(), g.threads, &s));
  write_all({{out(g, "predictions.csv"), take(s)}});
  std::cout << "classified " << inml_dataset_size(d.get()) << " rows -> " << out(g, "predictions.csv").string() << "\n";
  return 0;
}

struct CheckArgs {
  std::string program, model;
  std::uint64_t samples = 0;
};

int cmd_check(const Global& g, const CheckArgs& a) {
  Program p = load_program(a.program);
  Model m = load_model(a.model);
  json o{{"seed", g.seed}, {"threads", g.threads}};
  if (a.samples > 0) {
    o["exhaustive"] = false;
    o["samples"] = a.samples;
  }
  char* s = nullptr;
  check(inml_check(m.get(), p.get(), o.dump().c_str(), &s));
  std::string doc = take(s);
  write_all({{out(g, "check.json"), doc}});
  json r = json::parse(doc);
  std::cout << r["mode"].get<std::string>() << ": " << r["inputs"] << " inputs, " << r["mismatches"] << " mismatches ("
            << r["tie_mismatches"] << " on ties)\n";
  return 0;
}

struct HybridArgs {
  std::string program, small, large, data, thetas = "0,0.5,0.6,0.7,0.8,0.9,1", rule = "all_classes";
  std::vector<int> accept;
  int confidence_bits = 0;
};

int cmd_hybrid(const Global& g, const HybridArgs& a) {
  Program p = load_program(a.program);
  Model small = load_model(a.small), large = load_model(a.large);
  Data d = load_data(a.data, nullptr, true);
  Profile prof = load_profile(g);
  json cfg{{"rule", a.rule}, {"accept_classes", a.accept}, {"threads", g.threads}};
  json th = json::array();
  std::stringstream ss(a.thetas);
  for (std::string t; std::getline(ss, t, ',');)
    if (!t.empty()) th.push_back(t);
  cfg["thetas"] = th;
  if (a.confidence_bits > 0) cfg["confidence_bits"] = a.confidence_bits;
  char *rj = nullptr, *csv = nullptr;
  check(inml_hybrid(p.get(), small.get(), large.get(), d.get(), prof.get(), cfg.dump().c_str(), &rj, &csv));
  std::string curve = take(csv);
  write_all({{out(g, "hybrid.json"), take(rj)}, {out(g, "curve.csv"), curve}});
  std::cout << curve;
  return 0;
}

int cmd_bench(const Global& g, const std::string& dir, const std::string& input, int repeat) {
  Program p = load_program(dir);
  Profile prof = load_profile(g);
  Data d = load_data(input, nullptr, false);
  char* s = nullptr;
  check(inml_bench(p.get(), d.get(), prof.get(), repeat, g.threads, &s));
  std::string doc = take(s);
  write_all({{out(g, "bench.json"), doc}});
  std::cout << doc << "\n";
  return 0;
}

struct ExtractArgs {
  std::string trace, spec;
  std::size_t capacity = 1024;
  std::vector<std::uint64_t> edges{1'000'000, 10'000'000};
  bool collisions = false;
};

int cmd_extract(const Global& g, const ExtractArgs& a) {
  json cfg{{"capacity", a.capacity}, {"jitter_edges_ns", a.edges}, {"track_collisions", a.collisions}};
  char *csv = nullptr, *sum = nullptr;
  check(inml_extract(a.trace.c_str(), a.spec.c_str(), cfg.dump().c_str(), &csv, &sum));
  std::string summary = take(sum);
  write_all({{out(g, "features.csv"), take(csv)}, {out(g, "extract.json"), summary}});
  std::cout << summary << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"inml: compile classification models into match-action pipeline programs"};
  app.set_config("--config", "", "TOML/INI file with option values (sections per subcommand)");
  app.require_subcommand(1);
  Global g;
  app.add_option("--out", g.out_dir, "Output directory")->capture_default_str();
  app.add_option("--seed", g.seed, "Seed for every random choice")->capture_default_str();
  app.add_option("--profile", g.profile, "Resource profile JSON (default: $INML_PROFILE, else generic-12)");
  app.add_option("--threads", g.threads, "Worker threads (0 = hardware)")->capture_default_str();

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a model from a labeled CSV");
  train->add_option("--data", ta.data, "Labeled CSV")->required();
  train->add_option("--kind", ta.kind, "tree | forest | nb | kmeans")
      ->check(CLI::IsMember({"tree", "forest", "nb", "kmeans"}))
      ->capture_default_str();
  train->add_option("--max-depth", ta.max_depth)->capture_default_str();
  train->add_option("--max-leaf-nodes", ta.max_leaf_nodes)->capture_default_str();
  train->add_option("--n-trees", ta.n_trees)->capture_default_str();
  train->add_option("--max-features", ta.max_features)->capture_default_str();
  train->add_option("--bootstrap-fraction", ta.bootstrap)->capture_default_str();
  train->add_option("--k", ta.k, "K-Means cluster count")->capture_default_str();
  train->add_option("--max-iters", ta.max_iters)->capture_default_str();
  train->add_option("--name", ta.name, "Output file name")->capture_default_str();

  CompileArgs ca;
  auto* compile = app.add_subcommand("compile", "Compile a model into program.json + entries.json");
  compile->add_option("--model", ca.model)->required();
  compile->add_option("--strategy", ca.strategy, "per_feature | per_class | per_hyperplane")
      ->check(CLI::IsMember({"per_feature", "per_class", "per_hyperplane"}))
      ->capture_default_str();
  compile->add_option("--frac-bits", ca.frac_bits)->capture_default_str();
  compile->add_option("--action-width", ca.action_width)->capture_default_str();
  compile->add_option("--confidence-bits", ca.confidence_bits)->capture_default_str();
  compile->add_option("--bins", ca.bins)->capture_default_str();
  compile->add_option("--code-bits", ca.code_bits, "Fixed code width per feature (keeps the shape stable)")
      ->capture_default_str();
  compile->add_option("--max-table-entries", ca.max_table_entries)->capture_default_str();
  compile->add_flag("--exact", ca.exact, "Exact-match classification tables instead of ternary");
  compile->add_flag("--no-confidence", ca.no_confidence);
  compile->add_option("--diff", ca.diff_dir, "Directory of a previous program; write diff.json only");

  UpdateArgs ua;
  auto* update = app.add_subcommand("update", "Diff a retrained model against a deployed program");
  update->add_option("--program", ua.program, "Program directory")->required();
  update->add_option("--model", ua.model)->required();

  std::string prog_dir, input;
  bool as_json = false;
  auto* place = app.add_subcommand("place", "Place a program on a resource profile");
  place->add_option("--program", prog_dir, "Program directory")->required();
  auto* report = app.add_subcommand("report", "Print the resource report");
  report->add_option("--program", prog_dir, "Program directory")->required();
  report->add_flag("--json", as_json);
  auto* run = app.add_subcommand("run", "Classify a CSV of feature vectors");
  run->add_option("--program", prog_dir, "Program directory")->required();
  run->add_option("--input", input, "CSV with one column per program feature")->required();

  CheckArgs ka;
  auto* chk = app.add_subcommand("check", "Compare a program against its model");
  chk->add_option("--program", ka.program, "Program directory")->required();
  chk->add_option("--model", ka.model)->required();
  chk->add_option("--samples", ka.samples, "Sampled mode with this many inputs (0 = exhaustive)");

  HybridArgs ha;
  auto* hybrid = app.add_subcommand("hybrid", "Sweep confidence thresholds for small/large routing");
  hybrid->add_option("--program", ha.program, "Small program directory")->required();
  hybrid->add_option("--small", ha.small, "Small model file")->required();
  hybrid->add_option("--large", ha.large, "Large model file")->required();
  hybrid->add_option("--data", ha.data, "Labeled CSV")->required();
  hybrid->add_option("--thetas", ha.thetas, "Comma-separated sorted thresholds")->capture_default_str();
  hybrid->add_option("--rule", ha.rule)->check(CLI::IsMember({"all_classes", "only_class_set"}))->capture_default_str();
  hybrid->add_option("--accept", ha.accept, "Classes accepted on the switch (only_class_set)");
  hybrid->add_option("--confidence-bits", ha.confidence_bits);

  int repeat = 1;
  auto* bench = app.add_subcommand("bench", "Emulator throughput and program size");
  bench->add_option("--program", prog_dir, "Program directory")->required();
  bench->add_option("--input", input, "CSV of feature vectors")->required();
  bench->add_option("--repeat", repeat)->capture_default_str();

  ExtractArgs ea;
  auto* extract = app.add_subcommand("extract", "Replay a packet trace into feature vectors");
  extract->add_option("--trace", ea.trace)->required();
  extract->add_option("--spec", ea.spec, "Feature-spec JSON")->required();
  extract->add_option("--capacity", ea.capacity)->capture_default_str();
  extract->add_option("--jitter-edges", ea.edges, "Jitter bin edges in ns");
  extract->add_flag("--track-collisions", ea.collisions);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : INML_EARGUMENT;
  }

  try {
    if (*train) return cmd_train(g, ta);
    if (*compile) return cmd_compile(g, ca);
    if (*update) return cmd_update(g, ua);
    if (*place) return cmd_place(g, prog_dir);
    if (*report) return cmd_report(g, prog_dir, as_json);
    if (*run) return cmd_run(g, prog_dir, input);
    if (*chk) return cmd_check(g, ka);
    if (*hybrid) return cmd_hybrid(g, ha);
    if (*bench) return cmd_bench(g, prog_dir, input, repeat);
    if (*extract) return cmd_extract(g, ea);
  } catch (const Failure& f) {
    std::cerr << "error: " << inml_error_name(f.code) << ": " << f.message << "\n";
    return f.code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return INML_EINTERNAL;
  }
  return 0;
}
