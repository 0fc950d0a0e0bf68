#include "inml/model.hpp"

#include "inml/error.hpp"
#include "io.hpp"
#include "json_util.hpp"

#include <algorithm>
#include <boost/math/constants/constants.hpp>
#include <set>
#include <sstream>

namespace inml {

using detail::json;

int TreeModel::internal_count() const {
  return static_cast<int>(std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return !n.is_leaf; }));
}

const char* model_type_name(ModelType t) {
  switch (t) {
    case ModelType::tree: return "tree";
    case ModelType::forest: return "forest";
    case ModelType::xgboost: return "xgboost";
    case ModelType::isolation_forest: return "isolation_forest";
    case ModelType::svm: return "svm";
    case ModelType::nb: return "nb";
    case ModelType::kmeans: return "kmeans";
  }
  return "?";
}

ModelType model_type_from_name(std::string_view name) {
  for (auto t : {ModelType::tree, ModelType::forest, ModelType::xgboost, ModelType::isolation_forest,
                 ModelType::svm, ModelType::nb, ModelType::kmeans})
    if (name == model_type_name(t)) return t;
  throw SchemaError("unknown model_type '" + std::string(name) + "'");
}

ModelType Model::type() const {
  struct Visitor {
    ModelType operator()(const TreeModel&) const { return ModelType::tree; }
    ModelType operator()(const EnsembleModel& e) const {
      switch (e.mode) {
        case EnsembleMode::bagging: return ModelType::forest;
        case EnsembleMode::boosting: return ModelType::xgboost;
        case EnsembleMode::isolation: return ModelType::isolation_forest;
      }
      return ModelType::forest;
    }
    ModelType operator()(const SVMModel&) const { return ModelType::svm; }
    ModelType operator()(const NBModel&) const { return ModelType::nb; }
    ModelType operator()(const KMeansModel&) const { return ModelType::kmeans; }
  };
  return std::visit(Visitor{}, body);
}

bool ValidationReport::has(std::string_view code) const {
  return std::any_of(violations.begin(), violations.end(), [&](const Violation& v) { return v.code == code; });
}

// ---------------------------------------------------------------------------
// Validation

namespace {

struct Validator {
  const Model& model;
  ValidationReport report;

  void add(std::string code, std::string message) { report.violations.push_back({std::move(code), std::move(message)}); }

  int n_features() const { return static_cast<int>(model.features.size()); }

  void features() {
    std::set<std::string> names;
    for (int i = 0; i < n_features(); ++i) {
      const auto& f = model.features[i];
      if (f.index != i)
        add("FEATURE_INDEX", "feature '" + f.name + "' has index " + std::to_string(f.index) + ", expected " + std::to_string(i));
      if (f.width_bits < 1 || f.width_bits > 32)
        add("FEATURE_WIDTH", "feature '" + f.name + "' width " + std::to_string(f.width_bits) + " outside 1..32");
      if (!names.insert(f.name).second) add("FEATURE_NAME_DUPLICATE", "duplicate feature name '" + f.name + "'");
      if (f.kind == FeatureKind::fixed_point && f.scale <= 0)
        add("FEATURE_SCALE", "feature '" + f.name + "' has non-positive scale");
    }
    if (model.n_classes < 1) add("N_CLASSES", "n_classes must be >= 1");
  }

  void tree(const TreeModel& t, const std::string& where, EnsembleMode mode, bool in_ensemble) {
    const int n = static_cast<int>(t.nodes.size());
    if (n == 0) {
      add("TREE_EMPTY", where + ": no nodes");
      return;
    }
    if (t.root < 0 || t.root >= n) {
      add("TREE_BAD_ROOT", where + ": root index out of range");
      return;
    }
    std::vector<int> parents(n, 0);
    bool bad_child = false;
    for (int i = 0; i < n; ++i) {
      const auto& node = t.nodes[i];
      const std::string at = where + " node " + std::to_string(i);
      if (node.is_leaf) {
        bool needs_class = !in_ensemble || mode == EnsembleMode::bagging;
        if (needs_class && (node.class_id < 0 || node.class_id >= model.n_classes))
          add("LEAF_CLASS_RANGE", at + ": class " + std::to_string(node.class_id) + " outside [0, n_classes)");
        if (node.depth < 0) add("LEAF_DEPTH", at + ": negative leaf depth");
        if (node.confidence < 0 || node.confidence > 1) add("LEAF_CONFIDENCE", at + ": confidence outside [0,1]");
        continue;
      }
      if (node.feature < 0 || node.feature >= n_features()) {
        add("FEATURE_INDEX_RANGE", at + ": feature index " + std::to_string(node.feature) + " out of range");
      } else {
        const auto& f = model.features[node.feature];
        if (f.width_bits >= 1 && f.width_bits <= 32 &&
            (node.threshold < 0 || static_cast<std::uint64_t>(node.threshold) > f.max_value()))
          add("THRESHOLD_RANGE", at + ": threshold " + std::to_string(node.threshold) + " outside feature domain");
      }
      for (int c : {node.left, node.right}) {
        if (c < 0 || c >= n) {
          add("TREE_BAD_CHILD", at + ": child index " + std::to_string(c) + " out of range");
          bad_child = true;
        } else {
          ++parents[c];
        }
      }
    }
    if (bad_child) return;
    // Iterative DFS with colours; grey-on-stack revisit means a cycle.
    std::vector<int> colour(n, 0);
    std::vector<std::pair<int, int>> stack{{t.root, 0}};
    colour[t.root] = 1;
    bool cyclic = false;
    while (!stack.empty()) {
      auto& [node, step] = stack.back();
      const auto& nd = t.nodes[node];
      if (nd.is_leaf || step == 2) {
        colour[node] = 2;
        stack.pop_back();
        continue;
      }
      int child = step == 0 ? nd.left : nd.right;
      ++step;
      if (colour[child] == 1) {
        cyclic = true;
      } else if (colour[child] == 0) {
        colour[child] = 1;
        stack.emplace_back(child, 0);
      }
    }
    if (cyclic || parents[t.root] != 0) add("TREE_NOT_ACYCLIC", where + ": node graph contains a cycle");
    for (int i = 0; i < n; ++i) {
      if (i != t.root && parents[i] > 1)
        add("TREE_MULTI_PARENT", where + " node " + std::to_string(i) + ": more than one parent");
      if (colour[i] == 0) add("TREE_UNREACHABLE", where + " node " + std::to_string(i) + ": unreachable from root");
    }
  }

  void ensemble(const EnsembleModel& e) {
    if (e.trees.empty()) add("ENSEMBLE_EMPTY", "ensemble has no trees");
    for (std::size_t i = 0; i < e.trees.size(); ++i) tree(e.trees[i], "tree " + std::to_string(i), e.mode, true);
    if (e.mode == EnsembleMode::boosting) {
      std::size_t want = model.n_classes == 2 ? 1 : static_cast<std::size_t>(model.n_classes);
      if (e.bias.size() != want)
        add("BOOST_BIAS_COUNT", "expected " + std::to_string(want) + " bias values, got " + std::to_string(e.bias.size()));
      if (model.n_classes > 2) {
        if (e.tree_class.size() != e.trees.size())
          add("BOOST_TREE_CLASS", "tree_class must list one class per tree");
        for (int c : e.tree_class)
          if (c < 0 || c >= model.n_classes) add("BOOST_TREE_CLASS", "tree_class entry out of range");
      }
      if (model.n_classes < 2) add("N_CLASSES", "boosting needs n_classes >= 2");
    }
    if (e.mode == EnsembleMode::isolation) {
      if (model.n_classes != 2) add("ISOLATION_CLASSES", "isolation forest must have n_classes == 2");
      if (e.path_norm <= 0) add("ISOLATION_PATH_NORM", "path_norm must be positive");
    }
  }

  void svm(const SVMModel& s) {
    const int k = model.n_classes;
    if (k < 2) add("N_CLASSES", "svm needs n_classes >= 2");
    std::size_t m = static_cast<std::size_t>(k) * static_cast<std::size_t>(k - 1) / 2;
    if (s.hyperplanes.size() != m)
      add("SVM_PAIR_COUNT", "expected k(k-1)/2 = " + std::to_string(m) + " hyperplanes, got " + std::to_string(s.hyperplanes.size()));
    std::set<std::pair<int, int>> pairs;
    for (std::size_t j = 0; j < s.hyperplanes.size(); ++j) {
      const auto& h = s.hyperplanes[j];
      if (static_cast<int>(h.coefficients.size()) != n_features())
        add("SVM_COEF_COUNT", "hyperplane " + std::to_string(j) + " has wrong coefficient count");
      if (h.class_a < 0 || h.class_a >= k || h.class_b < 0 || h.class_b >= k || h.class_a == h.class_b) {
        add("SVM_PAIR_RANGE", "hyperplane " + std::to_string(j) + " has an invalid class pair");
      } else if (!pairs.insert(std::minmax(h.class_a, h.class_b)).second) {
        add("SVM_PAIR_DUPLICATE", "hyperplane " + std::to_string(j) + " repeats a class pair");
      }
    }
  }

  void nb(const NBModel& b) {
    const auto k = static_cast<std::size_t>(model.n_classes);
    if (b.priors.size() != k || b.means.size() != k || b.variances.size() != k) {
      add("NB_SHAPE", "priors/means/variances must have one row per class");
      return;
    }
    Rational sum = 0;
    for (std::size_t y = 0; y < k; ++y) {
      if (b.priors[y] <= 0 || b.priors[y] > 1) add("NB_PRIOR_RANGE", "prior of class " + std::to_string(y) + " outside (0,1]");
      sum += b.priors[y];
      if (static_cast<int>(b.means[y].size()) != n_features() || static_cast<int>(b.variances[y].size()) != n_features()) {
        add("NB_SHAPE", "class " + std::to_string(y) + " parameter rows must have one value per feature");
        continue;
      }
      for (int i = 0; i < n_features(); ++i)
        if (b.variances[y][i] <= 0)
          add("NB_VARIANCE_NONPOSITIVE", "variance of feature " + std::to_string(i) + " class " + std::to_string(y) + " is not positive");
    }
    Rational diff = sum - 1;
    if (diff < 0) diff = -diff;
    if (diff > Rational(1, 1000000000)) add("NB_PRIOR_SUM", "priors sum to " + format_rational(sum));
  }

  void kmeans(const KMeansModel& km) {
    if (km.centers.empty()) {
      add("KMEANS_EMPTY", "no centers");
      return;
    }
    if (static_cast<int>(km.centers.size()) != model.n_classes)
      add("KMEANS_CLASS_COUNT", "n_classes must equal the number of centers");
    std::set<std::vector<Rational>> seen;
    for (std::size_t j = 0; j < km.centers.size(); ++j) {
      if (static_cast<int>(km.centers[j].size()) != n_features())
        add("KMEANS_SHAPE", "center " + std::to_string(j) + " has wrong dimension");
      if (!seen.insert(km.centers[j]).second) add("KMEANS_DUPLICATE_CENTER", "center " + std::to_string(j) + " duplicates an earlier one");
    }
  }

  void run() {
    features();
    std::visit(
        [&](const auto& body) {
          using T = std::decay_t<decltype(body)>;
          if constexpr (std::is_same_v<T, TreeModel>) tree(body, "tree", EnsembleMode::bagging, false);
          else if constexpr (std::is_same_v<T, EnsembleModel>) ensemble(body);
          else if constexpr (std::is_same_v<T, SVMModel>) svm(body);
          else if constexpr (std::is_same_v<T, NBModel>) nb(body);
          else kmeans(body);
        },
        model.body);
  }
};

}  // namespace

ValidationReport validate_model(const Model& model) {
  Validator v{model, {}};
  v.run();
  return std::move(v.report);
}

// ---------------------------------------------------------------------------
// JSON

namespace {

FeatureSpec parse_feature(const json& j, const std::string& where) {
  FeatureSpec f;
  f.name = detail::get_string(detail::require(j, "name", where), where + ".name");
  f.index = static_cast<int>(detail::get_int(detail::require(j, "index", where), where + ".index"));
  f.width_bits = static_cast<int>(detail::get_int(detail::require(j, "width_bits", where), where + ".width_bits"));
  std::string kind = j.contains("kind") ? detail::get_string(j["kind"], where + ".kind") : "integer";
  if (kind == "integer") {
    f.kind = FeatureKind::integer;
  } else if (kind == "fixed_point") {
    f.kind = FeatureKind::fixed_point;
    f.scale = detail::get_rational(detail::require(j, "scale", where), where + ".scale");
  } else {
    throw SchemaError(where + ".kind: unknown kind '" + kind + "'");
  }
  return f;
}

json feature_json(const FeatureSpec& f) {
  json j = {{"name", f.name}, {"index", f.index}, {"width_bits", f.width_bits}};
  if (f.kind == FeatureKind::fixed_point) {
    j["kind"] = "fixed_point";
    j["scale"] = format_rational(f.scale);
  } else {
    j["kind"] = "integer";
  }
  return j;
}

TreeModel parse_tree(const json& j, const std::string& where) {
  TreeModel t;
  t.root = j.contains("root") ? static_cast<int>(detail::get_int(j["root"], where + ".root")) : 0;
  const json& nodes = detail::require(j, "nodes", where);
  if (!nodes.is_array()) throw SchemaError(where + ".nodes: expected an array");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const json& n = nodes[i];
    const std::string at = where + ".nodes[" + std::to_string(i) + "]";
    TreeNode node;
    node.is_leaf = n.contains("leaf") && n["leaf"].is_boolean() && n["leaf"].get<bool>();
    if (node.is_leaf) {
      if (n.contains("class")) node.class_id = static_cast<int>(detail::get_int(n["class"], at + ".class"));
      if (n.contains("weight")) node.weight = detail::get_rational(n["weight"], at + ".weight");
      if (n.contains("depth")) node.depth = static_cast<int>(detail::get_int(n["depth"], at + ".depth"));
      if (n.contains("confidence")) node.confidence = detail::get_rational(n["confidence"], at + ".confidence");
    } else {
      node.feature = static_cast<int>(detail::get_int(detail::require(n, "feature", at), at + ".feature"));
      node.threshold = detail::get_int(detail::require(n, "threshold", at), at + ".threshold");
      node.left = static_cast<int>(detail::get_int(detail::require(n, "left", at), at + ".left"));
      node.right = static_cast<int>(detail::get_int(detail::require(n, "right", at), at + ".right"));
    }
    t.nodes.push_back(std::move(node));
  }
  return t;
}

json tree_json(const TreeModel& t) {
  json nodes = json::array();
  for (const auto& n : t.nodes) {
    if (n.is_leaf) {
      json l = {{"leaf", true}, {"class", n.class_id}};
      if (n.weight != 0) l["weight"] = format_rational(n.weight);
      if (n.depth != 0) l["depth"] = n.depth;
      if (n.confidence != 1) l["confidence"] = format_rational(n.confidence);
      nodes.push_back(std::move(l));
    } else {
      nodes.push_back({{"feature", n.feature}, {"threshold", n.threshold}, {"left", n.left}, {"right", n.right}});
    }
  }
  return {{"root", t.root}, {"nodes", std::move(nodes)}};
}

std::vector<Rational> parse_rational_row(const json& j, const std::string& where) {
  if (!j.is_array()) throw SchemaError(where + ": expected an array");
  std::vector<Rational> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(detail::get_rational(j[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

json rational_row(const std::vector<Rational>& v) {
  json a = json::array();
  for (const auto& r : v) a.push_back(format_rational(r));
  return a;
}

std::vector<std::vector<Rational>> parse_rational_matrix(const json& j, const std::string& where) {
  if (!j.is_array()) throw SchemaError(where + ": expected an array");
  std::vector<std::vector<Rational>> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(parse_rational_row(j[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

json rational_matrix(const std::vector<std::vector<Rational>>& m) {
  json a = json::array();
  for (const auto& row : m) a.push_back(rational_row(row));
  return a;
}

std::vector<TreeModel> parse_trees(const json& params) {
  const json& trees = detail::require(params, "trees", "params");
  if (!trees.is_array()) throw SchemaError("params.trees: expected an array");
  std::vector<TreeModel> out;
  for (std::size_t i = 0; i < trees.size(); ++i) out.push_back(parse_tree(trees[i], "params.trees[" + std::to_string(i) + "]"));
  return out;
}

}  // namespace

FeatureSpec detail::parse_feature_json(const json& j, const std::string& where) { return parse_feature(j, where); }
json detail::feature_to_json(const FeatureSpec& f) { return feature_json(f); }

Model parse_model_unchecked(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("model file is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw SchemaError("model file: expected a JSON object");
  auto schema = detail::get_int(detail::require(doc, "schema", "model"), "schema");
  if (schema != 1) throw SchemaError("unsupported model schema version " + std::to_string(schema));
  ModelType type = model_type_from_name(detail::get_string(detail::require(doc, "model_type", "model"), "model_type"));
  Model m;
  m.n_classes = static_cast<int>(detail::get_int(detail::require(doc, "n_classes", "model"), "n_classes"));
  const json& feats = detail::require(doc, "features", "model");
  if (!feats.is_array()) throw SchemaError("features: expected an array");
  for (std::size_t i = 0; i < feats.size(); ++i) m.features.push_back(parse_feature(feats[i], "features[" + std::to_string(i) + "]"));
  const json& p = detail::require(doc, "params", "model");
  switch (type) {
    case ModelType::tree: m.body = parse_tree(p, "params"); break;
    case ModelType::forest: {
      EnsembleModel e;
      e.mode = EnsembleMode::bagging;
      e.trees = parse_trees(p);
      m.body = std::move(e);
      break;
    }
    case ModelType::xgboost: {
      EnsembleModel e;
      e.mode = EnsembleMode::boosting;
      e.trees = parse_trees(p);
      e.bias = parse_rational_row(detail::require(p, "bias", "params"), "params.bias");
      if (p.contains("tree_class")) {
        for (const auto& c : p["tree_class"]) e.tree_class.push_back(static_cast<int>(detail::get_int(c, "params.tree_class")));
      } else if (m.n_classes > 2) {
        for (std::size_t i = 0; i < e.trees.size(); ++i) e.tree_class.push_back(static_cast<int>(i % m.n_classes));
      }
      if (p.contains("weight_scale")) e.weight_scale = detail::get_rational(p["weight_scale"], "params.weight_scale");
      m.body = std::move(e);
      break;
    }
    case ModelType::isolation_forest: {
      EnsembleModel e;
      e.mode = EnsembleMode::isolation;
      e.trees = parse_trees(p);
      e.depth_threshold = detail::get_int(detail::require(p, "depth_threshold", "params"), "params.depth_threshold");
      e.path_norm = detail::get_rational(detail::require(p, "path_norm", "params"), "params.path_norm");
      m.body = std::move(e);
      break;
    }
    case ModelType::svm: {
      SVMModel s;
      const json& hs = detail::require(p, "hyperplanes", "params");
      if (!hs.is_array()) throw SchemaError("params.hyperplanes: expected an array");
      for (std::size_t j = 0; j < hs.size(); ++j) {
        const std::string at = "params.hyperplanes[" + std::to_string(j) + "]";
        Hyperplane h;
        h.coefficients = parse_rational_row(detail::require(hs[j], "coefficients", at), at + ".coefficients");
        h.intercept = detail::get_rational(detail::require(hs[j], "intercept", at), at + ".intercept");
        const json& cls = detail::require(hs[j], "classes", at);
        if (!cls.is_array() || cls.size() != 2) throw SchemaError(at + ".classes: expected [a, b]");
        h.class_a = static_cast<int>(detail::get_int(cls[0], at + ".classes[0]"));
        h.class_b = static_cast<int>(detail::get_int(cls[1], at + ".classes[1]"));
        s.hyperplanes.push_back(std::move(h));
      }
      m.body = std::move(s);
      break;
    }
    case ModelType::nb: {
      NBModel b;
      b.priors = parse_rational_row(detail::require(p, "priors", "params"), "params.priors");
      b.means = parse_rational_matrix(detail::require(p, "means", "params"), "params.means");
      b.variances = parse_rational_matrix(detail::require(p, "variances", "params"), "params.variances");
      m.body = std::move(b);
      break;
    }
    case ModelType::kmeans: {
      KMeansModel km;
      km.centers = parse_rational_matrix(detail::require(p, "centers", "params"), "params.centers");
      m.body = std::move(km);
      break;
    }
  }
  return m;
}

Model parse_model_file(std::string_view text) {
  Model m = parse_model_unchecked(text);
  ValidationReport r = validate_model(m);
  if (!r.ok()) {
    const auto& v = r.violations.front();
    std::string msg = v.code + ": " + v.message;
    if (v.code.rfind("FEATURE", 0) == 0) throw FeatureError(msg);
    throw DomainError(msg);
  }
  return m;
}

std::string emit_model_file(const Model& m) {
  json doc;
  doc["schema"] = 1;
  doc["model_type"] = model_type_name(m.type());
  doc["n_classes"] = m.n_classes;
  json feats = json::array();
  for (const auto& f : m.features) feats.push_back(feature_json(f));
  doc["features"] = std::move(feats);
  json p;
  std::visit(
      [&](const auto& body) {
        using T = std::decay_t<decltype(body)>;
        if constexpr (std::is_same_v<T, TreeModel>) {
          p = tree_json(body);
        } else if constexpr (std::is_same_v<T, EnsembleModel>) {
          json trees = json::array();
          for (const auto& t : body.trees) trees.push_back(tree_json(t));
          p["trees"] = std::move(trees);
          if (body.mode == EnsembleMode::boosting) {
            p["bias"] = rational_row(body.bias);
            if (!body.tree_class.empty()) p["tree_class"] = body.tree_class;
            p["weight_scale"] = format_rational(body.weight_scale);
          } else if (body.mode == EnsembleMode::isolation) {
            p["depth_threshold"] = body.depth_threshold;
            p["path_norm"] = format_rational(body.path_norm);
          }
        } else if constexpr (std::is_same_v<T, SVMModel>) {
          json hs = json::array();
          for (const auto& h : body.hyperplanes)
            hs.push_back({{"coefficients", rational_row(h.coefficients)},
                          {"intercept", format_rational(h.intercept)},
                          {"classes", {h.class_a, h.class_b}}});
          p["hyperplanes"] = std::move(hs);
        } else if constexpr (std::is_same_v<T, NBModel>) {
          p["priors"] = rational_row(body.priors);
          p["means"] = rational_matrix(body.means);
          p["variances"] = rational_matrix(body.variances);
        } else {
          p["centers"] = rational_matrix(body.centers);
        }
      },
      m.body);
  doc["params"] = std::move(p);
  return doc.dump(2) + "\n";
}

Model load_model(const std::string& path) { return parse_model_file(detail::read_file(path)); }

void save_model(const Model& model, const std::string& path) { detail::write_file_atomic(path, emit_model_file(model)); }

// ---------------------------------------------------------------------------
// Direct (full-precision) evaluation

int tree_leaf(const TreeModel& tree, std::span<const std::uint64_t> x) {
  int node = tree.root;
  // Bounded by node count: validated trees are acyclic.
  for (std::size_t steps = 0; steps <= tree.nodes.size(); ++steps) {
    const auto& n = tree.nodes[node];
    if (n.is_leaf) return node;
    node = static_cast<std::int64_t>(x[n.feature]) <= n.threshold ? n.left : n.right;
  }
  throw DomainError("tree traversal did not terminate");
}

namespace {

Real logistic(const Real& z) { return Real(1) / (Real(1) + boost::multiprecision::exp(-z)); }

Real softmax_max(const std::vector<Real>& s, int top) {
  Real denom = 0;
  for (const auto& v : s) denom += boost::multiprecision::exp(v - s[top]);
  return Real(1) / denom;
}

bool top_tied(const std::vector<Real>& s, int top) {
  for (int i = 0; i < static_cast<int>(s.size()); ++i)
    if (i != top && s[i] == s[top]) return true;
  return false;
}

Prediction from_votes(std::vector<int> votes, int voters) {
  Prediction p;
  for (int v : votes) p.scores.emplace_back(v);
  p.class_id = argmax_lowest(votes);
  p.tie = top_tied(p.scores, p.class_id);
  p.confidence = voters > 0 ? Real(votes[p.class_id]) / Real(voters) : Real(1);
  return p;
}

}  // namespace

Prediction evaluate_direct(const Model& model, std::span<const std::uint64_t> x) {
  if (x.size() != model.features.size())
    throw FeatureError("feature vector has " + std::to_string(x.size()) + " values, model expects " +
                       std::to_string(model.features.size()));
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i] > model.features[i].max_value())
      throw FeatureError("feature '" + model.features[i].name + "' value " + std::to_string(x[i]) + " exceeds its width");
  const int k = model.n_classes;

  struct Visitor {
    const Model& model;
    std::span<const std::uint64_t> x;
    int k;

    Prediction operator()(const TreeModel& t) const {
      const auto& leaf = t.nodes[tree_leaf(t, x)];
      Prediction p;
      p.scores.assign(k, Real(0));
      p.scores[leaf.class_id] = 1;
      p.class_id = leaf.class_id;
      p.confidence = to_real(leaf.confidence);
      return p;
    }

    Prediction operator()(const EnsembleModel& e) const {
      switch (e.mode) {
        case EnsembleMode::bagging: {
          std::vector<int> votes(k, 0);
          for (const auto& t : e.trees) ++votes[t.nodes[tree_leaf(t, x)].class_id];
          return from_votes(std::move(votes), static_cast<int>(e.trees.size()));
        }
        case EnsembleMode::boosting: {
          if (k == 2) {
            Rational margin = e.bias[0];
            for (const auto& t : e.trees) margin += t.nodes[tree_leaf(t, x)].weight * e.weight_scale;
            Prediction p;
            Real m = to_real(margin);
            p.scores = {Real(0), m};
            p.raw = {m};
            p.class_id = margin > 0 ? 1 : 0;
            p.tie = margin == 0;
            p.confidence = logistic(boost::multiprecision::abs(m));
            return p;
          }
          std::vector<Rational> sums(e.bias.begin(), e.bias.end());
          for (std::size_t i = 0; i < e.trees.size(); ++i)
            sums[e.tree_class[i]] += e.trees[i].nodes[tree_leaf(e.trees[i], x)].weight * e.weight_scale;
          Prediction p;
          p.class_id = argmax_lowest(sums);
          for (const auto& s : sums) p.scores.push_back(to_real(s));
          p.raw = p.scores;
          p.tie = top_tied(p.scores, p.class_id);
          p.confidence = softmax_max(p.scores, p.class_id);
          return p;
        }
        case EnsembleMode::isolation: {
          std::int64_t sum = 0;
          for (const auto& t : e.trees) sum += t.nodes[tree_leaf(t, x)].depth;
          Prediction p;
          p.scores = {Real(sum), Real(e.depth_threshold)};
          p.raw = {Real(sum)};
          p.class_id = sum < e.depth_threshold ? 1 : 0;
          p.tie = sum == e.depth_threshold;
          Real mean_depth = Real(sum) / Real(static_cast<std::int64_t>(e.trees.size()));
          Real s = boost::multiprecision::pow(Real(2), -mean_depth / to_real(e.path_norm));
          p.confidence = p.class_id == 1 ? s : Real(1) - s;
          return p;
        }
      }
      throw DomainError("unknown ensemble mode");
    }

    Prediction operator()(const SVMModel& s) const {
      std::vector<int> votes(k, 0);
      std::vector<Real> raw;
      for (const auto& h : s.hyperplanes) {
        Rational v = h.intercept;
        for (std::size_t i = 0; i < x.size(); ++i) v += h.coefficients[i] * static_cast<unsigned long long>(x[i]);
        raw.push_back(to_real(v));
        int voted = v > 0 ? h.class_b : (v < 0 ? h.class_a : std::min(h.class_a, h.class_b));
        ++votes[voted];
      }
      Prediction p = from_votes(std::move(votes), k - 1);
      p.raw = std::move(raw);
      return p;
    }

    Prediction operator()(const NBModel& b) const {
      static const Real two_pi = boost::math::constants::two_pi<Real>();
      Prediction p;
      for (int y = 0; y < k; ++y) {
        Real score = boost::multiprecision::log(to_real(b.priors[y]));
        for (std::size_t i = 0; i < x.size(); ++i) {
          const Rational& var = b.variances[y][i];
          Rational d = Rational(static_cast<unsigned long long>(x[i])) - b.means[y][i];
          score -= boost::multiprecision::log(two_pi * to_real(var)) / 2;
          score -= to_real(d * d / (2 * var));
        }
        p.scores.push_back(score);
      }
      p.class_id = argmax_lowest(p.scores);
      p.raw = p.scores;
      p.tie = top_tied(p.scores, p.class_id);
      p.confidence = softmax_max(p.scores, p.class_id);
      return p;
    }

    Prediction operator()(const KMeansModel& km) const {
      std::vector<Rational> dist;
      for (const auto& c : km.centers) {
        Rational d2 = 0;
        for (std::size_t i = 0; i < x.size(); ++i) {
          Rational d = Rational(static_cast<unsigned long long>(x[i])) - c[i];
          d2 += d * d;
        }
        dist.push_back(std::move(d2));
      }
      Prediction p;
      int best = 0;
      for (int j = 1; j < static_cast<int>(dist.size()); ++j)
        if (dist[j] < dist[best]) best = j;
      p.class_id = best;
      for (const auto& d : dist) {
        p.raw.push_back(to_real(d));
        p.scores.push_back(-to_real(d));
      }
      p.tie = top_tied(p.scores, best);
      p.confidence = 1;
      return p;
    }
  };
  return std::visit(Visitor{model, x, k}, model.body);
}

}  // namespace inml
