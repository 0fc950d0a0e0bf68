#include "inml/dataset.hpp"

#include "inml/error.hpp"
#include "io.hpp"

#include <charconv>
#include <sstream>

namespace inml {

void validate_dataset(const Dataset& data) {
  if (data.x.size() != data.y.size()) throw LabelError("row count and label count differ");
  for (std::size_t r = 0; r < data.x.size(); ++r) {
    if (data.y[r] < 0 || data.y[r] >= data.n_classes)
      throw LabelError("row " + std::to_string(r) + ": label " + std::to_string(data.y[r]) + " outside [0, n_classes)");
    if (data.x[r].size() != data.features.size())
      throw FeatureError("row " + std::to_string(r) + ": wrong number of feature values");
    for (std::size_t i = 0; i < data.features.size(); ++i)
      if (data.x[r][i] > data.features[i].max_value())
        throw FeatureError("row " + std::to_string(r) + ": value of '" + data.features[i].name + "' exceeds its width");
  }
}

std::vector<std::size_t> feature_columns(const std::vector<FeatureSpec>& wanted, const std::vector<FeatureSpec>& have) {
  std::vector<std::size_t> cols;
  for (const auto& w : wanted) {
    std::size_t found = have.size();
    for (std::size_t i = 0; i < have.size(); ++i)
      if (have[i].name == w.name) found = i;
    if (found == have.size()) throw FeatureError("dataset has no column for feature '" + w.name + "'");
    cols.push_back(found);
  }
  return cols;
}

namespace {

std::uint64_t parse_u64(const std::string& s, std::size_t line) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    throw FormatError("line " + std::to_string(line) + ": '" + s + "' is not a non-negative integer");
  return v;
}

}  // namespace

Dataset parse_dataset_csv(std::string_view text, const std::optional<std::vector<FeatureSpec>>& features,
                          std::optional<int> n_classes, bool require_label) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++lineno;
    if (!detail::trim(line).empty()) {
      header = detail::split(line, ',');
      break;
    }
  }
  if (header.empty()) throw FormatError("dataset has no header row");
  bool has_label = header.back() == "label";
  if (require_label && !has_label) throw FormatError("dataset header must end with a 'label' column");
  std::size_t n_feat = header.size() - (has_label ? 1 : 0);

  Dataset d;
  std::vector<std::uint64_t> max_seen(n_feat, 0);
  int max_label = -1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split(line, ',');
    if (cells.size() != header.size())
      throw FormatError("line " + std::to_string(lineno) + ": expected " + std::to_string(header.size()) + " columns");
    FeatureVector row(n_feat);
    for (std::size_t i = 0; i < n_feat; ++i) {
      row[i] = parse_u64(cells[i], lineno);
      max_seen[i] = std::max(max_seen[i], row[i]);
    }
    d.x.push_back(std::move(row));
    if (has_label) {
      auto lbl = parse_u64(cells.back(), lineno);
      if (lbl > 1u << 20) throw LabelError("line " + std::to_string(lineno) + ": label too large");
      d.y.push_back(static_cast<int>(lbl));
      max_label = std::max(max_label, static_cast<int>(lbl));
    } else {
      d.y.push_back(0);
    }
  }

  if (features) {
    if (features->size() != n_feat) {
      // Allow a column superset: select by name.
      std::vector<FeatureSpec> have;
      for (std::size_t i = 0; i < n_feat; ++i) have.push_back({header[i], static_cast<int>(i), 32});
      auto cols = feature_columns(*features, have);
      for (auto& row : d.x) {
        FeatureVector sel;
        for (auto c : cols) sel.push_back(row[c]);
        row = std::move(sel);
      }
    } else {
      for (std::size_t i = 0; i < n_feat; ++i)
        if ((*features)[i].name != header[i])
          throw FormatError("dataset column '" + header[i] + "' does not match feature '" + (*features)[i].name + "'");
    }
    d.features = *features;
  } else {
    for (std::size_t i = 0; i < n_feat; ++i) {
      int w = 1;
      while (w < 32 && (max_seen[i] >> w) != 0) ++w;
      d.features.push_back({header[i], static_cast<int>(i), w});
    }
  }
  d.n_classes = n_classes ? *n_classes : std::max(1, max_label + 1);
  validate_dataset(d);
  return d;
}

Dataset load_dataset_csv(const std::string& path, const std::optional<std::vector<FeatureSpec>>& features,
                         std::optional<int> n_classes, bool require_label) {
  return parse_dataset_csv(detail::read_file(path), features, n_classes, require_label);
}

std::string emit_dataset_csv(const Dataset& data, bool with_label) {
  std::ostringstream out;
  for (std::size_t i = 0; i < data.features.size(); ++i) out << (i ? "," : "") << data.features[i].name;
  if (with_label) out << (data.features.empty() ? "" : ",") << "label";
  out << "\n";
  for (std::size_t r = 0; r < data.x.size(); ++r) {
    for (std::size_t i = 0; i < data.x[r].size(); ++i) out << (i ? "," : "") << data.x[r][i];
    if (with_label) out << (data.x[r].empty() ? "" : ",") << data.y[r];
    out << "\n";
  }
  return out.str();
}

}  // namespace inml
