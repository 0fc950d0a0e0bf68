#pragma once

#include "inml/model.hpp"

#include <optional>
#include <string>
#include <vector>

namespace inml {

struct Dataset {
  std::vector<FeatureSpec> features;
  int n_classes = 2;
  std::vector<FeatureVector> x;
  std::vector<int> y;

  std::size_t size() const { return x.size(); }
  bool empty() const { return x.empty(); }
};

// Throws LabelError / FeatureError on the first bad row.
void validate_dataset(const Dataset& data);

// Column index of each model feature inside `data`, matched by name.
std::vector<std::size_t> feature_columns(const std::vector<FeatureSpec>& wanted, const std::vector<FeatureSpec>& have);

// CSV with a header row: one column per feature plus `label` (last).
// Widths come from `features` when given, otherwise the narrowest width that
// holds every observed value. n_classes defaults to max(label) + 1.
Dataset parse_dataset_csv(std::string_view text, const std::optional<std::vector<FeatureSpec>>& features = std::nullopt,
                          std::optional<int> n_classes = std::nullopt, bool require_label = true);
Dataset load_dataset_csv(const std::string& path, const std::optional<std::vector<FeatureSpec>>& features = std::nullopt,
                         std::optional<int> n_classes = std::nullopt, bool require_label = true);
std::string emit_dataset_csv(const Dataset& data, bool with_label = true);

}  // namespace inml
