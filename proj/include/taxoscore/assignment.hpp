#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "error.hpp"

namespace taxoscore {

/// A named scheme mapping event ids to exactly one category. Events a scheme
/// excludes (for example "Undetermined/Other" under Type & Importance) are
/// simply absent.
struct ClassificationAssignment {
  std::string scheme_name;
  std::vector<std::string> categories;
  std::unordered_map<std::string, std::size_t> labels;  // event id -> category index

  std::size_t category_index(const std::string& category) const {
    for (std::size_t i = 0; i < categories.size(); ++i) {
      if (categories[i] == category) return i;
    }
    throw VocabularyError("category '" + category + "' not in scheme " + scheme_name);
  }

  /// Adds `category` to the vocabulary if needed and labels `id` with it.
  void assign(const std::string& id, const std::string& category) {
    std::size_t k = categories.size();
    for (std::size_t i = 0; i < categories.size(); ++i) {
      if (categories[i] == category) {
        k = i;
        break;
      }
    }
    if (k == categories.size()) categories.push_back(category);
    labels[id] = k;
  }

  bool contains(const std::string& id) const { return labels.count(id) != 0; }

  std::optional<std::size_t> index_of(const std::string& id) const {
    auto it = labels.find(id);
    if (it == labels.end()) return std::nullopt;
    return it->second;
  }

  const std::string& label_of(const std::string& id) const {
    auto it = labels.find(id);
    if (it == labels.end()) throw VocabularyError("event '" + id + "' has no label in " + scheme_name);
    return categories[it->second];
  }
};

}  // namespace taxoscore
