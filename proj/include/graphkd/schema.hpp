#pragma once

#include <string>
#include <vector>

#include "graphkd/error.hpp"
#include "graphkd/geometry.hpp"

namespace graphkd {

// Ordered class list with a flagged textual subset. Text-typed graph nodes
// map onto the first textual class; the GNN head classifies the rest.
struct ClassSchema {
  std::vector<std::string> classes;
  std::vector<bool> textual;

  int size() const { return static_cast<int>(classes.size()); }

  void validate() const {
    require(!classes.empty(), errkind::kSchemaMismatch, "schema has no classes");
    require(textual.size() == classes.size(), errkind::kSchemaMismatch,
            "textual flags must align with classes");
    for (std::size_t i = 0; i < classes.size(); ++i)
      for (std::size_t j = i + 1; j < classes.size(); ++j)
        require(classes[i] != classes[j], errkind::kSchemaMismatch,
                "duplicate class name: " + classes[i]);
  }

  int index_of(const std::string& name) const {
    for (std::size_t i = 0; i < classes.size(); ++i)
      if (classes[i] == name) return static_cast<int>(i);
    return -1;
  }

  bool is_text_class(int class_id) const {
    return textual[static_cast<std::size_t>(class_id)];
  }

  // The class that text-typed nodes are assigned directly.
  int designated_text_class() const {
    for (std::size_t i = 0; i < classes.size(); ++i)
      if (textual[i]) return static_cast<int>(i);
    fail(errkind::kSchemaMismatch, "schema has no textual class");
  }

  std::vector<int> nontext_class_ids() const {
    std::vector<int> ids;
    for (std::size_t i = 0; i < classes.size(); ++i)
      if (!textual[i]) ids.push_back(static_cast<int>(i));
    return ids;
  }

  static ClassSchema document_default() {
    ClassSchema s;
    s.classes = {"text", "table", "figure"};
    s.textual = {true, false, false};
    return s;
  }

  bool operator==(const ClassSchema& o) const {
    return classes == o.classes && textual == o.textual;
  }
};

struct DetectionRecord {
  BoxGeometry box;
  int class_id = 0;
  double score = 0.0;
};

}  // namespace graphkd
