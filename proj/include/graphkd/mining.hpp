#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "graphkd/error.hpp"
#include "graphkd/roi_graph.hpp"

// Node indexing: hard text nodes are kept for distillation when their teacher
// RoI classification loss exceeds a threshold, OHEM-style capped at k_max per
// image, and concatenated after the non-text nodes.
namespace graphkd {

enum class NodeOrigin { kNonText, kMinedText };

struct MinedNodeSet {
  std::vector<InstanceNode> nodes;
  std::vector<NodeOrigin> origin;
  std::vector<int> source_indices;  // positions in the originating text list

  std::size_t size() const { return nodes.size(); }
};

// Teacher classification head evaluated on a node feature; returns logits.
using TeacherHeadFn = std::function<std::vector<double>(
    const std::vector<double>& feature)>;

inline double cross_entropy_against(const std::vector<double>& logits,
                                    int target) {
  require(target >= 0 && target < static_cast<int>(logits.size()),
          errkind::kDimensionMismatch, "class target out of range");
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : logits) mx = std::max(mx, v);
  double lse = 0.0;
  for (double v : logits) lse += std::exp(v - mx);
  return mx + std::log(lse) - logits[static_cast<std::size_t>(target)];
}

// Per-node cross entropy of the teacher head against the text label, stored
// into teacher_cls_loss.
inline std::vector<double> teacher_text_cls_loss(
    const TeacherHeadFn& teacher_head, std::vector<InstanceNode>& text_nodes,
    int text_class_index) {
  std::vector<double> losses;
  losses.reserve(text_nodes.size());
  for (InstanceNode& n : text_nodes) {
    require(n.is_text(), errkind::kMisalignedNodes,
            "teacher_text_cls_loss expects text nodes");
    double loss =
        cross_entropy_against(teacher_head(n.feature), text_class_index);
    n.teacher_cls_loss = loss;
    losses.push_back(loss);
  }
  return losses;
}

struct MinedPair {
  MinedNodeSet teacher;
  MinedNodeSet student;
};

// Selects text indices whose teacher loss exceeds t, keeps at most k_max by
// descending loss (ties to the lower original index), and applies the same
// index set to the aligned student list.
inline MinedPair node_indexing(std::vector<InstanceNode> teacher_text,
                               std::vector<InstanceNode> student_text,
                               const TeacherHeadFn& teacher_head,
                               int text_class_index, double t, int k_max) {
  require(teacher_text.size() == student_text.size(),
          errkind::kMisalignedNodes,
          "teacher and student text lists must be index-aligned");
  require(t > 0.0, errkind::kConfigError, "mining threshold t must be > 0");
  require(k_max >= 0, errkind::kConfigError, "k_max must be >= 0");

  std::vector<double> losses =
      teacher_text_cls_loss(teacher_head, teacher_text, text_class_index);
  for (std::size_t i = 0; i < student_text.size(); ++i)
    student_text[i].teacher_cls_loss = losses[i];

  std::vector<int> idx;
  for (std::size_t i = 0; i < losses.size(); ++i)
    if (losses[i] > t) idx.push_back(static_cast<int>(i));
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    double la = losses[static_cast<std::size_t>(a)];
    double lb = losses[static_cast<std::size_t>(b)];
    if (la != lb) return la > lb;
    return a < b;
  });
  if (static_cast<int>(idx.size()) > k_max) idx.resize(static_cast<std::size_t>(k_max));

  MinedPair out;
  for (int i : idx) {
    out.teacher.nodes.push_back(teacher_text[static_cast<std::size_t>(i)]);
    out.teacher.origin.push_back(NodeOrigin::kMinedText);
    out.teacher.source_indices.push_back(i);
    out.student.nodes.push_back(student_text[static_cast<std::size_t>(i)]);
    out.student.origin.push_back(NodeOrigin::kMinedText);
    out.student.source_indices.push_back(i);
  }
  return out;
}

// Non-text nodes first in their original order, then the mined text nodes.
inline std::vector<InstanceNode> assemble_distillation_nodes(
    const std::vector<InstanceNode>& nontext, const MinedNodeSet& mined) {
  require(!nontext.empty() || !mined.nodes.empty(), errkind::kNoNodes,
          "no nodes for distillation");
  std::vector<InstanceNode> out = nontext;
  out.insert(out.end(), mined.nodes.begin(), mined.nodes.end());
  return out;
}

}  // namespace graphkd
