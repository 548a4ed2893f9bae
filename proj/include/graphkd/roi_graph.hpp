#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "graphkd/autodiff.hpp"
#include "graphkd/error.hpp"
#include "graphkd/geometry.hpp"
#include "graphkd/tensor.hpp"

// Structured instance graph over RoI pooled features: nodes are per-proposal
// feature vectors typed text / non-text by channel covariance, edges are
// pairwise cosine similarities, and nearby text nodes merge to curb text
// bias. Teacher and student graphs are built from one shared plan so node
// slots correspond one to one.
namespace graphkd {

enum class NodeCategory { kText, kNonText };

struct RoIFeature {
  Tensor grid;  // [C,S,S]
  BoxGeometry source_box;

  int channels() const { return grid.dim(0); }
  int grid_size() const { return grid.dim(1); }
};

struct InstanceNode {
  int id = 0;
  std::vector<double> feature;
  NodeCategory category = NodeCategory::kNonText;
  BoxGeometry box;
  std::vector<std::pair<int, BoxGeometry>> members;  // merge lineage
  std::optional<double> teacher_cls_loss;

  bool is_text() const { return category == NodeCategory::kText; }
};

struct EdgeMatrix {
  int n = 0;
  Tensor values;  // [n,n], symmetric, unit diagonal

  double at(int p, int q) const { return values(p, q); }
};

struct StructuredGraph {
  std::vector<InstanceNode> nodes;
  EdgeMatrix edges;

  int size() const { return static_cast<int>(nodes.size()); }
};

struct GraphConfig {
  int roi_size = 3;          // S
  double tau_cov = 0.8;      // text/non-text covariance threshold
  double theta_merge = 0.1;  // edge-distance threshold for text merging
};

// Typing and merge decisions, computed once (from the teacher in a
// distillation pair) and replayed on any spatially aligned feature map.
struct GraphPlan {
  std::vector<NodeCategory> categories;   // per proposal
  std::vector<std::vector<int>> groups;   // proposal indices per final node
};

// ---------------------------------------------------------------------------
// RoI pooling
// ---------------------------------------------------------------------------

namespace detail {

struct BinRange {
  int lo;
  int hi;  // exclusive
};

// Continuous interval [a,b) in map units split into S bins; bin i covers the
// integer cells [floor(start), ceil(end)). Degenerate bins clamp to one cell.
inline BinRange roi_bin(double a, double b, int s_bins, int i, int dim) {
  double start = a + (b - a) * static_cast<double>(i) / s_bins;
  double end = a + (b - a) * static_cast<double>(i + 1) / s_bins;
  int lo = static_cast<int>(std::floor(start));
  int hi = static_cast<int>(std::ceil(end));
  lo = std::clamp(lo, 0, dim - 1);
  hi = std::clamp(hi, lo + 1, dim);
  return {lo, hi};
}

}  // namespace detail

// Max-pools each proposal into an SxS grid per channel. Output order matches
// proposal order; degenerate windows clamp to a single cell.
inline std::vector<RoIFeature> pool_roi_features(
    const Tensor& feature_map, const std::vector<BoxGeometry>& proposals,
    int output_size) {
  require(feature_map.rank() == 3 && feature_map.dim(1) >= 1 &&
              feature_map.dim(2) >= 1,
          errkind::kDimensionMismatch, "feature map must be CxHxW");
  require(output_size >= 1, errkind::kEmptyGrid, "output_size must be >= 1");
  int C = feature_map.dim(0), H = feature_map.dim(1), W = feature_map.dim(2);
  std::vector<RoIFeature> out;
  out.reserve(proposals.size());
  for (const BoxGeometry& box : proposals) {
    box.validate();
    double y1 = box.y1 * H, y2 = box.y2 * H;
    double x1 = box.x1 * W, x2 = box.x2 * W;
    RoIFeature roi;
    roi.source_box = box;
    roi.grid = Tensor::chw(C, output_size, output_size);
    for (int by = 0; by < output_size; ++by) {
      auto ry = detail::roi_bin(y1, y2, output_size, by, H);
      for (int bx = 0; bx < output_size; ++bx) {
        auto rx = detail::roi_bin(x1, x2, output_size, bx, W);
        for (int c = 0; c < C; ++c) {
          double best = -1e300;
          for (int y = ry.lo; y < ry.hi; ++y)
            for (int x = rx.lo; x < rx.hi; ++x)
              best = std::max(best, feature_map(c, y, x));
          roi.grid(c, by, bx) = best;
        }
      }
    }
    out.push_back(std::move(roi));
  }
  return out;
}

// Differentiable twin of pool_roi_features for one box; gradient routes to
// the argmax cell of each bin. Shares the binning rule above.
inline ad::Var roi_max_pool_ad(const ad::Var& feature_map,
                               const BoxGeometry& box, int output_size) {
  int C = feature_map->val.dim(0), H = feature_map->val.dim(1),
      W = feature_map->val.dim(2);
  double y1 = box.y1 * H, y2 = box.y2 * H;
  double x1 = box.x1 * W, x2 = box.x2 * W;
  Tensor out = Tensor::chw(C, output_size, output_size);
  std::vector<int> arg(static_cast<std::size_t>(C) * output_size * output_size);
  std::size_t k = 0;
  for (int c = 0; c < C; ++c) {
    for (int by = 0; by < output_size; ++by) {
      auto ry = detail::roi_bin(y1, y2, output_size, by, H);
      for (int bx = 0; bx < output_size; ++bx, ++k) {
        auto rx = detail::roi_bin(x1, x2, output_size, bx, W);
        double best = -1e300;
        int best_idx = 0;
        for (int y = ry.lo; y < ry.hi; ++y) {
          for (int x = rx.lo; x < rx.hi; ++x) {
            double v = feature_map->val(c, y, x);
            if (v > best) {
              best = v;
              best_idx = (c * H + y) * W + x;
            }
          }
        }
        out(c, by, bx) = best;
        arg[k] = best_idx;
      }
    }
  }
  return ad::detail::make(std::move(out), {feature_map}, [arg](ad::Node& self) {
    ad::Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    Tensor& g = p.ensure_grad();
    for (std::size_t i = 0; i < arg.size(); ++i)
      g[static_cast<std::size_t>(arg[i])] += self.grad[i];
  });
}

// ---------------------------------------------------------------------------
// Node typing
// ---------------------------------------------------------------------------

// Mean absolute off-diagonal entry of the channel Pearson correlation matrix
// over the spatial grid. Constant channels contribute zero correlation; a
// single channel scores zero.
inline double covariance_score(const RoIFeature& roi) {
  int C = roi.channels();
  int S = roi.grid_size();
  if (C < 2) return 0.0;
  int n = S * S;
  std::vector<double> mean(static_cast<std::size_t>(C), 0.0);
  for (int c = 0; c < C; ++c) {
    double s = 0.0;
    for (int y = 0; y < S; ++y)
      for (int x = 0; x < S; ++x) s += roi.grid(c, y, x);
    mean[static_cast<std::size_t>(c)] = s / n;
  }
  std::vector<double> var(static_cast<std::size_t>(C), 0.0);
  for (int c = 0; c < C; ++c) {
    double s = 0.0;
    for (int y = 0; y < S; ++y)
      for (int x = 0; x < S; ++x) {
        double d = roi.grid(c, y, x) - mean[static_cast<std::size_t>(c)];
        s += d * d;
      }
    var[static_cast<std::size_t>(c)] = s / n;
  }
  double acc = 0.0;
  for (int c = 0; c < C; ++c) {
    for (int d = c + 1; d < C; ++d) {
      double vc = var[static_cast<std::size_t>(c)];
      double vd = var[static_cast<std::size_t>(d)];
      if (vc <= 0.0 || vd <= 0.0) continue;
      double cov = 0.0;
      for (int y = 0; y < S; ++y)
        for (int x = 0; x < S; ++x)
          cov += (roi.grid(c, y, x) - mean[static_cast<std::size_t>(c)]) *
                 (roi.grid(d, y, x) - mean[static_cast<std::size_t>(d)]);
      cov /= n;
      acc += std::fabs(cov / std::sqrt(vc * vd));
    }
  }
  // acc covers each unordered pair once; the off-diagonal mean is the same.
  return std::min(1.0, 2.0 * acc / (static_cast<double>(C) * (C - 1)));
}

inline NodeCategory classify_node(double score, double tau_cov) {
  require(score >= 0.0 && score <= 1.0, errkind::kConfigError,
          "covariance score out of [0,1]");
  require(tau_cov > 0.0 && tau_cov < 1.0, errkind::kConfigError,
          "tau_cov must lie in (0,1)");
  return score >= tau_cov ? NodeCategory::kText : NodeCategory::kNonText;
}

// Spatial average over the grid; node feature dimension equals the channel
// count regardless of S.
inline std::vector<double> node_feature_from_roi(const RoIFeature& roi) {
  int C = roi.channels(), S = roi.grid_size();
  std::vector<double> f(static_cast<std::size_t>(C), 0.0);
  for (int c = 0; c < C; ++c) {
    double s = 0.0;
    for (int y = 0; y < S; ++y)
      for (int x = 0; x < S; ++x) s += roi.grid(c, y, x);
    f[static_cast<std::size_t>(c)] = s / (S * S);
  }
  return f;
}

// ---------------------------------------------------------------------------
// Edges
// ---------------------------------------------------------------------------

inline double cosine_edge(const std::vector<double>& v_p,
                          const std::vector<double>& v_q) {
  require(v_p.size() == v_q.size(), errkind::kDimensionMismatch,
          "cosine_edge: dimension mismatch");
  double np = norm2(v_p), nq = norm2(v_q);
  return dot(v_p, v_q) / (np * nq);
}

// Each unordered pair is computed once and mirrored, so symmetry is exact;
// the diagonal is set to 1 directly.
inline EdgeMatrix build_edge_matrix(const std::vector<InstanceNode>& nodes) {
  require(!nodes.empty(), errkind::kNoNodes,
          "edge matrix needs at least one node");
  int n = static_cast<int>(nodes.size());
  EdgeMatrix m;
  m.n = n;
  m.values = Tensor::matrix(n, n);
  for (int p = 0; p < n; ++p) {
    m.values(p, p) = 1.0;
    for (int q = p + 1; q < n; ++q) {
      double e = cosine_edge(nodes[static_cast<std::size_t>(p)].feature,
                             nodes[static_cast<std::size_t>(q)].feature);
      m.values(p, q) = e;
      m.values(q, p) = e;
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Text node merging
// ---------------------------------------------------------------------------

namespace detail {

struct MergeState {
  std::vector<std::vector<int>> group;   // input node indices
  std::vector<std::vector<double>> fsum; // member-count weighted feature sums
  std::vector<int> count;                // total lineage member count
  std::vector<bool> text;
};

// One merge per round, always the closest qualifying pair, ties broken by
// lowest leader indices; features tracked as flat means over lineage members.
inline std::vector<std::vector<int>> merge_groups(
    const std::vector<InstanceNode>& nodes, double theta_merge) {
  MergeState st;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    st.group.push_back({static_cast<int>(i)});
    int cnt = static_cast<int>(nodes[i].members.size());
    if (cnt == 0) cnt = 1;
    std::vector<double> fs = nodes[i].feature;
    for (double& v : fs) v *= cnt;
    st.fsum.push_back(std::move(fs));
    st.count.push_back(cnt);
    st.text.push_back(nodes[i].is_text());
  }
  auto feature_of = [&](std::size_t i) {
    std::vector<double> f = st.fsum[i];
    for (double& v : f) v /= st.count[i];
    return f;
  };
  while (true) {
    int best_p = -1, best_q = -1;
    double best_d = theta_merge;
    for (std::size_t p = 0; p < st.group.size(); ++p) {
      if (!st.text[p]) continue;
      std::vector<double> fp = feature_of(p);
      for (std::size_t q = p + 1; q < st.group.size(); ++q) {
        if (!st.text[q]) continue;
        double d = 1.0 - cosine_edge(fp, feature_of(q));
        if (d < best_d) {
          best_d = d;
          best_p = static_cast<int>(p);
          best_q = static_cast<int>(q);
        }
      }
    }
    if (best_p < 0) break;
    std::size_t p = static_cast<std::size_t>(best_p);
    std::size_t q = static_cast<std::size_t>(best_q);
    st.group[p].insert(st.group[p].end(), st.group[q].begin(),
                       st.group[q].end());
    for (std::size_t k = 0; k < st.fsum[p].size(); ++k)
      st.fsum[p][k] += st.fsum[q][k];
    st.count[p] += st.count[q];
    st.group.erase(st.group.begin() + static_cast<long>(q));
    st.fsum.erase(st.fsum.begin() + static_cast<long>(q));
    st.count.erase(st.count.begin() + static_cast<long>(q));
    st.text.erase(st.text.begin() + static_cast<long>(q));
  }
  return st.group;
}

inline InstanceNode merge_group(const std::vector<InstanceNode>& nodes,
                                const std::vector<int>& group) {
  const InstanceNode& leader = nodes[static_cast<std::size_t>(group[0])];
  if (group.size() == 1) return leader;
  InstanceNode out;
  out.id = leader.id;
  out.category = NodeCategory::kText;
  out.box = leader.box;
  std::size_t dim = leader.feature.size();
  out.feature.assign(dim, 0.0);
  int total = 0;
  for (int gi : group) {
    const InstanceNode& n = nodes[static_cast<std::size_t>(gi)];
    require(n.is_text(), errkind::kNoNodes,
            "merge groups may only contain text nodes");
    int cnt = static_cast<int>(n.members.size());
    for (std::size_t k = 0; k < dim; ++k)
      out.feature[k] += n.feature[k] * cnt;
    total += cnt;
    out.box = union_box(out.box, n.box);
    out.members.insert(out.members.end(), n.members.begin(), n.members.end());
  }
  for (double& v : out.feature) v /= total;
  std::sort(out.members.begin(), out.members.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  return out;
}

}  // namespace detail

// Merges every pair of text nodes closer than theta_merge in edge distance
// d = 1 - e_pq, one closest pair at a time with edges recomputed after each
// merge. Non-text nodes are never touched.
inline StructuredGraph merge_text_nodes(const StructuredGraph& graph,
                                        double theta_merge) {
  require(theta_merge > 0.0 && theta_merge < 1.0, errkind::kConfigError,
          "theta_merge must lie in (0,1)");
  auto groups = detail::merge_groups(graph.nodes, theta_merge);
  StructuredGraph out;
  out.nodes.reserve(groups.size());
  for (const auto& g : groups)
    out.nodes.push_back(detail::merge_group(graph.nodes, g));
  out.edges = build_edge_matrix(out.nodes);
  return out;
}

// ---------------------------------------------------------------------------
// Whole-graph construction
// ---------------------------------------------------------------------------

namespace detail {

inline InstanceNode make_node(int id, const RoIFeature& roi,
                              NodeCategory category) {
  InstanceNode n;
  n.id = id;
  n.feature = node_feature_from_roi(roi);
  n.category = category;
  n.box = roi.source_box;
  n.members = {{id, roi.source_box}};
  require(norm2(n.feature) > 0.0, errkind::kNoNodes,
          "zero-norm node feature rejected");
  for (double v : n.feature)
    require(std::isfinite(v), errkind::kNoNodes, "non-finite node feature");
  return n;
}

}  // namespace detail

// Typing and merge decisions from one feature map (the teacher in a
// distillation pair, the model itself at inference).
inline GraphPlan plan_structured_graph(const Tensor& typing_map,
                                       const std::vector<BoxGeometry>& proposals,
                                       const GraphConfig& cfg) {
  require(!proposals.empty(), errkind::kEmptyProposalSet,
          "empty proposal set");
  auto rois = pool_roi_features(typing_map, proposals, cfg.roi_size);
  GraphPlan plan;
  std::vector<InstanceNode> nodes;
  for (std::size_t i = 0; i < rois.size(); ++i) {
    NodeCategory cat = classify_node(covariance_score(rois[i]), cfg.tau_cov);
    plan.categories.push_back(cat);
    nodes.push_back(detail::make_node(static_cast<int>(i), rois[i], cat));
  }
  plan.groups = detail::merge_groups(nodes, cfg.theta_merge);
  return plan;
}

// Replays a plan on a feature map: pool, assign the planned categories, then
// collapse the planned merge groups.
inline StructuredGraph apply_graph_plan(const Tensor& feature_map,
                                        const std::vector<BoxGeometry>& proposals,
                                        const GraphPlan& plan,
                                        const GraphConfig& cfg) {
  require(plan.categories.size() == proposals.size(),
          errkind::kMisalignedGraphs, "plan does not match proposal count");
  auto rois = pool_roi_features(feature_map, proposals, cfg.roi_size);
  std::vector<InstanceNode> nodes;
  for (std::size_t i = 0; i < rois.size(); ++i)
    nodes.push_back(
        detail::make_node(static_cast<int>(i), rois[i], plan.categories[i]));
  StructuredGraph out;
  out.nodes.reserve(plan.groups.size());
  for (const auto& g : plan.groups)
    out.nodes.push_back(detail::merge_group(nodes, g));
  out.edges = build_edge_matrix(out.nodes);
  return out;
}

// Differentiable replay: merged node features as Vars, in plan order.
inline std::vector<ad::Var> apply_graph_plan_ad(
    const ad::Var& feature_map, const std::vector<BoxGeometry>& proposals,
    const GraphPlan& plan, const GraphConfig& cfg) {
  std::vector<ad::Var> per_proposal;
  per_proposal.reserve(proposals.size());
  for (const BoxGeometry& box : proposals)
    per_proposal.push_back(ad::spatial_mean(
        roi_max_pool_ad(feature_map, box, cfg.roi_size)));
  std::vector<ad::Var> out;
  out.reserve(plan.groups.size());
  for (const auto& g : plan.groups) {
    if (g.size() == 1) {
      out.push_back(per_proposal[static_cast<std::size_t>(g[0])]);
      continue;
    }
    ad::Var acc = per_proposal[static_cast<std::size_t>(g[0])];
    for (std::size_t k = 1; k < g.size(); ++k)
      acc = ad::add(acc, per_proposal[static_cast<std::size_t>(g[k])]);
    out.push_back(ad::scale(acc, 1.0 / static_cast<double>(g.size())));
  }
  return out;
}

struct GraphPair {
  StructuredGraph teacher;
  StructuredGraph student;
  GraphPlan plan;
};

// Builds teacher and student graphs over the shared proposal set. Categories
// and merge decisions come from the teacher and are replayed on the student,
// so node slots align one to one.
inline GraphPair build_structured_graph(const Tensor& teacher_map,
                                        const Tensor& student_map,
                                        const std::vector<BoxGeometry>& proposals,
                                        const GraphConfig& cfg) {
  require(!proposals.empty(), errkind::kEmptyProposalSet,
          "empty proposal set");
  GraphPair pair;
  pair.plan = plan_structured_graph(teacher_map, proposals, cfg);
  pair.teacher = apply_graph_plan(teacher_map, proposals, pair.plan, cfg);
  pair.student = apply_graph_plan(student_map, proposals, pair.plan, cfg);
  return pair;
}

}  // namespace graphkd
