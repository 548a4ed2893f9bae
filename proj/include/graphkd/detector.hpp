#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "graphkd/autodiff.hpp"
#include "graphkd/error.hpp"
#include "graphkd/geometry.hpp"
#include "graphkd/rng.hpp"
#include "graphkd/roi_graph.hpp"
#include "graphkd/schema.hpp"
#include "graphkd/tensor.hpp"

// Toy detection stacks: small CNN backbones projected to a shared embedding
// width, a single-scale anchor RPN shared between teacher and student, RoI
// classification/regression heads, and a two-round GNN node classifier over
// the structured graph.
namespace graphkd {

// ---------------------------------------------------------------------------
// Backbone specification
// ---------------------------------------------------------------------------

struct BackboneSpec {
  std::string name;
  std::vector<std::pair<int, int>> stages;  // (channel width, conv count)
  int output_stride = 4;

  void validate() const {
    require(!stages.empty(), errkind::kConfigError, "backbone needs stages");
    for (const auto& [w, blocks] : stages)
      require(w >= 1 && blocks >= 1, errkind::kConfigError,
              "stage widths and block counts must be >= 1");
    int stride = 1;
    for (std::size_t i = 0; i < stages.size(); ++i) stride *= 2;
    require(stride == output_stride, errkind::kConfigError,
            "output_stride must equal 2^stage-count");
  }

  // Desk-scale presets mirroring the paper's pairs by depth/width ratio.
  static BackboneSpec preset(const std::string& name) {
    BackboneSpec s;
    s.name = name;
    if (name == "toy-r101") {
      s.stages = {{14, 3}, {28, 3}};
    } else if (name == "toy-r50") {
      s.stages = {{12, 2}, {24, 2}};
    } else if (name == "toy-r18") {
      s.stages = {{8, 1}, {16, 1}};
    } else if (name == "toy-eb0") {
      s.stages = {{6, 1}, {12, 1}};
    } else if (name == "toy-mnv2") {
      s.stages = {{5, 1}, {10, 1}};
    } else {
      fail(errkind::kConfigError, "unknown backbone preset: " + name);
    }
    s.output_stride = 4;
    return s;
  }
};

inline void require_stride_compatible(const BackboneSpec& teacher,
                                      const BackboneSpec& student) {
  require(teacher.output_stride == student.output_stride,
          errkind::kStrideMismatch,
          "teacher stride " + std::to_string(teacher.output_stride) +
              " != student stride " + std::to_string(student.output_stride));
}

// ---------------------------------------------------------------------------
// Proposals
// ---------------------------------------------------------------------------

struct AnchorConfig {
  std::vector<std::pair<double, double>> shapes_px = {
      {32, 16}, {24, 12}, {40, 20}, {24, 24}, {20, 20}, {28, 28}};
  double score_threshold = 0.5;
  double nms_iou = 0.7;
  int max_proposals = 16;
};

struct ProposalSet {
  std::vector<BoxGeometry> boxes;
  std::vector<double> objectness;  // descending

  std::size_t size() const { return boxes.size(); }
  bool empty() const { return boxes.empty(); }
};

struct Anchor {
  BoxGeometry box;
  int flat_index = 0;  // (shape, cy, cx) flattened, matches the score map
};

// Anchor boxes centered on feature cells, clipped to the image; anchors that
// collapse under clipping are skipped.
inline std::vector<Anchor> anchor_grid(int feat_h, int feat_w, int img_h,
                                       int img_w,
                                       const AnchorConfig& cfg) {
  std::vector<Anchor> anchors;
  double sy = static_cast<double>(img_h) / feat_h;
  double sx = static_cast<double>(img_w) / feat_w;
  for (std::size_t a = 0; a < cfg.shapes_px.size(); ++a) {
    double w = cfg.shapes_px[a].first / img_w;
    double h = cfg.shapes_px[a].second / img_h;
    for (int cy = 0; cy < feat_h; ++cy) {
      for (int cx = 0; cx < feat_w; ++cx) {
        double x = (cx + 0.5) * sx / img_w;
        double y = (cy + 0.5) * sy / img_h;
        BoxGeometry box{std::max(0.0, x - w / 2), std::max(0.0, y - h / 2),
                        std::min(1.0, x + w / 2), std::min(1.0, y + h / 2)};
        if (box.width() < 1e-6 || box.height() < 1e-6) continue;
        anchors.push_back(
            {box, static_cast<int>(a) * feat_h * feat_w + cy * feat_w + cx});
      }
    }
  }
  return anchors;
}

// Greedy NMS with canonical tie-breaking (score, then index order).
inline std::vector<int> nms_keep(const std::vector<BoxGeometry>& boxes,
                                 const std::vector<double>& scores,
                                 double iou_threshold, int max_keep) {
  std::vector<int> order(boxes.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    double sa = scores[static_cast<std::size_t>(a)];
    double sb = scores[static_cast<std::size_t>(b)];
    if (sa != sb) return sa > sb;
    return a < b;
  });
  std::vector<int> keep;
  std::vector<bool> dead(boxes.size(), false);
  for (int i : order) {
    if (dead[static_cast<std::size_t>(i)]) continue;
    keep.push_back(i);
    if (max_keep > 0 && static_cast<int>(keep.size()) >= max_keep) break;
    for (int j : order) {
      if (j == i || dead[static_cast<std::size_t>(j)]) continue;
      if (iou(boxes[static_cast<std::size_t>(i)],
              boxes[static_cast<std::size_t>(j)]) > iou_threshold)
        dead[static_cast<std::size_t>(j)] = true;
    }
  }
  return keep;
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

namespace detail {

inline ad::Var make_param(Tensor t) { return ad::leaf(std::move(t), true); }

inline Tensor he_conv(int oc, int ic, int k, Rng& rng) {
  Tensor W({oc, ic, k, k});
  double scale = std::sqrt(2.0 / (ic * k * k));
  for (std::size_t i = 0; i < W.size(); ++i) W[i] = rng.normal(0.0, scale);
  return W;
}

inline Tensor xavier_linear(int out, int in, Rng& rng) {
  Tensor W({out, in});
  double scale = std::sqrt(1.0 / in);
  for (std::size_t i = 0; i < W.size(); ++i) W[i] = rng.normal(0.0, scale);
  return W;
}

}  // namespace detail

struct ConvBlock {
  ad::Var W, b;
};

struct LinearBlock {
  ad::Var W, b;
};

// Per-node classification result from the GNN head. Text nodes take the
// designated text class directly; non-text nodes carry logits over the
// non-text classes plus a trailing background slot.
struct NodeClassification {
  bool is_text = false;
  int class_id = -1;  // schema id; -1 for background
  double score = 0.0;
  std::vector<double> logits;
};

class DetectionModel {
public:
  DetectionModel(ClassSchema schema, BackboneSpec spec, int embed_dim,
                 std::uint64_t seed)
      : schema_(std::move(schema)), spec_(std::move(spec)),
        embed_dim_(embed_dim) {
    schema_.validate();
    spec_.validate();
    require(embed_dim_ >= 2, errkind::kConfigError, "embed_dim must be >= 2");
    Rng rng = Rng::with_base(seed).child(0xdec0de);
    int in_ch = 3;
    for (const auto& [width, blocks] : spec_.stages) {
      for (int b = 0; b < blocks; ++b) {
        int ic = b == 0 ? in_ch : width;
        stage_convs_.push_back(
            {detail::make_param(detail::he_conv(width, ic, 3, rng)),
             detail::make_param(Tensor({width}))});
      }
      stage_sizes_.push_back(spec_.stages[stage_sizes_.size()].second);
      in_ch = width;
    }
    proj_ = {detail::make_param(detail::he_conv(embed_dim_, in_ch, 1, rng)),
             detail::make_param(Tensor({embed_dim_}))};
    int rpn_hidden = std::max(8, embed_dim_ / 2);
    rpn_hidden_ = {
        detail::make_param(detail::he_conv(rpn_hidden, embed_dim_, 3, rng)),
        detail::make_param(Tensor({rpn_hidden}))};
    int n_anchors = static_cast<int>(AnchorConfig{}.shapes_px.size());
    rpn_score_ = {
        detail::make_param(detail::he_conv(n_anchors, rpn_hidden, 1, rng)),
        detail::make_param(Tensor({n_anchors}))};
    int n_cls = schema_.size() + 1;  // + background
    roi_cls_ = {detail::make_param(detail::xavier_linear(n_cls, embed_dim_, rng)),
                detail::make_param(Tensor({n_cls}))};
    roi_reg_ = {detail::make_param(detail::xavier_linear(4, embed_dim_, rng)),
                detail::make_param(Tensor({4}))};
    int gnn_hidden = 16;
    int n_nontext = static_cast<int>(schema_.nontext_class_ids().size()) + 1;
    gnn_round1_ = {detail::make_param(
                       detail::xavier_linear(gnn_hidden, 2 * embed_dim_, rng)),
                   detail::make_param(Tensor({gnn_hidden}))};
    gnn_round2_ = {detail::make_param(
                       detail::xavier_linear(gnn_hidden, 2 * gnn_hidden, rng)),
                   detail::make_param(Tensor({gnn_hidden}))};
    gnn_cls_ = {detail::make_param(detail::xavier_linear(n_nontext, gnn_hidden, rng)),
                detail::make_param(Tensor({n_nontext}))};
  }

  const ClassSchema& schema() const { return schema_; }
  const BackboneSpec& spec() const { return spec_; }
  int embed_dim() const { return embed_dim_; }

  // Ordered, named traversal of every parameter (optimizer, checkpoints,
  // hashing).
  void visit_params(
      const std::function<void(const std::string&, const ad::Var&)>& fn) const {
    int idx = 0;
    for (const auto& c : stage_convs_) {
      fn("backbone.conv" + std::to_string(idx) + ".W", c.W);
      fn("backbone.conv" + std::to_string(idx) + ".b", c.b);
      ++idx;
    }
    fn("backbone.proj.W", proj_.W);
    fn("backbone.proj.b", proj_.b);
    fn("rpn.hidden.W", rpn_hidden_.W);
    fn("rpn.hidden.b", rpn_hidden_.b);
    fn("rpn.score.W", rpn_score_.W);
    fn("rpn.score.b", rpn_score_.b);
    fn("roi.cls.W", roi_cls_.W);
    fn("roi.cls.b", roi_cls_.b);
    fn("roi.reg.W", roi_reg_.W);
    fn("roi.reg.b", roi_reg_.b);
    fn("gnn.round1.W", gnn_round1_.W);
    fn("gnn.round1.b", gnn_round1_.b);
    fn("gnn.round2.W", gnn_round2_.W);
    fn("gnn.round2.b", gnn_round2_.b);
    fn("gnn.cls.W", gnn_cls_.W);
    fn("gnn.cls.b", gnn_cls_.b);
  }

  void set_frozen(bool frozen) {
    visit_params([frozen](const std::string&, const ad::Var& v) {
      v->requires_grad = !frozen;
    });
  }

  std::uint64_t parameter_hash() const {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](const void* data, std::size_t n) {
      const unsigned char* p = static_cast<const unsigned char*>(data);
      for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
      }
    };
    visit_params([&](const std::string& name, const ad::Var& v) {
      mix(name.data(), name.size());
      mix(v->val.data(), v->val.size() * sizeof(double));
    });
    return h;
  }

  // Backbone: per-stage conv3x3+relu chains, maxpool2 after each stage, then
  // a 1x1 projection (bias, no relu) onto the shared embedding width.
  ad::Var backbone_forward(const ad::Var& image) const {
    ad::Var x = image;
    std::size_t conv_idx = 0;
    for (std::size_t s = 0; s < spec_.stages.size(); ++s) {
      for (int b = 0; b < spec_.stages[s].second; ++b) {
        const ConvBlock& c = stage_convs_[conv_idx++];
        x = ad::relu(ad::conv2d(x, c.W, c.b));
      }
      x = ad::maxpool2(x);
    }
    return ad::conv2d(x, proj_.W, proj_.b);
  }

  Tensor backbone_forward_value(const Tensor& image) const {
    return backbone_forward(ad::constant(image))->val;
  }

  ad::Var rpn_score_map(const ad::Var& feature_map) const {
    ad::Var h = ad::relu(ad::conv2d(feature_map, rpn_hidden_.W, rpn_hidden_.b));
    return ad::conv2d(h, rpn_score_.W, rpn_score_.b);
  }

  // Proposal generation: sigmoid objectness over the anchor grid, score
  // threshold, NMS at the configured IoU, top max_proposals. Deterministic
  // given features and config.
  ProposalSet propose(const Tensor& score_map, int img_h, int img_w,
                      const AnchorConfig& cfg) const {
    int feat_h = score_map.dim(1), feat_w = score_map.dim(2);
    auto anchors = anchor_grid(feat_h, feat_w, img_h, img_w, cfg);
    std::vector<BoxGeometry> boxes;
    std::vector<double> scores;
    for (const Anchor& a : anchors) {
      double logit = score_map[static_cast<std::size_t>(a.flat_index)];
      double p = 1.0 / (1.0 + std::exp(-logit));
      if (p < cfg.score_threshold) continue;
      boxes.push_back(a.box);
      scores.push_back(p);
    }
    ProposalSet out;
    for (int k : nms_keep(boxes, scores, cfg.nms_iou, cfg.max_proposals)) {
      out.boxes.push_back(boxes[static_cast<std::size_t>(k)]);
      out.objectness.push_back(scores[static_cast<std::size_t>(k)]);
    }
    return out;
  }

  ad::Var roi_cls_logits(const ad::Var& feature) const {
    return ad::linear(roi_cls_.W, roi_cls_.b, feature);
  }

  ad::Var roi_reg_deltas(const ad::Var& feature) const {
    return ad::linear(roi_reg_.W, roi_reg_.b, feature);
  }

  std::vector<double> roi_cls_logits_value(const std::vector<double>& f) const {
    return roi_cls_logits(ad::constant(Tensor::from_vec(f)))->val.raw();
  }

  // Standard box-delta decoding with clamped log-scale terms.
  static BoxGeometry apply_deltas(const BoxGeometry& box,
                                  const std::vector<double>& d) {
    double cx = 0.5 * (box.x1 + box.x2), cy = 0.5 * (box.y1 + box.y2);
    double w = box.width(), h = box.height();
    double nx = cx + std::clamp(d[0], -0.5, 0.5) * w;
    double ny = cy + std::clamp(d[1], -0.5, 0.5) * h;
    double nw = w * std::exp(std::clamp(d[2], -1.0, 1.0));
    double nh = h * std::exp(std::clamp(d[3], -1.0, 1.0));
    BoxGeometry out{nx - nw / 2, ny - nh / 2, nx + nw / 2, ny + nh / 2};
    out.x1 = std::clamp(out.x1, 0.0, 1.0);
    out.y1 = std::clamp(out.y1, 0.0, 1.0);
    out.x2 = std::clamp(out.x2, 0.0, 1.0);
    out.y2 = std::clamp(out.y2, 0.0, 1.0);
    if (out.x2 - out.x1 < 1e-4 || out.y2 - out.y1 < 1e-4) return box;
    return out;
  }

  static std::vector<double> deltas_between(const BoxGeometry& from,
                                            const BoxGeometry& to) {
    double fw = from.width(), fh = from.height();
    return {(0.5 * (to.x1 + to.x2) - 0.5 * (from.x1 + from.x2)) / fw,
            (0.5 * (to.y1 + to.y2) - 0.5 * (from.y1 + from.y2)) / fh,
            std::log(to.width() / fw), std::log(to.height() / fh)};
  }

  // Two rounds of message passing over explicit edge weights: each node's
  // message is the edge-weighted mean of the other nodes' states, gated
  // through a learned linear+relu on [state; message]; a linear classifier
  // follows. Edges may be constants (inference) or tape values (training).
  std::vector<ad::Var> gnn_node_logits(
      const std::vector<ad::Var>& node_features,
      const std::vector<std::vector<ad::Var>>& edges) const {
    int n = static_cast<int>(node_features.size());
    std::vector<ad::Var> state = node_features;
    const LinearBlock* rounds[2] = {&gnn_round1_, &gnn_round2_};
    for (int round = 0; round < 2; ++round) {
      std::vector<ad::Var> next;
      next.reserve(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) {
        ad::Var msg;
        if (n == 1) {
          msg = ad::constant(
              Tensor(state[static_cast<std::size_t>(i)]->val.dims()));
        } else {
          ad::Var num;
          std::vector<ad::Var> mags;
          for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            const ad::Var& e = edges[static_cast<std::size_t>(i)]
                                    [static_cast<std::size_t>(j)];
            ad::Var term = ad::mul_sv(e, state[static_cast<std::size_t>(j)]);
            num = num ? ad::add(num, term) : term;
            mags.push_back(ad::abs_v(e));
          }
          ad::Var denom = ad::clamp_min(ad::sum_scalars(mags), 1e-8);
          msg = ad::div_vs(num, denom);
        }
        const LinearBlock& r = *rounds[round];
        next.push_back(ad::relu(ad::linear(
            r.W, r.b, ad::concat2(state[static_cast<std::size_t>(i)], msg))));
      }
      state = std::move(next);
    }
    std::vector<ad::Var> logits;
    logits.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
      logits.push_back(
          ad::linear(gnn_cls_.W, gnn_cls_.b, state[static_cast<std::size_t>(i)]));
    return logits;
  }

private:
  ClassSchema schema_;
  BackboneSpec spec_;
  int embed_dim_;
  std::vector<ConvBlock> stage_convs_;
  std::vector<int> stage_sizes_;
  ConvBlock proj_;
  ConvBlock rpn_hidden_, rpn_score_;
  LinearBlock roi_cls_, roi_reg_;
  LinearBlock gnn_round1_, gnn_round2_, gnn_cls_;

  friend struct ModelSurgeon;  // test hook for hand-set weights
};

// ---------------------------------------------------------------------------
// Value-land GNN classification over a structured graph
// ---------------------------------------------------------------------------

inline std::vector<std::vector<ad::Var>> edges_to_vars(const EdgeMatrix& m) {
  std::vector<std::vector<ad::Var>> e(
      static_cast<std::size_t>(m.n),
      std::vector<ad::Var>(static_cast<std::size_t>(m.n)));
  for (int p = 0; p < m.n; ++p)
    for (int q = 0; q < m.n; ++q)
      e[static_cast<std::size_t>(p)][static_cast<std::size_t>(q)] =
          ad::scalar_const(m.at(p, q));
  return e;
}

// Text nodes receive the designated text class directly; non-text nodes get
// GNN logits over the non-text classes plus background and the softmax score
// of their argmax.
inline std::vector<NodeClassification> gnn_classify_nodes(
    const DetectionModel& model, const StructuredGraph& graph) {
  std::vector<NodeClassification> out(graph.nodes.size());
  if (graph.nodes.empty()) return out;
  std::vector<ad::Var> feats;
  for (const auto& n : graph.nodes)
    feats.push_back(ad::constant(Tensor::from_vec(n.feature)));
  auto logits = model.gnn_node_logits(feats, edges_to_vars(graph.edges));
  auto nontext_ids = model.schema().nontext_class_ids();
  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    NodeClassification& nc = out[i];
    if (graph.nodes[i].is_text()) {
      nc.is_text = true;
      nc.class_id = model.schema().designated_text_class();
      nc.score = 1.0;
      continue;
    }
    nc.logits = logits[i]->val.raw();
    int k = static_cast<int>(nc.logits.size());
    int best = 0;
    for (int j = 1; j < k; ++j)
      if (nc.logits[static_cast<std::size_t>(j)] >
          nc.logits[static_cast<std::size_t>(best)])
        best = j;
    double mx = nc.logits[static_cast<std::size_t>(best)];
    double lse = 0.0;
    for (double v : nc.logits) lse += std::exp(v - mx);
    nc.score = 1.0 / lse;  // softmax probability of the argmax
    nc.class_id = best < static_cast<int>(nontext_ids.size())
                      ? nontext_ids[static_cast<std::size_t>(best)]
                      : -1;  // background
  }
  return out;
}

// Lineage replay: one text record per merge-lineage member box.
inline std::vector<DetectionRecord> separate_text_nodes(
    const InstanceNode& node, int text_class_id, double confidence) {
  require(node.is_text(), errkind::kMisalignedNodes,
          "separate_text_nodes expects a text node");
  std::vector<DetectionRecord> out;
  out.reserve(node.members.size());
  for (const auto& [id, box] : node.members)
    out.push_back({box, text_class_id, confidence});
  return out;
}

// ---------------------------------------------------------------------------
// End-to-end inference
// ---------------------------------------------------------------------------

struct DetectConfig {
  AnchorConfig anchors;
  GraphConfig graph;
  double final_nms_iou = 0.5;
  double final_score_threshold = 0.25;
};

// backbone -> RPN -> box refinement -> structured graph (own covariance
// typing) -> GNN classification -> text separation -> per-class NMS.
inline std::vector<DetectionRecord> detect(const DetectionModel& model,
                                           const Tensor& image,
                                           const DetectConfig& cfg) {
  int img_h = image.dim(1), img_w = image.dim(2);
  ad::Var img = ad::constant(image);
  ad::Var fmap_var = model.backbone_forward(img);
  const Tensor& fmap = fmap_var->val;
  ProposalSet proposals = model.propose(model.rpn_score_map(fmap_var)->val,
                                        img_h, img_w, cfg.anchors);
  if (proposals.empty()) return {};

  // Refine proposal boxes from their pooled features, then build the graph
  // over the refined set so merge lineage records the refined boxes.
  std::vector<BoxGeometry> refined;
  auto rois = pool_roi_features(fmap, proposals.boxes, cfg.graph.roi_size);
  for (std::size_t i = 0; i < rois.size(); ++i) {
    std::vector<double> f = node_feature_from_roi(rois[i]);
    auto deltas =
        model.roi_reg_deltas(ad::constant(Tensor::from_vec(f)))->val.raw();
    refined.push_back(DetectionModel::apply_deltas(proposals.boxes[i], deltas));
  }

  GraphPlan plan = plan_structured_graph(fmap, refined, cfg.graph);
  StructuredGraph graph = apply_graph_plan(fmap, refined, plan, cfg.graph);
  auto classification = gnn_classify_nodes(model, graph);

  int text_class = model.schema().designated_text_class();
  std::vector<DetectionRecord> raw;
  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    const InstanceNode& node = graph.nodes[i];
    if (node.is_text()) {
      // Text confidence from the RoI classification head.
      auto logits = model.roi_cls_logits_value(node.feature);
      double mx = logits[0];
      for (double v : logits) mx = std::max(mx, v);
      double lse = 0.0;
      for (double v : logits) lse += std::exp(v - mx);
      double conf =
          std::exp(logits[static_cast<std::size_t>(text_class)] - mx) / lse;
      for (auto& rec : separate_text_nodes(node, text_class, conf))
        raw.push_back(rec);
    } else if (classification[i].class_id >= 0) {
      raw.push_back({node.box, classification[i].class_id,
                     classification[i].score});
    }
  }

  // Per-class NMS, then global descending-score order.
  std::vector<DetectionRecord> out;
  for (int cls = 0; cls < model.schema().size(); ++cls) {
    std::vector<BoxGeometry> boxes;
    std::vector<double> scores;
    std::vector<const DetectionRecord*> recs;
    for (const auto& r : raw) {
      if (r.class_id != cls || r.score < cfg.final_score_threshold) continue;
      boxes.push_back(r.box);
      scores.push_back(r.score);
      recs.push_back(&r);
    }
    for (int k : nms_keep(boxes, scores, cfg.final_nms_iou, -1))
      out.push_back(*recs[static_cast<std::size_t>(k)]);
  }
  std::sort(out.begin(), out.end(),
            [](const DetectionRecord& a, const DetectionRecord& b) {
              if (a.score != b.score) return a.score > b.score;
              if (a.class_id != b.class_id) return a.class_id < b.class_id;
              return a.box.x1 < b.box.x1;
            });
  return out;
}

}  // namespace graphkd
