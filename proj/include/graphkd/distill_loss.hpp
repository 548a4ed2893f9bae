#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "graphkd/error.hpp"
#include "graphkd/roi_graph.hpp"

// Graph distillation loss: standardized node imitation over text and
// non-text populations, an edge imitation term over the full similarity
// matrix, an adaptive text weight, and temperature-scaled KL logit matching.
namespace graphkd {

enum class DistanceKind { kL1, kL2, kCosine, kMahalanobis };

inline std::string to_string(DistanceKind k) {
  switch (k) {
    case DistanceKind::kL1: return "l1";
    case DistanceKind::kL2: return "l2";
    case DistanceKind::kCosine: return "cosine";
    case DistanceKind::kMahalanobis: return "mahalanobis";
  }
  fail(errkind::kConfigError, "unknown distance kind");
}

inline DistanceKind distance_kind_from_string(const std::string& s) {
  if (s == "l1") return DistanceKind::kL1;
  if (s == "l2") return DistanceKind::kL2;
  if (s == "cosine") return DistanceKind::kCosine;
  if (s == "mahalanobis") return DistanceKind::kMahalanobis;
  fail(errkind::kConfigError, "unknown distance kind: " + s);
}

inline const std::vector<DistanceKind>& all_distance_kinds() {
  static const std::vector<DistanceKind> kinds = {
      DistanceKind::kL1, DistanceKind::kL2, DistanceKind::kCosine,
      DistanceKind::kMahalanobis};
  return kinds;
}

struct DistillationWeights {
  double lambda1 = 0.3;  // non-text node term
  double lambda3 = 0.3;  // edge term
  double alpha = 0.6;    // adaptive text weight scale
  double temperature = 1.0;
  // The supplementary preset fixes lambda2 instead of deriving it.
  std::optional<double> fixed_lambda2;

  void validate() const {
    require(lambda1 > 0.0 && lambda3 > 0.0 && alpha > 0.0,
            errkind::kConfigError, "lambda1, lambda3, alpha must be > 0");
    require(temperature > 0.0, errkind::kConfigError,
            "temperature must be > 0");
  }
};

struct StandardizationStats {
  std::vector<double> sigma_nt;
  std::vector<double> sigma_text;
  double sigma_edge = 1.0;

  static constexpr double kFloor = 1e-6;
};

struct GraphLossBreakdown {
  double loss_text = 0.0;
  double loss_nontext = 0.0;
  double loss_edge = 0.0;
  double loss_logit = 0.0;
  double total = 0.0;
};

// lambda2 = alpha * N_nt / N_text, recomputed per batch.
inline double adaptive_lambda2(double alpha, int n_nontext, int n_text) {
  require(alpha > 0.0, errkind::kConfigError, "alpha must be > 0");
  require(n_text >= 1, errkind::kNoTextPopulation, "no text population");
  return alpha * static_cast<double>(n_nontext) / static_cast<double>(n_text);
}

namespace detail {

// Per-dimension population standard deviation; fewer than two samples fall
// back to all-ones.
inline std::vector<double> population_sigma(
    const std::vector<const std::vector<double>*>& feats, std::size_t dim) {
  std::vector<double> sigma(dim, 1.0);
  if (feats.size() < 2) return sigma;
  for (std::size_t k = 0; k < dim; ++k) {
    double mean = 0.0;
    for (const auto* f : feats) mean += (*f)[k];
    mean /= static_cast<double>(feats.size());
    double var = 0.0;
    for (const auto* f : feats) {
      double d = (*f)[k] - mean;
      var += d * d;
    }
    var /= static_cast<double>(feats.size());
    sigma[k] = std::max(std::sqrt(var), StandardizationStats::kFloor);
  }
  return sigma;
}

}  // namespace detail

// Sigma denominators from the teacher graph: per-dimension feature std
// within each category population and the scalar std of off-diagonal edges.
inline StandardizationStats standardization_stats(
    const StructuredGraph& teacher) {
  require(!teacher.nodes.empty(), errkind::kNoNodes,
          "stats need at least one node");
  std::size_t dim = teacher.nodes[0].feature.size();
  std::vector<const std::vector<double>*> text, nontext;
  for (const InstanceNode& n : teacher.nodes)
    (n.is_text() ? text : nontext).push_back(&n.feature);

  StandardizationStats st;
  st.sigma_text = detail::population_sigma(text, dim);
  st.sigma_nt = detail::population_sigma(nontext, dim);

  int n = teacher.edges.n;
  if (n >= 2) {
    double mean = 0.0;
    int cnt = n * n - n;
    for (int p = 0; p < n; ++p)
      for (int q = 0; q < n; ++q)
        if (p != q) mean += teacher.edges.at(p, q);
    mean /= cnt;
    double var = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = 0; q < n; ++q)
        if (p != q) {
          double d = teacher.edges.at(p, q) - mean;
          var += d * d;
        }
    var /= cnt;
    st.sigma_edge = std::max(std::sqrt(var), StandardizationStats::kFloor);
  } else {
    st.sigma_edge = 1.0;
  }
  return st;
}

// Node-to-node distance. Sigma participates only in the Mahalanobis kind
// (diagonal standardization).
inline double node_distance(const std::vector<double>& v_t,
                            const std::vector<double>& v_s,
                            const std::vector<double>& sigma,
                            DistanceKind kind) {
  require(v_t.size() == v_s.size(), errkind::kDimensionMismatch,
          "node_distance: dimension mismatch");
  if (v_t == v_s) return 0.0;
  switch (kind) {
    case DistanceKind::kL1: {
      double s = 0.0;
      for (std::size_t i = 0; i < v_t.size(); ++i)
        s += std::fabs(v_t[i] - v_s[i]);
      return s;
    }
    case DistanceKind::kL2: {
      double s = 0.0;
      for (std::size_t i = 0; i < v_t.size(); ++i) {
        double d = v_t[i] - v_s[i];
        s += d * d;
      }
      return std::sqrt(s);
    }
    case DistanceKind::kCosine:
      return std::max(0.0, 1.0 - cosine_edge(v_t, v_s));
    case DistanceKind::kMahalanobis: {
      require(sigma.size() == v_t.size(), errkind::kDimensionMismatch,
              "node_distance: sigma dimension mismatch");
      double s = 0.0;
      for (std::size_t i = 0; i < v_t.size(); ++i) {
        double d = (v_t[i] - v_s[i]) / sigma[i];
        s += d * d;
      }
      return std::sqrt(s);
    }
  }
  fail(errkind::kConfigError, "unknown distance kind");
}

// Edge values are scalars, so L1 and L2 coincide with |delta| and the
// standardized kinds divide by sigma_edge. Cosine degenerates on scalars and
// is defined as the standardized absolute difference to keep the ablation
// grid total.
inline double edge_element_distance(double e_t, double e_s, double sigma_edge,
                                    DistanceKind kind) {
  double d = std::fabs(e_t - e_s);
  switch (kind) {
    case DistanceKind::kL1:
    case DistanceKind::kL2:
      return d;
    case DistanceKind::kCosine:
    case DistanceKind::kMahalanobis:
      return d / sigma_edge;
  }
  fail(errkind::kConfigError, "unknown distance kind");
}

// Temperature-scaled forward KL over aligned logit rows, teacher as the
// reference distribution; mean over rows of T^2 * KL(p_t || p_s).
inline double logit_matching_loss(const std::vector<std::vector<double>>& teacher_logits,
                                  const std::vector<std::vector<double>>& student_logits,
                                  double temperature) {
  require(teacher_logits.size() == student_logits.size(),
          errkind::kDimensionMismatch, "logit row count mismatch");
  require(temperature > 0.0, errkind::kConfigError, "temperature must be > 0");
  if (teacher_logits.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t r = 0; r < teacher_logits.size(); ++r) {
    const auto& lt = teacher_logits[r];
    const auto& ls = student_logits[r];
    require(lt.size() == ls.size() && !lt.empty(),
            errkind::kDimensionMismatch, "logit row shape mismatch");
    auto log_softmax = [&](const std::vector<double>& x) {
      double mx = x[0];
      for (double v : x) mx = std::max(mx, v);
      double lse = 0.0;
      for (double v : x) lse += std::exp((v - mx) / temperature);
      lse = std::log(lse);
      std::vector<double> out(x.size());
      for (std::size_t i = 0; i < x.size(); ++i)
        out[i] = (x[i] - mx) / temperature - lse;
      return out;
    };
    std::vector<double> lp_t = log_softmax(lt);
    std::vector<double> lp_s = log_softmax(ls);
    double kl = 0.0;
    for (std::size_t i = 0; i < lp_t.size(); ++i) {
      double p = std::exp(lp_t[i]);
      kl += p * (lp_t[i] - lp_s[i]);
    }
    total += temperature * temperature * std::max(kl, 0.0);
  }
  return total / static_cast<double>(teacher_logits.size());
}

// The three-term graph loss. The adaptive lambda2 weights the text node term
// and lambda1 the non-text term (the prose definition of lambda2; the
// equation as printed swaps the labels). Optional aligned logits add the KL
// matching term to the total.
inline GraphLossBreakdown graph_distillation_loss(
    const StructuredGraph& g_teacher, const StructuredGraph& g_student,
    const DistillationWeights& weights, DistanceKind node_kind,
    DistanceKind edge_kind,
    const std::vector<std::vector<double>>* teacher_logits = nullptr,
    const std::vector<std::vector<double>>* student_logits = nullptr) {
  weights.validate();
  require(g_teacher.size() == g_student.size(), errkind::kMisalignedGraphs,
          "graphs differ in node count");
  int n = g_teacher.size();
  require(n >= 1, errkind::kNoNodes, "empty graphs");
  for (int i = 0; i < n; ++i) {
    require(g_teacher.nodes[static_cast<std::size_t>(i)].category ==
                g_student.nodes[static_cast<std::size_t>(i)].category,
            errkind::kMisalignedGraphs, "node categories differ per slot");
  }

  StandardizationStats stats = standardization_stats(g_teacher);

  GraphLossBreakdown b;
  int n_text = 0, n_nt = 0;
  double text_sum = 0.0, nt_sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const InstanceNode& t = g_teacher.nodes[static_cast<std::size_t>(i)];
    const InstanceNode& s = g_student.nodes[static_cast<std::size_t>(i)];
    if (t.is_text()) {
      text_sum += node_distance(t.feature, s.feature, stats.sigma_text,
                                node_kind);
      ++n_text;
    } else {
      nt_sum += node_distance(t.feature, s.feature, stats.sigma_nt, node_kind);
      ++n_nt;
    }
  }
  b.loss_text = n_text > 0 ? text_sum / n_text : 0.0;
  b.loss_nontext = n_nt > 0 ? nt_sum / n_nt : 0.0;

  double edge_sum = 0.0;
  for (int p = 0; p < n; ++p)
    for (int q = 0; q < n; ++q)
      edge_sum += edge_element_distance(g_teacher.edges.at(p, q),
                                        g_student.edges.at(p, q),
                                        stats.sigma_edge, edge_kind);
  b.loss_edge = edge_sum / (static_cast<double>(n) * n);

  if (teacher_logits != nullptr || student_logits != nullptr) {
    require(teacher_logits != nullptr && student_logits != nullptr,
            errkind::kDimensionMismatch,
            "logit matching needs both teacher and student logits");
    b.loss_logit =
        logit_matching_loss(*teacher_logits, *student_logits,
                            weights.temperature);
  }

  double lambda2 = 0.0;
  if (n_text > 0) {
    lambda2 = weights.fixed_lambda2
                  ? *weights.fixed_lambda2
                  : adaptive_lambda2(weights.alpha, n_nt, n_text);
  }
  b.total = weights.lambda1 * b.loss_nontext + lambda2 * b.loss_text +
            weights.lambda3 * b.loss_edge + b.loss_logit;
  return b;
}

// ---------------------------------------------------------------------------
// Differentiable path (teacher constant, student on the tape)
// ---------------------------------------------------------------------------

struct ComponentToggles {
  bool edge_on = true;
  bool nontext_on = true;
  bool text_on = true;

  bool any() const { return edge_on || nontext_on || text_on; }
};

namespace detail {

inline ad::Var node_distance_ad(const std::vector<double>& v_t,
                                const ad::Var& v_s,
                                const std::vector<double>& sigma,
                                DistanceKind kind) {
  ad::Var t = ad::constant(Tensor::from_vec(v_t));
  ad::Var diff = ad::sub(t, v_s);
  switch (kind) {
    case DistanceKind::kL1:
      return ad::sum_all(ad::abs_v(diff));
    case DistanceKind::kL2:
      return ad::norm2_v(diff);
    case DistanceKind::kCosine:
      return ad::clamp_min(
          ad::add_const(ad::scale(ad::cosine(t, v_s), -1.0), 1.0), 0.0);
    case DistanceKind::kMahalanobis: {
      std::vector<double> inv(sigma.size());
      for (std::size_t i = 0; i < sigma.size(); ++i) inv[i] = 1.0 / sigma[i];
      return ad::norm2_v(ad::mul(diff, ad::constant(Tensor::from_vec(inv))));
    }
  }
  fail(errkind::kConfigError, "unknown distance kind");
}

}  // namespace detail

// KL logit matching with constant teacher rows and student rows on the tape.
inline ad::Var logit_matching_loss_ad(
    const std::vector<std::vector<double>>& teacher_logits,
    const std::vector<ad::Var>& student_logits, double temperature) {
  require(teacher_logits.size() == student_logits.size(),
          errkind::kDimensionMismatch, "logit row count mismatch");
  if (teacher_logits.empty()) return ad::scalar_const(0.0);
  std::vector<ad::Var> rows;
  double t2 = temperature * temperature;
  for (std::size_t r = 0; r < teacher_logits.size(); ++r) {
    const auto& lt = teacher_logits[r];
    double mx = lt[0];
    for (double v : lt) mx = std::max(mx, v);
    double lse = 0.0;
    for (double v : lt) lse += std::exp((v - mx) / temperature);
    lse = std::log(lse);
    std::vector<double> p(lt.size());
    double entropy_term = 0.0;
    for (std::size_t i = 0; i < lt.size(); ++i) {
      double lp = (lt[i] - mx) / temperature - lse;
      p[i] = std::exp(lp);
      entropy_term += p[i] * lp;
    }
    ad::Var ls =
        ad::log_softmax(ad::scale(student_logits[r], 1.0 / temperature));
    ad::Var cross = ad::dot(ad::constant(Tensor::from_vec(p)), ls);
    rows.push_back(
        ad::scale(ad::add_const(ad::scale(cross, -1.0), entropy_term), t2));
  }
  return ad::mean_scalars(rows);
}

struct AdLossResult {
  ad::Var total;
  GraphLossBreakdown values;
};

// Tape rendition of graph_distillation_loss: the teacher graph supplies the
// constants (stats, edges, lambda2 populations) and the student enters as
// aligned node-feature Vars. Disabled components contribute neither value
// nor gradient.
inline AdLossResult graph_distillation_loss_ad(
    const StructuredGraph& g_teacher,
    const std::vector<ad::Var>& student_features,
    const DistillationWeights& weights, DistanceKind node_kind,
    DistanceKind edge_kind, const ComponentToggles& toggles,
    const std::vector<std::vector<double>>& teacher_logits = {},
    const std::vector<ad::Var>& student_logits = {}) {
  weights.validate();
  int n = g_teacher.size();
  require(static_cast<int>(student_features.size()) == n,
          errkind::kMisalignedGraphs, "graphs differ in node count");
  require(n >= 1, errkind::kNoNodes, "empty graphs");

  StandardizationStats stats = standardization_stats(g_teacher);

  std::vector<ad::Var> text_terms, nt_terms;
  int n_text = 0, n_nt = 0;
  for (int i = 0; i < n; ++i) {
    const InstanceNode& t = g_teacher.nodes[static_cast<std::size_t>(i)];
    if (t.is_text()) {
      ++n_text;
      if (toggles.text_on)
        text_terms.push_back(detail::node_distance_ad(
            t.feature, student_features[static_cast<std::size_t>(i)],
            stats.sigma_text, node_kind));
    } else {
      ++n_nt;
      if (toggles.nontext_on)
        nt_terms.push_back(detail::node_distance_ad(
            t.feature, student_features[static_cast<std::size_t>(i)],
            stats.sigma_nt, node_kind));
    }
  }

  AdLossResult out;
  ad::Var total = ad::scalar_const(0.0);

  double lambda2 = 0.0;
  if (n_text > 0) {
    lambda2 = weights.fixed_lambda2
                  ? *weights.fixed_lambda2
                  : adaptive_lambda2(weights.alpha, n_nt, n_text);
  }

  if (!text_terms.empty()) {
    ad::Var loss_text = ad::mean_scalars(text_terms);
    out.values.loss_text = ad::scalar_value(loss_text);
    total = ad::add(total, ad::scale(loss_text, lambda2));
  }
  if (!nt_terms.empty()) {
    ad::Var loss_nt = ad::mean_scalars(nt_terms);
    out.values.loss_nontext = ad::scalar_value(loss_nt);
    total = ad::add(total, ad::scale(loss_nt, weights.lambda1));
  }

  if (toggles.edge_on && n >= 2) {
    // Student edges from the feature Vars; diagonal entries are 1 on both
    // sides and contribute nothing. Each unordered pair counts twice.
    std::vector<ad::Var> edge_terms;
    double inv_sigma =
        (edge_kind == DistanceKind::kCosine ||
         edge_kind == DistanceKind::kMahalanobis)
            ? 1.0 / stats.sigma_edge
            : 1.0;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        ad::Var e_s = ad::cosine(student_features[static_cast<std::size_t>(p)],
                                 student_features[static_cast<std::size_t>(q)]);
        ad::Var d = ad::abs_v(
            ad::add_const(e_s, -g_teacher.edges.at(p, q)));
        edge_terms.push_back(d);
      }
    }
    if (!edge_terms.empty()) {
      ad::Var loss_edge =
          ad::scale(ad::sum_scalars(edge_terms),
                    2.0 * inv_sigma / (static_cast<double>(n) * n));
      out.values.loss_edge = ad::scalar_value(loss_edge);
      total = ad::add(total, ad::scale(loss_edge, weights.lambda3));
    }
  }

  if (!teacher_logits.empty() || !student_logits.empty()) {
    ad::Var kl = logit_matching_loss_ad(teacher_logits, student_logits,
                                        weights.temperature);
    out.values.loss_logit = ad::scalar_value(kl);
    total = ad::add(total, kl);
  }

  out.total = total;
  out.values.total = ad::scalar_value(total);
  return out;
}

}  // namespace graphkd
