#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "graphkd/distill_loss.hpp"
#include "graphkd/rng.hpp"
#include "graphkd/roi_graph.hpp"
#include "oracles.hpp"

using graphkd::DistanceKind;
using graphkd::DistillationWeights;
using graphkd::GraphLossBreakdown;
using graphkd::InstanceNode;
using graphkd::NodeCategory;
using graphkd::StructuredGraph;
using graphkd::Tensor;

namespace {

InstanceNode make_node(int id, std::vector<double> feature, NodeCategory cat) {
  InstanceNode n;
  n.id = id;
  n.feature = std::move(feature);
  n.category = cat;
  n.box = {0.1, 0.1, 0.2, 0.2};
  n.members = {{id, n.box}};
  return n;
}

StructuredGraph graph_of(std::vector<InstanceNode> nodes) {
  StructuredGraph g;
  g.nodes = std::move(nodes);
  g.edges = graphkd::build_edge_matrix(g.nodes);
  return g;
}

// Random aligned teacher/student pair with at least one node.
struct RandomPair {
  StructuredGraph teacher, student;
};

RandomPair random_pair(graphkd::Rng& rng, int max_n = 8, int max_d = 6) {
  int n = rng.uniform_int(1, max_n);
  int d = rng.uniform_int(2, max_d);
  std::vector<InstanceNode> t, s;
  for (int i = 0; i < n; ++i) {
    NodeCategory cat =
        rng.bernoulli(0.5) ? NodeCategory::kText : NodeCategory::kNonText;
    std::vector<double> ft(static_cast<std::size_t>(d)), fs(static_cast<std::size_t>(d));
    for (int k = 0; k < d; ++k) {
      ft[static_cast<std::size_t>(k)] = rng.uniform(-2, 2);
      fs[static_cast<std::size_t>(k)] = rng.uniform(-2, 2);
    }
    ft[0] += 2.5;  // keep norms clear of zero
    fs[0] += 2.5;
    t.push_back(make_node(i, ft, cat));
    s.push_back(make_node(i, fs, cat));
  }
  return {graph_of(std::move(t)), graph_of(std::move(s))};
}

oracles::LossOracleInput to_oracle_input(const RandomPair& p,
                                         const DistillationWeights& w,
                                         DistanceKind nk, DistanceKind ek) {
  oracles::LossOracleInput in;
  int n = p.teacher.size();
  for (int i = 0; i < n; ++i) {
    in.t_feat.push_back(p.teacher.nodes[static_cast<std::size_t>(i)].feature);
    in.s_feat.push_back(p.student.nodes[static_cast<std::size_t>(i)].feature);
    in.is_text.push_back(p.teacher.nodes[static_cast<std::size_t>(i)].is_text());
  }
  in.t_edge.assign(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(n)));
  in.s_edge = in.t_edge;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      in.t_edge[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] = p.teacher.edges.at(a, b);
      in.s_edge[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] = p.student.edges.at(a, b);
    }
  in.lambda1 = w.lambda1;
  in.lambda3 = w.lambda3;
  in.alpha = w.alpha;
  if (w.fixed_lambda2) {
    in.lambda2_fixed = true;
    in.lambda2_value = *w.fixed_lambda2;
  }
  auto code = [](DistanceKind k) {
    switch (k) {
      case DistanceKind::kL1: return 0;
      case DistanceKind::kL2: return 1;
      case DistanceKind::kCosine: return 2;
      default: return 3;
    }
  };
  in.node_kind = code(nk);
  in.edge_kind = code(ek);
  return in;
}

}  // namespace

TEST(DistanceKindTest, ParsePrintRoundTrip) {
  for (DistanceKind k : graphkd::all_distance_kinds())
    EXPECT_EQ(graphkd::distance_kind_from_string(graphkd::to_string(k)), k);
  EXPECT_THROW(graphkd::distance_kind_from_string("chebyshev"), graphkd::Error);
}

TEST(Stats, SingleNodePopulationFallsBackToOnes) {
  auto g = graph_of({make_node(0, {1.0, 2.0}, NodeCategory::kText),
                     make_node(1, {0.5, 0.5}, NodeCategory::kNonText)});
  auto st = graphkd::standardization_stats(g);
  EXPECT_EQ(st.sigma_text, (std::vector<double>{1.0, 1.0}));
  EXPECT_EQ(st.sigma_nt, (std::vector<double>{1.0, 1.0}));
}

TEST(Stats, TwoNodePopulationStd) {
  // (0,0) and (2,2): population std per dimension is 1. Features must have
  // nonzero norm, so use the text population for the check.
  auto g = graph_of({make_node(0, {0.0, 0.1}, NodeCategory::kText),
                     make_node(1, {2.0, 2.1}, NodeCategory::kText)});
  auto st = graphkd::standardization_stats(g);
  EXPECT_NEAR(st.sigma_text[0], 1.0, 1e-12);
  EXPECT_NEAR(st.sigma_text[1], 1.0, 1e-12);
}

TEST(Stats, IdenticalEdgesFloorSigma) {
  auto g = graph_of({make_node(0, {1.0, 1.0}, NodeCategory::kNonText),
                     make_node(1, {2.0, 2.0}, NodeCategory::kNonText),
                     make_node(2, {3.0, 3.0}, NodeCategory::kNonText)});
  auto st = graphkd::standardization_stats(g);
  EXPECT_DOUBLE_EQ(st.sigma_edge, 1e-6);
}

TEST(NodeDistance, HandExamples) {
  std::vector<double> sigma{1.0, 1.0};
  for (DistanceKind k : graphkd::all_distance_kinds())
    EXPECT_DOUBLE_EQ(
        graphkd::node_distance({1.5, -0.5}, {1.5, -0.5}, sigma, k), 0.0);
  EXPECT_DOUBLE_EQ(graphkd::node_distance({3, 4}, {0, 0}, sigma,
                                          DistanceKind::kMahalanobis),
                   5.0);
  EXPECT_DOUBLE_EQ(
      graphkd::node_distance({1, 0}, {0, 1}, sigma, DistanceKind::kCosine),
      1.0);
  EXPECT_THROW(graphkd::node_distance({1, 2}, {1, 2, 3}, sigma,
                                      DistanceKind::kL1),
               graphkd::Error);
}

TEST(AdaptiveLambda, FormulaAndErrors) {
  EXPECT_NEAR(graphkd::adaptive_lambda2(0.6, 3, 6), 0.3, 1e-12);
  EXPECT_DOUBLE_EQ(graphkd::adaptive_lambda2(0.5, 4, 4), 0.5);
  EXPECT_THROW(graphkd::adaptive_lambda2(0.5, 4, 0), graphkd::Error);
}

TEST(LogitMatching, ClosedFormsAndInvariance) {
  EXPECT_DOUBLE_EQ(
      graphkd::logit_matching_loss({{1.0, 2.0}}, {{1.0, 2.0}}, 1.0), 0.0);
  // teacher (ln2, 0) vs student (0, ln2): KL((2/3,1/3) || (1/3,2/3))
  //   = (2/3)ln2 - (1/3)ln2 = (1/3)ln2.
  double got = graphkd::logit_matching_loss({{std::log(2.0), 0.0}},
                                            {{0.0, std::log(2.0)}}, 1.0);
  EXPECT_NEAR(got, std::log(2.0) / 3.0, 1e-12);
  // Shift invariance.
  EXPECT_NEAR(graphkd::logit_matching_loss({{1.0 + 5.0, 2.0 + 5.0}},
                                           {{1.0, 2.0}}, 1.0),
              0.0, 1e-12);
  EXPECT_THROW(graphkd::logit_matching_loss({{1, 2}}, {{1, 2, 3}}, 1.0),
               graphkd::Error);
}

TEST(GraphLoss, IdenticalGraphsGiveZero) {
  graphkd::Rng rng(97);
  DistillationWeights w;
  for (int trial = 0; trial < 10; ++trial) {
    auto p = random_pair(rng);
    for (DistanceKind nk : graphkd::all_distance_kinds()) {
      auto b = graphkd::graph_distillation_loss(p.teacher, p.teacher, w, nk,
                                                nk);
      EXPECT_DOUBLE_EQ(b.loss_text, 0.0);
      EXPECT_DOUBLE_EQ(b.loss_nontext, 0.0);
      EXPECT_DOUBLE_EQ(b.loss_edge, 0.0);
      EXPECT_DOUBLE_EQ(b.total, 0.0);
    }
  }
}

TEST(GraphLoss, SingleNonTextPairHandCase) {
  auto t = graph_of({make_node(0, {1.0, 0.0}, NodeCategory::kNonText)});
  auto s = graph_of({make_node(0, {0.0, 1.0}, NodeCategory::kNonText)});
  DistillationWeights w;
  auto b = graphkd::graph_distillation_loss(t, s, w, DistanceKind::kMahalanobis,
                                            DistanceKind::kMahalanobis);
  EXPECT_NEAR(b.loss_nontext, std::sqrt(2.0), 1e-12);
  EXPECT_DOUBLE_EQ(b.loss_edge, 0.0);
  EXPECT_DOUBLE_EQ(b.loss_text, 0.0);
  EXPECT_NEAR(b.total, w.lambda1 * std::sqrt(2.0), 1e-12);
}

TEST(GraphLoss, MatchesScalarLoopOracleAcrossGrid) {
  graphkd::Rng rng(101);
  DistillationWeights w;
  for (int trial = 0; trial < 40; ++trial) {
    auto p = random_pair(rng);
    for (DistanceKind nk : graphkd::all_distance_kinds()) {
      for (DistanceKind ek : graphkd::all_distance_kinds()) {
        auto b = graphkd::graph_distillation_loss(p.teacher, p.student, w, nk,
                                                  ek);
        auto o = oracles::loss_oracle(to_oracle_input(p, w, nk, ek));
        EXPECT_NEAR(b.loss_text, o.text, 1e-9);
        EXPECT_NEAR(b.loss_nontext, o.nontext, 1e-9);
        EXPECT_NEAR(b.loss_edge, o.edge, 1e-9);
        EXPECT_NEAR(b.total, o.total, 1e-9);
      }
    }
  }
}

TEST(GraphLoss, EdgeTermEqualsTwiceUpperTrianglePlusDiagonal) {
  graphkd::Rng rng(103);
  auto p = random_pair(rng, 6);
  int n = p.teacher.size();
  auto st = graphkd::standardization_stats(p.teacher);
  double full = 0.0, upper = 0.0, diag = 0.0;
  for (int a = 0; a < n; ++a)
    for (int b2 = 0; b2 < n; ++b2) {
      double d = graphkd::edge_element_distance(
          p.teacher.edges.at(a, b2), p.student.edges.at(a, b2), st.sigma_edge,
          DistanceKind::kMahalanobis);
      full += d;
      if (a < b2) upper += d;
      if (a == b2) diag += d;
    }
  EXPECT_NEAR(full, 2.0 * upper + diag, 1e-9);
}

TEST(GraphLoss, NonnegativeAndLambdaLinear) {
  graphkd::Rng rng(107);
  for (int trial = 0; trial < 20; ++trial) {
    auto p = random_pair(rng);
    DistillationWeights w;
    auto b = graphkd::graph_distillation_loss(p.teacher, p.student, w,
                                              DistanceKind::kCosine,
                                              DistanceKind::kMahalanobis);
    EXPECT_GE(b.loss_text, 0.0);
    EXPECT_GE(b.loss_nontext, 0.0);
    EXPECT_GE(b.loss_edge, 0.0);
    EXPECT_GE(b.total, 0.0);

    // Doubling lambda1 doubles exactly the non-text contribution.
    DistillationWeights w2 = w;
    w2.lambda1 *= 2.0;
    auto b2 = graphkd::graph_distillation_loss(p.teacher, p.student, w2,
                                               DistanceKind::kCosine,
                                               DistanceKind::kMahalanobis);
    EXPECT_NEAR(b2.total - b.total, w.lambda1 * b.loss_nontext, 1e-9);

    // Breakdown recombination with the prose lambda mapping.
    int n_text = 0, n_nt = 0;
    for (const auto& node : p.teacher.nodes)
      node.is_text() ? ++n_text : ++n_nt;
    double lambda2 =
        n_text > 0 ? graphkd::adaptive_lambda2(w.alpha, n_nt, n_text) : 0.0;
    EXPECT_NEAR(b.total,
                w.lambda1 * b.loss_nontext + lambda2 * b.loss_text +
                    w.lambda3 * b.loss_edge + b.loss_logit,
                1e-6);
  }
}

TEST(GraphLoss, GridSanityL2EqualsMahalanobisWithUnitSigma) {
  // With all sigmas forced to 1 by singleton populations, Mahalanobis and L2
  // produce identical totals.
  auto t = graph_of({make_node(0, {1.0, 2.0}, NodeCategory::kText),
                     make_node(1, {2.0, 1.0}, NodeCategory::kNonText)});
  auto s = graph_of({make_node(0, {1.5, 1.0}, NodeCategory::kText),
                     make_node(1, {1.0, 2.5}, NodeCategory::kNonText)});
  DistillationWeights w;
  auto st = graphkd::standardization_stats(t);
  ASSERT_EQ(st.sigma_text, (std::vector<double>{1.0, 1.0}));
  double sigma_edge = st.sigma_edge;  // single off-diagonal value -> floor
  auto b_l2 = graphkd::graph_distillation_loss(t, s, w, DistanceKind::kL2,
                                               DistanceKind::kL2);
  auto b_mh = graphkd::graph_distillation_loss(t, s, w,
                                               DistanceKind::kMahalanobis,
                                               DistanceKind::kMahalanobis);
  EXPECT_NEAR(b_l2.loss_text, b_mh.loss_text, 1e-12);
  EXPECT_NEAR(b_l2.loss_nontext, b_mh.loss_nontext, 1e-12);
  // Edge terms differ exactly by the sigma scaling.
  EXPECT_NEAR(b_mh.loss_edge, b_l2.loss_edge / sigma_edge, 1e-9);
}

TEST(GraphLoss, MisalignedGraphsRejected) {
  auto t = graph_of({make_node(0, {1.0, 0.0}, NodeCategory::kText)});
  auto s2 = graph_of({make_node(0, {1.0, 0.0}, NodeCategory::kText),
                      make_node(1, {0.0, 1.0}, NodeCategory::kNonText)});
  DistillationWeights w;
  EXPECT_THROW(graphkd::graph_distillation_loss(t, s2, w, DistanceKind::kL2,
                                                DistanceKind::kL2),
               graphkd::Error);
  auto s_cat = graph_of({make_node(0, {1.0, 0.0}, NodeCategory::kNonText)});
  EXPECT_THROW(graphkd::graph_distillation_loss(t, s_cat, w, DistanceKind::kL2,
                                                DistanceKind::kL2),
               graphkd::Error);
}

// ---------------------------------------------------------------------------
// Differentiable path
// ---------------------------------------------------------------------------

namespace ad = graphkd::ad;

TEST(GraphLossAd, ForwardAgreesWithValuePath) {
  graphkd::Rng rng(109);
  DistillationWeights w;
  graphkd::ComponentToggles toggles;
  for (int trial = 0; trial < 15; ++trial) {
    auto p = random_pair(rng);
    std::vector<ad::Var> feats;
    for (const auto& node : p.student.nodes)
      feats.push_back(ad::constant(Tensor::from_vec(node.feature)));
    for (DistanceKind nk : graphkd::all_distance_kinds()) {
      for (DistanceKind ek : graphkd::all_distance_kinds()) {
        auto value = graphkd::graph_distillation_loss(p.teacher, p.student, w,
                                                      nk, ek);
        auto tape = graphkd::graph_distillation_loss_ad(p.teacher, feats, w,
                                                        nk, ek, toggles);
        EXPECT_NEAR(tape.values.total, value.total, 1e-9);
        EXPECT_NEAR(tape.values.loss_text, value.loss_text, 1e-9);
        EXPECT_NEAR(tape.values.loss_nontext, value.loss_nontext, 1e-9);
        EXPECT_NEAR(tape.values.loss_edge, value.loss_edge, 1e-9);
      }
    }
  }
}

TEST(GraphLossAd, TogglesZeroOutComponents) {
  graphkd::Rng rng(113);
  auto p = random_pair(rng, 6);
  std::vector<ad::Var> feats;
  for (const auto& node : p.student.nodes)
    feats.push_back(ad::leaf(Tensor::from_vec(node.feature), true));
  DistillationWeights w;
  graphkd::ComponentToggles off;
  off.edge_on = off.nontext_on = off.text_on = false;
  auto tape = graphkd::graph_distillation_loss_ad(
      p.teacher, feats, w, DistanceKind::kCosine, DistanceKind::kMahalanobis,
      off);
  EXPECT_DOUBLE_EQ(tape.values.total, 0.0);
  EXPECT_FALSE(tape.total->requires_grad);
}

TEST(GraphLossAd, GradientMatchesFiniteDifferences) {
  // Student features parameterized by a small vector; check d(total)/d(param)
  // against central differences across the full distance grid.
  graphkd::Rng rng(127);
  DistillationWeights w;
  graphkd::ComponentToggles toggles;
  for (DistanceKind nk : graphkd::all_distance_kinds()) {
    for (DistanceKind ek : graphkd::all_distance_kinds()) {
      auto p = random_pair(rng, 5, 4);
      int n = p.teacher.size();
      std::size_t d = p.teacher.nodes[0].feature.size();
      std::vector<double> params;
      for (const auto& node : p.student.nodes)
        params.insert(params.end(), node.feature.begin(), node.feature.end());

      auto eval = [&](const std::vector<double>& pv, bool with_grad,
                      std::vector<double>* grad_out) {
        std::vector<ad::Var> feats;
        for (int i = 0; i < n; ++i) {
          std::vector<double> f(pv.begin() + static_cast<long>(i * d),
                                pv.begin() + static_cast<long>((i + 1) * d));
          feats.push_back(ad::leaf(Tensor::from_vec(f), with_grad));
        }
        auto res = graphkd::graph_distillation_loss_ad(p.teacher, feats, w,
                                                       nk, ek, toggles);
        if (with_grad && grad_out) {
          ad::backward(res.total);
          grad_out->clear();
          for (const auto& v : feats)
            grad_out->insert(grad_out->end(), v->grad.raw().begin(),
                             v->grad.raw().end());
        }
        return res.values.total;
      };

      std::vector<double> analytic;
      eval(params, true, &analytic);
      auto numeric = oracles::finite_diff_gradient(
          [&](const std::vector<double>& pv) { return eval(pv, false, nullptr); },
          params);
      ASSERT_EQ(analytic.size(), numeric.size());
      for (std::size_t i = 0; i < numeric.size(); ++i) {
        double denom =
            std::max({1.0, std::fabs(numeric[i]), std::fabs(analytic[i])});
        EXPECT_NEAR(analytic[i], numeric[i], 2e-5 * denom)
            << to_string(nk) << "/" << to_string(ek) << " param " << i;
      }
    }
  }
}
