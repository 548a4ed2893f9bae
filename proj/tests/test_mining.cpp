#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "graphkd/mining.hpp"
#include "graphkd/rng.hpp"

using graphkd::InstanceNode;
using graphkd::NodeCategory;

namespace {

InstanceNode text_node(int id, std::vector<double> feature) {
  InstanceNode n;
  n.id = id;
  n.feature = std::move(feature);
  n.category = NodeCategory::kText;
  n.box = {0.1, 0.1, 0.2, 0.2};
  n.members = {{id, n.box}};
  return n;
}

// Teacher head that returns fixed logits keyed by feature[0] rounded to an
// index, so tests can script arbitrary losses.
graphkd::TeacherHeadFn scripted_head(std::vector<std::vector<double>> logits) {
  return [logits](const std::vector<double>& f) {
    return logits[static_cast<std::size_t>(f[0])];
  };
}

std::vector<InstanceNode> indexed_nodes(int count) {
  std::vector<InstanceNode> nodes;
  for (int i = 0; i < count; ++i)
    nodes.push_back(text_node(i, {static_cast<double>(i), 1.0}));
  return nodes;
}

}  // namespace

TEST(Mining, PerfectConfidenceGivesZeroLoss) {
  auto head = [](const std::vector<double>&) {
    return std::vector<double>{100.0, 0.0};
  };
  auto nodes = indexed_nodes(1);
  auto losses = graphkd::teacher_text_cls_loss(head, nodes, 0);
  ASSERT_EQ(losses.size(), 1u);
  EXPECT_NEAR(losses[0], 0.0, 1e-12);
  EXPECT_TRUE(nodes[0].teacher_cls_loss.has_value());
}

TEST(Mining, UniformHeadGivesLnK) {
  for (int k = 2; k <= 5; ++k) {
    auto head = [k](const std::vector<double>&) {
      return std::vector<double>(static_cast<std::size_t>(k), 0.25);
    };
    auto nodes = indexed_nodes(1);
    auto losses = graphkd::teacher_text_cls_loss(head, nodes, 0);
    EXPECT_NEAR(losses[0], std::log(static_cast<double>(k)), 1e-12);
  }
}

TEST(Mining, EmptyInputGivesEmptyOutput) {
  std::vector<InstanceNode> empty;
  auto head = [](const std::vector<double>&) {
    return std::vector<double>{1.0, 0.0};
  };
  EXPECT_TRUE(graphkd::teacher_text_cls_loss(head, empty, 0).empty());
}

namespace {

// Head engineered so node i has CE loss approximately `losses[i]` against
// class 0 of a 2-class output: logit gap g gives loss log(1+exp(-g)).
graphkd::TeacherHeadFn loss_script(const std::vector<double>& losses) {
  std::vector<std::vector<double>> logits;
  for (double l : losses) {
    // Solve log(1+e^-g) = l for g.
    double g = -std::log(std::expm1(l));
    logits.push_back({g, 0.0});
  }
  return scripted_head(logits);
}

}  // namespace

TEST(Mining, ThresholdFixtureSelectsIndices0And2) {
  std::vector<double> losses{0.9, 0.2, 0.7};
  auto pair = graphkd::node_indexing(indexed_nodes(3), indexed_nodes(3),
                                     loss_script(losses), 0, 0.6, 8);
  ASSERT_EQ(pair.teacher.size(), 2u);
  EXPECT_EQ(pair.teacher.source_indices, (std::vector<int>{0, 2}));
  EXPECT_EQ(pair.student.source_indices, (std::vector<int>{0, 2}));
  // Descending-loss order: 0.9 first.
  EXPECT_GT(*pair.teacher.nodes[0].teacher_cls_loss,
            *pair.teacher.nodes[1].teacher_cls_loss);
}

TEST(Mining, AllBelowThresholdGivesEmptySet) {
  auto pair = graphkd::node_indexing(indexed_nodes(3), indexed_nodes(3),
                                     loss_script({0.1, 0.2, 0.3}), 0, 0.6, 8);
  EXPECT_TRUE(pair.teacher.nodes.empty());
  EXPECT_TRUE(pair.student.nodes.empty());
}

TEST(Mining, TopKTruncationKeepsHighestLosses) {
  auto pair = graphkd::node_indexing(indexed_nodes(3), indexed_nodes(3),
                                     loss_script({0.9, 0.8, 0.7}), 0, 0.6, 2);
  ASSERT_EQ(pair.teacher.size(), 2u);
  EXPECT_EQ(pair.teacher.source_indices, (std::vector<int>{0, 1}));
}

TEST(Mining, MisalignedListsRejected) {
  EXPECT_THROW(graphkd::node_indexing(indexed_nodes(3), indexed_nodes(2),
                                      loss_script({0.9, 0.8, 0.7}), 0, 0.6, 8),
               graphkd::Error);
}

TEST(Mining, MonotoneInThresholdAndAligned) {
  graphkd::Rng rng(79);
  for (int trial = 0; trial < 100; ++trial) {
    int n = rng.uniform_int(0, 12);
    std::vector<double> losses;
    for (int i = 0; i < n; ++i) losses.push_back(rng.uniform(0.01, 2.0));
    double t1 = rng.uniform(0.05, 1.5);
    double t2 = t1 + rng.uniform(0.0, 0.5);
    auto p1 = graphkd::node_indexing(indexed_nodes(n), indexed_nodes(n),
                                     loss_script(losses), 0, t1, 100);
    auto p2 = graphkd::node_indexing(indexed_nodes(n), indexed_nodes(n),
                                     loss_script(losses), 0, t2, 100);
    EXPECT_LE(p2.teacher.size(), p1.teacher.size());
    EXPECT_EQ(p1.teacher.source_indices, p1.student.source_indices);
    EXPECT_EQ(p1.teacher.size(), p1.student.size());
    // Every mined node's stored loss exceeds t.
    for (const auto& node : p1.teacher.nodes)
      EXPECT_GT(*node.teacher_cls_loss, t1 - 1e-9);
  }
}

TEST(Mining, TiesBreakByLowerIndex) {
  auto pair = graphkd::node_indexing(indexed_nodes(4), indexed_nodes(4),
                                     loss_script({0.9, 0.9, 0.9, 0.9}), 0,
                                     0.5, 2);
  EXPECT_EQ(pair.teacher.source_indices, (std::vector<int>{0, 1}));
}

TEST(Mining, DenseAndEmptyLimits) {
  // t -> +inf keeps nothing; t -> 0 with unbounded k keeps everything.
  std::vector<double> losses{0.5, 1.2, 0.8, 0.3};
  auto none = graphkd::node_indexing(indexed_nodes(4), indexed_nodes(4),
                                     loss_script(losses), 0, 1e9, 100);
  EXPECT_TRUE(none.teacher.nodes.empty());
  auto all = graphkd::node_indexing(indexed_nodes(4), indexed_nodes(4),
                                    loss_script(losses), 0, 1e-9,
                                    std::numeric_limits<int>::max());
  EXPECT_EQ(all.teacher.size(), 4u);
}

TEST(Assembly, ConcatenationOrderAndErrors) {
  std::vector<InstanceNode> nontext;
  for (int i = 0; i < 3; ++i) {
    InstanceNode n = text_node(100 + i, {1.0, 0.5});
    n.category = NodeCategory::kNonText;
    nontext.push_back(n);
  }
  graphkd::MinedNodeSet mined;
  for (int i = 0; i < 2; ++i) {
    mined.nodes.push_back(text_node(i, {0.2, 0.4}));
    mined.origin.push_back(graphkd::NodeOrigin::kMinedText);
    mined.source_indices.push_back(i);
  }
  auto assembled = graphkd::assemble_distillation_nodes(nontext, mined);
  ASSERT_EQ(assembled.size(), 5u);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(assembled[static_cast<std::size_t>(i)].id, 100 + i);
  EXPECT_EQ(assembled[3].id, 0);

  auto only_mined = graphkd::assemble_distillation_nodes({}, mined);
  EXPECT_EQ(only_mined.size(), 2u);

  graphkd::MinedNodeSet empty;
  EXPECT_THROW(graphkd::assemble_distillation_nodes({}, empty),
               graphkd::Error);
}
