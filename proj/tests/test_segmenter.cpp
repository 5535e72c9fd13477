#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "memsel/errors.hpp"
#include "memsel/rng.hpp"
#include "memsel/segmenter.hpp"
#include "memsel/synthetic_tasks.hpp"
#include "oracles.hpp"

namespace memsel {
namespace {

World tiny_world() {
  WorldConfig c;
  c.num_classes = 5;
  c.samples_per_class = 10;
  c.test_samples_per_class = 2;
  c.seed = 4;
  return generate_world(c);
}

Sample random_sample(std::uint64_t seed) {
  Sample s(0, 16, 16, 3);
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double& v : s.pixels) v = u(rng);
  return s;
}

TEST(PredictFromLogits, UniformRowsPickBackgroundWithEvenConfidence) {
  Eigen::MatrixXd logits = Eigen::MatrixXd::Zero(4, 4);
  const std::vector<int> ids{2, 5, 9};
  const PredictionResult r = predict_from_logits(logits, ids, 2, 2);
  for (int p = 0; p < 4; ++p) {
    EXPECT_EQ(r.mask[p], 0);
    EXPECT_NEAR(r.confidence[p], 0.25, 1e-12);
  }
}

TEST(PredictFromLogits, MatchesArgmaxOracle) {
  Rng rng(3);
  std::normal_distribution<double> n(0.0, 2.0);
  Eigen::MatrixXd logits(20, 4);
  for (Eigen::Index i = 0; i < logits.size(); ++i) logits.data()[i] = n(rng);
  const std::vector<int> ids{3, 4, 7};
  const PredictionResult r = predict_from_logits(logits, ids, 4, 5);
  for (int p = 0; p < 20; ++p) {
    int best = 0;
    double z = 0.0;
    for (int k = 0; k < 4; ++k) {
      if (logits(p, k) > logits(p, best)) best = k;
    }
    for (int k = 0; k < 4; ++k) z += std::exp(logits(p, k));
    EXPECT_EQ(r.mask[p], best == 0 ? 0 : ids[best - 1]);
    EXPECT_NEAR(r.confidence[p], std::exp(logits(p, best)) / z, 1e-12);
  }
}

TEST(PredictFromLogits, DominantLogitGivesNearOneConfidence) {
  Eigen::MatrixXd logits = Eigen::MatrixXd::Zero(1, 3);
  logits(0, 2) = 50.0;
  const std::vector<int> ids{4, 6};
  const PredictionResult r = predict_from_logits(logits, ids, 1, 1);
  EXPECT_EQ(r.mask[0], 6);
  EXPECT_NEAR(r.confidence[0], 1.0, 1e-12);
}

TEST(PseudoLabelRule, AllBranches) {
  PredictionResult pred;
  pred.height = 1;
  pred.width = 5;
  pred.mask = {3, 3, 3, 3, 0};
  pred.confidence = {0.99, 0.81, 0.8, 0.5, 0.99};
  const std::vector<int> labels{7, 0, 0, 0, 0};
  const std::vector<int> out = apply_pseudo_label_rule(labels, pred, 0.8);
  // ground truth wins; strict threshold; low confidence stays background
  EXPECT_EQ(out, (std::vector<int>{7, 3, 0, 0, 0}));
}

TEST(PseudoLabelRule, SizeMismatchRaises) {
  PredictionResult pred;
  pred.mask = {1};
  pred.confidence = {0.9};
  const std::vector<int> labels{0, 0};
  EXPECT_THROW(apply_pseudo_label_rule(labels, pred, 0.8), ArgumentError);
}

TEST(Segmenter, ZeroFilterGivesTanhOfBias) {
  Segmenter m(3, {});
  m.filter().setZero();
  for (int k = 0; k < m.hidden(); ++k) m.filter_bias()(k) = 0.1 * (k - 8);
  const Eigen::MatrixXd f = m.pixel_features(random_sample(1));
  for (Eigen::Index r = 0; r < f.rows(); ++r) {
    for (int k = 0; k < m.hidden(); ++k) EXPECT_DOUBLE_EQ(f(r, k), std::tanh(0.1 * (k - 8)));
  }
}

TEST(Segmenter, PatchesZeroPadAtBorder) {
  Sample s(0, 16, 16, 1);
  for (double& v : s.pixels) v = 1.0;
  Segmenter m(1, {});
  const Eigen::MatrixXd p = m.patches(s);
  EXPECT_DOUBLE_EQ(p.row(0).sum(), 4.0);                // corner
  EXPECT_DOUBLE_EQ(p.row(5).sum(), 6.0);                // top edge
  EXPECT_DOUBLE_EQ(p.row(16 * 5 + 5).sum(), 9.0);       // interior
}

TEST(Segmenter, BackpropFeaturesMatchesFiniteDifferences) {
  SegmenterConfig cfg;
  cfg.seed = 21;
  Segmenter m(3, cfg);
  Sample s = random_sample(8);
  Rng rng(2);
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd g(s.num_pixels(), m.hidden());
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = n(rng);

  const Eigen::MatrixXd analytic = m.backprop_features(s, g);
  ASSERT_EQ(analytic.rows(), s.num_pixels());
  ASSERT_EQ(analytic.cols(), 3);
  const auto objective = [&](const Sample& x) { return (m.pixel_features(x).array() * g.array()).sum(); };
  for (int idx : {0, 17, 130, 255 * 3 + 2, 400}) {
    const double fd = oracle::central_difference(
        [&](double v) {
          Sample x = s;
          x.pixels[idx] = v;
          return objective(x);
        },
        s.pixels[idx], 1e-5);
    EXPECT_NEAR(analytic(idx / 3, idx % 3), fd, 1e-6 * std::max(1.0, std::abs(fd)));
  }
}

TEST(Segmenter, ZeroEpochsLeavesModelUnchanged) {
  const World w = tiny_world();
  Segmenter m(3, {});
  const std::vector<int> ids{1, 2};
  m.extend_head(ids);
  const Segmenter before = m;
  EXPECT_TRUE(m.train_stage(w.train, 0).empty());
  EXPECT_TRUE(m.same_parameters(before));
  EXPECT_EQ(m.train_calls(), before.train_calls());
}

TEST(Segmenter, ExtendHeadKeepsExistingColumns) {
  Segmenter m(3, {});
  const std::vector<int> a{2, 1};
  m.extend_head(a);
  const Eigen::MatrixXd head = m.head();
  const std::vector<int> b{3, 1};
  m.extend_head(b);
  EXPECT_EQ(m.num_outputs(), 4);
  EXPECT_TRUE(m.head().topRows(head.rows()).isApprox(head));
  EXPECT_TRUE(m.has_class(3));
}

TEST(Segmenter, OverfitsSingleSample) {
  const World w = tiny_world();
  const std::vector<Sample> one{w.train[0]};
  SegmenterConfig cfg;
  cfg.seed = 5;
  Segmenter m(3, cfg);
  m.train_stage(one, 300);
  const std::vector<int> classes = one[0].classes();
  const auto ious = per_class_iou(m, one, classes);
  for (int c : classes) {
    ASSERT_TRUE(ious.count(c));
    EXPECT_GE(ious.at(c), 0.95) << "class " << c;
  }
}

TEST(Segmenter, EpochLossMostlyDecreases) {
  const World w = tiny_world();
  Segmenter m(3, {});
  const std::vector<double> trace = m.train_stage(w.train, 20);
  ASSERT_EQ(trace.size(), 20u);
  int down = 0;
  for (std::size_t i = 1; i < trace.size(); ++i) down += trace[i] <= trace[i - 1];
  EXPECT_GE(down, static_cast<int>(0.8 * (trace.size() - 1)));
  EXPECT_LT(trace.back(), trace.front());
}

TEST(Segmenter, TrainingIsDeterministic) {
  const World w = tiny_world();
  Segmenter a(3, {});
  Segmenter b(3, {});
  a.train_stage(w.train, 3);
  b.train_stage(w.train, 3);
  EXPECT_TRUE(a.same_parameters(b));
}

TEST(Iou, HandCases) {
  const std::vector<int> gt{1, 1, 0, 0};
  IouAccumulator same;
  same.add(gt, gt);
  EXPECT_DOUBLE_EQ(*same.iou(1), 1.0);

  IouAccumulator disjoint;
  disjoint.add(std::vector<int>{0, 0, 1, 1}, gt);
  EXPECT_DOUBLE_EQ(*disjoint.iou(1), 0.0);

  IouAccumulator half;
  half.add(std::vector<int>{1, 0, 0, 0}, std::vector<int>{1, 1, 0, 0});
  EXPECT_DOUBLE_EQ(*half.iou(1), 0.5);
  EXPECT_FALSE(half.iou(4).has_value());
}

TEST(Iou, AccumulatesOverDatasetNotPerImage) {
  IouAccumulator acc;
  acc.add(std::vector<int>{1, 1}, std::vector<int>{1, 1});  // 2 / 2
  acc.add(std::vector<int>{0, 1}, std::vector<int>{1, 0});  // 0 / 2
  EXPECT_DOUBLE_EQ(*acc.iou(1), 0.5);
}

TEST(Iou, MeanIgnoresMissingClasses) {
  const std::map<int, double> ious{{1, 0.2}, {2, 0.6}};
  const std::vector<int> group{1, 2, 3};
  EXPECT_DOUBLE_EQ(mean_iou(ious, group), 0.4);
  const std::vector<int> none{7};
  EXPECT_DOUBLE_EQ(mean_iou(ious, none), 0.0);
}

}  // namespace
}  // namespace memsel
