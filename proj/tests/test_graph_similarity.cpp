#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "memsel/errors.hpp"
#include "memsel/graph_similarity.hpp"
#include "memsel/rng.hpp"
#include "memsel/segmenter.hpp"
#include "memsel/synthetic_tasks.hpp"
#include "oracles.hpp"

namespace memsel {
namespace {

Eigen::MatrixXd random_matrix(int rows, int cols, std::uint64_t seed, double lo = 0.0,
                              double hi = 1.0) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

TEST(Superpixels, OnePointPerClusterWhenCountEqualsSize) {
  const Eigen::MatrixXd f = random_matrix(5, 3, 1);
  std::vector<Eigen::Vector2d> coords;
  for (int i = 0; i < 5; ++i) coords.emplace_back(i, 0);
  const std::vector<int> a = superpixels(f, coords, 5, 3, {});
  EXPECT_EQ(std::set<int>(a.begin(), a.end()).size(), 5u);
}

TEST(Superpixels, TooFewPointsRaisesWithSize) {
  const Eigen::MatrixXd f = random_matrix(4, 3, 1);
  std::vector<Eigen::Vector2d> coords(4, Eigen::Vector2d::Zero());
  try {
    superpixels(f, coords, 5, 3, {});
    FAIL() << "expected DegenerateRegionError";
  } catch (const DegenerateRegionError& e) {
    EXPECT_EQ(e.region_size(), 4);
  }
}

TEST(Superpixels, SeparatesTwoDistantBlobs) {
  Eigen::MatrixXd f(8, 2);
  std::vector<Eigen::Vector2d> coords;
  for (int i = 0; i < 8; ++i) {
    const double base = i < 4 ? 0.0 : 10.0;
    f.row(i) << base + 0.01 * i, base;
    coords.emplace_back(i < 4 ? 0 : 15, i % 4);
  }
  const std::vector<int> a = superpixels(f, coords, 2, 9, {});
  for (int i = 1; i < 4; ++i) EXPECT_EQ(a[i], a[0]);
  for (int i = 5; i < 8; ++i) EXPECT_EQ(a[i], a[4]);
  EXPECT_NE(a[0], a[4]);
}

TEST(GraphFromAssignment, CentroidAndMeanFeature) {
  // 3x3 block in the top-left corner of a 16-wide image, one superpixel.
  const int width = 16;
  Eigen::MatrixXd features = Eigen::MatrixXd::Zero(width * width, 2);
  std::vector<int> region;
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 3; ++x) {
      region.push_back(y * width + x);
      features.row(y * width + x) << x, 2.0;
    }
  }
  const SuperpixelGraph g =
      graph_from_assignment(features, width, 4, region, std::vector<int>(9, 0), 1);
  EXPECT_EQ(g.num_vertices(), 1);
  EXPECT_DOUBLE_EQ(g.centroids[0].x(), 1.0);
  EXPECT_DOUBLE_EQ(g.centroids[0].y(), 1.0);
  EXPECT_DOUBLE_EQ(g.vertex_features(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(g.vertex_features(0, 1), 2.0);
  EXPECT_DOUBLE_EQ(g.distance(0, 0), 0.0);
  EXPECT_TRUE(g.aggregated.isApprox(g.vertex_features));
}

TEST(GraphFromAssignment, DistanceIsSumOfMinMaxNormalisedTerms) {
  // Three single-pixel superpixels on a row.
  const int width = 16;
  Eigen::MatrixXd features = Eigen::MatrixXd::Zero(width * width, 1);
  features(0, 0) = 0.0;
  features(1, 0) = 1.0;
  features(5, 0) = 3.0;
  const SuperpixelGraph g = graph_from_assignment(features, width, 1, {0, 1, 5}, {0, 1, 2}, 3);
  // semantic: |0-1|=1, |0-3|=3, |1-3|=2 -> 0, 1, 0.5
  // spatial:   1,       5,       4      -> 0, 1, 0.75
  Eigen::MatrixXd expected(3, 3);
  expected << 0.0, 0.0, 2.0,
              0.0, 0.0, 1.25,
              2.0, 1.25, 0.0;
  EXPECT_TRUE(g.distance.isApprox(expected, 1e-12)) << g.distance;
  EXPECT_TRUE(g.distance.isApprox(g.distance.transpose()));
}

TEST(Aggregation, TwoVertexHandCase) {
  Eigen::MatrixXd d(2, 2);
  d << 0.0, 1.0, 1.0, 0.0;
  const Eigen::MatrixXd w = aggregation_weights(d);
  const double a = 1.0 / (1.0 + std::exp(-1.0));
  EXPECT_NEAR(w(0, 0), a, 1e-14);
  EXPECT_NEAR(w(0, 1), 1.0 - a, 1e-14);
  EXPECT_NEAR(w(1, 1), a, 1e-14);

  SuperpixelGraph g;
  g.distance = d;
  g.vertex_features.resize(2, 1);
  g.vertex_features << 0.0, 1.0;
  const Eigen::MatrixXd agg = aggregate_vertices(g);
  EXPECT_NEAR(agg(0, 0), 1.0 - a, 1e-14);
  EXPECT_NEAR(agg(1, 0), a, 1e-14);
}

TEST(Aggregation, RowsSumToOne) {
  Eigen::MatrixXd d = random_matrix(5, 5, 7, 0.0, 2.0);
  d = 0.5 * (d + d.transpose()).eval();
  d.diagonal().setZero();
  const Eigen::MatrixXd w = aggregation_weights(d);
  for (int r = 0; r < 5; ++r) EXPECT_NEAR(w.row(r).sum(), 1.0, 1e-14);
  EXPECT_TRUE((w.array() > 0.0).all());
}

TEST(CosineCost, KnownAngles) {
  Eigen::MatrixXd a(3, 2);
  a << 1, 0, 0, 1, 0, 0;
  Eigen::MatrixXd b(2, 2);
  b << 2, 0, -1, 0;
  const Eigen::MatrixXd c = cosine_cost(a, b);
  EXPECT_NEAR(c(0, 0), 0.0, 1e-15);
  EXPECT_NEAR(c(0, 1), 2.0, 1e-15);
  EXPECT_NEAR(c(1, 0), 1.0, 1e-15);
  EXPECT_NEAR(c(2, 0), 1.0, 1e-15);  // zero vector
}

TEST(Sinkhorn, SingleOrthogonalPairHasUnitCost) {
  Eigen::MatrixXd a(1, 2), b(1, 2);
  a << 1, 0;
  b << 0, 1;
  const OTMatch m = sinkhorn_tc(a, b, {});
  EXPECT_NEAR(m.tc, 1.0, 1e-12);
  EXPECT_NEAR(m.plan(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(similarity_from_tc(m.tc), std::exp(-1.0), 1e-12);
}

TEST(Sinkhorn, OracleCrossCheck) {
  // The two exact oracles agree with each other on square problems.
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Eigen::MatrixXd c = random_matrix(5, 5, seed, 0.0, 2.0);
    EXPECT_NEAR(oracle::exact_uniform_ot(c), oracle::permutation_ot(c), 1e-12);
  }
}

TEST(Sinkhorn, ReferenceSettingsMatchExactTransport) {
  const SinkhornConfig ref = SinkhornConfig::reference();
  const std::vector<std::pair<int, int>> shapes{{5, 5}, {5, 3}, {4, 6}, {2, 5}, {1, 4}};
  std::uint64_t seed = 100;
  for (const auto& [n, m] : shapes) {
    for (int rep = 0; rep < 4; ++rep, ++seed) {
      const Eigen::MatrixXd c = random_matrix(n, m, seed, 0.0, 2.0);
      const OTMatch r = sinkhorn(c, ref.reg, ref.iterations, ref.round);
      EXPECT_LE(std::abs(r.tc - oracle::exact_uniform_ot(c)), 1e-2) << n << "x" << m;
      EXPECT_LE(r.marginal_violation(), 1e-6) << n << "x" << m;
      EXPECT_TRUE((r.plan.array() >= 0.0).all());
    }
  }
}

TEST(Sinkhorn, LogDomainSurvivesTinyRegularisation) {
  const Eigen::MatrixXd c = random_matrix(5, 5, 3, 0.0, 2.0);
  const OTMatch r = sinkhorn(c, 1e-4, 200, true);
  EXPECT_TRUE(r.plan.allFinite());
  EXPECT_TRUE(r.log_u.allFinite());
  EXPECT_TRUE(std::isfinite(r.tc));
  EXPECT_LE(r.marginal_violation(), 1e-12);
  EXPECT_GE(r.tc, oracle::permutation_ot(c) - 1e-12);
}

TEST(Sinkhorn, RoundingRestoresExactMarginals) {
  const Eigen::MatrixXd c = random_matrix(4, 3, 21, 0.0, 2.0);
  const OTMatch raw = sinkhorn(c, 0.01, 20);
  const Eigen::MatrixXd fixed = round_to_uniform_marginals(raw.plan);
  EXPECT_GT(raw.marginal_violation(), 1e-6);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(fixed.row(i).sum(), 0.25, 1e-15);
  for (int j = 0; j < 3; ++j) EXPECT_NEAR(fixed.col(j).sum(), 1.0 / 3.0, 1e-15);
  EXPECT_TRUE((fixed.array() >= 0.0).all());
  // A feasible plan is left alone.
  const Eigen::MatrixXd uniform = Eigen::MatrixXd::Constant(4, 3, 1.0 / 12.0);
  EXPECT_TRUE(round_to_uniform_marginals(uniform).isApprox(uniform, 1e-15));
}

TEST(Sinkhorn, RejectsBadArguments) {
  EXPECT_THROW(sinkhorn(Eigen::MatrixXd(0, 3), 0.1, 5), ArgumentError);
  EXPECT_THROW(sinkhorn(Eigen::MatrixXd::Zero(2, 2), 0.0, 5), ArgumentError);
}

class BuiltGraphs : public ::testing::Test {
 protected:
  void SetUp() override {
    WorldConfig wc;
    wc.num_classes = 5;
    wc.samples_per_class = 10;
    wc.test_samples_per_class = 0;
    wc.seed = 12;
    world_ = generate_world(wc);
    model_ = std::make_unique<Segmenter>(3, SegmenterConfig{});
  }
  SuperpixelGraph graph(int index) const {
    const Sample& s = world_.train[index];
    return build_graph(s, s.primary_class(), *model_, GraphConfig{});
  }
  World world_;
  std::unique_ptr<Segmenter> model_;
};

SuperpixelGraph random_graph(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  const int width = 16;
  Eigen::MatrixXd features(width * width, 16);
  for (Eigen::Index i = 0; i < features.size(); ++i) features.data()[i] = std::tanh(n(rng));
  std::vector<int> region, assign;
  for (int p = 0; p < 40; ++p) {
    region.push_back(p * 3);
    assign.push_back(p % 5);
  }
  return graph_from_assignment(features, width, 1, region, assign, 5);
}

// The entropic plan leaks mass off the diagonal when aggregated vertices
// have pairwise costs of the order of reg, so tc(G, G) is small but not 0.
TEST(SelfSimilarity, ApproachesOneAsRegularisationShrinks) {
  Rng rng(77);
  for (int rep = 0; rep < 20; ++rep) {
    const SuperpixelGraph g = random_graph(rng);
    const double ref = similarity(g, g, SinkhornConfig::reference());
    const double sharp = similarity(g, g, SinkhornConfig{0.002, 3000, true});
    EXPECT_GE(ref, 0.995);
    EXPECT_LE(ref, 1.0);
    EXPECT_GE(sharp, 0.999);
    EXPECT_GE(sharp, ref - 1e-12);
  }
}

TEST_F(BuiltGraphs, SelfSimilarityOfSegmenterGraphs) {
  // Aggregated vertices of a real region are nearly parallel, so the
  // entropic plan leaks some mass off the diagonal.
  for (int i : {0, 13, 27, 44}) {
    const SuperpixelGraph g = graph(i);
    EXPECT_EQ(g.num_vertices(), 5);
    EXPECT_GE(similarity(g, g, SinkhornConfig::reference()), 0.995);
    EXPECT_GT(similarity(g, g, SinkhornConfig::reference()), similarity(g, graph(i + 1), SinkhornConfig::reference()) - 1e-3);
  }
}

TEST_F(BuiltGraphs, SimilarityIsSymmetricAndBounded) {
  const SinkhornConfig cfg;
  for (int i : {0, 11, 25}) {
    for (int j : {3, 19, 40}) {
      const SuperpixelGraph a = graph(i);
      const SuperpixelGraph b = graph(j);
      const double ab = similarity(a, b, cfg);
      EXPECT_NEAR(ab, similarity(b, a, cfg), 1e-6);
      EXPECT_GT(ab, 0.0);
      EXPECT_LE(ab, 1.0);
    }
  }
}

TEST_F(BuiltGraphs, SmallRegionFallsBackToRegionSize) {
  Sample s = world_.train[0];
  std::fill(s.labels.begin(), s.labels.end(), 0);
  s.labels[0] = 2;
  s.labels[1] = 2;
  s.labels[17] = 2;
  const SuperpixelGraph g = build_graph(s, 2, *model_, GraphConfig{});
  EXPECT_EQ(g.num_vertices(), 3);
  EXPECT_THROW(build_graph(s, 4, *model_, GraphConfig{}), ArgumentError);
}

TEST_F(BuiltGraphs, DeterministicForSameSeed) {
  const SuperpixelGraph a = graph(5);
  const SuperpixelGraph b = graph(5);
  EXPECT_EQ(a.assignment, b.assignment);
  EXPECT_TRUE(a.aggregated.isApprox(b.aggregated));
}

}  // namespace
}  // namespace memsel
