#include <gtest/gtest.h>

#include <cmath>

#include "memsel/errors.hpp"
#include "memsel/segmenter.hpp"
#include "memsel/state_features.hpp"
#include "memsel/synthetic_tasks.hpp"

namespace memsel {
namespace {

// One-vertex graph: Sim reduces to exp(cos - 1).
SuperpixelGraph point_graph(double x, double y, int class_id = 1) {
  SuperpixelGraph g;
  g.class_id = class_id;
  g.vertex_features.resize(1, 2);
  g.vertex_features << x, y;
  g.aggregated = g.vertex_features;
  g.distance = Eigen::MatrixXd::Zero(1, 1);
  g.centroids = {Eigen::Vector2d::Zero()};
  return g;
}

double point_sim(double ax, double ay, double bx, double by) {
  const double cos = (ax * bx + ay * by) / (std::hypot(ax, ay) * std::hypot(bx, by));
  return std::exp(cos - 1.0);
}

TEST(SupportSize, FractionWithFloor) {
  EXPECT_EQ(current_support_size(50, 0.1, 2), 5);
  EXPECT_EQ(current_support_size(40, 0.1, 2), 4);
  EXPECT_EQ(current_support_size(10, 0.1, 2), 2);
  EXPECT_EQ(current_support_size(1, 0.1, 2), 1);
  EXPECT_EQ(current_support_size(41, 0.1, 2), 5);
}

TEST(Diversity, IdenticalSupportGivesZero) {
  const SuperpixelGraph g = point_graph(1, 0);
  const std::vector<SuperpixelGraph> support{point_graph(2, 0), point_graph(3, 0)};
  EXPECT_NEAR(diversity(g, support, {}), 0.0, 1e-12);
}

TEST(Diversity, OrthogonalAndMixedSupport) {
  const SuperpixelGraph g = point_graph(1, 0);
  const std::vector<SuperpixelGraph> ortho{point_graph(0, 1)};
  EXPECT_NEAR(diversity(g, ortho, {}), 1.0 - std::exp(-1.0), 1e-12);
  const std::vector<SuperpixelGraph> mixed{point_graph(0, 1), point_graph(1, 1), point_graph(1, 0)};
  const double expected =
      1.0 - (point_sim(1, 0, 0, 1) + point_sim(1, 0, 1, 1) + point_sim(1, 0, 1, 0)) / 3.0;
  EXPECT_NEAR(diversity(g, mixed, {}), expected, 1e-12);
  EXPECT_THROW(diversity(g, std::vector<SuperpixelGraph>{}, {}), ArgumentError);
}

SupportSet support_of(int n) {
  SupportSet s;
  s.class_id = 3;
  for (int i = 0; i < n; ++i) {
    s.graphs.push_back(point_graph(1, i));
    s.owners.push_back({i, 1});
  }
  return s;
}

TEST(RepresentativeSet, SmallestDiversityMembers) {
  const SupportSet s = support_of(5);
  const std::vector<double> div{0.4, 0.1, 0.3, 0.2, 0.5};
  const RepresentativeSet r = representative_set(s, div, 0.1);
  EXPECT_EQ(r.members, (std::vector<int>{1}));
  EXPECT_EQ(r.class_id, 3);
  ASSERT_EQ(r.graphs.size(), 1u);
  EXPECT_TRUE(r.graphs[0].aggregated.isApprox(s.graphs[1].aggregated));
}

TEST(RepresentativeSet, TiesKeepInputOrder) {
  const SupportSet s = support_of(4);
  const std::vector<double> div(4, 0.25);
  EXPECT_EQ(representative_set(s, div, 0.1).members, (std::vector<int>{0}));
}

TEST(RepresentativeSet, CeilOfFraction) {
  const SupportSet s = support_of(25);
  std::vector<double> div(25);
  for (int i = 0; i < 25; ++i) div[i] = 1.0 - 0.01 * i;
  EXPECT_EQ(representative_set(s, div, 0.1).members, (std::vector<int>{24, 23, 22}));
}

TEST(Forgetfulness, HandExpansion) {
  std::map<int, RepresentativeSet> reps;
  reps[1].class_id = 1;
  reps[1].graphs = {point_graph(1, 0), point_graph(1, 1)};
  reps[2].class_id = 2;
  reps[2].graphs = {point_graph(0, 1), point_graph(1, 2)};
  reps[3].class_id = 3;
  reps[3].graphs = {point_graph(2, 1)};

  const double a0 = ((point_sim(1, 0, 0, 1) + point_sim(1, 0, 1, 2)) / 2 + point_sim(1, 0, 2, 1)) / 2;
  const double a1 = ((point_sim(1, 1, 0, 1) + point_sim(1, 1, 1, 2)) / 2 + point_sim(1, 1, 2, 1)) / 2;
  EXPECT_NEAR(forgetfulness(1, reps, {}), (a0 + a1) / 2, 1e-12);
}

TEST(Forgetfulness, SingleClassIsZero) {
  std::map<int, RepresentativeSet> reps;
  reps[4].graphs = {point_graph(1, 0)};
  EXPECT_EQ(forgetfulness(4, reps, {}), 0.0);
  EXPECT_THROW(forgetfulness(5, reps, {}), ArgumentError);
}

TEST(ComputeState, MeansOverClasses) {
  const std::vector<ClassTerms> terms{{1, 0.2, 0.5, 0.9}, {2, 0.4, 0.1, 0.3}};
  const StateVector s = compute_state(terms);
  EXPECT_DOUBLE_EQ(s.div_mean, 0.3);
  EXPECT_DOUBLE_EQ(s.iou_mean, 0.3);
  EXPECT_DOUBLE_EQ(s.forget_mean, 0.6);
  EXPECT_THROW(compute_state(std::vector<ClassTerms>{}), StateError);
}

TEST(SupportExcluding, DropsOwnerOnly) {
  const SupportSet s = support_of(3);
  EXPECT_EQ(support_excluding(s, {1, 1}).size(), 2u);
  EXPECT_EQ(support_excluding(s, {1, 2}).size(), 3u);  // other stage view
  const SupportSet one = support_of(1);
  EXPECT_TRUE(support_excluding(one, {0, 1}).empty());
}

class Snapshot : public ::testing::Test {
 protected:
  void SetUp() override {
    WorldConfig wc;
    wc.num_classes = 5;
    wc.samples_per_class = 20;
    wc.test_samples_per_class = 0;
    wc.seed = 8;
    const World w = generate_world(wc);
    StagePartition p;
    p.stages = {{1, 2, 3}, {4, 5}};
    const StageDataset d1 = make_css_view(w.train, p, 1);
    const StageDataset d2 = make_css_view(w.train, p, 2);
    // Memory: a few stage-1 samples; then the stage-2 data.
    for (std::size_t i = 0; i < d1.samples.size(); i += 9) candidates_.push_back(d1.samples[i]);
    memory_count_ = candidates_.size();
    candidates_.insert(candidates_.end(), d2.samples.begin(), d2.samples.end());
    current_ = p.classes(2);
    model_ = std::make_unique<Segmenter>(3, SegmenterConfig{});
    model_->train_stage(d1.samples, 2);
    for (int c = 1; c <= 5; ++c) ious_[c] = 0.1 * c;
  }
  std::vector<Sample> candidates_;
  std::size_t memory_count_ = 0;
  std::vector<int> current_;
  std::unique_ptr<Segmenter> model_;
  std::map<int, double> ious_;
};

TEST_F(Snapshot, SupportSetsDrawFromTheRightPool) {
  const StateConfig cfg;
  const StageSnapshot snap =
      build_stage_snapshot(candidates_, memory_count_, current_, *model_, ious_, cfg, 4);
  for (const auto& [c, set] : snap.supports) {
    const bool current = c == 4 || c == 5;
    int available = 0;
    for (std::size_t i = 0; i < candidates_.size(); ++i) {
      const bool in_pool = current ? i >= memory_count_ : i < memory_count_;
      if (in_pool && candidates_[i].count(c) > 0) ++available;
    }
    const int expected = current ? current_support_size(available, 0.1, 2) : available;
    EXPECT_EQ(static_cast<int>(set.graphs.size()), expected) << "class " << c;
    for (const SampleKey& k : set.owners) EXPECT_EQ(k.source_stage, current ? 2 : 1);
  }
}

TEST_F(Snapshot, StatesAreMeansOfBoundedTerms) {
  const StateConfig cfg;
  const StageSnapshot snap =
      build_stage_snapshot(candidates_, memory_count_, current_, *model_, ious_, cfg, 4);
  ASSERT_EQ(snap.states.size(), candidates_.size());
  for (std::size_t i = 0; i < candidates_.size(); ++i) {
    const CandidateState& st = snap.states[i];
    EXPECT_EQ(st.key, candidates_[i].key());
    ASSERT_TRUE(st.usable);
    double div = 0.0, iou = 0.0, forget = 0.0;
    for (const ClassTerms& t : st.terms) {
      EXPECT_GE(t.div, 0.0);
      EXPECT_LE(t.div, 1.0);
      EXPECT_GE(t.forget, 0.0);
      EXPECT_LE(t.forget, 1.0);
      EXPECT_DOUBLE_EQ(t.iou, ious_.at(t.class_id));
      EXPECT_DOUBLE_EQ(t.forget, snap.forgetfulness.at(t.class_id));
      div += t.div;
      iou += t.iou;
      forget += t.forget;
    }
    const double n = static_cast<double>(st.terms.size());
    EXPECT_NEAR(st.state.div_mean, div / n, 1e-12);
    EXPECT_NEAR(st.state.iou_mean, iou / n, 1e-12);
    EXPECT_NEAR(st.state.forget_mean, forget / n, 1e-12);
  }
}

TEST_F(Snapshot, SameSeedSameSnapshotAndWorkersAgree) {
  StateConfig cfg;
  const StageSnapshot a =
      build_stage_snapshot(candidates_, memory_count_, current_, *model_, ious_, cfg, 4);
  cfg.workers = 3;
  const StageSnapshot b =
      build_stage_snapshot(candidates_, memory_count_, current_, *model_, ious_, cfg, 4);
  for (std::size_t i = 0; i < a.states.size(); ++i) {
    EXPECT_EQ(a.states[i].state.as_array(), b.states[i].state.as_array());
  }
}

TEST_F(Snapshot, MissingClassRecordedAsWarning) {
  const StateConfig cfg;
  std::vector<int> current = current_;
  current.push_back(9);
  const StageSnapshot snap =
      build_stage_snapshot(candidates_, memory_count_, current, *model_, ious_, cfg, 4);
  EXPECT_EQ(snap.supports.count(9), 0u);
  ASSERT_FALSE(snap.warnings.empty());
  EXPECT_NE(snap.warnings.back().find("class 9"), std::string::npos);
}

}  // namespace
}  // namespace memsel
