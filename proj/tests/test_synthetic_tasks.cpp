#include <gtest/gtest.h>

#include <map>
#include <set>

#include "memsel/errors.hpp"
#include "memsel/synthetic_tasks.hpp"

namespace memsel {
namespace {

WorldConfig small_world(std::uint64_t seed = 1) {
  WorldConfig c;
  c.num_classes = 10;
  c.samples_per_class = 20;
  c.test_samples_per_class = 4;
  c.seed = seed;
  return c;
}

TEST(GenerateWorld, SameSeedIsBitIdentical) {
  const World a = generate_world(small_world(5));
  const World b = generate_world(small_world(5));
  ASSERT_EQ(a.train.size(), b.train.size());
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    EXPECT_EQ(a.train[i].pixels, b.train[i].pixels);
    EXPECT_EQ(a.train[i].labels, b.train[i].labels);
  }
  const World c = generate_world(small_world(6));
  EXPECT_NE(a.train[0].pixels, c.train[0].pixels);
}

TEST(GenerateWorld, ZeroSpreadMakesClassSamplesIdentical) {
  WorldConfig cfg = small_world();
  cfg.intra_class_spread = 0.0;
  const World w = generate_world(cfg);
  for (int c = 0; c < cfg.num_classes; ++c) {
    const Sample& first = w.train[c * cfg.samples_per_class];
    for (int k = 1; k < cfg.samples_per_class; ++k) {
      const Sample& s = w.train[c * cfg.samples_per_class + k];
      EXPECT_EQ(s.pixels, first.pixels);
      EXPECT_EQ(s.labels, first.labels);
    }
  }
}

TEST(GenerateWorld, CountsAndLabelHistogram) {
  const World w = generate_world(small_world());
  EXPECT_EQ(w.train.size(), 200u);
  EXPECT_EQ(w.test.size(), 40u);
  std::map<int, long> hist;
  std::set<int> ids;
  for (const Sample& s : w.train) {
    ids.insert(s.id);
    for (int l : s.labels) ++hist[l];
  }
  EXPECT_EQ(ids.size(), w.train.size());
  for (int c = 1; c <= 10; ++c) EXPECT_GT(hist[c], 0) << "class " << c;
  EXPECT_EQ(hist.rbegin()->first, 10);
  // Each sample holds its primary class.
  for (std::size_t i = 0; i < w.train.size(); ++i) {
    EXPECT_GT(w.train[i].count(static_cast<int>(i / 20) + 1), 0);
  }
}

TEST(GenerateWorld, PixelsInUnitRange) {
  const World w = generate_world(small_world(3));
  for (const Sample& s : w.train) {
    for (double v : s.pixels) {
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
    }
  }
}

TEST(GenerateWorld, RejectsInvalidConfig) {
  WorldConfig c = small_world();
  c.num_classes = 2;
  EXPECT_THROW(generate_world(c), ConfigError);
  c = small_world();
  c.intra_class_spread = -1.0;
  EXPECT_THROW(generate_world(c), ConfigError);
}

TEST(CssView, FullFirstStageIsIdentityRelabeling) {
  const World w = generate_world(small_world());
  StagePartition p;
  p.stages = {{1, 2, 3, 4, 5, 6, 7, 8, 9, 10}};
  const StageDataset v = make_css_view(w.train, p, 1);
  ASSERT_EQ(v.samples.size(), w.train.size());
  for (std::size_t i = 0; i < v.samples.size(); ++i) {
    EXPECT_EQ(v.samples[i].labels, w.train[i].labels);
    EXPECT_EQ(v.samples[i].source_stage, 1);
  }
}

TEST(CssView, OtherClassesBecomeBackground) {
  Sample s(0, 16, 16, 3);
  s.labels[0] = 3;
  s.labels[1] = 7;
  s.labels[2] = 7;
  StagePartition p;
  p.stages = {{1, 2, 3, 4, 5, 6}, {7}};
  const StageDataset v = make_css_view(std::vector<Sample>{s}, p, 2);
  ASSERT_EQ(v.samples.size(), 1u);
  EXPECT_EQ(v.samples[0].labels[0], 0);
  EXPECT_EQ(v.samples[0].labels[1], 7);
  EXPECT_EQ(v.samples[0].labels[2], 7);
  EXPECT_EQ(v.samples[0].pixels, s.pixels);
}

TEST(CssView, RetainedPixelCountsMatchBruteForceScan) {
  const World w = generate_world(small_world(2));
  const StagePartition p = StagePartition::incremental(10, 5, 1);
  for (int t = 1; t <= p.num_stages(); ++t) {
    const std::set<int> cur(p.classes(t).begin(), p.classes(t).end());
    std::map<int, long> expected;
    std::size_t expected_samples = 0;
    for (const Sample& s : w.train) {
      bool hit = false;
      for (int l : s.labels) {
        if (cur.count(l)) {
          ++expected[l];
          hit = true;
        }
      }
      expected_samples += hit;
    }
    std::map<int, long> got;
    const StageDataset v = make_css_view(w.train, p, t);
    for (const Sample& s : v.samples) {
      for (int l : s.labels) {
        if (l != 0) ++got[l];
      }
    }
    EXPECT_EQ(got, expected) << "stage " << t;
    EXPECT_EQ(v.samples.size(), expected_samples);
  }
}

TEST(StagePartition, StageIndexOutOfRangeThrows) {
  const StagePartition p = StagePartition::incremental(10, 5, 1);
  EXPECT_EQ(p.num_stages(), 6);
  EXPECT_THROW(p.classes(0), RangeError);
  EXPECT_THROW(p.classes(7), RangeError);
  EXPECT_EQ(p.seen_through(3), (std::vector<int>{1, 2, 3, 4, 5, 6, 7}));
}

TEST(StagePartition, ValidationRules) {
  StagePartition p;
  p.stages = {{1, 2}, {3, 4, 5}};
  EXPECT_THROW(p.validate(5), ConfigError);  // C_1 below half
  p.stages = {{1, 2, 3}, {3, 4, 5}};
  EXPECT_THROW(p.validate(5), ConfigError);  // overlap
  p.stages = {{1, 2, 3}, {}};
  EXPECT_THROW(p.validate(3), ConfigError);
  p.stages = {{1, 2, 3}, {4}};
  EXPECT_THROW(p.validate(5), ConfigError);  // class 5 missing
  p.stages = {{1, 2, 3}, {4, 5}};
  EXPECT_NO_THROW(p.validate(5));
}

TEST(SplitTrainReward, TenPercentOfTwoHundred) {
  const World w = generate_world(small_world());
  StagePartition p;
  p.stages = {{1, 2, 3, 4, 5, 6}, {7, 8, 9, 10}};
  StageDataset d1{1, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10}, w.train};
  const auto [train, reward] = split_train_reward(d1, 0.1, 9);
  EXPECT_EQ(train.samples.size(), 20u);
  EXPECT_EQ(reward.samples.size(), 180u);

  std::multiset<int> ids;
  for (const Sample& s : train.samples) ids.insert(s.id);
  for (const Sample& s : reward.samples) ids.insert(s.id);
  std::multiset<int> expected;
  for (const Sample& s : w.train) expected.insert(s.id);
  EXPECT_EQ(ids, expected);

  for (int c = 1; c <= 10; ++c) {
    const auto has = [c](const StageDataset& d) {
      for (const Sample& s : d.samples) {
        if (s.count(c) > 0) return true;
      }
      return false;
    };
    EXPECT_TRUE(has(train)) << c;
    EXPECT_TRUE(has(reward)) << c;
  }
}

TEST(SplitTrainReward, ImpossibleCoverageRaises) {
  // Three classes, one sample each: a single training sample cannot cover them.
  std::vector<Sample> samples;
  for (int c = 1; c <= 3; ++c) {
    Sample s(c, 16, 16, 3);
    s.labels[0] = c;
    samples.push_back(s);
  }
  StageDataset d1{1, {1, 2, 3}, samples};
  EXPECT_THROW(split_train_reward(d1, 0.34, 1), PartitionError);
  EXPECT_THROW(split_train_reward(d1, 0.0, 1), ArgumentError);
}

TEST(ReallocateClasses, TenClassesBoundedStages) {
  std::vector<int> classes{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::set<std::vector<std::vector<int>>> distinct;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const StagePartition p = reallocate_classes(classes, seed, {2, 4});
    EXPECT_GE(p.num_stages(), 2);
    EXPECT_LE(p.num_stages(), 4);
    EXPECT_GE(p.classes(1).size(), 6u);
    EXPECT_NO_THROW(p.validate(classes));
    std::map<int, int> seen;
    for (const auto& st : p.stages) {
      for (int c : st) ++seen[c];
    }
    for (int c : classes) EXPECT_EQ(seen[c], 1);
    distinct.insert(p.stages);
  }
  EXPECT_GE(distinct.size(), 2u);
}

TEST(ReallocateClasses, StageCountClampedToFeasible) {
  std::vector<int> classes{1, 2, 3, 4, 5};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const StagePartition p = reallocate_classes(classes, seed, {2, 6});
    EXPECT_LE(p.num_stages(), 3);
    EXPECT_GE(p.classes(1).size(), 3u);
  }
}

}  // namespace
}  // namespace memsel
