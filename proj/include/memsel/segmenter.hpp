#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "memsel/sample.hpp"

namespace memsel {

struct SegmenterConfig {
  int hidden = 16;
  double learning_rate = 0.1;
  double momentum = 0.9;
  int batch_size = 4;
  // Std of the filter bank init, relative to 1/sqrt(fan_in).
  double init_scale = 1.0;
  double head_init_scale = 1e-2;
  double pseudo_threshold = 0.8;
  std::uint64_t seed = 7;

  void validate() const;
  friend bool operator==(const SegmenterConfig&, const SegmenterConfig&) = default;
};

struct PredictionResult {
  int height = 0;
  int width = 0;
  std::vector<int> mask;
  std::vector<double> confidence;
};

// Argmax and max-softmax per row of `logits`; column 0 is background and
// column k > 0 maps to class_ids[k - 1].
PredictionResult predict_from_logits(const Eigen::MatrixXd& logits,
                                     std::span<const int> class_ids, int height, int width);

// Y_i if Y_i != 0; P_i if Y_i == 0 and M_i > threshold; else 0.
std::vector<int> apply_pseudo_label_rule(std::span<const int> labels,
                                         const PredictionResult& prediction, double threshold);

// Per-pixel classifier: a 3x3 zero-padded filter bank with tanh, followed by
// a linear head over background plus every class seen so far.
class Segmenter {
 public:
  Segmenter(int in_channels, SegmenterConfig config);

  const SegmenterConfig& config() const { return config_; }
  int in_channels() const { return in_channels_; }
  int hidden() const { return config_.hidden; }
  const std::vector<int>& classes() const { return classes_; }
  int num_outputs() const { return static_cast<int>(classes_.size()) + 1; }
  bool has_class(int class_id) const;

  // Appends a head column for each id not yet present; existing columns are
  // left untouched.
  void extend_head(std::span<const int> class_ids);

  // (H*W) x (9*C) zero-padded 3x3 neighbourhoods.
  Eigen::MatrixXd patches(const Sample& sample) const;
  // (H*W) x hidden tanh activations.
  Eigen::MatrixXd pixel_features(const Sample& sample) const;
  Eigen::MatrixXd logits(const Sample& sample) const;
  PredictionResult predict(const Sample& sample) const;
  std::vector<int> pseudo_label(const Sample& sample) const;
  std::vector<int> pseudo_label(const Sample& sample, double threshold) const;

  // Pulls a gradient w.r.t. pixel features back to the input pixels.
  // Result is (H*W) x channels.
  Eigen::MatrixXd backprop_features(const Sample& sample,
                                    const Eigen::MatrixXd& grad_features) const;

  // Extends the head for unseen label ids, pseudo-labels every sample with
  // the pre-training model, then runs `epochs` epochs of mini-batch momentum
  // SGD on pixel-wise cross-entropy. Returns the mean loss of each epoch.
  std::vector<double> train_stage(std::span<const Sample> samples, int epochs);

  // Mean cross-entropy of `samples` against the given targets.
  double loss(std::span<const Sample> samples, std::span<const std::vector<int>> targets) const;

  Eigen::MatrixXd& filter() { return filter_; }
  const Eigen::MatrixXd& filter() const { return filter_; }
  Eigen::VectorXd& filter_bias() { return filter_bias_; }
  const Eigen::VectorXd& filter_bias() const { return filter_bias_; }
  Eigen::MatrixXd& head() { return head_; }
  const Eigen::MatrixXd& head() const { return head_; }
  Eigen::VectorXd& head_bias() { return head_bias_; }
  const Eigen::VectorXd& head_bias() const { return head_bias_; }
  std::uint64_t train_calls() const { return train_calls_; }

  // Restores a model from stored parameters; used by checkpoint loading.
  static Segmenter from_parameters(int in_channels, SegmenterConfig config,
                                   std::vector<int> classes, Eigen::MatrixXd filter,
                                   Eigen::VectorXd filter_bias, Eigen::MatrixXd head,
                                   Eigen::VectorXd head_bias, std::uint64_t train_calls);

  bool same_parameters(const Segmenter& other) const;

 private:
  int column_of(int label) const;

  int in_channels_;
  SegmenterConfig config_;
  std::vector<int> classes_;
  Eigen::MatrixXd filter_;       // hidden x 9C
  Eigen::VectorXd filter_bias_;  // hidden
  Eigen::MatrixXd head_;         // outputs x hidden
  Eigen::VectorXd head_bias_;    // outputs
  std::uint64_t train_calls_ = 0;
};

// Dataset-level intersection/union counts.
class IouAccumulator {
 public:
  void add(std::span<const int> prediction, std::span<const int> ground_truth);
  // nullopt when the class never occurs in either prediction or ground truth.
  std::optional<double> iou(int class_id) const;
  std::map<int, double> per_class(std::span<const int> classes) const;

 private:
  std::map<int, long long> intersection_;
  std::map<int, long long> pred_count_;
  std::map<int, long long> gt_count_;
};

// IoU over `eval_set` for each class in `classes`; classes with an empty
// union are absent from the result.
std::map<int, double> per_class_iou(const Segmenter& model, std::span<const Sample> eval_set,
                                    std::span<const int> classes);

// Arithmetic mean over the classes of `group` present in `ious`; 0 if none.
double mean_iou(const std::map<int, double>& ious, std::span<const int> group);

}  // namespace memsel
