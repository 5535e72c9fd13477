#include "memsel/segmenter.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "memsel/errors.hpp"
#include "memsel/rng.hpp"

namespace memsel {

void SegmenterConfig::validate() const {
  if (hidden < 1) throw ConfigError("segmenter.hidden must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("segmenter.learning_rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("segmenter.momentum must lie in [0, 1)");
  if (batch_size < 1) throw ConfigError("segmenter.batch_size must be >= 1");
  if (!(pseudo_threshold >= 0.0 && pseudo_threshold <= 1.0)) {
    throw ConfigError("segmenter.pseudo_threshold must lie in [0, 1]");
  }
}

PredictionResult predict_from_logits(const Eigen::MatrixXd& logits,
                                     std::span<const int> class_ids, int height, int width) {
  PredictionResult out;
  out.height = height;
  out.width = width;
  const Eigen::Index n = logits.rows();
  out.mask.resize(n);
  out.confidence.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index arg = 0;
    const double top = logits.row(i).maxCoeff(&arg);
    const double z = (logits.row(i).array() - top).exp().sum();
    out.mask[i] = arg == 0 ? 0 : class_ids[arg - 1];
    out.confidence[i] = 1.0 / z;
  }
  return out;
}

std::vector<int> apply_pseudo_label_rule(std::span<const int> labels,
                                         const PredictionResult& prediction, double threshold) {
  if (prediction.mask.size() != labels.size() || prediction.confidence.size() != labels.size()) {
    throw ArgumentError("prediction and label sizes differ");
  }
  std::vector<int> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0) {
      out[i] = labels[i];
    } else if (prediction.confidence[i] > threshold) {
      out[i] = prediction.mask[i];
    } else {
      out[i] = 0;
    }
  }
  return out;
}

Segmenter::Segmenter(int in_channels, SegmenterConfig config)
    : in_channels_(in_channels), config_(config) {
  config_.validate();
  if (in_channels < 1) throw ConfigError("segmenter needs at least one input channel");
  const int fan_in = 9 * in_channels;
  Rng rng = make_rng(config_.seed, {0xf117});
  std::normal_distribution<double> gauss(0.0, config_.init_scale / std::sqrt(fan_in));
  filter_ = Eigen::MatrixXd(config_.hidden, fan_in);
  for (Eigen::Index i = 0; i < filter_.size(); ++i) filter_.data()[i] = gauss(rng);
  filter_bias_ = Eigen::VectorXd::Zero(config_.hidden);
  head_ = Eigen::MatrixXd::Zero(1, config_.hidden);
  head_bias_ = Eigen::VectorXd::Zero(1);
}

Segmenter Segmenter::from_parameters(int in_channels, SegmenterConfig config,
                                     std::vector<int> classes, Eigen::MatrixXd filter,
                                     Eigen::VectorXd filter_bias, Eigen::MatrixXd head,
                                     Eigen::VectorXd head_bias, std::uint64_t train_calls) {
  Segmenter s(in_channels, config);
  const auto outputs = static_cast<Eigen::Index>(classes.size() + 1);
  if (filter.rows() != config.hidden || filter.cols() != 9 * in_channels ||
      filter_bias.size() != config.hidden || head.rows() != outputs ||
      head.cols() != config.hidden || head_bias.size() != outputs) {
    throw MismatchError("segmenter checkpoint shapes are inconsistent");
  }
  s.classes_ = std::move(classes);
  s.filter_ = std::move(filter);
  s.filter_bias_ = std::move(filter_bias);
  s.head_ = std::move(head);
  s.head_bias_ = std::move(head_bias);
  s.train_calls_ = train_calls;
  return s;
}

bool Segmenter::same_parameters(const Segmenter& other) const {
  return classes_ == other.classes_ && filter_ == other.filter_ &&
         filter_bias_ == other.filter_bias_ && head_ == other.head_ &&
         head_bias_ == other.head_bias_;
}

bool Segmenter::has_class(int class_id) const {
  return std::find(classes_.begin(), classes_.end(), class_id) != classes_.end();
}

int Segmenter::column_of(int label) const {
  if (label == 0) return 0;
  const auto it = std::find(classes_.begin(), classes_.end(), label);
  if (it == classes_.end()) {
    throw ArgumentError("label " + std::to_string(label) + " is not covered by the class head");
  }
  return static_cast<int>(it - classes_.begin()) + 1;
}

void Segmenter::extend_head(std::span<const int> class_ids) {
  std::vector<int> fresh;
  for (int c : class_ids) {
    if (c <= 0) throw ArgumentError("class ids must be positive");
    if (!has_class(c) && std::find(fresh.begin(), fresh.end(), c) == fresh.end()) {
      fresh.push_back(c);
    }
  }
  if (fresh.empty()) return;
  std::sort(fresh.begin(), fresh.end());

  const Eigen::Index old_rows = head_.rows();
  const auto added = static_cast<Eigen::Index>(fresh.size());
  Rng rng = make_rng(config_.seed, {0x4ead, static_cast<std::uint64_t>(old_rows)});
  std::normal_distribution<double> gauss(0.0, config_.head_init_scale);

  Eigen::MatrixXd head(old_rows + added, config_.hidden);
  head.topRows(old_rows) = head_;
  for (Eigen::Index r = old_rows; r < old_rows + added; ++r) {
    for (Eigen::Index c = 0; c < config_.hidden; ++c) head(r, c) = gauss(rng);
  }
  Eigen::VectorXd bias(old_rows + added);
  bias.head(old_rows) = head_bias_;
  for (Eigen::Index r = old_rows; r < old_rows + added; ++r) bias(r) = gauss(rng);
  head_ = std::move(head);
  head_bias_ = std::move(bias);
  classes_.insert(classes_.end(), fresh.begin(), fresh.end());
}

Eigen::MatrixXd Segmenter::patches(const Sample& s) const {
  if (s.channels != in_channels_) {
    throw MismatchError("sample has " + std::to_string(s.channels) + " channels, model expects " +
                        std::to_string(in_channels_));
  }
  const int c = s.channels;
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(s.num_pixels(), 9 * c);
  for (int y = 0; y < s.height; ++y) {
    for (int x = 0; x < s.width; ++x) {
      const int row = y * s.width + x;
      for (int dy = -1; dy <= 1; ++dy) {
        const int yy = y + dy;
        if (yy < 0 || yy >= s.height) continue;
        for (int dx = -1; dx <= 1; ++dx) {
          const int xx = x + dx;
          if (xx < 0 || xx >= s.width) continue;
          const int base = ((dy + 1) * 3 + (dx + 1)) * c;
          for (int k = 0; k < c; ++k) p(row, base + k) = s.pixel(yy, xx, k);
        }
      }
    }
  }
  return p;
}

Eigen::MatrixXd Segmenter::pixel_features(const Sample& s) const {
  Eigen::MatrixXd z = patches(s) * filter_.transpose();
  z.rowwise() += filter_bias_.transpose();
  return z.array().tanh().matrix();
}

Eigen::MatrixXd Segmenter::logits(const Sample& s) const {
  Eigen::MatrixXd out = pixel_features(s) * head_.transpose();
  out.rowwise() += head_bias_.transpose();
  return out;
}

PredictionResult Segmenter::predict(const Sample& s) const {
  return predict_from_logits(logits(s), classes_, s.height, s.width);
}

std::vector<int> Segmenter::pseudo_label(const Sample& s) const {
  return pseudo_label(s, config_.pseudo_threshold);
}

std::vector<int> Segmenter::pseudo_label(const Sample& s, double threshold) const {
  return apply_pseudo_label_rule(s.labels, predict(s), threshold);
}

Eigen::MatrixXd Segmenter::backprop_features(const Sample& s,
                                             const Eigen::MatrixXd& grad_features) const {
  const Eigen::MatrixXd h = pixel_features(s);
  const Eigen::MatrixXd dz = grad_features.array() * (1.0 - h.array().square());
  const Eigen::MatrixXd dp = dz * filter_;  // N x 9C
  const int c = s.channels;
  Eigen::MatrixXd dx = Eigen::MatrixXd::Zero(s.num_pixels(), c);
  for (int y = 0; y < s.height; ++y) {
    for (int x = 0; x < s.width; ++x) {
      const int row = y * s.width + x;
      for (int dy = -1; dy <= 1; ++dy) {
        const int yy = y + dy;
        if (yy < 0 || yy >= s.height) continue;
        for (int ddx = -1; ddx <= 1; ++ddx) {
          const int xx = x + ddx;
          if (xx < 0 || xx >= s.width) continue;
          const int base = ((dy + 1) * 3 + (ddx + 1)) * c;
          dx.row(yy * s.width + xx) += dp.row(row).segment(base, c);
        }
      }
    }
  }
  return dx;
}

double Segmenter::loss(std::span<const Sample> samples,
                       std::span<const std::vector<int>> targets) const {
  double total = 0.0;
  long long count = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Eigen::MatrixXd z = logits(samples[i]);
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
      const double top = z.row(r).maxCoeff();
      const double lse = top + std::log((z.row(r).array() - top).exp().sum());
      total += lse - z(r, column_of(targets[i][r]));
    }
    count += z.rows();
  }
  return count == 0 ? 0.0 : total / static_cast<double>(count);
}

std::vector<double> Segmenter::train_stage(std::span<const Sample> samples, int epochs) {
  if (samples.empty()) throw ArgumentError("cannot train on an empty sample set");
  if (epochs <= 0) return {};

  std::vector<int> labels;
  for (const Sample& s : samples) {
    for (int c : s.classes()) labels.push_back(c);
  }
  extend_head(labels);

  std::vector<std::vector<int>> targets;
  std::vector<Eigen::MatrixXd> inputs;
  targets.reserve(samples.size());
  inputs.reserve(samples.size());
  for (const Sample& s : samples) {
    targets.push_back(pseudo_label(s));
    inputs.push_back(patches(s));
  }
  std::vector<std::vector<int>> columns(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    columns[i].resize(targets[i].size());
    for (std::size_t p = 0; p < targets[i].size(); ++p) columns[i][p] = column_of(targets[i][p]);
  }

  const std::uint64_t call = train_calls_++;
  Eigen::MatrixXd v_filter = Eigen::MatrixXd::Zero(filter_.rows(), filter_.cols());
  Eigen::VectorXd v_filter_bias = Eigen::VectorXd::Zero(filter_bias_.size());
  Eigen::MatrixXd v_head = Eigen::MatrixXd::Zero(head_.rows(), head_.cols());
  Eigen::VectorXd v_head_bias = Eigen::VectorXd::Zero(head_bias_.size());
  const double lr = config_.learning_rate;
  const double mu = config_.momentum;

  std::vector<std::size_t> order(samples.size());
  std::vector<double> trace;
  trace.reserve(epochs);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = make_rng(config_.seed, {0x7ea1, call, static_cast<std::uint64_t>(epoch)});
    std::shuffle(order.begin(), order.end(), rng);

    double epoch_loss = 0.0;
    long long epoch_pixels = 0;
    for (std::size_t start = 0; start < order.size(); start += config_.batch_size) {
      const std::size_t end = std::min(order.size(), start + config_.batch_size);
      Eigen::MatrixXd g_filter = Eigen::MatrixXd::Zero(filter_.rows(), filter_.cols());
      Eigen::VectorXd g_filter_bias = Eigen::VectorXd::Zero(filter_bias_.size());
      Eigen::MatrixXd g_head = Eigen::MatrixXd::Zero(head_.rows(), head_.cols());
      Eigen::VectorXd g_head_bias = Eigen::VectorXd::Zero(head_bias_.size());
      long long batch_pixels = 0;
      for (std::size_t b = start; b < end; ++b) batch_pixels += inputs[order[b]].rows();
      const double scale = 1.0 / static_cast<double>(batch_pixels);

      for (std::size_t b = start; b < end; ++b) {
        const std::size_t i = order[b];
        const Eigen::MatrixXd& p = inputs[i];
        Eigen::MatrixXd h = p * filter_.transpose();
        h.rowwise() += filter_bias_.transpose();
        h = h.array().tanh().matrix();
        Eigen::MatrixXd g = h * head_.transpose();
        g.rowwise() += head_bias_.transpose();
        for (Eigen::Index r = 0; r < g.rows(); ++r) {
          const double top = g.row(r).maxCoeff();
          g.row(r) = (g.row(r).array() - top).exp().matrix();
          const double z = g.row(r).sum();
          g.row(r) /= z;
          const int col = columns[i][r];
          epoch_loss -= std::log(std::max(g(r, col), 1e-300));
          g(r, col) -= 1.0;
        }
        g *= scale;
        g_head.noalias() += g.transpose() * h;
        g_head_bias += g.colwise().sum().transpose();
        const Eigen::MatrixXd dz = (g * head_).array() * (1.0 - h.array().square());
        g_filter.noalias() += dz.transpose() * p;
        g_filter_bias += dz.colwise().sum().transpose();
        epoch_pixels += p.rows();
      }
      v_filter = mu * v_filter - lr * g_filter;
      v_filter_bias = mu * v_filter_bias - lr * g_filter_bias;
      v_head = mu * v_head - lr * g_head;
      v_head_bias = mu * v_head_bias - lr * g_head_bias;
      filter_ += v_filter;
      filter_bias_ += v_filter_bias;
      head_ += v_head;
      head_bias_ += v_head_bias;
    }
    trace.push_back(epoch_loss / static_cast<double>(epoch_pixels));
  }
  return trace;
}

void IouAccumulator::add(std::span<const int> prediction, std::span<const int> ground_truth) {
  if (prediction.size() != ground_truth.size()) {
    throw ArgumentError("prediction and ground truth sizes differ");
  }
  for (std::size_t i = 0; i < prediction.size(); ++i) {
    ++pred_count_[prediction[i]];
    ++gt_count_[ground_truth[i]];
    if (prediction[i] == ground_truth[i]) ++intersection_[prediction[i]];
  }
}

std::optional<double> IouAccumulator::iou(int class_id) const {
  auto get = [](const std::map<int, long long>& m, int k) {
    const auto it = m.find(k);
    return it == m.end() ? 0LL : it->second;
  };
  const long long inter = get(intersection_, class_id);
  const long long uni = get(pred_count_, class_id) + get(gt_count_, class_id) - inter;
  if (uni == 0) return std::nullopt;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

std::map<int, double> IouAccumulator::per_class(std::span<const int> classes) const {
  std::map<int, double> out;
  for (int c : classes) {
    if (auto v = iou(c)) out[c] = *v;
  }
  return out;
}

std::map<int, double> per_class_iou(const Segmenter& model, std::span<const Sample> eval_set,
                                    std::span<const int> classes) {
  if (eval_set.empty()) throw ArgumentError("IoU evaluation set is empty");
  IouAccumulator acc;
  for (const Sample& s : eval_set) acc.add(model.predict(s).mask, s.labels);
  return acc.per_class(classes);
}

double mean_iou(const std::map<int, double>& ious, std::span<const int> group) {
  double sum = 0.0;
  int n = 0;
  for (int c : group) {
    const auto it = ious.find(c);
    if (it == ious.end()) continue;
    sum += it->second;
    ++n;
  }
  return n == 0 ? 0.0 : sum / n;
}

}  // namespace memsel
