#pragma once

#include <cstdint>
#include <vector>

namespace memsel {

// Identifies one stored view of a world sample: the same world image can
// appear under several stage views with different labels.
struct SampleKey {
  int id = -1;
  int source_stage = 0;

  friend bool operator==(const SampleKey&, const SampleKey&) = default;
  friend auto operator<=>(const SampleKey&, const SampleKey&) = default;
};

// A labeled image grid. Pixels are stored row-major as (y, x, channel),
// labels as (y, x) with 0 = background.
struct Sample {
  int id = -1;
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> pixels;
  std::vector<int> labels;
  int source_stage = 0;
  bool enhanced = false;

  Sample() = default;
  Sample(int id, int height, int width, int channels)
      : id(id),
        height(height),
        width(width),
        channels(channels),
        pixels(static_cast<std::size_t>(height) * width * channels, 0.0),
        labels(static_cast<std::size_t>(height) * width, 0) {}

  int num_pixels() const { return height * width; }
  SampleKey key() const { return {id, source_stage}; }

  double& pixel(int y, int x, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  double pixel(int y, int x, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  int& label(int y, int x) { return labels[static_cast<std::size_t>(y) * width + x]; }
  int label(int y, int x) const { return labels[static_cast<std::size_t>(y) * width + x]; }

  // Sorted distinct non-background label ids.
  std::vector<int> classes() const;
  // Number of pixels carrying `class_id`.
  int count(int class_id) const;
  // Labeled class with the most pixels; 0 if none.
  int primary_class() const;
};

}  // namespace memsel
