#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "replaylab/envs/idx.hpp"

namespace replaylab {

inline constexpr std::size_t kNumDigitClasses = 10;
inline constexpr std::size_t kNumDigitTasks = 5;

// Each synthetic class lights 6 of the 16 7x7 blocks of a 28x28 image. Any
// two classes differ in at least 6 blocks.
inline constexpr std::array<std::uint16_t, kNumDigitClasses> kDigitBlockMasks{
    0x003f, 0x01c7, 0x0e07, 0x7007, 0x124b, 0x248b, 0x490b, 0x4453, 0x8293, 0x2863};

inline Vector digit_template(std::size_t label) {
  if (label >= kNumDigitClasses) throw Error("label out of range");
  Vector img(28 * 28, 0.0);
  for (std::size_t block = 0; block < 16; ++block) {
    if (!((kDigitBlockMasks[label] >> block) & 1u)) continue;
    const std::size_t br = block / 4, bc = block % 4;
    for (std::size_t r = 0; r < 7; ++r)
      for (std::size_t c = 0; c < 7; ++c) img[(br * 7 + r) * 28 + bc * 7 + c] = 1.0;
  }
  return img;
}

/// Offline stand-in for MNIST: block templates plus Gaussian pixel noise,
/// clamped to [0,1] and quantized to multiples of 1/255 so the set survives
/// an IDX round trip unchanged. Examples are grouped by class.
template <class Rng>
ImageDataset synthetic_digits(Rng& rng, std::size_t per_class = 500, double noise = 0.1) {
  ImageDataset ds;
  ds.examples.reserve(per_class * kNumDigitClasses);
  std::normal_distribution<double> gauss(0.0, noise);
  for (std::size_t label = 0; label < kNumDigitClasses; ++label) {
    const Vector base = digit_template(label);
    for (std::size_t i = 0; i < per_class; ++i) {
      Vector px(base.size());
      for (std::size_t k = 0; k < px.size(); ++k) {
        const double v = std::clamp(base[k] + gauss(rng), 0.0, 1.0);
        px[k] = std::round(v * 255.0) / 255.0;
      }
      ds.examples.push_back({std::move(px), label});
    }
  }
  return ds;
}

/// Task i of the lifelong digit stream covers digits i and i+5.
inline std::pair<std::size_t, std::size_t> task_digits(std::size_t task) {
  if (task >= kNumDigitTasks) throw Error("invalid classification task");
  return {task, task + kNumDigitTasks};
}

inline std::vector<std::size_t> task_indices(const ImageDataset& ds, std::size_t task) {
  const auto [a, b] = task_digits(task);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (ds.examples[i].label == a || ds.examples[i].label == b) out.push_back(i);
  return out;
}

/// A labelled image as a one-step, reward-free experience: the "action" is
/// the label, the episode ends immediately.
inline Experience classification_as_experience(std::span<const double> image, std::size_t label,
                                               std::size_t num_classes, TaskId task = 0, std::uint64_t step = 0) {
  if (label >= num_classes) throw Error("label out of range");
  Experience e;
  e.state.assign(image.begin(), image.end());
  e.action = label;
  e.reward = 0.0;
  e.ret = 0.0;
  e.terminal = true;
  e.next_state.assign(image.size(), 0.0);
  e.task_id = task;
  e.step_index = step;
  return e;
}

/// Coverage feature for digit experiences: pixels and one-hot label. The
/// all-zero next state and zero reward are dropped; they do not change any
/// supported distance.
inline Vector digit_coverage_feature(const TransitionView& e) {
  Vector f(e.state.begin(), e.state.end());
  for (std::size_t k = 0; k < kNumDigitClasses; ++k) f.push_back(k == e.action ? 1.0 : 0.0);
  return f;
}

}  // namespace replaylab
