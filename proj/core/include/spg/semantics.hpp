#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "spg/autograd.hpp"

namespace spg {

/// H x W label map over `classes` region classes (8-bit labels, C <= 256).
class SemanticMap {
 public:
  SemanticMap() = default;
  SemanticMap(int height, int width, int classes, std::uint8_t fill = 0);
  SemanticMap(int height, int width, int classes, std::vector<std::uint8_t> labels);

  int height() const { return height_; }
  int width() const { return width_; }
  int classes() const { return classes_; }
  std::uint8_t& at(int y, int x) { return labels_[static_cast<std::size_t>(y) * width_ + x]; }
  std::uint8_t at(int y, int x) const { return labels_[static_cast<std::size_t>(y) * width_ + x]; }
  const std::vector<std::uint8_t>& labels() const { return labels_; }
  std::vector<std::uint8_t>& labels() { return labels_; }

  // Throws ValidationError on any label >= classes.
  void validate() const;

  friend bool operator==(const SemanticMap&, const SemanticMap&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  int classes_ = 0;
  std::vector<std::uint8_t> labels_;
};

/// (1,C,H,W) indicator channels.
template <typename T>
Tensor<T> one_hot(const SemanticMap& map);
/// One-hot of several maps stacked along the batch axis.
template <typename T>
Tensor<T> one_hot_batch(std::span<const SemanticMap> maps);
/// Label map from the channel-wise argmax of (1,C,H,W) scores.
template <typename T>
SemanticMap argmax_map(const Tensor<T>& scores, int sample = 0);

/// Nearest-neighbour resize by an integer downscale factor.
SemanticMap downsample_map(const SemanticMap& map, int factor);

/// Per-region style vectors: codes is (n, C, D, 1); present[n*C + l] marks
/// regions occupied in the pooled map. Absent regions carry zero codes.
template <typename T>
struct StyleCodes {
  Var<T> codes;
  std::vector<std::uint8_t> present;

  int batch() const { return codes.shape().n; }
  int classes() const { return codes.shape().c; }
  int dim() const { return codes.shape().h; }
};

/// Mean feature vector over each labelled region; differentiable in features.
template <typename T>
StyleCodes<T> region_average_pool(const Var<T>& features, std::span<const SemanticMap> maps);

/// Style map (n,D,H,W) with pixel (y,x) = sum_l target(n,l,y,x) * code[l].
/// For a one-hot target this is exactly code[label(y,x)]; soft targets give
/// the probability-weighted mix. Differentiable in codes and target.
template <typename T>
Var<T> style_broadcast(const StyleCodes<T>& codes, const Var<T>& target);
template <typename T>
Var<T> style_broadcast(const StyleCodes<T>& codes, std::span<const SemanticMap> target);

inline constexpr double kProbabilityFloor = 1e-12;

/// Mean-per-pixel cross-entropy -(1/NHW) sum log pred(truth). pred holds
/// per-pixel probabilities (channel sums within 1e-3 of 1).
template <typename T>
Var<T> cross_entropy(const Var<T>& pred, std::span<const SemanticMap> truth);

/// Binary PGM (P5) with raw label values.
void write_semantic_map(const std::filesystem::path& path, const SemanticMap& map);
SemanticMap read_semantic_map(const std::filesystem::path& path, int classes);

/// Style codes of one sample as an SPGT tensor with dims (C, D, 1, 1).
template <typename T>
void save_style_codes(const std::filesystem::path& path, const StyleCodes<T>& codes, int sample = 0);

}  // namespace spg
