#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "spg/deform.hpp"
#include "spg/norm.hpp"
#include "spg/semantics.hpp"

namespace spg {

enum class SpatnInput { kParsing, kImage };
enum class NormVariant { kSean, kSpade };

struct ModelConfig {
  int image_size = 64;
  int classes = 8;
  int style_dim = 32;
  int base_width = 32;
  int depth = 4;            // downsampling stages of each SPGNet encoder
  int spatn_blocks = 3;
  int disc_depth = 3;
  int res_blocks = 2;       // residual blocks per encoder stage
  int sean_hidden = 32;
  int sean_kernel = 3;
  int max_warp_stages = 5;  // FeatureWarp follows only the first stages
  bool distance_maps = true;
  SpatnInput spatn_input = SpatnInput::kParsing;
  NormVariant norm = NormVariant::kSean;
  std::uint64_t seed = 1;

  int pose_channels() const;
  int encoder_width(int stage) const;
  int decoder_width(int stage) const;
  // Throws ConfigError when the configuration cannot be built.
  void validate() const;

  /// The 256x256, 20-class, 7-stage configuration.
  static ModelConfig full_scale();
};

/// Stage one: predicts per-pixel class probabilities of the target parsing
/// map from source/target poses and the source parsing map (or image).
template <typename T>
class Spatn {
 public:
  explicit Spatn(const ModelConfig& cfg);
  Spatn(const Spatn&) = delete;
  Spatn& operator=(const Spatn&) = delete;

  /// pose_s, pose_t: (n,P,H,W); source: (n,C,H,W) one-hot parsing, or
  /// (n,3,H,W) image in image-input mode. Returns softmax probabilities.
  Var<T> operator()(const Var<T>& pose_s, const Var<T>& pose_t, const Var<T>& source, const Mode& mode) const;

  ParamStore<T>& params() { return store_; }
  const ModelConfig& config() const { return cfg_; }

 private:
  struct Branch {
    Conv2d<T> conv1;
    BatchNorm2d<T> bn1;
    Conv2d<T> conv2;
    BatchNorm2d<T> bn2;
    Var<T> operator()(const Var<T>& x, const Mode& mode) const;
  };
  struct Block {
    Branch pose;
    Branch semantic;
  };
  struct Stem {
    Conv2d<T> conv1;
    BatchNorm2d<T> bn1;
    Conv2d<T> conv2;
    BatchNorm2d<T> bn2;
    Var<T> operator()(const Var<T>& x, const Mode& mode) const;
  };

  Branch make_branch(const std::string& name, int width, const Initializer& init);
  Stem make_stem(const std::string& name, int c_in, const Initializer& init);

  ModelConfig cfg_;
  ParamStore<T> store_;
  Stem pose_stem_;
  Stem source_stem_;
  std::vector<Block> blocks_;
  ConvTranspose2d<T> up1_;
  BatchNorm2d<T> up_bn1_;
  ConvTranspose2d<T> up2_;
  BatchNorm2d<T> up_bn2_;
  Conv2d<T> head_;

 public:
  /// One pose-attentional transfer block on (semantic, pose) features.
  std::pair<Var<T>, Var<T>> transfer_block(std::size_t index, const Var<T>& semantic, const Var<T>& pose,
                                           const Mode& mode) const;
  std::size_t block_count() const { return blocks_.size(); }
};

/// Encoder-decoder over the source image ending in region average pooling.
template <typename T>
class StyleEncoder {
 public:
  StyleEncoder(ParamStore<T>& store, const std::string& name, const ModelConfig& cfg, const Initializer& init);

  /// Per-pixel style features (n,D,H,W) in (-1,1).
  Var<T> features(const Var<T>& image) const;
  StyleCodes<T> operator()(const Var<T>& image, std::span<const SemanticMap> source_maps) const;

 private:
  Conv2d<T> c1_, c2_, c3_;
  ConvTranspose2d<T> t1_, t2_, t3_;
};

/// Residual generation block: two SEAN stages fusing warped appearance and
/// pose skip features into the decoder feature.
template <typename T>
class SpgBlock {
 public:
  SpgBlock() = default;
  SpgBlock(ParamStore<T>& store, const std::string& name, int prev_channels, int skip_channels,
           const ModelConfig& cfg, const Initializer& init);

  /// semantic and style already resized to f_prev's spatial size.
  Var<T> operator()(const Var<T>& f_prev, const Var<T>& appearance, const Var<T>& pose, const Var<T>& semantic,
                    const Var<T>& style) const;

  Conv2d<T>& final_conv() { return conv2_; }
  Sean<T>& first_norm() { return sean1_; }
  Sean<T>& second_norm() { return sean2_; }

 private:
  Var<T> normalize(const Sean<T>& sean, const Var<T>& h, const Var<T>& semantic, const Var<T>& style) const;

  NormVariant variant_ = NormVariant::kSean;
  Sean<T> sean1_;
  Conv2d<T> conv1_;
  Sean<T> sean2_;
  Conv2d<T> conv2_;
};

/// Stage two: dual-path encoder (appearance with feature warping, pose) and
/// a decoder of upsampling stages each followed by an SpgBlock.
template <typename T>
class SpgNet {
 public:
  explicit SpgNet(const ModelConfig& cfg);
  SpgNet(const SpgNet&) = delete;
  SpgNet& operator=(const SpgNet&) = delete;

  /// pose_t: (n,P,H,W); source: (n,3,H,W) in [0,1]; source_maps: n parsing
  /// maps of the source; target: (n,C,H,W) one-hot or soft target parsing;
  /// flow: full-resolution source<-target flow. Returns (n,3,H,W) in [0,1].
  Var<T> operator()(const Var<T>& pose_t, const Var<T>& source, std::span<const SemanticMap> source_maps,
                    const Var<T>& target, const FlowField<T>& flow, const Mode& mode) const;

  ParamStore<T>& params() { return store_; }
  const ModelConfig& config() const { return cfg_; }
  std::size_t block_count() const { return blocks_.size(); }
  SpgBlock<T>& block(std::size_t i) { return blocks_[i]; }
  StyleEncoder<T>& style_encoder() { return style_; }

 private:
  struct Stage {
    std::vector<ResidualBlock<T>> res;
    bool warp = false;
    FeatureWarp<T> warper;
    Conv2d<T> down;
    BatchNorm2d<T> down_bn;
  };
  Stage make_stage(const std::string& name, int stage, bool warp, const Initializer& init);
  // Runs one encoder; returns per-stage skip features and the bottleneck.
  std::vector<Var<T>> encode(const std::vector<Stage>& stages, const Conv2d<T>& in_conv, const Var<T>& x,
                             const FlowField<T>* flow, const Mode& mode, Var<T>& bottom) const;

  ModelConfig cfg_;
  ParamStore<T> store_;
  StyleEncoder<T> style_;
  Conv2d<T> app_in_;
  Conv2d<T> pose_in_;
  std::vector<Stage> app_stages_;
  std::vector<Stage> pose_stages_;
  std::vector<Conv2d<T>> up_convs_;
  std::vector<SpgBlock<T>> blocks_;
  Conv2d<T> out_conv_;
};

/// PatchGAN discriminator over (image, source image, target pose) triplets.
template <typename T>
class Discriminator {
 public:
  explicit Discriminator(const ModelConfig& cfg);
  Discriminator(const Discriminator&) = delete;
  Discriminator& operator=(const Discriminator&) = delete;

  /// Patch logits (n,1,H/2^d,W/2^d); no output squashing.
  Var<T> operator()(const Var<T>& image, const Var<T>& source, const Var<T>& pose) const;

  ParamStore<T>& params() { return store_; }

 private:
  ModelConfig cfg_;
  ParamStore<T> store_;
  std::vector<Conv2d<T>> stages_;
  Conv2d<T> head_;
};

}  // namespace spg
