#include "spg/models.hpp"

#include <algorithm>

#include "spg/pose.hpp"

namespace spg {

int ModelConfig::pose_channels() const { return distance_maps ? kPoseChannels : kNumJoints; }

int ModelConfig::encoder_width(int stage) const {
  if (stage == 0) return base_width;
  if (stage == 1) return 2 * base_width;
  return 4 * base_width;
}

int ModelConfig::decoder_width(int stage) const {
  if (stage <= 2) return (stage + 1) * base_width;
  return 4 * base_width;
}

void ModelConfig::validate() const {
  if (depth < 2) throw ConfigError("depth must be >= 2");
  if (image_size <= 0 || image_size % (1 << depth) != 0)
    throw ConfigError("image_size " + std::to_string(image_size) + " is not divisible by 2^depth");
  if (image_size % 4 != 0) throw ConfigError("image_size must be divisible by 4");
  if (disc_depth < 1 || image_size % (1 << disc_depth) != 0)
    throw ConfigError("image_size is not divisible by 2^disc_depth");
  if (classes < 2 || classes > 256) throw ConfigError("classes must be in [2, 256]");
  if (style_dim < 1 || base_width < 1 || sean_hidden < 1 || res_blocks < 0 || spatn_blocks < 0)
    throw ConfigError("widths and block counts must be positive");
  if (sean_kernel != 1 && sean_kernel != 3) throw ConfigError("sean_kernel must be 1 or 3");
}

ModelConfig ModelConfig::full_scale() {
  ModelConfig cfg;
  cfg.image_size = 256;
  cfg.classes = 20;
  cfg.style_dim = 128;
  cfg.base_width = 32;
  cfg.depth = 7;
  cfg.spatn_blocks = 6;
  cfg.disc_depth = 3;
  cfg.res_blocks = 2;
  cfg.sean_hidden = 128;
  return cfg;
}

// ---------------------------------------------------------------------------
// Spatn

template <typename T>
Var<T> Spatn<T>::Branch::operator()(const Var<T>& x, const Mode& mode) const {
  return bn2(conv2(relu(bn1(conv1(x), mode))), mode);
}

template <typename T>
Var<T> Spatn<T>::Stem::operator()(const Var<T>& x, const Mode& mode) const {
  Var<T> h = relu(bn1(conv1(x), mode));
  return relu(bn2(conv2(h), mode));
}

template <typename T>
typename Spatn<T>::Branch Spatn<T>::make_branch(const std::string& name, int width, const Initializer& init) {
  return Branch{Conv2d<T>(store_, name + ".conv1", width, width, 3, 1, 1, true, init),
                BatchNorm2d<T>(store_, name + ".bn1", width),
                Conv2d<T>(store_, name + ".conv2", width, width, 3, 1, 1, true, init),
                BatchNorm2d<T>(store_, name + ".bn2", width)};
}

template <typename T>
typename Spatn<T>::Stem Spatn<T>::make_stem(const std::string& name, int c_in, const Initializer& init) {
  const int b = cfg_.base_width;
  return Stem{Conv2d<T>(store_, name + ".conv1", c_in, b, 3, 2, 1, true, init),
              BatchNorm2d<T>(store_, name + ".bn1", b),
              Conv2d<T>(store_, name + ".conv2", b, 2 * b, 3, 2, 1, true, init),
              BatchNorm2d<T>(store_, name + ".bn2", 2 * b)};
}

template <typename T>
Spatn<T>::Spatn(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const Initializer init(cfg_.seed);
  const int b = cfg_.base_width;
  pose_stem_ = make_stem("spatn.pose_stem", 2 * cfg_.pose_channels(), init);
  source_stem_ = make_stem("spatn.source_stem", cfg_.spatn_input == SpatnInput::kImage ? 3 : cfg_.classes, init);
  for (int i = 0; i < cfg_.spatn_blocks; ++i) {
    const std::string name = "spatn.block" + std::to_string(i);
    blocks_.push_back(Block{make_branch(name + ".pose", 2 * b, init), make_branch(name + ".sem", 2 * b, init)});
  }
  up1_ = ConvTranspose2d<T>(store_, "spatn.up1", 4 * b, b, 3, 2, init);
  up_bn1_ = BatchNorm2d<T>(store_, "spatn.up_bn1", b);
  up2_ = ConvTranspose2d<T>(store_, "spatn.up2", b, b, 3, 2, init);
  up_bn2_ = BatchNorm2d<T>(store_, "spatn.up_bn2", b);
  head_ = Conv2d<T>(store_, "spatn.head", b, cfg_.classes, 3, 1, 1, true, init);
}

template <typename T>
std::pair<Var<T>, Var<T>> Spatn<T>::transfer_block(std::size_t index, const Var<T>& semantic, const Var<T>& pose,
                                                   const Mode& mode) const {
  const Block& blk = blocks_.at(index);
  Var<T> pose_update = blk.pose(pose, mode);
  Var<T> attention = sigmoid(pose_update);
  Var<T> next_semantic = add(semantic, mul(blk.semantic(semantic, mode), attention));
  Var<T> next_pose = add(pose, pose_update);
  return {next_semantic, next_pose};
}

template <typename T>
Var<T> Spatn<T>::operator()(const Var<T>& pose_s, const Var<T>& pose_t, const Var<T>& source,
                            const Mode& mode) const {
  const int want_pose = cfg_.pose_channels();
  const int want_src = cfg_.spatn_input == SpatnInput::kImage ? 3 : cfg_.classes;
  if (pose_s.shape().c != want_pose || pose_t.shape().c != want_pose)
    throw ShapeError("spatn: pose tensors need " + std::to_string(want_pose) + " channels");
  if (source.shape().c != want_src)
    throw ShapeError("spatn: source needs " + std::to_string(want_src) + " channels, got " + source.shape().str());
  Var<T> pose = pose_stem_(concat_channels<T>({pose_s, pose_t}), mode);
  Var<T> semantic = source_stem_(source, mode);
  for (std::size_t i = 0; i < blocks_.size(); ++i) std::tie(semantic, pose) = transfer_block(i, semantic, pose, mode);
  Var<T> h = concat_channels<T>({semantic, pose});
  h = relu(up_bn1_(up1_(h), mode));
  h = relu(up_bn2_(up2_(h), mode));
  return softmax_channels(head_(h));
}

// ---------------------------------------------------------------------------
// StyleEncoder

template <typename T>
StyleEncoder<T>::StyleEncoder(ParamStore<T>& store, const std::string& name, const ModelConfig& cfg,
                              const Initializer& init)
    : c1_(store, name + ".conv1", 3, cfg.base_width, 3, 1, 1, true, init),
      c2_(store, name + ".conv2", cfg.base_width, 2 * cfg.base_width, 3, 2, 1, true, init),
      c3_(store, name + ".conv3", 2 * cfg.base_width, 4 * cfg.base_width, 3, 2, 1, true, init),
      t1_(store, name + ".deconv1", 4 * cfg.base_width, 2 * cfg.base_width, 3, 2, init),
      t2_(store, name + ".deconv2", 2 * cfg.base_width, cfg.base_width, 3, 2, init),
      t3_(store, name + ".deconv3", cfg.base_width, cfg.style_dim, 3, 1, init) {}

template <typename T>
Var<T> StyleEncoder<T>::features(const Var<T>& image) const {
  if (image.shape().c != 3) throw ShapeError("style encoder expects a 3-channel image");
  auto stage = [](const Var<T>& h) { return leaky_relu(instance_normalize(h), 0.2); };
  Var<T> h = stage(c1_(image));
  h = stage(c2_(h));
  h = stage(c3_(h));
  h = stage(t1_(h));
  h = stage(t2_(h));
  return tanh(t3_(h));
}

template <typename T>
StyleCodes<T> StyleEncoder<T>::operator()(const Var<T>& image, std::span<const SemanticMap> source_maps) const {
  return region_average_pool(features(image), source_maps);
}

// ---------------------------------------------------------------------------
// SpgBlock

template <typename T>
SpgBlock<T>::SpgBlock(ParamStore<T>& store, const std::string& name, int prev_channels, int skip_channels,
                      const ModelConfig& cfg, const Initializer& init)
    : variant_(cfg.norm),
      sean1_(store, name + ".sean1",
             SeanConfig{skip_channels, cfg.classes, cfg.style_dim, cfg.sean_hidden, cfg.sean_kernel}, init),
      conv1_(store, name + ".conv1", skip_channels, prev_channels, 1, 1, 0, true, init),
      sean2_(store, name + ".sean2",
             SeanConfig{2 * prev_channels, cfg.classes, cfg.style_dim, cfg.sean_hidden, cfg.sean_kernel}, init),
      conv2_(store, name + ".conv2", 2 * prev_channels, prev_channels, 3, 1, 1, true, init) {}

template <typename T>
Var<T> SpgBlock<T>::normalize(const Sean<T>& sean, const Var<T>& h, const Var<T>& semantic,
                              const Var<T>& style) const {
  return variant_ == NormVariant::kSpade ? sean.spade(h, semantic) : sean(h, semantic, style);
}

template <typename T>
Var<T> SpgBlock<T>::operator()(const Var<T>& f_prev, const Var<T>& appearance, const Var<T>& pose,
                               const Var<T>& semantic, const Var<T>& style) const {
  Var<T> a = conv1_(relu(normalize(sean1_, concat_channels<T>({appearance, pose}), semantic, style)));
  Var<T> r = conv2_(relu(normalize(sean2_, concat_channels<T>({a, f_prev}), semantic, style)));
  return add(r, f_prev);
}

// ---------------------------------------------------------------------------
// SpgNet

template <typename T>
typename SpgNet<T>::Stage SpgNet<T>::make_stage(const std::string& name, int stage, bool warp,
                                                const Initializer& init) {
  const int width = cfg_.encoder_width(stage);
  Stage s;
  for (int r = 0; r < cfg_.res_blocks; ++r)
    s.res.emplace_back(store_, name + ".res" + std::to_string(r), width, width, init);
  s.warp = warp;
  if (warp) s.warper = FeatureWarp<T>(store_, name + ".warp", width, init);
  s.down = Conv2d<T>(store_, name + ".down", width, cfg_.encoder_width(stage + 1), 3, 2, 1, true, init);
  s.down_bn = BatchNorm2d<T>(store_, name + ".down_bn", cfg_.encoder_width(stage + 1));
  return s;
}

template <typename T>
SpgNet<T>::SpgNet(const ModelConfig& cfg)
    : cfg_(cfg), style_(store_, "spgnet.style", (cfg.validate(), cfg), Initializer(cfg.seed)) {
  const Initializer init(cfg_.seed);
  app_in_ = Conv2d<T>(store_, "spgnet.app.in", 3, cfg_.base_width, 1, 1, 0, true, init);
  pose_in_ = Conv2d<T>(store_, "spgnet.pose.in", cfg_.pose_channels(), cfg_.base_width, 1, 1, 0, true, init);
  const int warp_stages = std::min(cfg_.depth, cfg_.max_warp_stages);
  for (int i = 0; i < cfg_.depth; ++i) {
    app_stages_.push_back(make_stage("spgnet.app.stage" + std::to_string(i), i, i < warp_stages, init));
    pose_stages_.push_back(make_stage("spgnet.pose.stage" + std::to_string(i), i, false, init));
  }
  int channels = 2 * cfg_.encoder_width(cfg_.depth);
  for (int k = 0; k < cfg_.depth; ++k) {
    const int stage = cfg_.depth - 1 - k;
    const int width = cfg_.decoder_width(stage);
    const std::string name = "spgnet.dec" + std::to_string(k);
    up_convs_.emplace_back(store_, name + ".up", channels, 4 * width, 3, 1, 1, true, init);
    blocks_.emplace_back(store_, name + ".block", width, 2 * cfg_.encoder_width(stage), cfg_, init);
    channels = width;
  }
  out_conv_ = Conv2d<T>(store_, "spgnet.out", channels, 3, 7, 1, 3, true, init);
}

template <typename T>
std::vector<Var<T>> SpgNet<T>::encode(const std::vector<Stage>& stages, const Conv2d<T>& in_conv, const Var<T>& x,
                                      const FlowField<T>* flow, const Mode& mode, Var<T>& bottom) const {
  std::vector<Var<T>> skips;
  Var<T> h = in_conv(x);
  for (const Stage& s : stages) {
    for (const auto& rb : s.res) h = rb(h, mode);
    if (s.warp && flow != nullptr) h = s.warper(h, scale_flow(*flow, h.shape().h, h.shape().w), mode);
    skips.push_back(h);
    h = s.down_bn(s.down(relu(h)), mode);
  }
  bottom = h;
  return skips;
}

template <typename T>
Var<T> SpgNet<T>::operator()(const Var<T>& pose_t, const Var<T>& source, std::span<const SemanticMap> source_maps,
                             const Var<T>& target, const FlowField<T>& flow, const Mode& mode) const {
  const int size = cfg_.image_size;
  const int n = source.shape().n;
  auto expect = [&](const Shape& s, int c, const char* what) {
    if (s.n != n || s.c != c || s.h != size || s.w != size)
      throw ShapeError(std::string("spgnet: ") + what + " has dims " + s.str());
  };
  expect(source.shape(), 3, "source image");
  expect(pose_t.shape(), cfg_.pose_channels(), "target pose");
  expect(target.shape(), cfg_.classes, "target parsing");
  if (flow.phi.empty() || flow.vis.empty()) throw ValidationError("spgnet: flow field is required");
  flow.validate();
  if (flow.phi.shape().n != n || flow.height() != size || flow.width() != size)
    throw ShapeError("spgnet: flow has dims " + flow.phi.shape().str());

  Var<T> app_bottom, pose_bottom;
  std::vector<Var<T>> app_skips = encode(app_stages_, app_in_, source, &flow, mode, app_bottom);
  std::vector<Var<T>> pose_skips = encode(pose_stages_, pose_in_, pose_t, nullptr, mode, pose_bottom);

  Var<T> style_map;
  if (cfg_.norm == NormVariant::kSean) style_map = style_broadcast(style_(source, source_maps), target);

  Var<T> h = concat_channels<T>({app_bottom, pose_bottom});
  for (std::size_t k = 0; k < blocks_.size(); ++k) {
    const std::size_t stage = blocks_.size() - 1 - k;
    h = pixel_shuffle(up_convs_[k](relu(h)), 2);
    const int hh = h.shape().h, ww = h.shape().w;
    const int factor = size / hh;
    Var<T> sem = downsample_nearest(target, factor);
    Var<T> sty = style_map.defined() ? avg_pool2d(style_map, factor) : Var<T>();
    h = blocks_[k](h, app_skips[stage], pose_skips[stage], sem, sty);
    (void)ww;
  }
  return affine(tanh(out_conv_(h)), 0.5, 0.5);
}

// ---------------------------------------------------------------------------
// Discriminator

template <typename T>
Discriminator<T>::Discriminator(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const Initializer init(cfg_.seed + 7919);
  int channels = 3 + 3 + cfg_.pose_channels();
  for (int i = 0; i < cfg_.disc_depth; ++i) {
    const int width = cfg_.base_width << std::min(i, 3);
    stages_.emplace_back(store_, "disc.stage" + std::to_string(i), channels, width, 4, 2, 1, true, init);
    channels = width;
  }
  head_ = Conv2d<T>(store_, "disc.head", channels, 1, 3, 1, 1, true, init);
}

template <typename T>
Var<T> Discriminator<T>::operator()(const Var<T>& image, const Var<T>& source, const Var<T>& pose) const {
  Var<T> h = concat_channels<T>({image, source, pose});
  for (const auto& conv : stages_) h = leaky_relu(conv(h), 0.2);
  return head_(h);
}

template class Spatn<float>;
template class Spatn<double>;
template class StyleEncoder<float>;
template class StyleEncoder<double>;
template class SpgBlock<float>;
template class SpgBlock<double>;
template class SpgNet<float>;
template class SpgNet<double>;
template class Discriminator<float>;
template class Discriminator<double>;

}  // namespace spg
