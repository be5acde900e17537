#include "spg/metrics.hpp"

#include <cmath>

namespace spg {

namespace {

std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> w(static_cast<std::size_t>(size) * size);
  const double c = (size - 1) / 2.0;
  double total = 0;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double v = std::exp(-((y - c) * (y - c) + (x - c) * (x - c)) / (2 * sigma * sigma));
      w[static_cast<std::size_t>(y) * size + x] = v;
      total += v;
    }
  for (auto& v : w) v /= total;
  return w;
}

}  // namespace

double ssim(const Tensor<float>& a, const Tensor<float>& b, const SsimConfig& cfg) {
  if (a.shape() != b.shape()) throw ShapeError("ssim: " + a.shape().str() + " vs " + b.shape().str());
  const Shape s = a.shape();
  if (s.numel() == 0) throw ShapeError("ssim: empty image");
  const int win = std::min({cfg.window, s.h, s.w});
  const auto w = gaussian_window(win, cfg.sigma);
  const double c1 = (cfg.k1 * cfg.range) * (cfg.k1 * cfg.range);
  const double c2 = (cfg.k2 * cfg.range) * (cfg.k2 * cfg.range);
  double total = 0;
  std::size_t count = 0;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const float* pa = a.plane(n, c);
      const float* pb = b.plane(n, c);
      for (int y = 0; y + win <= s.h; ++y)
        for (int x = 0; x + win <= s.w; ++x) {
          double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
          for (int dy = 0; dy < win; ++dy)
            for (int dx = 0; dx < win; ++dx) {
              const double g = w[static_cast<std::size_t>(dy) * win + dx];
              const std::size_t i = static_cast<std::size_t>(y + dy) * s.w + x + dx;
              const double va = pa[i], vb = pb[i];
              ma += g * va;
              mb += g * vb;
              saa += g * va * va;
              sbb += g * vb * vb;
              sab += g * va * vb;
            }
          const double var_a = saa - ma * ma, var_b = sbb - mb * mb, cov = sab - ma * mb;
          total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
          ++count;
        }
    }
  return total / static_cast<double>(count);
}

Tensor<float> foreground_mask(std::span<const SemanticMap> maps) {
  if (maps.empty()) return {};
  const int h = maps.front().height(), w = maps.front().width();
  Tensor<float> mask(Shape{static_cast<int>(maps.size()), 1, h, w});
  for (std::size_t n = 0; n < maps.size(); ++n) {
    if (maps[n].height() != h || maps[n].width() != w) throw ShapeError("foreground_mask: map sizes differ");
    const auto& labels = maps[n].labels();
    float* p = mask.plane(static_cast<int>(n), 0);
    for (std::size_t i = 0; i < labels.size(); ++i) p[i] = labels[i] != 0 ? 1.0f : 0.0f;
  }
  return mask;
}

double masked_ssim(const Tensor<float>& a, const Tensor<float>& b, const Tensor<float>& mask, const SsimConfig& cfg) {
  if (a.shape() != b.shape()) throw ShapeError("masked_ssim: " + a.shape().str() + " vs " + b.shape().str());
  const Shape s = a.shape();
  const Shape m = mask.shape();
  if (m.n != s.n || m.c != 1 || m.h != s.h || m.w != s.w)
    throw ShapeError("masked_ssim: mask " + m.str() + " does not match " + s.str());
  Tensor<float> ma = a, mb = b;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const float* pm = mask.plane(n, 0);
      float* pa = ma.plane(n, c);
      float* pb = mb.plane(n, c);
      for (std::size_t i = 0; i < s.plane(); ++i) {
        pa[i] *= pm[i];
        pb[i] *= pm[i];
      }
    }
  return ssim(ma, mb, cfg);
}

ConfusionMatrix::ConfusionMatrix(int classes) : classes_(classes) {
  if (classes < 1) throw ConfigError("confusion matrix needs at least one class");
  counts_.assign(static_cast<std::size_t>(classes) * classes, 0);
}

void ConfusionMatrix::add(const SemanticMap& pred, const SemanticMap& truth) {
  if (pred.height() != truth.height() || pred.width() != truth.width())
    throw ShapeError("miou: map sizes differ");
  const auto& p = pred.labels();
  const auto& t = truth.labels();
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] >= classes_ || t[i] >= classes_)
      throw ValidationError("miou: label " + std::to_string(std::max(p[i], t[i])) + " >= classes " +
                            std::to_string(classes_));
  }
  for (std::size_t i = 0; i < p.size(); ++i) ++counts_[static_cast<std::size_t>(t[i]) * classes_ + p[i]];
}

double ConfusionMatrix::iou(int label) const {
  std::uint64_t inter = count(label, label), row = 0, col = 0;
  for (int k = 0; k < classes_; ++k) {
    row += count(label, k);
    col += count(k, label);
  }
  const std::uint64_t uni = row + col - inter;
  if (uni == 0) return -1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double ConfusionMatrix::miou() const {
  double total = 0;
  int present = 0;
  for (int l = 0; l < classes_; ++l) {
    const double v = iou(l);
    if (v < 0) continue;
    total += v;
    ++present;
  }
  return present == 0 ? 1.0 : total / present;
}

double ConfusionMatrix::pixel_accuracy() const {
  std::uint64_t hit = 0, all = 0;
  for (int t = 0; t < classes_; ++t)
    for (int p = 0; p < classes_; ++p) {
      all += count(t, p);
      if (t == p) hit += count(t, p);
    }
  return all == 0 ? 1.0 : static_cast<double>(hit) / static_cast<double>(all);
}

double miou(const SemanticMap& pred, const SemanticMap& truth, int classes) {
  ConfusionMatrix cm(classes);
  cm.add(pred, truth);
  return cm.miou();
}

double pixel_accuracy(const SemanticMap& pred, const SemanticMap& truth) {
  ConfusionMatrix cm(std::max({pred.classes(), truth.classes(), 1}));
  cm.add(pred, truth);
  return cm.pixel_accuracy();
}

}  // namespace spg
