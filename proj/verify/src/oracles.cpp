#include "spg/verify/oracles.hpp"

#include <cmath>
#include <limits>

namespace spg::oracle {

Tensor<double> conv2d(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b, int stride, int pad) {
  const Shape xs = x.shape(), ws = w.shape();
  const int k = ws.h;
  const int oh = (xs.h + 2 * pad - k) / stride + 1, ow = (xs.w + 2 * pad - k) / stride + 1;
  Tensor<double> y(Shape{xs.n, ws.n, oh, ow});
  for (int n = 0; n < xs.n; ++n)
    for (int co = 0; co < ws.n; ++co)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          double acc = b.empty() ? 0.0 : b[co];
          for (int c = 0; c < xs.c; ++c)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int iy = oy * stride - pad + ky, ix = ox * stride - pad + kx;
                if (iy >= 0 && iy < xs.h && ix >= 0 && ix < xs.w) acc += w(co, c, ky, kx) * x(n, c, iy, ix);
              }
          y(n, co, oy, ox) = acc;
        }
  return y;
}

Tensor<double> conv_transpose2d(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b, int stride,
                                int pad, int output_pad) {
  const Shape xs = x.shape(), ws = w.shape();
  const int k = ws.h;
  const int oh = (xs.h - 1) * stride - 2 * pad + k + output_pad;
  const int ow = (xs.w - 1) * stride - 2 * pad + k + output_pad;
  Tensor<double> y(Shape{xs.n, ws.c, oh, ow});
  for (int n = 0; n < xs.n; ++n) {
    for (int co = 0; co < ws.c; ++co)
      for (int i = 0; i < oh * ow; ++i) y.plane(n, co)[i] = b.empty() ? 0.0 : b[co];
    for (int ci = 0; ci < xs.c; ++ci)
      for (int iy = 0; iy < xs.h; ++iy)
        for (int ix = 0; ix < xs.w; ++ix)
          for (int co = 0; co < ws.c; ++co)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int oy = iy * stride - pad + ky, ox = ix * stride - pad + kx;
                if (oy >= 0 && oy < oh && ox >= 0 && ox < ow) y(n, co, oy, ox) += x(n, ci, iy, ix) * w(ci, co, ky, kx);
              }
  }
  return y;
}

double sampled_segment_distance(double px, double py, double ax, double ay, double bx, double by, int samples) {
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= samples; ++i) {
    const double t = static_cast<double>(i) / samples;
    best = std::min(best, std::hypot(px - (ax + t * (bx - ax)), py - (ay + t * (by - ay))));
  }
  return best;
}

Tensor<double> region_means(const Tensor<double>& features, const std::vector<SemanticMap>& maps) {
  const Shape s = features.shape();
  const int classes = maps.front().classes();
  Tensor<double> out(Shape{s.n, classes, s.c, 1});
  for (int n = 0; n < s.n; ++n)
    for (int l = 0; l < classes; ++l)
      for (int d = 0; d < s.c; ++d) {
        double sum = 0;
        int count = 0;
        for (int y = 0; y < s.h; ++y)
          for (int x = 0; x < s.w; ++x)
            if (maps[n].at(y, x) == l) {
              sum += features(n, d, y, x);
              ++count;
            }
        out(n, l, d, 0) = count ? sum / count : 0.0;
      }
  return out;
}

double cross_entropy(const Tensor<double>& probs, const std::vector<SemanticMap>& truth) {
  const Shape s = probs.shape();
  double acc = 0;
  for (int n = 0; n < s.n; ++n)
    for (int y = 0; y < s.h; ++y)
      for (int x = 0; x < s.w; ++x) acc -= std::log(std::max(probs(n, truth[n].at(y, x), y, x), 1e-12));
  return acc / (static_cast<double>(s.n) * s.h * s.w);
}

double l1(const Tensor<double>& a, const Tensor<double>& b) {
  double acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(a[i] - b[i]);
  return acc / static_cast<double>(a.size());
}

double bilinear(const Tensor<double>& img, int n, int c, double x, double y) {
  const Shape s = img.shape();
  const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
  const double fx = x - x0, fy = y - y0;
  auto at = [&](int yy, int xx) { return (xx < 0 || yy < 0 || xx >= s.w || yy >= s.h) ? 0.0 : img(n, c, yy, xx); };
  return (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x0 + 1)) + fy * ((1 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1));
}

double constant_ssim(double m1, double m2, const SsimConfig& cfg) {
  const double c1 = (cfg.k1 * cfg.range) * (cfg.k1 * cfg.range);
  return (2 * m1 * m2 + c1) / (m1 * m1 + m2 * m2 + c1);
}

double miou(const SemanticMap& pred, const SemanticMap& truth, int classes) {
  double total = 0;
  int present = 0;
  for (int l = 0; l < classes; ++l) {
    int inter = 0, uni = 0;
    for (int y = 0; y < truth.height(); ++y)
      for (int x = 0; x < truth.width(); ++x) {
        const bool p = pred.at(y, x) == l, t = truth.at(y, x) == l;
        inter += p && t;
        uni += p || t;
      }
    if (uni == 0) continue;
    total += static_cast<double>(inter) / uni;
    ++present;
  }
  return present ? total / present : 1.0;
}

double perceptual(const Tensor<double>& a, const Tensor<double>& b, const FeatureExtractor<double>& fx) {
  const auto& entries = fx.params().entries();
  Tensor<double> ha = a, hb = b;
  double total = 0;
  for (int k = 0; k < fx.stages(); ++k) {
    const std::string name = "phi" + std::to_string(k);
    const auto& w = entries.at(name + ".weight").var.value();
    const auto& bias = entries.at(name + ".bias").var.value();
    ha = conv2d(ha, w, bias, 2, 1);
    hb = conv2d(hb, w, bias, 2, 1);
    double acc = 0;
    for (std::size_t i = 0; i < ha.size(); ++i) {
      ha[i] = std::max(ha[i], 0.0);
      hb[i] = std::max(hb[i], 0.0);
      acc += (ha[i] - hb[i]) * (ha[i] - hb[i]);
    }
    total += acc / static_cast<double>(ha.size());
  }
  return total;
}

}  // namespace spg::oracle
