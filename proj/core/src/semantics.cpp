#include "spg/semantics.hpp"

#include <cmath>
#include <string>

#include "spg/error.hpp"
#include "spg/image_io.hpp"
#include "spg/spgt.hpp"

namespace spg {

SemanticMap::SemanticMap(int height, int width, int classes, std::uint8_t fill)
    : height_(height), width_(width), classes_(classes),
      labels_(static_cast<std::size_t>(height) * width, fill) {
  if (classes < 1 || classes > 256) throw ValidationError("class count must be in [1, 256]");
}

SemanticMap::SemanticMap(int height, int width, int classes, std::vector<std::uint8_t> labels)
    : height_(height), width_(width), classes_(classes), labels_(std::move(labels)) {
  if (classes < 1 || classes > 256) throw ValidationError("class count must be in [1, 256]");
  if (labels_.size() != static_cast<std::size_t>(height) * width)
    throw ShapeError("semantic map label count does not match " + std::to_string(height) + "x" +
                     std::to_string(width));
}

void SemanticMap::validate() const {
  for (std::size_t i = 0; i < labels_.size(); ++i)
    if (labels_[i] >= classes_)
      throw ValidationError("label " + std::to_string(labels_[i]) + " at pixel " + std::to_string(i) +
                            " is not below class count " + std::to_string(classes_));
}

template <typename T>
Tensor<T> one_hot(const SemanticMap& map) {
  map.validate();
  Tensor<T> out(Shape{1, map.classes(), map.height(), map.width()});
  const auto& labels = map.labels();
  for (std::size_t i = 0; i < labels.size(); ++i) out.plane(0, labels[i])[i] = T(1);
  return out;
}

template <typename T>
Tensor<T> one_hot_batch(std::span<const SemanticMap> maps) {
  std::vector<Tensor<T>> parts;
  parts.reserve(maps.size());
  for (const auto& m : maps) parts.push_back(one_hot<T>(m));
  return stack_batch(parts);
}

template <typename T>
SemanticMap argmax_map(const Tensor<T>& scores, int sample) {
  const Shape s = scores.shape();
  SemanticMap map(s.h, s.w, s.c);
  const std::size_t plane = s.plane();
  for (std::size_t p = 0; p < plane; ++p) {
    int best = 0;
    T bv = scores.plane(sample, 0)[p];
    for (int c = 1; c < s.c; ++c) {
      const T v = scores.plane(sample, c)[p];
      if (v > bv) {
        bv = v;
        best = c;
      }
    }
    map.labels()[p] = static_cast<std::uint8_t>(best);
  }
  return map;
}

SemanticMap downsample_map(const SemanticMap& map, int factor) {
  if (factor < 1 || map.height() % factor != 0 || map.width() % factor != 0)
    throw ShapeError("downsample_map: factor " + std::to_string(factor) + " does not divide map");
  SemanticMap out(map.height() / factor, map.width() / factor, map.classes());
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x) out.at(y, x) = map.at(y * factor, x * factor);
  return out;
}

template <typename T>
StyleCodes<T> region_average_pool(const Var<T>& features, std::span<const SemanticMap> maps) {
  const Shape fs = features.shape();
  if (static_cast<std::size_t>(fs.n) != maps.size())
    throw ShapeError("region_average_pool: " + std::to_string(maps.size()) + " maps for batch " +
                     std::to_string(fs.n));
  const int classes = maps.empty() ? 0 : maps.front().classes();
  for (const auto& m : maps) {
    if (m.height() != fs.h || m.width() != fs.w)
      throw ShapeError("region_average_pool: map " + std::to_string(m.height()) + "x" +
                       std::to_string(m.width()) + " vs features " + fs.str());
    if (m.classes() != classes) throw ShapeError("region_average_pool: inconsistent class counts");
    m.validate();
  }
  const int dim = fs.c;
  const std::size_t plane = fs.plane();
  Tensor<T> codes(Shape{fs.n, classes, dim, 1});
  std::vector<double> counts(static_cast<std::size_t>(fs.n) * classes, 0.0);
  std::vector<std::uint8_t> present(counts.size(), 0);
  std::vector<double> acc(static_cast<std::size_t>(classes) * dim);
  for (int n = 0; n < fs.n; ++n) {
    std::fill(acc.begin(), acc.end(), 0.0);
    const auto& labels = maps[n].labels();
    double* cnt = counts.data() + static_cast<std::size_t>(n) * classes;
    for (std::size_t p = 0; p < plane; ++p) cnt[labels[p]] += 1.0;
    for (int d = 0; d < dim; ++d) {
      const T* f = features.value().plane(n, d);
      for (std::size_t p = 0; p < plane; ++p) acc[static_cast<std::size_t>(labels[p]) * dim + d] += f[p];
    }
    for (int l = 0; l < classes; ++l) {
      if (cnt[l] == 0.0) continue;
      present[static_cast<std::size_t>(n) * classes + l] = 1;
      for (int d = 0; d < dim; ++d)
        codes(n, l, d, 0) = static_cast<T>(acc[static_cast<std::size_t>(l) * dim + d] / cnt[l]);
    }
  }
  StyleCodes<T> out{Var<T>(std::move(codes)), std::move(present)};
  if (needs_grad<T>({&features})) {
    std::vector<SemanticMap> kept(maps.begin(), maps.end());
    Var<T> cv = out.codes;
    record_op<T>("region_average_pool", {&features}, out.codes,
                 [features, cv, kept = std::move(kept), counts = std::move(counts), classes]() {
                   if (!cv.has_grad() || !features.requires_grad()) return;
                   const Shape fs = features.shape();
                   const std::size_t plane = fs.plane();
                   auto& gf = features.node()->grad_buffer();
                   const auto& gc = cv.grad();
                   for (int n = 0; n < fs.n; ++n) {
                     const auto& labels = kept[n].labels();
                     const double* cnt = counts.data() + static_cast<std::size_t>(n) * classes;
                     for (int d = 0; d < fs.c; ++d) {
                       T* g = gf.plane(n, d);
                       for (std::size_t p = 0; p < plane; ++p) {
                         const int l = labels[p];
                         g[p] += static_cast<T>(gc(n, l, d, 0) / cnt[l]);
                       }
                     }
                   }
                 });
  }
  return out;
}

template <typename T>
Var<T> style_broadcast(const StyleCodes<T>& codes, const Var<T>& target) {
  const Shape ts = target.shape();
  const Shape cs = codes.codes.shape();
  if (cs.c != ts.c) throw ShapeError("style_broadcast: codes have " + std::to_string(cs.c) +
                                     " classes, target has " + std::to_string(ts.c));
  if (cs.n != ts.n) throw ShapeError("style_broadcast: batch mismatch");
  const int dim = cs.h;
  const std::size_t plane = ts.plane();
  Tensor<T> y(Shape{ts.n, dim, ts.h, ts.w});
  for (int n = 0; n < ts.n; ++n)
    for (int l = 0; l < ts.c; ++l) {
      const T* prob = target.value().plane(n, l);
      for (int d = 0; d < dim; ++d) {
        const T code = codes.codes.value()(n, l, d, 0);
        if (code == T(0)) continue;
        T* dst = y.plane(n, d);
        for (std::size_t p = 0; p < plane; ++p) dst[p] += prob[p] * code;
      }
    }
  Var<T> out(std::move(y));
  const Var<T>& cv = codes.codes;
  if (needs_grad<T>({&cv, &target})) {
    record_op<T>("style_broadcast", {&cv, &target}, out, [cv, target, out]() {
      if (!out.has_grad()) return;
      const Shape ts = target.shape();
      const int dim = cv.shape().h;
      const std::size_t plane = ts.plane();
      const auto& gy = out.grad();
      for (int n = 0; n < ts.n; ++n)
        for (int l = 0; l < ts.c; ++l) {
          const T* prob = target.value().plane(n, l);
          T* gp = target.requires_grad() ? target.node()->grad_buffer().plane(n, l) : nullptr;
          for (int d = 0; d < dim; ++d) {
            const T* g = gy.plane(n, d);
            const T code = cv.value()(n, l, d, 0);
            double acc = 0;
            for (std::size_t p = 0; p < plane; ++p) {
              acc += static_cast<double>(g[p]) * prob[p];
              if (gp) gp[p] += g[p] * code;
            }
            if (cv.requires_grad()) cv.node()->grad_buffer()(n, l, d, 0) += static_cast<T>(acc);
          }
        }
    });
  }
  return out;
}

template <typename T>
Var<T> style_broadcast(const StyleCodes<T>& codes, std::span<const SemanticMap> target) {
  return style_broadcast(codes, Var<T>(one_hot_batch<T>(target)));
}

template <typename T>
Var<T> cross_entropy(const Var<T>& pred, std::span<const SemanticMap> truth) {
  const Shape s = pred.shape();
  if (static_cast<std::size_t>(s.n) != truth.size())
    throw ShapeError("cross_entropy: batch mismatch");
  for (const auto& m : truth) {
    if (m.height() != s.h || m.width() != s.w || m.classes() != s.c)
      throw ShapeError("cross_entropy: truth map does not match prediction " + s.str());
    m.validate();
  }
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n)
    for (std::size_t p = 0; p < plane; ++p) {
      double total = 0;
      for (int c = 0; c < s.c; ++c) total += pred.value().plane(n, c)[p];
      if (std::abs(total - 1.0) > 1e-3)
        throw ValidationError("cross_entropy: prediction channels sum to " + std::to_string(total) +
                              " at sample " + std::to_string(n) + " pixel " + std::to_string(p));
    }
  const double count = static_cast<double>(s.n) * plane;
  double acc = 0;
  for (int n = 0; n < s.n; ++n) {
    const auto& labels = truth[n].labels();
    for (std::size_t p = 0; p < plane; ++p)
      acc -= std::log(std::max(static_cast<double>(pred.value().plane(n, labels[p])[p]), kProbabilityFloor));
  }
  Var<T> out(Tensor<T>(Shape{1, 1, 1, 1}, static_cast<T>(acc / count)));
  if (needs_grad<T>({&pred})) {
    std::vector<SemanticMap> kept(truth.begin(), truth.end());
    record_op<T>("cross_entropy", {&pred}, out, [pred, out, kept = std::move(kept), count]() {
      if (!out.has_grad() || !pred.requires_grad()) return;
      const Shape s = pred.shape();
      const std::size_t plane = s.plane();
      const double g = out.grad()[0] / count;
      auto& gp = pred.node()->grad_buffer();
      for (int n = 0; n < s.n; ++n) {
        const auto& labels = kept[n].labels();
        for (std::size_t p = 0; p < plane; ++p) {
          const double v = pred.value().plane(n, labels[p])[p];
          if (v > kProbabilityFloor) gp.plane(n, labels[p])[p] -= static_cast<T>(g / v);
        }
      }
    });
  }
  return out;
}

void write_semantic_map(const std::filesystem::path& path, const SemanticMap& map) {
  write_pgm(path, GrayImage{map.width(), map.height(), map.labels()});
}

SemanticMap read_semantic_map(const std::filesystem::path& path, int classes) {
  GrayImage img = read_pgm(path);
  SemanticMap map(img.height, img.width, classes, std::move(img.pixels));
  map.validate();
  return map;
}

template <typename T>
void save_style_codes(const std::filesystem::path& path, const StyleCodes<T>& codes, int sample) {
  const Shape s = codes.codes.shape();
  Tensor<T> one(Shape{s.c, s.h, 1, 1});
  for (int l = 0; l < s.c; ++l)
    for (int d = 0; d < s.h; ++d) one(l, d, 0, 0) = codes.codes.value()(sample, l, d, 0);
  save_tensor(path, one);
}

#define SPG_INSTANTIATE_SEMANTICS(T)                                                          \
  template Tensor<T> one_hot<T>(const SemanticMap&);                                          \
  template Tensor<T> one_hot_batch<T>(std::span<const SemanticMap>);                          \
  template SemanticMap argmax_map<T>(const Tensor<T>&, int);                                  \
  template StyleCodes<T> region_average_pool<T>(const Var<T>&, std::span<const SemanticMap>); \
  template Var<T> style_broadcast<T>(const StyleCodes<T>&, const Var<T>&);                    \
  template Var<T> style_broadcast<T>(const StyleCodes<T>&, std::span<const SemanticMap>);     \
  template Var<T> cross_entropy<T>(const Var<T>&, std::span<const SemanticMap>);              \
  template void save_style_codes<T>(const std::filesystem::path&, const StyleCodes<T>&, int);

SPG_INSTANTIATE_SEMANTICS(float)
SPG_INSTANTIATE_SEMANTICS(double)

}  // namespace spg
