#include "spg/norm.hpp"

namespace spg {

template <typename T>
ModulationPath<T>::ModulationPath(ParamStore<T>& store, const std::string& name, int c_in,
                                  const SeanConfig& cfg, const Initializer& init)
    : shared_(store, name + ".shared", c_in, cfg.hidden, cfg.kernel, 1, cfg.kernel / 2, true, init),
      alpha_(store, name + ".alpha", cfg.hidden, cfg.channels, 1, 1, 0, true, init),
      beta_(store, name + ".beta", cfg.hidden, cfg.channels, 1, 1, 0, true, init) {
  // alpha starts near 1 so a fresh layer roughly passes normalized features through.
  for (auto& b : alpha_.bias().mutable_value().values()) b += T(1);
}

template <typename T>
typename ModulationPath<T>::Output ModulationPath<T>::operator()(const Var<T>& x) const {
  Var<T> hidden = relu(shared_(x));
  return {alpha_(hidden), beta_(hidden)};
}

template <typename T>
Sean<T>::Sean(ParamStore<T>& store, const std::string& name, const SeanConfig& cfg, const Initializer& init)
    : cfg_(cfg),
      semantic_(store, name + ".sem", cfg.classes, cfg, init),
      style_(store, name + ".style", cfg.style_dim, cfg, init) {
  theta_alpha_ = store.add(name + ".theta_alpha", Tensor<T>(Shape{1, 1, 1, 1}, T(0)));
  theta_beta_ = store.add(name + ".theta_beta", Tensor<T>(Shape{1, 1, 1, 1}, T(0)));
}

namespace {

template <typename T>
void check_condition(const Var<T>& h, const Var<T>& cond, const char* what) {
  const Shape hs = h.shape();
  const Shape cs = cond.shape();
  if (cs.n != hs.n || cs.h != hs.h || cs.w != hs.w)
    throw ShapeError(std::string("sean: ") + what + " " + cs.str() + " does not match feature " + hs.str());
}

}  // namespace

template <typename T>
Var<T> Sean<T>::operator()(const Var<T>& h, const Var<T>& semantic, const Var<T>& style) const {
  check_condition(h, semantic, "semantic map");
  check_condition(h, style, "style map");
  Var<T> normalized = instance_normalize(h);
  auto sem = semantic_(semantic);
  auto sty = style_(style);
  Var<T> alpha = sigmoid_blend(theta_alpha_, sem.alpha, sty.alpha);
  Var<T> beta = sigmoid_blend(theta_beta_, sem.beta, sty.beta);
  return add(mul(alpha, normalized), beta);
}

template <typename T>
Var<T> Sean<T>::spade(const Var<T>& h, const Var<T>& semantic) const {
  check_condition(h, semantic, "semantic map");
  Var<T> normalized = instance_normalize(h);
  auto sem = semantic_(semantic);
  return add(mul(sem.alpha, normalized), sem.beta);
}

template <typename T>
std::pair<Var<T>, Var<T>> resize_condition(const Var<T>& semantic, const Var<T>& style, int height,
                                           int width) {
  auto factor = [&](const Var<T>& v) {
    const Shape s = v.shape();
    if (s.h % height != 0 || s.w % width != 0 || s.h / height != s.w / width)
      throw ShapeError("resize_condition: " + s.str() + " cannot be reduced to " + std::to_string(height) +
                       "x" + std::to_string(width));
    return s.h / height;
  };
  return {downsample_nearest(semantic, factor(semantic)), avg_pool2d(style, factor(style))};
}

template class ModulationPath<float>;
template class ModulationPath<double>;
template class Sean<float>;
template class Sean<double>;
template std::pair<Var<float>, Var<float>> resize_condition(const Var<float>&, const Var<float>&, int, int);
template std::pair<Var<double>, Var<double>> resize_condition(const Var<double>&, const Var<double>&, int,
                                                              int);

}  // namespace spg
