#include "spg/deform.hpp"

#include <cmath>

#include "spg/spgt.hpp"

namespace spg {

template <typename T>
void FlowField<T>::validate() const {
  const Shape ps = phi.shape();
  const Shape vs = vis.shape();
  if (ps.c != 2) throw ShapeError("flow phi needs 2 channels, got " + ps.str());
  if (vs.c != 1 || vs.n != ps.n || vs.h != ps.h || vs.w != ps.w)
    throw ShapeError("flow visibility " + vs.str() + " does not match phi " + ps.str());
  if (!phi.all_finite()) throw ValidationError("flow phi has non-finite entries");
  for (T v : vis.values())
    if (v != T(0) && v != T(1)) throw ValidationError("flow visibility must be binary");
}

template <typename T>
FlowField<T> scale_flow(const FlowField<T>& flow, int height, int width) {
  const Shape ps = flow.phi.shape();
  if (height <= 0 || width <= 0 || ps.h % height != 0 || ps.w % width != 0 ||
      ps.h / height != ps.w / width)
    throw ShapeError("scale_flow: " + std::to_string(height) + "x" + std::to_string(width) +
                     " does not evenly divide " + ps.str());
  const int f = ps.h / height;
  if (f == 1) return flow;
  FlowField<T> out{avg_pool2d(Var<T>(flow.phi), f).value(), downsample_nearest(Var<T>(flow.vis), f).value()};
  const T sx = static_cast<T>(static_cast<double>(width) / ps.w);
  const T sy = static_cast<T>(static_cast<double>(height) / ps.h);
  for (int n = 0; n < ps.n; ++n) {
    T* px = out.phi.plane(n, 0);
    T* py = out.phi.plane(n, 1);
    for (std::size_t i = 0; i < out.phi.shape().plane(); ++i) {
      px[i] *= sx;
      py[i] *= sy;
    }
  }
  return out;
}

template <typename T>
FlowField<T> stack_flows(std::span<const FlowField<T>> flows) {
  std::vector<Tensor<T>> phis, viss;
  for (const auto& f : flows) {
    phis.push_back(f.phi);
    viss.push_back(f.vis);
  }
  return {stack_batch(phis), stack_batch(viss)};
}

template <typename T>
void save_flow(const std::filesystem::path& prefix, const FlowField<T>& flow) {
  save_tensor(std::filesystem::path(prefix.string() + ".phi.spgt"), flow.phi);
  save_tensor(std::filesystem::path(prefix.string() + ".vis.spgt"), flow.vis);
}

template <typename T>
FlowField<T> load_flow(const std::filesystem::path& prefix) {
  const std::filesystem::path phi(prefix.string() + ".phi.spgt");
  const std::filesystem::path vis(prefix.string() + ".vis.spgt");
  for (const auto& p : {phi, vis})
    if (!std::filesystem::exists(p)) throw IoError("missing flow file " + p.string());
  FlowField<T> flow{load_tensor<T>(phi), load_tensor<T>(vis)};
  flow.validate();
  return flow;
}

template <typename T>
WarpBranches<T> warp_branches(const Var<T>& features, const FlowField<T>& flow) {
  const Shape fs = features.shape();
  if (flow.phi.shape().h != fs.h || flow.phi.shape().w != fs.w || flow.phi.shape().n != fs.n)
    throw ShapeError("feature_warp: flow " + flow.phi.shape().str() + " vs features " + fs.str());
  Var<T> warped = grid_sample_bilinear(features, Var<T>(flow.phi));
  Tensor<T> hidden(flow.vis.shape());
  for (std::size_t i = 0; i < hidden.size(); ++i) hidden[i] = T(1) - flow.vis[i];
  Var<T> visible = mul_channel_broadcast(warped, Var<T>(flow.vis));
  Var<T> invisible = mul_channel_broadcast(warped, Var<T>(std::move(hidden)));
  return {warped, visible, invisible};
}

template <typename T>
FeatureWarp<T>::FeatureWarp(ParamStore<T>& store, const std::string& name, int channels,
                            const Initializer& init)
    : block_(store, name + ".res", 2 * channels, channels, init) {}

template <typename T>
Var<T> FeatureWarp<T>::operator()(const Var<T>& features, const FlowField<T>& flow, const Mode& mode) const {
  auto branches = warp_branches(features, flow);
  return block_(concat_channels<T>({branches.visible, branches.invisible}), mode);
}

#define SPG_INSTANTIATE_DEFORM(T)                                                          \
  template struct FlowField<T>;                                                            \
  template FlowField<T> scale_flow(const FlowField<T>&, int, int);                         \
  template FlowField<T> stack_flows(std::span<const FlowField<T>>);                        \
  template void save_flow(const std::filesystem::path&, const FlowField<T>&);              \
  template FlowField<T> load_flow<T>(const std::filesystem::path&);                        \
  template WarpBranches<T> warp_branches(const Var<T>&, const FlowField<T>&);              \
  template class FeatureWarp<T>;

SPG_INSTANTIATE_DEFORM(float)
SPG_INSTANTIATE_DEFORM(double)

}  // namespace spg
