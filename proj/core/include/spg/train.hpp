#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "spg/config.hpp"
#include "spg/metrics.hpp"
#include "spg/optim.hpp"

namespace spg {

/// Per-sample network inputs derived once from a SyntheticSample.
struct PreparedSample {
  Tensor<float> pose_s, pose_t;     // (1,P,H,W)
  Tensor<float> source, target;     // (1,3,H,W)
  Tensor<float> source_onehot, target_onehot;
  SemanticMap source_map, target_map;
  FlowField<float> flow;
};

PreparedSample prepare_sample(const SyntheticSample& s, const ModelConfig& cfg);

/// A stacked mini-batch; every Var is a constant.
struct Batch {
  Var<float> pose_s, pose_t, source, target, source_onehot, target_onehot;
  std::vector<SemanticMap> source_maps, target_maps;
  FlowField<float> flow;
  int size() const { return source.shape().n; }
};

class TrainData {
 public:
  TrainData(const std::vector<SyntheticSample>& samples, const ModelConfig& cfg);

  Batch batch(const std::vector<int>& indices) const;
  const std::vector<int>& train_indices() const { return train_; }
  const std::vector<int>& val_indices() const { return val_; }
  const PreparedSample& sample(int i) const { return samples_[i]; }
  // First `limit` validation indices, all when limit <= 0.
  std::vector<int> val_subset(int limit) const;

 private:
  std::vector<PreparedSample> samples_;
  std::vector<int> train_;
  std::vector<int> val_;
};

struct TrainOptions {
  std::filesystem::path out_dir;  // empty: write nothing
  std::ostream* log = nullptr;    // progress lines; null for silence
};

struct Stage1Result {
  double val_pixel_accuracy = 0;
  double val_miou = 0;
  double val_ce = 0;
  double first_train_ce = 0;
  double last_train_ce = 0;
};

struct Stage2Result {
  Scheme scheme = Scheme::kParallel;
  double val_l1 = 0;
  double val_ssim = 0;
  double val_mssim = 0;
  double val_miou = 0;
  double first_train_l1 = 0;
  double last_train_l1 = 0;
  bool losses_finite = true;
};

/// Runs `net` in eval mode over `indices`; fills the confusion matrix and
/// returns the mean cross-entropy.
double evaluate_spatn(const Spatn<float>& net, const TrainData& data, const std::vector<int>& indices, int batch_size,
                      ConfusionMatrix& cm);

/// Stage one: trains SPATN on lambda_ce * cross-entropy. Writes spatn.ckpt
/// (+ .cfg), metrics.csv and config.txt into opts.out_dir.
Stage1Result train_stage1(const RunConfig& cfg, const TrainData& data, const TrainOptions& opts,
                          Spatn<float>* trained = nullptr);

/// Stage two under cfg.train.scheme. Writes spgnet.ckpt (+ .cfg),
/// disc.ckpt, spatn.ckpt (+ .cfg), metrics.csv, config.txt, summary.csv.
Stage2Result train_stage2(const RunConfig& cfg, const TrainData& data, const TrainOptions& opts);

/// scheme,val_l1,val_ssim,val_mssim,val_miou per row.
void write_scheme_comparison(const std::filesystem::path& path, const std::vector<Stage2Result>& rows);

/// Target parsing probabilities for SPGNet at inference: one-hot argmax of
/// SPATN, or the soft probabilities when `soft`.
Var<float> predict_target(const Spatn<float>& spatn, const Batch& b, bool soft);

/// Generated target image (n,3,H,W) given a predicted or given target map.
Tensor<float> generate(const SpgNet<float>& net, const Batch& b, const Var<float>& target);

/// `<ckpt>.cfg` next to a checkpoint.
std::filesystem::path sidecar_path(const std::filesystem::path& ckpt);

/// Shortest round-trip decimal form.
std::string format_number(double v);

}  // namespace spg
