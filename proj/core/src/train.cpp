#include "spg/train.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <ostream>
#include <random>

#include "spg/spgt.hpp"

namespace spg {

namespace {

template <typename... Args>
void say(const TrainOptions& opts, const Args&... args) {
  if (opts.log == nullptr) return;
  ((*opts.log) << ... << args) << '\n';
  opts.log->flush();
}

std::string cell(std::optional<double> v) { return v ? format_number(*v) : std::string(); }

// Accumulates metric rows and rewrites metrics.csv atomically.
class MetricsLog {
 public:
  explicit MetricsLog(std::filesystem::path path) : path_(std::move(path)) {
    text_ = "iter,loss_ce,loss_l1,loss_perc,loss_adv,val_l1,val_ssim,val_miou,lr\n";
  }
  struct Row {
    int iter = 0;
    std::optional<double> ce, l1, perc, adv, val_l1, val_ssim, val_miou;
    double lr = 0;
  };
  void add(const Row& r) {
    text_ += std::to_string(r.iter) + ',' + cell(r.ce) + ',' + cell(r.l1) + ',' + cell(r.perc) + ',' + cell(r.adv) +
             ',' + cell(r.val_l1) + ',' + cell(r.val_ssim) + ',' + cell(r.val_miou) + ',' + format_number(r.lr) + '\n';
    if (!path_.empty()) write_file_atomic(path_, text_);
  }

 private:
  std::filesystem::path path_;
  std::string text_;
};

// Running mean of a training quantity between log rows.
struct Mean {
  double sum = 0;
  int n = 0;
  void add(double v) {
    sum += v;
    ++n;
  }
  std::optional<double> take() {
    if (n == 0) return std::nullopt;
    const double m = sum / n;
    sum = 0;
    n = 0;
    return m;
  }
};

class BatchSampler {
 public:
  BatchSampler(std::uint64_t seed, std::uint64_t stream, const std::vector<int>& pool, int batch)
      : pool_(pool), batch_(batch) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream)};
    rng_.seed(seq);
    if (pool_.empty()) throw ConfigError("no training samples");
  }
  std::vector<int> next() {
    std::vector<int> out(static_cast<std::size_t>(batch_));
    for (auto& i : out) i = pool_[rng_() % pool_.size()];
    return out;
  }

 private:
  std::mt19937_64 rng_;
  std::vector<int> pool_;
  int batch_;
};

std::vector<std::vector<int>> chunks(const std::vector<int>& idx, int size) {
  std::vector<std::vector<int>> out;
  for (std::size_t i = 0; i < idx.size(); i += static_cast<std::size_t>(size))
    out.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(i),
                     idx.begin() + static_cast<std::ptrdiff_t>(std::min(idx.size(), i + static_cast<std::size_t>(size))));
  return out;
}

void check_finite(double v, const char* what, int iter) {
  if (!std::isfinite(v))
    throw DivergenceError(std::string(what) + " became non-finite at iteration " + std::to_string(iter));
}

void prepare_out(const RunConfig& cfg, const TrainOptions& opts) {
  if (opts.out_dir.empty()) return;
  std::error_code ec;
  std::filesystem::create_directories(opts.out_dir, ec);
  if (ec) throw IoError("cannot create " + opts.out_dir.string() + ": " + ec.message());
  write_file_atomic(opts.out_dir / "config.txt", cfg.resolved());
}

void save_with_sidecar(const ParamStore<float>& store, const std::filesystem::path& path, const RunConfig& cfg) {
  save_checkpoint(store, path);
  write_file_atomic(sidecar_path(path), cfg.resolved());
}

std::filesystem::path out_file(const TrainOptions& opts, const char* name) {
  return opts.out_dir.empty() ? std::filesystem::path() : opts.out_dir / name;
}

Var<float> spatn_source(const Spatn<float>& net, const Batch& b) {
  return net.config().spatn_input == SpatnInput::kImage ? b.source : b.source_onehot;
}

// One CE step on SPATN; returns the raw cross-entropy.
double spatn_step(Spatn<float>& net, Adam<float>& adam, const Batch& b, const LossWeights& w, int iter) {
  Tape<float> tape;
  Var<float> probs = net(b.pose_s, b.pose_t, spatn_source(net, b), Mode{true});
  Var<float> ce = cross_entropy(probs, std::span<const SemanticMap>(b.target_maps));
  check_finite(ce.item(), "stage-one cross-entropy", iter);
  tape.backward(affine(ce, w.ce));
  adam.step(net.params());
  net.params().zero_grad();
  return ce.item();
}

}  // namespace

std::string format_number(double v) {
  char buf[40];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, ptr);
}

std::filesystem::path sidecar_path(const std::filesystem::path& ckpt) { return ckpt.string() + ".cfg"; }

PreparedSample prepare_sample(const SyntheticSample& s, const ModelConfig& cfg) {
  const int size = s.source_image.shape().h;
  if (size != cfg.image_size) throw ConfigError("sample size " + std::to_string(size) + " != image_size");
  if (s.source_map.classes() != cfg.classes) throw ConfigError("sample classes differ from model classes");
  PreparedSample p;
  const double sigma = default_heatmap_sigma(size);
  p.pose_s = build_pose_tensor(s.source_kp, LimbSet::standard(), size, size, sigma, kDefaultKappa, cfg.distance_maps);
  p.pose_t = build_pose_tensor(s.target_kp, LimbSet::standard(), size, size, sigma, kDefaultKappa, cfg.distance_maps);
  p.source = s.source_image;
  p.target = s.target_image;
  p.source_onehot = one_hot<float>(s.source_map);
  p.target_onehot = one_hot<float>(s.target_map);
  p.source_map = s.source_map;
  p.target_map = s.target_map;
  p.flow = s.flow;
  return p;
}

TrainData::TrainData(const std::vector<SyntheticSample>& samples, const ModelConfig& cfg) {
  samples_.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    samples_.push_back(prepare_sample(samples[i], cfg));
    (samples[i].validation ? val_ : train_).push_back(static_cast<int>(i));
  }
}

std::vector<int> TrainData::val_subset(int limit) const {
  if (limit <= 0 || static_cast<std::size_t>(limit) >= val_.size()) return val_;
  return std::vector<int>(val_.begin(), val_.begin() + limit);
}

Batch TrainData::batch(const std::vector<int>& indices) const {
  std::vector<Tensor<float>> ps, pt, src, tgt, so, to;
  std::vector<FlowField<float>> flows;
  Batch b;
  for (int i : indices) {
    const auto& s = samples_.at(static_cast<std::size_t>(i));
    ps.push_back(s.pose_s);
    pt.push_back(s.pose_t);
    src.push_back(s.source);
    tgt.push_back(s.target);
    so.push_back(s.source_onehot);
    to.push_back(s.target_onehot);
    flows.push_back(s.flow);
    b.source_maps.push_back(s.source_map);
    b.target_maps.push_back(s.target_map);
  }
  b.pose_s = Var<float>(stack_batch(ps));
  b.pose_t = Var<float>(stack_batch(pt));
  b.source = Var<float>(stack_batch(src));
  b.target = Var<float>(stack_batch(tgt));
  b.source_onehot = Var<float>(stack_batch(so));
  b.target_onehot = Var<float>(stack_batch(to));
  b.flow = stack_flows(std::span<const FlowField<float>>(flows));
  return b;
}

double evaluate_spatn(const Spatn<float>& net, const TrainData& data, const std::vector<int>& indices, int batch_size,
                      ConfusionMatrix& cm) {
  double ce = 0;
  int count = 0;
  for (const auto& chunk : chunks(indices, batch_size)) {
    const Batch b = data.batch(chunk);
    Var<float> probs = net(b.pose_s, b.pose_t, spatn_source(net, b), Mode{false});
    ce += cross_entropy(probs, std::span<const SemanticMap>(b.target_maps)).item() * b.size();
    count += b.size();
    for (int n = 0; n < b.size(); ++n) cm.add(argmax_map(probs.value(), n), b.target_maps[n]);
  }
  return count == 0 ? 0.0 : ce / count;
}

Stage1Result train_stage1(const RunConfig& cfg, const TrainData& data, const TrainOptions& opts,
                          Spatn<float>* trained) {
  cfg.validate();
  prepare_out(cfg, opts);
  const auto& t = cfg.train;
  std::unique_ptr<Spatn<float>> owned;
  Spatn<float>* net = trained;
  if (net == nullptr) {
    owned = std::make_unique<Spatn<float>>(cfg.model);
    net = owned.get();
  }
  Adam<float> adam(AdamConfig{t.lr_g});
  PlateauSchedule plateau(t.patience);
  BatchSampler sampler(cfg.seed, 1, data.train_indices(), t.batch_size);
  MetricsLog metrics(out_file(opts, "metrics.csv"));
  const auto val = data.val_subset(t.val_samples);
  Stage1Result res;
  Mean ce_mean;
  const auto start = std::chrono::steady_clock::now();

  auto validate = [&](int iter) {
    ConfusionMatrix cm(cfg.model.classes);
    res.val_ce = evaluate_spatn(*net, data, val, t.batch_size, cm);
    res.val_pixel_accuracy = cm.pixel_accuracy();
    res.val_miou = cm.miou();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    say(opts, "[stage1] iter ", iter, " val_ce ", res.val_ce, " val_acc ", res.val_pixel_accuracy, " val_miou ",
        res.val_miou, " (", secs, " s)");
  };

  for (int it = 1; it <= t.iters; ++it) {
    const Batch b = data.batch(sampler.next());
    double ce;
    {
      Tape<float> tape;
      Var<float> probs = (*net)(b.pose_s, b.pose_t, spatn_source(*net, b), Mode{true});
      Var<float> loss = cross_entropy(probs, std::span<const SemanticMap>(b.target_maps));
      ce = loss.item();
      check_finite(ce, "stage-one cross-entropy", it);
      tape.backward(affine(loss, cfg.weights.ce));
    }
    adam.step(net->params());
    net->params().zero_grad();
    if (it == 1) res.first_train_ce = ce;
    res.last_train_ce = ce;
    ce_mean.add(ce);

    const bool do_val = it % t.val_every == 0 || it == t.iters;
    if (it % t.log_every == 0 || do_val) {
      MetricsLog::Row row;
      row.iter = it;
      row.ce = ce_mean.take();
      row.lr = adam.lr();
      if (do_val) {
        validate(it);
        row.val_miou = res.val_miou;
        adam.set_lr(t.lr_g * plateau.observe(res.val_ce));
      }
      metrics.add(row);
    }
  }
  if (t.iters == 0) validate(0);
  if (!opts.out_dir.empty()) {
    save_with_sidecar(net->params(), opts.out_dir / "spatn.ckpt", cfg);
    write_file_atomic(opts.out_dir / "summary.csv",
                      "stage,val_pixel_accuracy,val_miou,val_ce\nspatn," + format_number(res.val_pixel_accuracy) + ',' +
                          format_number(res.val_miou) + ',' + format_number(res.val_ce) + '\n');
  }
  return res;
}

Var<float> predict_target(const Spatn<float>& spatn, const Batch& b, bool soft) {
  Var<float> probs = spatn(b.pose_s, b.pose_t, spatn_source(spatn, b), Mode{false});
  if (soft) return detach(probs);
  const Shape s = probs.shape();
  std::vector<Tensor<float>> parts;
  for (int n = 0; n < s.n; ++n) parts.push_back(one_hot<float>(argmax_map(probs.value(), n)));
  return Var<float>(stack_batch(parts));
}

Tensor<float> generate(const SpgNet<float>& net, const Batch& b, const Var<float>& target) {
  return net(b.pose_t, b.source, std::span<const SemanticMap>(b.source_maps), target, b.flow, Mode{false}).value();
}

Stage2Result train_stage2(const RunConfig& cfg, const TrainData& data, const TrainOptions& opts) {
  cfg.validate();
  prepare_out(cfg, opts);
  const auto& t = cfg.train;
  const auto& w = cfg.weights;
  const Scheme scheme = t.scheme;
  Stage2Result res;
  res.scheme = scheme;

  Spatn<float> spatn(cfg.model);
  SpgNet<float> gen(cfg.model);
  Discriminator<float> disc(cfg.model);
  FeatureExtractor<float> fx;
  Adam<float> adam_s(AdamConfig{t.lr_g});
  Adam<float> adam_g(AdamConfig{t.lr_g});
  Adam<float> adam_d(AdamConfig{t.lr_d});
  PlateauSchedule plateau(t.patience);
  const bool use_disc = w.adv > 0;

  if (scheme == Scheme::kSequential) {
    if (!t.spatn_ckpt.empty()) {
      load_checkpoint(spatn.params(), t.spatn_ckpt);
      say(opts, "[stage2] loaded stage-one weights from ", t.spatn_ckpt);
    } else {
      RunConfig pre = cfg;
      pre.train.iters = t.spatn_iters;
      TrainOptions quiet{std::filesystem::path(), opts.log};
      say(opts, "[stage2] pretraining SPATN for ", t.spatn_iters, " iterations");
      train_stage1(pre, data, quiet, &spatn);
    }
    spatn.params().set_trainable(false);
  }

  BatchSampler sampler(cfg.seed, 2, data.train_indices(), t.batch_size);
  MetricsLog metrics(out_file(opts, "metrics.csv"));
  const auto val = data.val_subset(t.val_samples);
  Mean ce_mean, l1_mean, perc_mean, adv_mean;
  const auto start = std::chrono::steady_clock::now();

  auto validate = [&](int iter) {
    double l1 = 0, ss = 0, ms = 0;
    int count = 0;
    ConfusionMatrix cm(cfg.model.classes);
    for (const auto& chunk : chunks(val, t.batch_size)) {
      const Batch b = data.batch(chunk);
      const Var<float> target = predict_target(spatn, b, scheme == Scheme::kJoint);
      for (int n = 0; n < b.size(); ++n) cm.add(argmax_map(target.value(), n), b.target_maps[n]);
      const Tensor<float> fake = generate(gen, b, target);
      const Tensor<float> mask = foreground_mask(std::span<const SemanticMap>(b.target_maps));
      for (int n = 0; n < b.size(); ++n) {
        const Tensor<float> f = fake.sample(n), r = b.target.value().sample(n);
        double acc = 0;
        for (std::size_t i = 0; i < f.size(); ++i) acc += std::abs(static_cast<double>(f[i]) - r[i]);
        l1 += acc / static_cast<double>(f.size());
        ss += ssim(f, r);
        ms += masked_ssim(f, r, mask.sample(n));
        ++count;
      }
    }
    res.val_l1 = l1 / std::max(count, 1);
    res.val_ssim = ss / std::max(count, 1);
    res.val_mssim = ms / std::max(count, 1);
    res.val_miou = cm.miou();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    say(opts, "[stage2:", scheme_name(scheme), "] iter ", iter, " val_l1 ", res.val_l1, " val_ssim ", res.val_ssim,
        " val_mssim ", res.val_mssim, " val_miou ", res.val_miou, " (", secs, " s)");
  };

  for (int it = 1; it <= t.iters; ++it) {
    const Batch b = data.batch(sampler.next());
    if (scheme == Scheme::kParallel) ce_mean.add(spatn_step(spatn, adam_s, b, w, it));

    Var<float> fake_value;
    {
      Tape<float> tape;
      LossParts<float> parts;
      Var<float> target;
      switch (scheme) {
        case Scheme::kParallel: target = b.target_onehot; break;
        case Scheme::kSequential: target = predict_target(spatn, b, false); break;
        case Scheme::kJoint: {
          target = spatn(b.pose_s, b.pose_t, spatn_source(spatn, b), Mode{true});
          parts.ce = cross_entropy(target, std::span<const SemanticMap>(b.target_maps));
          ce_mean.add(parts.ce.item());
          break;
        }
      }
      Var<float> fake =
          gen(b.pose_t, b.source, std::span<const SemanticMap>(b.source_maps), target, b.flow, Mode{true});
      parts.l1 = l1_loss(fake, b.target);
      parts.perc = perceptual_loss(fake, b.target, fx);
      if (use_disc) {
        disc.params().set_trainable(false);
        parts.adv = bce_with_logits(disc(fake, b.source, b.pose_t), true);
        adv_mean.add(parts.adv.item());
      }
      Var<float> total = full_objective(parts, w);
      check_finite(total.item(), "generator objective", it);
      l1_mean.add(parts.l1.item());
      perc_mean.add(parts.perc.item());
      if (it == 1) res.first_train_l1 = parts.l1.item();
      res.last_train_l1 = parts.l1.item();
      tape.backward(total);
      fake_value = detach(fake);
    }
    adam_g.step(gen.params());
    gen.params().zero_grad();
    if (scheme == Scheme::kJoint) {
      adam_s.step(spatn.params());
      spatn.params().zero_grad();
    }

    if (use_disc) {
      disc.params().set_trainable(true);
      Tape<float> tape;
      auto adv = adversarial_losses(disc(b.target, b.source, b.pose_t), disc(fake_value, b.source, b.pose_t));
      check_finite(adv.discriminator.item(), "discriminator loss", it);
      tape.backward(adv.discriminator);
      adam_d.step(disc.params());
      disc.params().zero_grad();
    }

    const bool do_val = it % t.val_every == 0 || it == t.iters;
    if (it % t.log_every == 0 || do_val) {
      MetricsLog::Row row;
      row.iter = it;
      row.ce = ce_mean.take();
      row.l1 = l1_mean.take();
      row.perc = perc_mean.take();
      row.adv = adv_mean.take();
      row.lr = adam_g.lr();
      if (do_val) {
        validate(it);
        row.val_l1 = res.val_l1;
        row.val_ssim = res.val_ssim;
        row.val_miou = res.val_miou;
        const double mult = plateau.observe(res.val_l1);
        adam_g.set_lr(t.lr_g * mult);
        adam_d.set_lr(t.lr_d * mult);
        adam_s.set_lr(t.lr_g * mult);
      }
      for (auto v : {row.ce, row.l1, row.perc, row.adv})
        if (v && !std::isfinite(*v)) res.losses_finite = false;
      metrics.add(row);
    }
  }
  if (t.iters == 0) validate(0);

  if (!opts.out_dir.empty()) {
    save_with_sidecar(gen.params(), opts.out_dir / "spgnet.ckpt", cfg);
    save_checkpoint(disc.params(), opts.out_dir / "disc.ckpt");
    save_with_sidecar(spatn.params(), opts.out_dir / "spatn.ckpt", cfg);
    write_scheme_comparison(opts.out_dir / "summary.csv", {res});
  }
  return res;
}

void write_scheme_comparison(const std::filesystem::path& path, const std::vector<Stage2Result>& rows) {
  std::string text = "scheme,val_l1,val_ssim,val_mssim,val_miou\n";
  for (const auto& r : rows)
    text += scheme_name(r.scheme) + ',' + format_number(r.val_l1) + ',' + format_number(r.val_ssim) + ',' +
            format_number(r.val_mssim) + ',' + format_number(r.val_miou) + '\n';
  write_file_atomic(path, text);
}

}  // namespace spg
