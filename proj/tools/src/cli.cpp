#include "spg/cli/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <regex>
#include <sstream>

#include "CLI11.hpp"
#include "spg/image_io.hpp"
#include "spg/pose.hpp"
#include "spg/spgt.hpp"
#include "spg/train.hpp"
#include "spg/verify/suites.hpp"

namespace spg::cli {

namespace fs = std::filesystem;

namespace {

std::optional<std::uint64_t> env_seed() {
  const char* v = std::getenv("SPG_SEED");
  if (v == nullptr || *v == '\0') return std::nullopt;
  char* end = nullptr;
  const unsigned long long s = std::strtoull(v, &end, 10);
  if (*end != '\0') throw ConfigError(std::string("SPG_SEED is not an unsigned integer: ") + v);
  return s;
}

std::string read_text(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// Config file, then SPG_SEED when the file sets no seed, then --set overrides.
RunConfig load_run_config(const fs::path& path, const std::vector<std::string>& overrides) {
  const std::string text = read_text(path);
  RunConfig cfg = RunConfig::parse(text, path.string());
  static const std::regex seed_line(R"((^|\n)[ \t]*seed[ \t]*=)");
  if (!std::regex_search(text, seed_line))
    if (auto s = env_seed()) cfg.set("seed", std::to_string(*s));
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

ModelConfig sidecar_model(const fs::path& ckpt) {
  const fs::path side = sidecar_path(ckpt);
  if (!fs::exists(ckpt)) throw IoError("missing checkpoint " + ckpt.string());
  if (!fs::exists(side)) throw IoError("missing checkpoint config " + side.string());
  return RunConfig::load(side).model;
}

struct SynthArgs {
  int n = 500;
  int size = 64;
  int classes = 8;
  std::optional<std::uint64_t> seed;
  int per_identity = 5;
  double crossed = 0.2;
  std::string out;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  SynthConfig sc;
  sc.pairs = a.n;
  sc.size = a.size;
  sc.classes = a.classes;
  sc.seed = a.seed ? *a.seed : env_seed().value_or(1);
  sc.pairs_per_identity = a.per_identity;
  sc.crossed_fraction = a.crossed;
  sc.validate();
  const auto samples = synth_dataset(sc);
  write_dataset(a.out, samples);
  out << "wrote " << samples.size() << " pairs to " << a.out << " (seed " << sc.seed << ")\n";
  return kExitOk;
}

struct PoseArgs {
  std::string keypoints;
  int size = 64;
  std::string out;
  bool no_distance = false;
};

int cmd_pose(const PoseArgs& a, std::ostream& out) {
  const Keypoints kp = read_keypoints(a.keypoints);
  const Tensor<float> pose = build_pose_tensor(kp, LimbSet::standard(), a.size, a.size, default_heatmap_sigma(a.size),
                                               kDefaultKappa, !a.no_distance);
  const fs::path dst(a.out);
  if (dst.has_parent_path()) fs::create_directories(dst.parent_path());
  save_tensor(dst, pose);
  out << "wrote " << pose.shape().str() << " to " << a.out << '\n';
  return kExitOk;
}

struct TrainArgs {
  std::string config;
  std::string out;
  std::vector<std::string> set;
  bool no_distance = false;
  std::string scheme;
};

int cmd_train_spatn(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  RunConfig cfg = load_run_config(a.config, a.set);
  if (a.no_distance) cfg.model.distance_maps = false;
  cfg.validate();
  const TrainData data(synth_dataset(cfg.synth()), cfg.model);
  const Stage1Result r = train_stage1(cfg, data, TrainOptions{a.out, &err});
  out << "val_pixel_accuracy " << format_number(r.val_pixel_accuracy) << "\nval_miou " << format_number(r.val_miou)
      << "\nval_ce " << format_number(r.val_ce) << '\n';
  return kExitOk;
}

int cmd_train_spgnet(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  RunConfig cfg = load_run_config(a.config, a.set);
  std::vector<Scheme> schemes;
  if (a.scheme == "all")
    schemes = {Scheme::kSequential, Scheme::kJoint, Scheme::kParallel};
  else if (!a.scheme.empty())
    schemes = {parse_scheme(a.scheme)};
  else
    schemes = {cfg.train.scheme};
  const TrainData data(synth_dataset(cfg.synth()), cfg.model);
  std::vector<Stage2Result> rows;
  for (Scheme s : schemes) {
    RunConfig run = cfg;
    run.train.scheme = s;
    const fs::path dir = schemes.size() > 1 ? fs::path(a.out) / scheme_name(s) : fs::path(a.out);
    rows.push_back(train_stage2(run, data, TrainOptions{dir, &err}));
  }
  if (schemes.size() > 1) write_scheme_comparison(fs::path(a.out) / "schemes.csv", rows);
  for (const auto& r : rows)
    out << scheme_name(r.scheme) << " val_l1 " << format_number(r.val_l1) << " val_ssim " << format_number(r.val_ssim)
        << " val_mssim " << format_number(r.val_mssim) << " val_miou " << format_number(r.val_miou) << '\n';
  return kExitOk;
}

struct InferArgs {
  std::string spatn, spgnet, source, source_parsing, source_keypoints, target_keypoints, flow, out;
};

int cmd_infer(const InferArgs& a, std::ostream& out) {
  const FlowField<float> flow = load_flow<float>(a.flow);
  const ModelConfig gcfg = sidecar_model(a.spgnet);
  const ModelConfig scfg = sidecar_model(a.spatn);
  if (scfg.image_size != gcfg.image_size || scfg.classes != gcfg.classes ||
      scfg.distance_maps != gcfg.distance_maps)
    throw ConfigError("stage-one and stage-two checkpoints disagree on image_size, classes or distance_maps");

  SyntheticSample s;
  s.source_image = read_ppm(a.source);
  s.source_map = read_semantic_map(a.source_parsing, gcfg.classes);
  s.source_kp = read_keypoints(a.source_keypoints);
  s.target_kp = read_keypoints(a.target_keypoints);
  s.flow = flow;
  const int h = s.source_image.shape().h, w = s.source_image.shape().w;
  if (h != gcfg.image_size || w != gcfg.image_size)
    throw ShapeError("source image is " + s.source_image.shape().str() + ", checkpoint expects " +
                     std::to_string(gcfg.image_size) + "x" + std::to_string(gcfg.image_size));
  if (s.source_map.height() != h || s.source_map.width() != w) throw ShapeError("source parsing size differs from source image");
  if (flow.phi.shape().h != h || flow.phi.shape().w != w || flow.phi.shape().n != 1)
    throw ShapeError("flow " + flow.phi.shape().str() + " does not match the source image");
  s.target_image = Tensor<float>(s.source_image.shape());
  s.target_map = SemanticMap(h, w, gcfg.classes);

  Spatn<float> spatn(scfg);
  load_checkpoint(spatn.params(), a.spatn);
  SpgNet<float> gen(gcfg);
  load_checkpoint(gen.params(), a.spgnet);

  const TrainData data({s}, gcfg);
  const Batch b = data.batch({0});
  const Var<float> target = predict_target(spatn, b, false);
  const Tensor<float> image = generate(gen, b, target);

  fs::create_directories(a.out);
  write_ppm(fs::path(a.out) / "generated.ppm", image);
  write_semantic_map(fs::path(a.out) / "parsing.pgm", argmax_map(target.value()));
  out << "wrote " << (fs::path(a.out) / "generated.ppm").string() << " and parsing.pgm\n";
  return kExitOk;
}

struct EvalArgs {
  std::string pred, truth, metrics = "ssim,mssim,miou", out;
  int classes = 0;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  std::vector<std::string> wanted;
  {
    std::stringstream ss(a.metrics);
    for (std::string m; std::getline(ss, m, ',');) {
      if (m != "ssim" && m != "mssim" && m != "miou") throw ConfigError("unknown metric '" + m + "'");
      wanted.push_back(m);
    }
  }
  auto want = [&](const std::string& m) { return std::find(wanted.begin(), wanted.end(), m) != wanted.end(); };
  if (!fs::is_directory(a.pred)) throw IoError("not a directory: " + a.pred);
  if (!fs::is_directory(a.truth)) throw IoError("not a directory: " + a.truth);

  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(a.pred))
    if (e.is_regular_file() && (e.path().extension() == ".ppm" || e.path().extension() == ".pgm"))
      files.push_back(e.path().filename());
  std::sort(files.begin(), files.end());
  auto truth_of = [&](const fs::path& name) {
    const fs::path p = fs::path(a.truth) / name;
    if (!fs::exists(p)) throw IoError("missing ground truth " + p.string());
    return p;
  };

  int classes = a.classes;
  if (classes <= 0 && want("miou")) {
    int top = 0;
    for (const auto& f : files)
      if (f.extension() == ".pgm")
        for (const auto& p : {fs::path(a.pred) / f, truth_of(f)})
          for (auto v : read_pgm(p).pixels) top = std::max(top, static_cast<int>(v));
    classes = top + 1;
  }
  auto mask_classes = [&](const fs::path& p) {
    const GrayImage g = read_pgm(p);
    const int top = g.pixels.empty() ? 0 : *std::max_element(g.pixels.begin(), g.pixels.end());
    return std::max(top + 1, classes);
  };

  std::ostringstream csv;
  csv << "file,ssim,mssim,miou\n";
  double ssim_sum = 0, mssim_sum = 0;
  int images = 0;
  std::optional<ConfusionMatrix> cm;
  if (want("miou") && classes > 0) cm.emplace(classes);
  for (const auto& f : files) {
    std::string s, ms, mi;
    if (f.extension() == ".ppm" && (want("ssim") || want("mssim"))) {
      const Tensor<float> p = read_ppm(fs::path(a.pred) / f), t = read_ppm(truth_of(f));
      if (want("ssim")) {
        const double v = ssim(p, t);
        ssim_sum += v;
        s = format_number(v);
      }
      if (want("mssim")) {
        fs::path mpath = fs::path(a.truth) / f;
        mpath.replace_extension(".pgm");
        if (!fs::exists(mpath)) throw IoError("missing parsing map for masked ssim " + mpath.string());
        const SemanticMap m = read_semantic_map(mpath, mask_classes(mpath));
        const double v = masked_ssim(p, t, foreground_mask(std::span<const SemanticMap>(&m, 1)));
        mssim_sum += v;
        ms = format_number(v);
      }
      ++images;
    } else if (f.extension() == ".pgm" && cm) {
      const SemanticMap p = read_semantic_map(fs::path(a.pred) / f, classes);
      const SemanticMap t = read_semantic_map(truth_of(f), classes);
      mi = format_number(miou(p, t, classes));
      cm->add(p, t);
    } else {
      continue;
    }
    csv << f.string() << ',' << s << ',' << ms << ',' << mi << '\n';
  }
  csv << "mean," << (want("ssim") && images ? format_number(ssim_sum / images) : "") << ','
      << (want("mssim") && images ? format_number(mssim_sum / images) : "") << ',' << (cm ? format_number(cm->miou()) : "")
      << '\n';
  if (a.out.empty()) {
    out << csv.str();
  } else {
    fs::create_directories(a.out);
    write_file_atomic(fs::path(a.out) / "eval.csv", csv.str());
    out << "wrote " << (fs::path(a.out) / "eval.csv").string() << '\n';
  }
  return kExitOk;
}

int cmd_check(const std::string& suite, std::ostream& out, std::ostream& err) {
  const verify::Checks checks = verify::run_suite(suite);
  verify::print_checks(out, checks);
  const auto failed = std::count_if(checks.begin(), checks.end(), [](const auto& c) { return !c.pass; });
  out << checks.size() - failed << '/' << checks.size() << " checks passed\n";
  if (failed) {
    err << "spgnet: " << failed << " check(s) failed\n";
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Semantic-guided pose transfer: data, training, inference, evaluation and checks", "spgnet"};
  app.require_subcommand(1);
  app.fallthrough(false);

  SynthArgs synth;
  auto* sd = app.add_subcommand("synth-data", "generate synthetic source/target pairs");
  sd->add_option("--n", synth.n, "number of pairs")->check(CLI::PositiveNumber);
  sd->add_option("--size", synth.size, "image size (32, 64 or 128)");
  sd->add_option("--classes", synth.classes, "parsing classes (5..12)");
  sd->add_option("--seed", synth.seed, "seed (falls back to SPG_SEED, then 1)");
  sd->add_option("--pairs-per-identity", synth.per_identity);
  sd->add_option("--crossed-fraction", synth.crossed, "fraction of crossed-arm poses");
  sd->add_option("--out", synth.out, "output directory")->required();

  PoseArgs pose;
  auto* pm = app.add_subcommand("pose-maps", "render heatmaps and limb distance maps");
  pm->add_option("--keypoints", pose.keypoints, "keypoint file")->required()->check(CLI::ExistingFile);
  pm->add_option("--size", pose.size, "output size")->required()->check(CLI::PositiveNumber);
  pm->add_option("--out", pose.out, "output .spgt file")->required();
  pm->add_flag("--no-distance-maps", pose.no_distance, "heatmaps only (18 channels)");

  TrainArgs t1;
  auto* ts = app.add_subcommand("train-spatn", "stage one: target parsing prediction");
  ts->add_option("--config", t1.config, "run config")->required()->check(CLI::ExistingFile);
  ts->add_option("--out", t1.out, "output directory")->required();
  ts->add_option("--set", t1.set, "key=value override")->allow_extra_args(false);
  ts->add_flag("--no-distance-maps", t1.no_distance, "18-channel poses");

  TrainArgs t2;
  auto* tg = app.add_subcommand("train-spgnet", "stage two: image generation");
  tg->add_option("--config", t2.config, "run config")->required()->check(CLI::ExistingFile);
  tg->add_option("--out", t2.out, "output directory")->required();
  tg->add_option("--scheme", t2.scheme, "seq, joint, parallel or all")
      ->check(CLI::IsMember({"seq", "sequential", "joint", "parallel", "all"}));
  tg->add_option("--set", t2.set, "key=value override")->allow_extra_args(false);

  InferArgs inf;
  auto* in = app.add_subcommand("infer", "generate the target image for one source");
  in->add_option("--spatn", inf.spatn, "stage-one checkpoint")->required();
  in->add_option("--spgnet", inf.spgnet, "stage-two checkpoint")->required();
  in->add_option("--source", inf.source, "source image (.ppm)")->required();
  in->add_option("--source-parsing", inf.source_parsing, "source parsing (.pgm)")->required();
  in->add_option("--source-keypoints", inf.source_keypoints, "source keypoints")->required();
  in->add_option("--target-keypoints", inf.target_keypoints, "target keypoints")->required();
  in->add_option("--flow", inf.flow, "flow prefix (<prefix>.phi.spgt, <prefix>.vis.spgt)")->required();
  in->add_option("--out", inf.out, "output directory")->required();

  EvalArgs ev;
  auto* ea = app.add_subcommand("eval", "score predictions against ground truth");
  ea->add_option("--pred", ev.pred, "prediction directory")->required();
  ea->add_option("--truth", ev.truth, "ground-truth directory")->required();
  ea->add_option("--metrics", ev.metrics, "comma list of ssim, mssim, miou");
  ea->add_option("--classes", ev.classes, "parsing classes (default: largest label + 1)");
  ea->add_option("--out", ev.out, "output directory (default: CSV on stdout)");

  std::string suite = "all";
  auto* ck = app.add_subcommand("check", "run verification suites");
  ck->add_option("--suite", suite, "grad, invariants, oracle or all")
      ->check(CLI::IsMember({"grad", "invariants", "oracle", "all"}));

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "spgnet: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (sd->parsed()) return cmd_synth(synth, out);
    if (pm->parsed()) return cmd_pose(pose, out);
    if (ts->parsed()) return cmd_train_spatn(t1, out, err);
    if (tg->parsed()) return cmd_train_spgnet(t2, out, err);
    if (in->parsed()) return cmd_infer(inf, out);
    if (ea->parsed()) return cmd_eval(ev, out);
    if (ck->parsed()) return cmd_check(suite, out, err);
  } catch (const std::exception& e) {
    err << "spgnet: error: " << e.what() << '\n';
    return kExitFailure;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace spg::cli
