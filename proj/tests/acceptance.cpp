// Acceptance runner: one PASS/FAIL line per criterion.
//   acceptance [--only 1,4,12] [--keep DIR]   (default DIR: ./acceptance_runs)
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "spg/cli/cli.hpp"
#include "spg/train.hpp"
#include "spg/verify/suites.hpp"

namespace fs = std::filesystem;
using namespace spg;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

fs::path g_work;
const fs::path kConfigs = fs::path(SPG_SOURCE_DIR) / "configs";

std::string num(double v, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Outcome from_checks(const verify::Checks& checks) {
  int failed = 0;
  std::string first;
  for (const auto& c : checks)
    if (!c.pass && failed++ == 0) first = c.name + " (" + c.detail + ")";
  Outcome o{failed == 0, std::to_string(checks.size() - failed) + "/" + std::to_string(checks.size()) + " checks"};
  if (failed) o.detail += "; first failure: " + first;
  return o;
}

int cli(std::vector<std::string> args) {
  std::ostringstream out;
  const int code = cli::run(args, out, std::cerr);
  if (code != 0) std::cerr << out.str();
  return code;
}

Outcome gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o = from_checks(verify::grad_checks());
  const double s = seconds_since(t0);
  o.pass = o.pass && s < 300;
  o.detail += ", " + num(s, 3) + " s";
  return o;
}

Outcome toy_stage1() {
  const RunConfig cfg = RunConfig::load(kConfigs / "toy_stage1.cfg");
  const TrainData data(synth_dataset(cfg.synth()), cfg.model);
  const auto t0 = std::chrono::steady_clock::now();
  const Stage1Result r = train_stage1(cfg, data, {g_work / "stage1", &std::cerr});
  const double s = seconds_since(t0);
  return {r.val_pixel_accuracy >= 0.90 && r.val_miou >= 0.60 && cfg.train.iters <= 2000 && s <= 1800,
          "pixel accuracy " + num(r.val_pixel_accuracy) + ", mIOU " + num(r.val_miou) + " after " +
              std::to_string(cfg.train.iters) + " iters, " + num(s, 4) + " s"};
}

Outcome toy_stage2() {
  RunConfig cfg = RunConfig::load(kConfigs / "toy_stage2.cfg");
  cfg.train.scheme = Scheme::kParallel;
  const TrainData data(synth_dataset(cfg.synth()), cfg.model);
  const auto t0 = std::chrono::steady_clock::now();
  const Stage2Result r = train_stage2(cfg, data, {g_work / "stage2", &std::cerr});
  const double s = seconds_since(t0);
  return {r.val_l1 <= 0.08 && r.val_ssim >= 0.70 && cfg.train.iters <= 4000 && s <= 3600,
          "L1 " + num(r.val_l1) + ", SSIM " + num(r.val_ssim) + " (masked " + num(r.val_mssim) + ") after " +
              std::to_string(cfg.train.iters) + " iters, " + num(s, 4) + " s"};
}

Outcome schemes() {
  const fs::path out = g_work / "schemes";
  if (cli({"train-spgnet", "--config", (kConfigs / "schemes.cfg").string(), "--scheme", "all", "--out", out.string()}) != 0)
    return {false, "train-spgnet --scheme all failed"};
  const std::string csv = slurp(out / "schemes.csv");
  std::istringstream is(csv);
  std::string line;
  std::getline(is, line);
  if (line != "scheme,val_l1,val_ssim,val_mssim,val_miou") return {false, "bad header: " + line};
  std::set<std::string> seen;
  std::string detail;
  while (std::getline(is, line)) {
    std::stringstream ls(line);
    std::string name, l1;
    std::getline(ls, name, ',');
    std::getline(ls, l1, ',');
    if (!std::isfinite(std::stod(l1))) return {false, name + " has non-finite L1"};
    seen.insert(name);
    detail += (detail.empty() ? "" : ", ") + name + " L1 " + num(std::stod(l1));
  }
  return {seen == std::set<std::string>{"seq", "joint", "parallel"}, detail + " -> " + (out / "schemes.csv").string()};
}

Outcome ablation() {
  RunConfig cfg = RunConfig::load(kConfigs / "ablation.cfg");
  const TrainData with(synth_dataset(cfg.synth()), cfg.model);
  const Stage1Result a = train_stage1(cfg, with, {g_work / "ablation" / "with_distance", &std::cerr});
  cfg.model.distance_maps = false;
  const TrainData without(synth_dataset(cfg.synth()), cfg.model);
  const Stage1Result b = train_stage1(cfg, without, {g_work / "ablation" / "without_distance", &std::cerr});
  const std::string higher = a.val_miou >= b.val_miou ? "with" : "without";
  std::ostringstream csv;
  csv << "variant,val_miou,val_pixel_accuracy,higher\n"
      << "with_distance," << format_number(a.val_miou) << ',' << format_number(a.val_pixel_accuracy) << ','
      << (higher == "with") << '\n'
      << "without_distance," << format_number(b.val_miou) << ',' << format_number(b.val_pixel_accuracy) << ','
      << (higher == "without") << '\n';
  std::ofstream(g_work / "ablation" / "ablation.csv") << csv.str();
  return {std::isfinite(a.val_miou) && std::isfinite(b.val_miou),
          "mIOU with " + num(a.val_miou) + ", without " + num(b.val_miou) + "; higher: " + higher + " distance maps"};
}

Outcome determinism() {
  const fs::path cfg = g_work / "det.cfg";
  std::ofstream(cfg) << "image_size = 32\nclasses = 6\npairs = 40\nbase_width = 8\nstyle_dim = 8\nsean_hidden = 8\n"
                        "depth = 3\nres_blocks = 1\nspatn_blocks = 2\ndisc_depth = 2\niters = 30\nval_every = 10\n"
                        "log_every = 5\nseed = 9\n";
  for (const char* run : {"a", "b"}) {
    const fs::path d = g_work / "determinism" / run;
    if (cli({"synth-data", "--n", "8", "--size", "32", "--classes", "6", "--seed", "4", "--out", (d / "data").string()}) ||
        cli({"train-spatn", "--config", cfg.string(), "--out", (d / "s1").string()}) ||
        cli({"train-spgnet", "--config", cfg.string(), "--scheme", "joint", "--out", (d / "s2").string()}))
      return {false, "a command failed"};
  }
  int compared = 0;
  const fs::path a = g_work / "determinism" / "a", b = g_work / "determinism" / "b";
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), a);
    if (!fs::exists(b / rel) || slurp(e.path()) != slurp(b / rel)) return {false, rel.string() + " differs"};
    ++compared;
  }
  return {compared > 0, std::to_string(compared) + " files bit-identical across reruns (checkpoints, metrics, data)"};
}

Outcome full_scale() {
  const ModelConfig cfg = ModelConfig::full_scale();
  const auto t0 = std::chrono::steady_clock::now();
  SpgNet<float> net(cfg);
  const int s = cfg.image_size;
  Tensor<float> pose(Shape{1, cfg.pose_channels(), s, s}), source(Shape{1, 3, s, s}, 0.5f);
  SemanticMap map(s, s, cfg.classes);
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x) map.at(y, x) = static_cast<std::uint8_t>((y / 16 + x / 16) % cfg.classes);
  FlowField<float> flow{Tensor<float>(Shape{1, 2, s, s}), Tensor<float>(Shape{1, 1, s, s}, 1.0f)};
  const Var<float> out = net(Var<float>(pose), Var<float>(source), std::span<const SemanticMap>(&map, 1),
                             Var<float>(one_hot<float>(map)), flow, Mode{false});
  const Shape want{1, 3, 256, 256};
  return {out.shape() == want && net.block_count() == 7 && cfg.classes == 20 && cfg.style_dim == 128,
          "output " + out.shape().str() + ", " + std::to_string(net.block_count()) + " SPGBlocks, " +
              std::to_string(net.params().numel()) + " parameters, " + num(seconds_since(t0), 3) + " s"};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  fs::path keep;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string n; std::getline(ss, n, ',');) only.insert(std::stoi(n));
    } else if (a == "--keep" && i + 1 < argc) {
      keep = argv[++i];
    } else {
      std::cerr << "usage: acceptance [--only 1,2,...] [--keep DIR]\n";
      return 2;
    }
  }
  // outputs stay for inspection: schemes.csv, ablation.csv, checkpoints
  g_work = keep.empty() ? fs::current_path() / "acceptance_runs" : keep;
  fs::remove_all(g_work);
  fs::create_directories(g_work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient suite", gradients},
      {"distance-map oracle", [] { return from_checks(verify::distance_map_checks()); }},
      {"SEAN invariants", [] { return from_checks(verify::sean_checks()); }},
      {"warp suite", [] { return from_checks(verify::warp_checks()); }},
      {"region pooling/broadcast", [] { return from_checks(verify::region_checks()); }},
      {"toy stage one", toy_stage1},
      {"toy stage two (parallel)", toy_stage2},
      {"scheme protocol", schemes},
      {"distance-map ablation protocol", ablation},
      {"metrics", [] { return from_checks(verify::metric_checks()); }},
      {"determinism", determinism},
      {"full-scale shape", full_scale},
  };

  int failed = 0;
  std::vector<std::string> lines;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    lines.push_back(std::string(o.pass ? "PASS" : "FAIL") + " [" + std::to_string(id) + "] " + criteria[i].first + ": " +
                    o.detail);
    std::cout << lines.back() << std::endl;
  }
  std::cout << "\nsummary\n";
  for (const auto& l : lines) std::cout << l << '\n';
  return failed ? 1 : 0;
}
