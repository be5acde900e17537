#include "spg/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace spg {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename N>
N parse_number(const std::string& key, const std::string& v) {
  N out{};
  const char* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("bad value '" + v + "' for key " + key);
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ConfigError("bad boolean '" + v + "' for key " + key);
}

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, ptr);
}

struct Field {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename N>
Field number(N RunConfig::*member) {
  return {[member](RunConfig& c, const std::string& k, const std::string& v) { c.*member = parse_number<N>(k, v); },
          [member](const RunConfig& c) {
            if constexpr (std::is_floating_point_v<N>) return format_double(c.*member);
            else return std::to_string(c.*member);
          }};
}

template <typename S, typename N>
Field nested(S RunConfig::*outer, N S::*member) {
  return {[outer, member](RunConfig& c, const std::string& k, const std::string& v) {
            (c.*outer).*member = parse_number<N>(k, v);
          },
          [outer, member](const RunConfig& c) {
            if constexpr (std::is_floating_point_v<N>) return format_double((c.*outer).*member);
            else return std::to_string((c.*outer).*member);
          }};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> t;
    t["image_size"] = nested(&RunConfig::model, &ModelConfig::image_size);
    t["classes"] = nested(&RunConfig::model, &ModelConfig::classes);
    t["style_dim"] = nested(&RunConfig::model, &ModelConfig::style_dim);
    t["base_width"] = nested(&RunConfig::model, &ModelConfig::base_width);
    t["depth"] = nested(&RunConfig::model, &ModelConfig::depth);
    t["spatn_blocks"] = nested(&RunConfig::model, &ModelConfig::spatn_blocks);
    t["disc_depth"] = nested(&RunConfig::model, &ModelConfig::disc_depth);
    t["res_blocks"] = nested(&RunConfig::model, &ModelConfig::res_blocks);
    t["sean_hidden"] = nested(&RunConfig::model, &ModelConfig::sean_hidden);
    t["sean_kernel"] = nested(&RunConfig::model, &ModelConfig::sean_kernel);
    t["max_warp_stages"] = nested(&RunConfig::model, &ModelConfig::max_warp_stages);
    t["distance_maps"] = {[](RunConfig& c, const std::string& k, const std::string& v) {
                            c.model.distance_maps = parse_bool(k, v);
                          },
                          [](const RunConfig& c) { return std::string(c.model.distance_maps ? "true" : "false"); }};
    t["spatn_input"] = {[](RunConfig& c, const std::string& k, const std::string& v) {
                          if (v == "parsing") c.model.spatn_input = SpatnInput::kParsing;
                          else if (v == "image") c.model.spatn_input = SpatnInput::kImage;
                          else throw ConfigError("bad value '" + v + "' for key " + k + " (parsing|image)");
                        },
                        [](const RunConfig& c) {
                          return std::string(c.model.spatn_input == SpatnInput::kImage ? "image" : "parsing");
                        }};
    t["norm"] = {[](RunConfig& c, const std::string& k, const std::string& v) {
                   if (v == "sean") c.model.norm = NormVariant::kSean;
                   else if (v == "spade") c.model.norm = NormVariant::kSpade;
                   else throw ConfigError("bad value '" + v + "' for key " + k + " (sean|spade)");
                 },
                 [](const RunConfig& c) { return std::string(c.model.norm == NormVariant::kSpade ? "spade" : "sean"); }};
    t["lambda_ce"] = nested(&RunConfig::weights, &LossWeights::ce);
    t["lambda_l1"] = nested(&RunConfig::weights, &LossWeights::l1);
    t["lambda_perc"] = nested(&RunConfig::weights, &LossWeights::perc);
    t["lambda_adv"] = nested(&RunConfig::weights, &LossWeights::adv);
    t["iters"] = nested(&RunConfig::train, &TrainSettings::iters);
    t["batch_size"] = nested(&RunConfig::train, &TrainSettings::batch_size);
    t["lr_g"] = nested(&RunConfig::train, &TrainSettings::lr_g);
    t["lr_d"] = nested(&RunConfig::train, &TrainSettings::lr_d);
    t["val_every"] = nested(&RunConfig::train, &TrainSettings::val_every);
    t["log_every"] = nested(&RunConfig::train, &TrainSettings::log_every);
    t["val_samples"] = nested(&RunConfig::train, &TrainSettings::val_samples);
    t["patience"] = nested(&RunConfig::train, &TrainSettings::patience);
    t["spatn_iters"] = nested(&RunConfig::train, &TrainSettings::spatn_iters);
    t["scheme"] = {[](RunConfig& c, const std::string&, const std::string& v) { c.train.scheme = parse_scheme(v); },
                   [](const RunConfig& c) { return scheme_name(c.train.scheme); }};
    t["spatn_ckpt"] = {[](RunConfig& c, const std::string&, const std::string& v) { c.train.spatn_ckpt = v; },
                       [](const RunConfig& c) { return c.train.spatn_ckpt; }};
    t["pairs"] = number(&RunConfig::pairs);
    t["pairs_per_identity"] = number(&RunConfig::pairs_per_identity);
    t["crossed_fraction"] = number(&RunConfig::crossed_fraction);
    t["val_fraction"] = number(&RunConfig::val_fraction);
    t["seed"] = {[](RunConfig& c, const std::string& k, const std::string& v) {
                   c.seed = parse_number<std::uint64_t>(k, v);
                   c.model.seed = c.seed;
                 },
                 [](const RunConfig& c) { return std::to_string(c.seed); }};
    return t;
  }();
  return table;
}

}  // namespace

Scheme parse_scheme(const std::string& name) {
  if (name == "seq" || name == "sequential") return Scheme::kSequential;
  if (name == "joint") return Scheme::kJoint;
  if (name == "parallel") return Scheme::kParallel;
  throw ConfigError("unknown scheme '" + name + "' (seq|joint|parallel)");
}

std::string scheme_name(Scheme s) {
  switch (s) {
    case Scheme::kSequential: return "seq";
    case Scheme::kJoint: return "joint";
    case Scheme::kParallel: return "parallel";
  }
  return "?";
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto& t = fields();
  auto it = t.find(key);
  if (it == t.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second.set(*this, key, value);
}

std::string RunConfig::get(const std::string& key) const {
  const auto& t = fields();
  auto it = t.find(key);
  if (it == t.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second.get(*this);
}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const auto& [k, f] : fields()) out.push_back(k);
  return out;
}

RunConfig RunConfig::parse(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    try {
      cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

std::string RunConfig::resolved() const {
  std::string out;
  for (const auto& [k, f] : fields()) out += k + " = " + f.get(*this) + "\n";
  return out;
}

void RunConfig::validate() const {
  model.validate();
  weights.validate();
  synth().validate();
  if (train.iters < 0) throw ConfigError("iters must be >= 0");
  if (train.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (train.val_every < 1 || train.log_every < 1) throw ConfigError("val_every and log_every must be >= 1");
  if (train.patience < 1) throw ConfigError("patience must be >= 1");
  if (!(train.lr_g > 0) || !(train.lr_d > 0)) throw ConfigError("learning rates must be positive");
  if (model.seed != seed) throw ConfigError("model seed out of sync with seed");
}

SynthConfig RunConfig::synth() const {
  SynthConfig s;
  s.pairs = pairs;
  s.size = model.image_size;
  s.classes = model.classes;
  s.seed = seed;
  s.pairs_per_identity = pairs_per_identity;
  s.crossed_fraction = crossed_fraction;
  s.val_fraction = val_fraction;
  return s;
}

}  // namespace spg
