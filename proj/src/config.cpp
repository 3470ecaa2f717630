#include "pip/config.hpp"

#include <cerrno>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "pip/generator.hpp"

namespace pip {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const std::string& want) {
  throw ConfigError("configuration key \"" + key + "\": cannot parse \"" + value + "\" as " +
                    want);
}

std::int64_t to_int(const std::string& key, const std::string& value) {
  std::int64_t out = 0;
  const char* begin = value.data();
  const char* end = begin + value.size();
  auto [p, ec] = std::from_chars(begin, end, out);
  if (ec != std::errc() || p != end) bad_value(key, value, "an integer");
  return out;
}

std::int64_t to_nonneg(const std::string& key, const std::string& value) {
  const std::int64_t v = to_int(key, value);
  if (v < 0) throw ConfigError("configuration key \"" + key + "\": value must be >= 0");
  return v;
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
  std::uint64_t out = 0;
  const char* begin = value.data();
  const char* end = begin + value.size();
  auto [p, ec] = std::from_chars(begin, end, out);
  if (ec != std::errc() || p != end) bad_value(key, value, "a non-negative integer");
  return out;
}

double to_double(const std::string& key, const std::string& value) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(value.c_str(), &end);
  if (end != value.c_str() + value.size() || value.empty() || errno == ERANGE)
    bad_value(key, value, "a number");
  return v;
}

std::string fmt_int(std::int64_t v) { return std::to_string(v); }

}  // namespace

std::string shortest_double(double v) {
  char buf[64];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) return buf;
  }
  return buf;
}

const std::vector<SchemaEntry>& config_schema() {
  static const std::vector<SchemaEntry> schema = {
      {"data", "<dir>", "dataset root containing peer/ and target/ image directories"},
      {"out", "<dir>", "run directory (default: $PIP_RUNS_DIR or ./runs, plus a run name)"},
      {"resolution", "<int>", "square image resolution, a power of two"},
      {"key", "<set>", "class-injection resolutions, e.g. \"4\", \"4+8+16\", or \"none\""},
      {"peer-size", "<int>", "cap on peer images; keeps the first N of the sorted listing, 0 = all"},
      {"target-oversample", "<frac>", "fraction of each batch drawn from the target class; 0 = sample uniformly over images"},
      {"steps", "<int>", "number of training steps"},
      {"batch", "<int>", "batch size"},
      {"latent-dim", "<int>", "latent/style width of the generator"},
      {"feature-dim", "<int>", "stub encoder feature width (weight-file encoders bring their own)"},
      {"width-mult", "<frac>", "channel multiplier for generator and discriminator trunks"},
      {"lr-g", "<lr>", "generator Adam learning rate"},
      {"lr-d", "<lr>", "discriminator Adam learning rate"},
      {"r1-gamma", "<num>", "R1 gradient penalty strength"},
      {"r1-interval", "<int>", "apply the R1 penalty every N discriminator steps"},
      {"dir-weight", "<num>", "direction-consistency loss weight; 0 disables the term"},
      {"dir-interval", "<int>", "apply the direction loss every N generator steps"},
      {"ada-target", "<frac>", "augmentation controller target for the mean sign of real logits"},
      {"ada-adjust", "<num>", "augmentation probability step per controller update; 0 freezes p"},
      {"ema-beta", "<frac>", "decay of the generator weight average used for outputs"},
      {"seed", "<int>", "master seed; every random stream derives from it by name"},
      {"snapshot-interval", "<int>", "write a sample grid every N steps; 0 = never"},
      {"checkpoint-interval", "<int>", "write a checkpoint every N steps; 0 = final only"},
      {"encoder", "<spec>", "feature encoder: stub, stub:<seed>, or weights:<path>"},
  };
  return schema;
}

void RunConfig::set(const std::string& key_name, const std::string& value) {
  if (key_name == "data")
    data = value;
  else if (key_name == "out")
    out = value;
  else if (key_name == "resolution")
    resolution = static_cast<int>(to_int(key_name, value));
  else if (key_name == "key")
    key = value;
  else if (key_name == "peer-size")
    peer_size = static_cast<std::size_t>(to_nonneg(key_name, value));
  else if (key_name == "target-oversample")
    target_oversample = to_double(key_name, value);
  else if (key_name == "steps")
    steps = to_int(key_name, value);
  else if (key_name == "batch")
    batch = static_cast<std::size_t>(to_nonneg(key_name, value));
  else if (key_name == "latent-dim")
    latent_dim = to_int(key_name, value);
  else if (key_name == "feature-dim")
    feature_dim = to_int(key_name, value);
  else if (key_name == "width-mult")
    width_mult = to_double(key_name, value);
  else if (key_name == "lr-g")
    lr_g = to_double(key_name, value);
  else if (key_name == "lr-d")
    lr_d = to_double(key_name, value);
  else if (key_name == "r1-gamma")
    r1_gamma = to_double(key_name, value);
  else if (key_name == "r1-interval")
    r1_interval = to_int(key_name, value);
  else if (key_name == "dir-weight")
    dir_weight = to_double(key_name, value);
  else if (key_name == "dir-interval")
    dir_interval = to_int(key_name, value);
  else if (key_name == "ada-target")
    ada_target = to_double(key_name, value);
  else if (key_name == "ada-adjust")
    ada_adjust = to_double(key_name, value);
  else if (key_name == "ema-beta")
    ema_beta = to_double(key_name, value);
  else if (key_name == "seed")
    seed = to_u64(key_name, value);
  else if (key_name == "snapshot-interval")
    snapshot_interval = to_nonneg(key_name, value);
  else if (key_name == "checkpoint-interval")
    checkpoint_interval = to_nonneg(key_name, value);
  else if (key_name == "encoder")
    encoder = value;
  else
    throw ConfigError("unknown configuration key: \"" + key_name + "\"");
}

std::string RunConfig::get(const std::string& key_name) const {
  if (key_name == "data") return data.string();
  if (key_name == "out") return out.string();
  if (key_name == "resolution") return fmt_int(resolution);
  if (key_name == "key") return key;
  if (key_name == "peer-size") return fmt_int(static_cast<std::int64_t>(peer_size));
  if (key_name == "target-oversample") return shortest_double(target_oversample);
  if (key_name == "steps") return fmt_int(steps);
  if (key_name == "batch") return fmt_int(static_cast<std::int64_t>(batch));
  if (key_name == "latent-dim") return fmt_int(latent_dim);
  if (key_name == "feature-dim") return fmt_int(feature_dim);
  if (key_name == "width-mult") return shortest_double(width_mult);
  if (key_name == "lr-g") return shortest_double(lr_g);
  if (key_name == "lr-d") return shortest_double(lr_d);
  if (key_name == "r1-gamma") return shortest_double(r1_gamma);
  if (key_name == "r1-interval") return fmt_int(r1_interval);
  if (key_name == "dir-weight") return shortest_double(dir_weight);
  if (key_name == "dir-interval") return fmt_int(dir_interval);
  if (key_name == "ada-target") return shortest_double(ada_target);
  if (key_name == "ada-adjust") return shortest_double(ada_adjust);
  if (key_name == "ema-beta") return shortest_double(ema_beta);
  if (key_name == "seed") return std::to_string(seed);
  if (key_name == "snapshot-interval") return fmt_int(snapshot_interval);
  if (key_name == "checkpoint-interval") return fmt_int(checkpoint_interval);
  if (key_name == "encoder") return encoder;
  throw ConfigError("unknown configuration key: \"" + key_name + "\"");
}

std::vector<std::pair<std::string, std::string>> RunConfig::echo() const {
  std::vector<std::pair<std::string, std::string>> out_pairs;
  for (const SchemaEntry& e : config_schema()) out_pairs.emplace_back(e.key, get(e.key));
  return out_pairs;
}

void RunConfig::validate() const {
  if (resolution < 8 || (resolution & (resolution - 1)) != 0)
    throw ConfigError("resolution must be a power of two >= 8, got " +
                      std::to_string(resolution));
  parse_key_string(key);  // throws naming the bad token
  if (target_oversample < 0 || target_oversample > 1)
    throw ConfigError("target-oversample must lie in [0, 1]");
  if (latent_dim < 1) throw ConfigError("latent-dim must be >= 1");
  if (feature_dim < 1) throw ConfigError("feature-dim must be >= 1");
  if (!(width_mult > 0)) throw ConfigError("width-mult must be > 0");
  if (!(lr_g > 0) || !(lr_d > 0)) throw ConfigError("learning rates must be > 0");
  parse_encoder_spec(encoder);
  to_train_config().validate();
}

TrainConfig RunConfig::to_train_config() const {
  TrainConfig t;
  t.total_steps = steps;
  t.batch_size = batch;
  t.adam_g.lr = lr_g;
  t.adam_d.lr = lr_d;
  t.r1_gamma = r1_gamma;
  t.r1_interval = r1_interval;
  t.direction.enabled = dir_weight > 0;
  t.direction.weight = dir_weight;
  t.direction.lazy_interval = dir_interval;
  t.ada.target = ada_target;
  t.ada.adjust = ada_adjust;
  t.ada.enabled = ada_adjust > 0;
  t.ema_beta = ema_beta;
  t.sampling = target_oversample > 0 ? SamplingPolicy::Mode::kTargetOversample
                                     : SamplingPolicy::Mode::kUniformOverImages;
  t.target_fraction = target_oversample;
  t.seed = seed;
  t.snapshot_interval = snapshot_interval;
  t.checkpoint_interval = checkpoint_interval;
  t.generator.resolution = resolution;
  t.generator.latent_dim = latent_dim;
  t.generator.w_dim = latent_dim;
  t.generator.c_dim = latent_dim;
  t.generator.feature_dim = feature_dim;
  t.generator.width_mult = width_mult;
  t.generator.key = parse_key_string(key);
  return t;
}

std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text) {
  std::set<std::string> known;
  for (const SchemaEntry& e : config_schema()) known.insert(e.key);

  std::vector<std::pair<std::string, std::string>> pairs;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) +
                        " is not a key=value pair: \"" + t + "\"");
    const std::string k = trim(t.substr(0, eq));
    const std::string v = trim(t.substr(eq + 1));
    if (k.empty())
      throw ConfigError("config line " + std::to_string(line_no) + " has an empty key");
    if (known.find(k) == known.end())
      throw ConfigError("unknown configuration key: \"" + k + "\" (config line " +
                        std::to_string(line_no) + ")");
    if (!seen.insert(k).second)
      throw ConfigError("duplicate configuration key: \"" + k + "\" (config line " +
                        std::to_string(line_no) + ")");
    pairs.emplace_back(k, v);
  }
  return pairs;
}

void apply_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  for (const auto& [k, v] : parse_config_text(buf.str())) cfg.set(k, v);
}

void write_config_echo(const std::filesystem::path& path, const RunConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config echo: " + path.string());
  for (const auto& [k, v] : cfg.echo()) out << k << "=" << v << "\n";
}

EncoderSpec parse_encoder_spec(const std::string& text) {
  EncoderSpec spec;
  if (text == "stub") return spec;
  if (text.rfind("stub:", 0) == 0) {
    spec.stub_seed = to_u64("encoder", text.substr(5));
    return spec;
  }
  if (text.rfind("weights:", 0) == 0) {
    spec.from_file = true;
    spec.weights = text.substr(8);
    if (spec.weights.empty())
      throw ConfigError("configuration key \"encoder\": weights: needs a file path");
    return spec;
  }
  throw ConfigError("configuration key \"encoder\": expected stub, stub:<seed>, or "
                    "weights:<path>, got \"" +
                    text + "\"");
}

}  // namespace pip
