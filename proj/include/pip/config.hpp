#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "pip/errors.hpp"
#include "pip/trainer.hpp"

// Flat key=value run configuration. A single schema table is the source of
// truth for the accepted keys, their CLI flags, their defaults, and the help
// text, so the file parser, the flag parser, and --help can never drift
// apart. Unknown keys are rejected by name; there deliberately is no key for
// path-length regularization or style mixing, so configs carrying one fail
// loudly instead of being silently ignored.

namespace pip {

struct SchemaEntry {
  std::string key;    // file key and CLI flag name (flag is "--" + key)
  std::string value;  // value placeholder for help, e.g. "<int>"
  std::string help;
};

// Every accepted configuration key, in display order.
const std::vector<SchemaEntry>& config_schema();

// Exact double rendering: the shortest decimal string that parses back to
// the same bits, so echo files reproduce the run without drift.
std::string shortest_double(double v);

struct RunConfig {
  std::filesystem::path data;       // dataset root (peer/ + target/)
  std::filesystem::path out;        // run directory
  int resolution = 32;
  std::string key = "4";            // class-injection schedule string
  std::size_t peer_size = 0;        // 0 = use every peer image
  double target_oversample = 0.5;   // 0 = uniform over images
  std::int64_t steps = 500;
  std::size_t batch = 8;
  std::int64_t latent_dim = 64;
  std::int64_t feature_dim = 512;   // stub encoder width; weight files override
  double width_mult = 1.0;
  double lr_g = 2.5e-3;
  double lr_d = 2.5e-3;
  double r1_gamma = 1.0;
  std::int64_t r1_interval = 16;
  double dir_weight = 1.0;          // 0 disables the direction term
  std::int64_t dir_interval = 16;
  double ada_target = 0.6;
  double ada_adjust = 0.002;        // 0 freezes the augmentation controller
  double ema_beta = 0.999;
  std::uint64_t seed = 0;
  std::int64_t snapshot_interval = 100;    // 0 = no periodic snapshots
  std::int64_t checkpoint_interval = 0;    // 0 = final checkpoint only
  std::string encoder = "stub";     // stub | stub:<seed> | weights:<path>

  // Applies one key=value pair; throws ConfigError naming the key when it is
  // unknown or its value does not parse.
  void set(const std::string& key_name, const std::string& value);

  // Canonical value rendering for `key_name` (inverse of set()).
  std::string get(const std::string& key_name) const;

  // Every schema key with its current value, in schema order.
  std::vector<std::pair<std::string, std::string>> echo() const;

  void validate() const;            // delegates to TrainConfig::validate too
  TrainConfig to_train_config() const;
};

// Parses flat key=value text: one pair per line, '#' comments, blank lines
// ignored. Returns pairs in file order; malformed lines and duplicate keys
// throw ConfigError naming the line or key. Keys are validated against the
// schema (unknown keys are named in the error) but values are not applied.
std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text);

// Reads `path` and applies every pair to `cfg` in file order.
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);

// Writes the full echo() as key=value lines.
void write_config_echo(const std::filesystem::path& path, const RunConfig& cfg);

// Encoder selection: "stub" (seed 0), "stub:<seed>", or "weights:<path>".
struct EncoderSpec {
  bool from_file = false;
  std::uint64_t stub_seed = 0;
  std::filesystem::path weights;
};
EncoderSpec parse_encoder_spec(const std::string& text);

}  // namespace pip
