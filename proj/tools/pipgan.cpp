// pipgan — command-line entry point wiring datasets, class embeddings,
// training, generation, interpolation, and evaluation. Every subcommand is a
// thin wrapper over the library: given the same configuration it produces the
// library's results bit for bit.

#include <CLI11.hpp>
#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "pip/config.hpp"
#include "pip/dataset.hpp"
#include "pip/encoders.hpp"
#include "pip/generator.hpp"
#include "pip/image.hpp"
#include "pip/metrics.hpp"
#include "pip/trainer.hpp"

namespace fs = std::filesystem;
using namespace pip;

namespace {

// ---------------------------------------------------------------------------
// shared helpers

int class_id_from_name(const std::string& name) {
  if (name == "peer") return kPeerClass;
  if (name == "target") return kTargetClass;
  throw ConfigError("class must be \"peer\" or \"target\", got \"" + name + "\"");
}

LinearImageEncoder<float> make_encoder(const std::string& spec_text, std::int64_t stub_dim) {
  const EncoderSpec spec = parse_encoder_spec(spec_text);
  if (spec.from_file) return load_image_encoder<float>(spec.weights);
  return stub_feature_encoder<float>(spec.stub_seed, stub_dim);
}

PerceptualDistance make_perceptual(const std::string& spec_text) {
  const EncoderSpec spec = parse_encoder_spec(spec_text);
  if (spec.from_file) return PerceptualDistance::from_archive(spec.weights);
  return PerceptualDistance::stub(spec.stub_seed);
}

// Creates (or, with overwrite, replaces) a run directory. Existing non-empty
// directories are refused so runs stay append-only.
void prepare_run_dir(const fs::path& dir, bool overwrite) {
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!overwrite)
      throw ConfigError("run directory already exists: " + dir.string() +
                        " (pass --overwrite or choose a new --out)");
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
}

fs::path default_out_root() {
  if (const char* env = std::getenv("PIP_RUNS_DIR")) return fs::path(env);
  return fs::path("runs");
}

void write_image_png(const fs::path& path, const Tensor<float>& img) {
  // img is [1,3,R,R] in approximately [-1,1]
  write_png(path, float_to_image(img.data(), static_cast<int>(img.dim(2)),
                                 static_cast<int>(img.dim(3))));
}

Tensor<float> draw_latents(RandomStream& rng, std::int64_t n, std::int64_t dim) {
  FlatArray<float> z(n * dim);
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = static_cast<float>(rng.normal());
  return Tensor<float>::from_array({n, dim}, std::move(z));
}

// Renders `count` images of one class from a snapshot, one at a time so the
// result is independent of any batching choice.
std::vector<std::vector<float>> sample_class_images(const GeneratorSnapshot<float>& snap,
                                                    int class_id, std::int64_t count,
                                                    std::uint64_t seed) {
  NoGradGuard ng;
  RandomStream zs(derive_seed(seed, "sample-z"));
  const Tensor<float>& cm = class_id == kTargetClass ? snap.cm_target : snap.cm_peer;
  std::vector<std::vector<float>> out;
  out.reserve(static_cast<std::size_t>(count));
  for (std::int64_t i = 0; i < count; ++i) {
    Tensor<float> z = draw_latents(zs, 1, snap.config.latent_dim);
    Tensor<float> img = snap.generator.generate(z, cm, derive_seed(seed, "sample-noise",
                                                                   static_cast<std::uint64_t>(i)));
    out.emplace_back(img.data(), img.data() + img.size());
  }
  return out;
}

// Loads every PNG/JPEG in a flat directory (sorted by name), center-cropped
// and resized like the training pipeline.
std::vector<std::vector<float>> load_plain_image_dir(const fs::path& dir, int resolution) {
  if (!fs::is_directory(dir))
    throw ConfigError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") files.push_back(entry.path());
  }
  if (files.empty()) throw ConfigError("no images found in " + dir.string());
  std::sort(files.begin(), files.end());
  std::vector<std::vector<float>> out;
  out.reserve(files.size());
  for (const fs::path& f : files) {
    ImageU8 img = resize_bilinear(center_crop_square(decode_image(f)), resolution, resolution);
    std::vector<float> v(static_cast<std::size_t>(3) * resolution * resolution);
    image_to_float(img, v.data());
    out.push_back(std::move(v));
  }
  return out;
}

void emit_report(const MetricReport& report, const fs::path& out_dir) {
  std::cout << MetricReport::csv_header() << "\n" << report.csv_row() << "\n\n"
            << report.text();
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    const fs::path csv = out_dir / "metrics.csv";
    const bool fresh = !fs::exists(csv);
    std::ofstream file(csv, std::ios::app);
    if (!file) throw std::runtime_error("cannot write " + csv.string());
    if (fresh) file << MetricReport::csv_header() << "\n";
    file << report.csv_row() << "\n";
  }
}

// ---------------------------------------------------------------------------
// subcommand bodies

struct TrainArgs {
  RunConfig cfg;
  fs::path config_file;
  fs::path resume;
  fs::path embeddings;
  bool overwrite = false;
};

void run_train(TrainArgs& args, const std::vector<std::pair<std::string, std::string>>& flags) {
  RunConfig& cfg = args.cfg;
  if (!args.config_file.empty()) apply_config_file(cfg, args.config_file);
  for (const auto& [k, v] : flags) cfg.set(k, v);  // flags override file values
  if (cfg.data.empty()) throw ConfigError("configuration key \"data\" is required for train");
  if (cfg.out.empty())
    cfg.out = default_out_root() / ("run-seed" + std::to_string(cfg.seed));
  cfg.validate();

  UnbalancedDataset data = load_dataset(cfg.data, cfg.resolution, cfg.peer_size);
  for (const std::string& w : data.warnings) std::cerr << "warning: " << w << "\n";

  LinearImageEncoder<float> encoder = make_encoder(cfg.encoder, cfg.feature_dim);
  TextHashEncoder text{encoder.feature_dim()};
  TrainConfig tc = cfg.to_train_config();
  tc.generator.feature_dim = encoder.feature_dim();

  std::vector<ClassEmbedding> cached;
  const std::vector<ClassEmbedding>* precomputed = nullptr;
  if (!args.embeddings.empty()) {
    cached = load_cached_embeddings(args.embeddings, data.fingerprint(), encoder.name);
    precomputed = &cached;
  }

  prepare_run_dir(cfg.out, args.overwrite);
  fs::create_directories(cfg.out / "snapshots");
  fs::create_directories(cfg.out / "checkpoints");
  write_config_echo(cfg.out / "config.echo", cfg);

  Trainer<float> trainer(tc, data, encoder, text, precomputed);
  if (!args.resume.empty()) trainer.load_checkpoint(args.resume);
  if (trainer.step() >= tc.total_steps)
    throw ConfigError("checkpoint is already at step " + std::to_string(trainer.step()) +
                      "; raise steps beyond it to continue");

  std::ofstream losses(cfg.out / "losses.csv");
  if (!losses) throw std::runtime_error("cannot write losses.csv in " + cfg.out.string());
  losses << losses_csv_header() << "\n";

  while (trainer.step() < tc.total_steps) {
    const StepStats stats = trainer.train_step();
    losses << losses_csv_row(stats) << "\n";
    const std::int64_t done = stats.step + 1;
    if (tc.snapshot_interval > 0 && done % tc.snapshot_interval == 0) {
      char name[32];
      std::snprintf(name, sizeof(name), "step-%06lld.png", static_cast<long long>(done));
      trainer.write_snapshot(cfg.out / "snapshots" / name);
    }
    if (tc.checkpoint_interval > 0 && done % tc.checkpoint_interval == 0 &&
        done < tc.total_steps)
      trainer.save_checkpoint(cfg.out / "checkpoints" /
                              ("step-" + std::to_string(done) + ".ckpt"));
    if (done % 100 == 0 || done == tc.total_steps)
      std::cout << "step " << done << "/" << tc.total_steps << "  loss_d=" << stats.loss_d
                << "  loss_g=" << stats.loss_g << "  p=" << stats.ada_p << "\n";
  }
  losses.flush();
  trainer.save_checkpoint(cfg.out / "checkpoints" / "final.ckpt");
  std::cout << "run complete: " << cfg.out.string() << "\n";
}

struct EmbedArgs {
  fs::path data;
  fs::path out;
  int resolution = 32;
  std::size_t peer_size = 0;
  std::string encoder = "stub";
  std::int64_t feature_dim = 512;
};

void run_embed(const EmbedArgs& args) {
  if (args.data.empty()) throw ConfigError("configuration key \"data\" is required for embed");
  if (args.out.empty()) throw ConfigError("embed needs --out (cache file path)");
  UnbalancedDataset data = load_dataset(args.data, args.resolution, args.peer_size);
  LinearImageEncoder<float> encoder = make_encoder(args.encoder, args.feature_dim);
  std::vector<ClassEmbedding> embeddings = {
      compute_class_embedding(encoder, data, kPeerClass),
      compute_class_embedding(encoder, data, kTargetClass)};
  fs::create_directories(args.out.parent_path().empty() ? "." : args.out.parent_path());
  cache_embeddings(args.out, embeddings, data.fingerprint());
  for (const ClassEmbedding& e : embeddings) {
    double norm2 = 0;
    for (float v : e.c_m) norm2 += static_cast<double>(v) * v;
    std::cout << "class " << e.class_id << ": " << e.num_images_averaged
              << " images -> " << e.c_m.size() << "-d embedding, norm "
              << std::sqrt(norm2) << "\n";
  }
  std::cout << "cache written: " << args.out.string() << "\n";
}

struct GenerateArgs {
  fs::path checkpoint;
  fs::path out;
  std::string class_name = "target";
  std::int64_t count = 16;
  std::uint64_t seed = 0;
};

void run_generate(const GenerateArgs& args) {
  if (args.count < 1) throw ConfigError("generate needs --count >= 1");
  const int class_id = class_id_from_name(args.class_name);
  GeneratorSnapshot<float> snap = load_generator_snapshot<float>(args.checkpoint);
  fs::create_directories(args.out);
  NoGradGuard ng;
  RandomStream zs(derive_seed(args.seed, "sample-z"));
  const Tensor<float>& cm = class_id == kTargetClass ? snap.cm_target : snap.cm_peer;
  for (std::int64_t i = 0; i < args.count; ++i) {
    Tensor<float> z = draw_latents(zs, 1, snap.config.latent_dim);
    Tensor<float> img = snap.generator.generate(
        z, cm, derive_seed(args.seed, "sample-noise", static_cast<std::uint64_t>(i)));
    char name[32];
    std::snprintf(name, sizeof(name), "img-%04lld.png", static_cast<long long>(i));
    write_image_png(args.out / name, img);
  }
  std::cout << args.count << " images written to " << args.out.string() << "\n";
}

struct InterpolateArgs {
  fs::path checkpoint;
  fs::path out;
  std::string from_class = "peer";
  std::string to_class = "target";
  int steps = 8;
  std::uint64_t seed = 0;
};

void run_interpolate(const InterpolateArgs& args) {
  if (args.steps < 2) throw ConfigError("interpolate needs --steps >= 2");
  const int from_id = class_id_from_name(args.from_class);
  const int to_id = class_id_from_name(args.to_class);
  GeneratorSnapshot<float> snap = load_generator_snapshot<float>(args.checkpoint);
  fs::create_directories(args.out);
  NoGradGuard ng;
  RandomStream zs(derive_seed(args.seed, "interpolate-z"));
  Tensor<float> z_a = draw_latents(zs, 1, snap.config.latent_dim);
  Tensor<float> z_b = draw_latents(zs, 1, snap.config.latent_dim);
  const Tensor<float>& cm_a = from_id == kTargetClass ? snap.cm_target : snap.cm_peer;
  const Tensor<float>& cm_b = to_id == kTargetClass ? snap.cm_target : snap.cm_peer;
  std::vector<Tensor<float>> frames = snap.generator.interpolate(
      z_a, cm_a, z_b, cm_b, args.steps, derive_seed(args.seed, "interpolate-noise"));
  for (std::size_t i = 0; i < frames.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame-%03zu.png", i);
    write_image_png(args.out / name, frames[i]);
  }
  std::cout << frames.size() << " frames written to " << args.out.string() << "\n";
}

struct EvalArgs {
  fs::path checkpoint;
  fs::path data;
  fs::path source;      // emd only
  fs::path target;      // emd only
  fs::path out;
  std::string class_name = "target";
  std::string encoder = "stub";       // fid feature encoder
  std::string perceptual = "stub";    // intra-lpips / emd distance weights
  std::int64_t feature_dim = 512;
  std::int64_t n_generated = 1000;
  int resolution = 32;                // emd only; others read the checkpoint
  std::uint64_t seed = 0;
  bool to_training_image = false;     // intra-lpips cluster-score variant
};

void run_eval_fid(const EvalArgs& args) {
  if (args.n_generated < 2) throw ConfigError("fid needs --n-generated >= 2");
  const int class_id = class_id_from_name(args.class_name);
  GeneratorSnapshot<float> snap = load_generator_snapshot<float>(args.checkpoint);
  UnbalancedDataset data = load_dataset(args.data, snap.config.resolution);
  const auto& reference = class_id == kTargetClass ? data.target().images
                                                   : data.peer().images;
  LinearImageEncoder<float> encoder = make_encoder(args.encoder, args.feature_dim);
  std::vector<std::vector<float>> generated =
      sample_class_images(snap, class_id, args.n_generated, args.seed);

  GaussianStats gen_stats = corpus_stats(generated, snap.config.resolution, encoder);
  GaussianStats ref_stats = corpus_stats(reference, snap.config.resolution, encoder);

  MetricReport report;
  report.metric = "fid";
  report.value = frechet_distance(gen_stats, ref_stats);
  report.n_generated = args.n_generated;
  report.n_reference = static_cast<std::int64_t>(reference.size());
  report.encoder = encoder.name;
  report.seed = args.seed;
  report.config_echo = {{"checkpoint", args.checkpoint.string()},
                        {"class", args.class_name},
                        {"resolution", std::to_string(snap.config.resolution)},
                        {"step", std::to_string(snap.step)}};
  emit_report(report, args.out);
}

void run_eval_intra(const EvalArgs& args) {
  if (args.n_generated < 1) throw ConfigError("intra-lpips needs --n-generated >= 1");
  GeneratorSnapshot<float> snap = load_generator_snapshot<float>(args.checkpoint);
  UnbalancedDataset data = load_dataset(args.data, snap.config.resolution);
  const auto& training = data.target().images;
  PerceptualDistance dist = make_perceptual(args.perceptual);
  std::vector<std::vector<float>> generated =
      sample_class_images(snap, kTargetClass, args.n_generated, args.seed);

  IntraLpipsResult result = intra_lpips(
      generated, training, snap.config.resolution, dist,
      args.to_training_image ? IntraMode::kToTrainingImage : IntraMode::kPairwise);

  MetricReport report;
  report.metric = "intra-lpips";
  report.value = result.value;
  report.n_generated = args.n_generated;
  report.n_reference = static_cast<std::int64_t>(training.size());
  report.encoder = dist.name();
  report.seed = args.seed;
  report.config_echo = {{"checkpoint", args.checkpoint.string()},
                        {"empty-clusters", std::to_string(result.empty_clusters)},
                        {"mode", args.to_training_image ? "to-training-image" : "pairwise"},
                        {"resolution", std::to_string(snap.config.resolution)},
                        {"small-clusters", std::to_string(result.small_clusters)},
                        {"step", std::to_string(snap.step)}};
  emit_report(report, args.out);
}

void run_eval_emd(const EvalArgs& args) {
  if (args.resolution < 8 || (args.resolution & (args.resolution - 1)) != 0)
    throw ConfigError("resolution must be a power of two >= 8, got " +
                      std::to_string(args.resolution));
  PerceptualDistance dist = make_perceptual(args.perceptual);
  std::vector<std::vector<float>> source = load_plain_image_dir(args.source, args.resolution);
  std::vector<std::vector<float>> target = load_plain_image_dir(args.target, args.resolution);

  MetricReport report;
  report.metric = "lpips-emd";
  report.value = lpips_emd(source, target, args.resolution, dist);
  report.n_generated = static_cast<std::int64_t>(source.size());
  report.n_reference = static_cast<std::int64_t>(target.size());
  report.encoder = dist.name();
  report.seed = args.seed;
  report.config_echo = {{"resolution", std::to_string(args.resolution)},
                        {"source", args.source.string()},
                        {"target", args.target.string()}};
  emit_report(report, args.out);
}

struct InfoArgs {
  fs::path checkpoint;
  fs::path data;
  int resolution = 32;
};

void run_info(const InfoArgs& args) {
  if (args.checkpoint.empty() && args.data.empty())
    throw ConfigError("info needs --checkpoint and/or --data");
  if (!args.checkpoint.empty()) {
    GeneratorSnapshot<float> snap = load_generator_snapshot<float>(args.checkpoint);
    std::cout << "checkpoint: " << args.checkpoint.string() << "\n"
              << "  step: " << snap.step << "\n"
              << "  resolution: " << snap.config.resolution << "\n"
              << "  key: " << format_key_schedule(snap.config.key) << "\n"
              << "  latent-dim: " << snap.config.latent_dim << "\n"
              << "  feature-dim: " << snap.config.feature_dim << "\n";
  }
  if (!args.data.empty()) {
    UnbalancedDataset data = load_dataset(args.data, args.resolution);
    std::cout << "dataset: " << args.data.string() << "\n"
              << "  resolution: " << data.resolution << "\n"
              << "  peer images: " << data.peer().count() << "\n"
              << "  target images: " << data.target().count() << "\n"
              << "  prompts: \"" << data.text_labels[kPeerClass] << "\" / \""
              << data.text_labels[kTargetClass] << "\"\n"
              << "  fingerprint: " << data.fingerprint() << "\n";
    for (const std::string& w : data.warnings) std::cout << "  warning: " << w << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Few-shot two-class conditional GAN: train, generate, evaluate", "pipgan"};
  app.require_subcommand(1);

  // train: every config-schema key is a flag, so --help and the schema can
  // never disagree. Flags override config-file values.
  TrainArgs train_args;
  std::map<std::string, std::string> train_flags;
  CLI::App* train = app.add_subcommand("train", "train a model on a peer/target corpus");
  for (const SchemaEntry& e : config_schema())
    train->add_option("--" + e.key, train_flags[e.key], e.help)->type_name(e.value);
  train->add_option("--config", train_args.config_file,
                    "key=value config file (flags override it)");
  train->add_option("--resume", train_args.resume, "checkpoint to continue from");
  train->add_option("--embeddings", train_args.embeddings,
                    "class-embedding cache from `pipgan embed`");
  train->add_flag("--overwrite", train_args.overwrite, "replace an existing run directory");

  EmbedArgs embed_args;
  CLI::App* embed = app.add_subcommand("embed", "precompute class embeddings into a cache");
  embed->add_option("--data", embed_args.data, "dataset root");
  embed->add_option("--out", embed_args.out, "cache file to write");
  embed->add_option("--resolution", embed_args.resolution, "image resolution");
  embed->add_option("--peer-size", embed_args.peer_size, "cap on peer images, 0 = all");
  embed->add_option("--encoder", embed_args.encoder, "stub, stub:<seed>, or weights:<path>");
  embed->add_option("--feature-dim", embed_args.feature_dim, "stub encoder width");

  GenerateArgs gen_args;
  CLI::App* gen = app.add_subcommand("generate", "render images from a checkpoint");
  gen->add_option("--checkpoint", gen_args.checkpoint, "trained checkpoint")->required();
  gen->add_option("--out", gen_args.out, "output directory")->required();
  gen->add_option("--class", gen_args.class_name, "peer or target");
  gen->add_option("--count", gen_args.count, "number of images");
  gen->add_option("--seed", gen_args.seed, "sampling seed");

  InterpolateArgs interp_args;
  CLI::App* interp = app.add_subcommand("interpolate",
                                        "morph between two samples, optionally across classes");
  interp->add_option("--checkpoint", interp_args.checkpoint, "trained checkpoint")->required();
  interp->add_option("--out", interp_args.out, "output directory")->required();
  interp->add_option("--from", interp_args.from_class, "start class: peer or target");
  interp->add_option("--to", interp_args.to_class, "end class: peer or target");
  interp->add_option("--steps", interp_args.steps, "number of frames (>= 2)");
  interp->add_option("--seed", interp_args.seed, "sampling seed");

  EvalArgs eval_args;
  CLI::App* eval = app.add_subcommand("eval", "score a checkpoint or two image sets");
  eval->require_subcommand(1);
  CLI::App* fid = eval->add_subcommand("fid",
                                       "feature-space distance between generated and real sets");
  fid->add_option("--checkpoint", eval_args.checkpoint, "trained checkpoint")->required();
  fid->add_option("--data", eval_args.data, "dataset root for the reference set")->required();
  fid->add_option("--class", eval_args.class_name, "peer or target");
  fid->add_option("--encoder", eval_args.encoder, "feature encoder spec");
  fid->add_option("--feature-dim", eval_args.feature_dim, "stub encoder width");
  fid->add_option("--n-generated", eval_args.n_generated, "generated sample count");
  fid->add_option("--seed", eval_args.seed, "sampling seed");
  fid->add_option("--out", eval_args.out, "run directory to append metrics.csv");

  CLI::App* intra = eval->add_subcommand("intra-lpips",
                                         "diversity of generated images within target clusters");
  intra->add_option("--checkpoint", eval_args.checkpoint, "trained checkpoint")->required();
  intra->add_option("--data", eval_args.data, "dataset root (target images seed the clusters)")
      ->required();
  intra->add_option("--perceptual", eval_args.perceptual, "perceptual distance spec");
  intra->add_option("--n-generated", eval_args.n_generated, "generated sample count");
  intra->add_option("--seed", eval_args.seed, "sampling seed");
  intra->add_flag("--to-training-image", eval_args.to_training_image,
                  "score clusters by distance to their training image instead of pairwise");
  intra->add_option("--out", eval_args.out, "run directory to append metrics.csv");

  CLI::App* emd = eval->add_subcommand("emd",
                                       "nearest-neighbour transport distance between two sets");
  emd->add_option("--source", eval_args.source, "directory of images")->required();
  emd->add_option("--target", eval_args.target, "directory of images")->required();
  emd->add_option("--resolution", eval_args.resolution, "comparison resolution");
  emd->add_option("--perceptual", eval_args.perceptual, "perceptual distance spec");
  emd->add_option("--out", eval_args.out, "run directory to append metrics.csv");

  InfoArgs info_args;
  CLI::App* info = app.add_subcommand("info", "describe a checkpoint or dataset");
  info->add_option("--checkpoint", info_args.checkpoint, "checkpoint to describe");
  info->add_option("--data", info_args.data, "dataset root to describe");
  info->add_option("--resolution", info_args.resolution, "resolution for dataset loading");

  train->callback([&] {
    std::vector<std::pair<std::string, std::string>> set_flags;
    for (const SchemaEntry& e : config_schema())
      if (train->count("--" + e.key) > 0) set_flags.emplace_back(e.key, train_flags[e.key]);
    run_train(train_args, set_flags);
  });
  embed->callback([&] { run_embed(embed_args); });
  gen->callback([&] { run_generate(gen_args); });
  interp->callback([&] { run_interpolate(interp_args); });
  fid->callback([&] { run_eval_fid(eval_args); });
  intra->callback([&] { run_eval_intra(eval_args); });
  emd->callback([&] { run_eval_emd(eval_args); });
  info->callback([&] { run_info(info_args); });

  try {
    app.parse(argc, argv);
    return 0;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "pipgan: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "pipgan: configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "pipgan: error: " << e.what() << "\n";
    return 1;
  }
}
