// Subprocess tests for the pipgan command-line tool. The binary path arrives
// as "--bin <path>" (stripped before doctest sees the arguments).
#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "pip/config.hpp"
#include "pip/image.hpp"
#include "pip/metrics.hpp"
#include "pip/rng.hpp"
#include "pip/trainer.hpp"

namespace fs = std::filesystem;
using namespace pip;

static std::string g_bin;

namespace {

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

// Runs the CLI with sh, capturing stdout/stderr. `env_prefix` may carry
// VAR=value assignments.
RunResult run_cli(const std::string& args, const std::string& env_prefix = "") {
  static int counter = 0;
  const fs::path dir = fs::temp_directory_path() / "pip-cli-io";
  fs::create_directories(dir);
  const fs::path out = dir / ("out-" + std::to_string(counter));
  const fs::path err = dir / ("err-" + std::to_string(counter));
  ++counter;
  const std::string cmd = env_prefix + (env_prefix.empty() ? "" : " ") + g_bin + " " + args +
                          " > " + out.string() + " 2> " + err.string();
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

// Procedural two-class corpus written straight to disk: discs (peer) and
// rings (target) over dim noise.
void write_corpus(const fs::path& root, int res, int n_peer, int n_target) {
  fs::create_directories(root / "peer");
  fs::create_directories(root / "target");
  RandomStream rng(derive_seed(42, "cli-corpus"));
  auto draw = [&](const fs::path& dir, int n, bool ring) {
    for (int i = 0; i < n; ++i) {
      ImageU8 img;
      img.width = res;
      img.height = res;
      img.pixels.assign(static_cast<std::size_t>(res) * res * 3, 0);
      const double cx = rng.uniform(0.3, 0.7) * res, cy = rng.uniform(0.3, 0.7) * res;
      const double radius = rng.uniform(0.18, 0.3) * res;
      std::uint8_t color[3] = {static_cast<std::uint8_t>(rng.uniform_index(256)),
                               static_cast<std::uint8_t>(rng.uniform_index(256)),
                               static_cast<std::uint8_t>(rng.uniform_index(256))};
      for (int y = 0; y < res; ++y)
        for (int x = 0; x < res; ++x) {
          const double d = std::hypot(x - cx, y - cy);
          const bool inside = ring ? (d < radius && d > radius * 0.5) : (d < radius);
          for (int c = 0; c < 3; ++c)
            img.pixels[(static_cast<std::size_t>(y) * res + x) * 3 + c] =
                inside ? color[c] : static_cast<std::uint8_t>(rng.uniform_index(48));
        }
      char name[32];
      std::snprintf(name, sizeof(name), "im-%04d.png", i);
      write_png(dir / name, img);
    }
  };
  draw(root / "peer", n_peer, false);
  draw(root / "target", n_target, true);
  std::ofstream(root / "labels.txt") << "a photo of a disc\na photo of a ring\n";
}

constexpr int kRes = 16;
const char* kTrainKnobs =
    "--resolution 16 --batch 4 --latent-dim 8 --feature-dim 12 --width-mult 0.0625 "
    "--key 4+8 --dir-interval 4 --snapshot-interval 6 --checkpoint-interval 6";

// One corpus and one baseline 12-step run shared by the test cases.
struct Fixture {
  fs::path root;
  fs::path corpus;
  fs::path run_a;

  Fixture() {
    root = fs::temp_directory_path() / ("pip-cli-" + std::to_string(::getpid()));
    fs::remove_all(root);
    corpus = root / "corpus";
    write_corpus(corpus, kRes, 24, 6);
    run_a = root / "run-a";
    RunResult r = run_cli("train --data " + corpus.string() + " --out " + run_a.string() +
                          " --steps 12 --seed 7 " + kTrainKnobs);
    REQUIRE(r.code == 0);
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

}  // namespace

TEST_CASE("help output lists every configuration key as a flag") {
  RunResult top = run_cli("--help");
  CHECK(top.code == 0);
  CHECK(top.out.find("train") != std::string::npos);

  RunResult help = run_cli("train --help");
  CHECK(help.code == 0);
  for (const SchemaEntry& e : config_schema())
    CHECK(help.out.find("--" + e.key) != std::string::npos);
}

TEST_CASE("a training run writes its full record") {
  Fixture& f = fixture();
  CHECK(slurp(f.run_a / "config.echo").find("key=4+8") != std::string::npos);

  const auto rows = lines_of(slurp(f.run_a / "losses.csv"));
  REQUIRE(rows.size() == 13);  // header + 12 steps
  CHECK(rows[0] == losses_csv_header());
  CHECK(rows[1].rfind("0,", 0) == 0);
  CHECK(rows[12].rfind("11,", 0) == 0);

  for (const char* name : {"step-000006.png", "step-000012.png"}) {
    ImageU8 grid = decode_image(f.run_a / "snapshots" / name);
    CHECK(grid.width == 4 * kRes);
    CHECK(grid.height == 4 * kRes);
  }
  CHECK(fs::exists(f.run_a / "checkpoints" / "step-6.ckpt"));
  CHECK(fs::exists(f.run_a / "checkpoints" / "final.ckpt"));
}

TEST_CASE("run directories are append-only unless overwritten") {
  Fixture& f = fixture();
  const std::string cmd = "train --data " + f.corpus.string() + " --out " +
                          (f.root / "run-ow").string() + " --steps 2 " + kTrainKnobs;
  CHECK(run_cli(cmd).code == 0);
  RunResult again = run_cli(cmd);
  CHECK(again.code == 2);
  CHECK(again.err.find("--overwrite") != std::string::npos);
  CHECK(run_cli(cmd + " --overwrite").code == 0);
}

TEST_CASE("training is deterministic in the seed") {
  Fixture& f = fixture();
  const std::string base = "train --data " + f.corpus.string() + " --steps 12 --seed 7 " +
                           std::string(kTrainKnobs) + " --out ";
  REQUIRE(run_cli(base + (f.root / "run-b").string()).code == 0);
  CHECK(slurp(f.root / "run-b" / "losses.csv") == slurp(f.run_a / "losses.csv"));

  const std::string other = "train --data " + f.corpus.string() + " --steps 12 --seed 8 " +
                            std::string(kTrainKnobs) + " --out " +
                            (f.root / "run-c").string();
  REQUIRE(run_cli(other).code == 0);
  CHECK(slurp(f.root / "run-c" / "losses.csv") != slurp(f.run_a / "losses.csv"));
}

TEST_CASE("options for removed regularizers are rejected by name") {
  Fixture& f = fixture();
  RunResult flag = run_cli("train --data x --path-length-weight 2");
  CHECK(flag.code == 2);
  CHECK(flag.err.find("--path-length-weight") != std::string::npos);

  const fs::path cfg = f.root / "bad.cfg";
  std::ofstream(cfg) << "style-mixing=0.9\n";
  RunResult filekey = run_cli("train --data x --config " + cfg.string());
  CHECK(filekey.code == 2);
  CHECK(filekey.err.find("style-mixing") != std::string::npos);
}

TEST_CASE("a resumed run reproduces the interrupted one bitwise") {
  Fixture& f = fixture();
  const fs::path resumed = f.root / "run-resume";
  RunResult r = run_cli("train --data " + f.corpus.string() + " --out " + resumed.string() +
                        " --steps 12 --seed 7 " + kTrainKnobs + " --resume " +
                        (f.run_a / "checkpoints" / "step-6.ckpt").string());
  REQUIRE(r.code == 0);

  const auto full = lines_of(slurp(f.run_a / "losses.csv"));
  const auto tail = lines_of(slurp(resumed / "losses.csv"));
  REQUIRE(tail.size() == 7);  // header + steps 6..11
  CHECK(tail[0] == losses_csv_header());
  for (int i = 0; i < 6; ++i) CHECK(tail[static_cast<std::size_t>(1 + i)] == full[static_cast<std::size_t>(7 + i)]);
}

TEST_CASE("generation is deterministic and class-conditional") {
  Fixture& f = fixture();
  const std::string ckpt = (f.run_a / "checkpoints" / "final.ckpt").string();
  const fs::path g1 = f.root / "gen-1", g2 = f.root / "gen-2", gp = f.root / "gen-peer";
  REQUIRE(run_cli("generate --checkpoint " + ckpt + " --out " + g1.string() +
                  " --class target --count 4 --seed 3").code == 0);
  REQUIRE(run_cli("generate --checkpoint " + ckpt + " --out " + g2.string() +
                  " --class target --count 4 --seed 3").code == 0);
  REQUIRE(run_cli("generate --checkpoint " + ckpt + " --out " + gp.string() +
                  " --class peer --count 4 --seed 3").code == 0);
  for (int i = 0; i < 4; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "img-%04d.png", i);
    CHECK(slurp(g1 / name) == slurp(g2 / name));
    CHECK(slurp(g1 / name) != slurp(gp / name));
    ImageU8 img = decode_image(g1 / name);
    CHECK(img.width == kRes);
    CHECK(img.height == kRes);
  }
}

TEST_CASE("interpolation renders the requested frames") {
  Fixture& f = fixture();
  const fs::path out = f.root / "interp";
  REQUIRE(run_cli("interpolate --checkpoint " +
                  (f.run_a / "checkpoints" / "final.ckpt").string() + " --out " + out.string() +
                  " --from peer --to target --steps 5 --seed 2").code == 0);
  int frames = 0;
  for (const auto& e : fs::directory_iterator(out)) {
    ImageU8 img = decode_image(e.path());
    CHECK(img.width == kRes);
    ++frames;
  }
  CHECK(frames == 5);

  CHECK(run_cli("interpolate --checkpoint x --out y --steps 1").code == 2);
}

TEST_CASE("the transport metric equals the library value on the same inputs") {
  Fixture& f = fixture();
  const fs::path a = f.root / "emd-a", b = f.root / "emd-b";
  fs::create_directories(a);
  fs::create_directories(b);
  fs::copy_file(f.corpus / "peer" / "im-0000.png", a / "x.png");
  fs::copy_file(f.corpus / "target" / "im-0001.png", b / "y.png");

  RunResult r = run_cli("eval emd --source " + a.string() + " --target " + b.string() +
                        " --resolution 16 --perceptual stub:2");
  REQUIRE(r.code == 0);
  const auto out_lines = lines_of(r.out);
  REQUIRE(out_lines.size() >= 2);
  CHECK(out_lines[0] == MetricReport::csv_header());
  // row: metric,value,...
  const std::string row = out_lines[1];
  const auto c1 = row.find(','), c2 = row.find(',', row.find(',') + 1);
  const double cli_value = std::strtod(row.substr(c1 + 1, c2 - c1 - 1).c_str(), nullptr);

  auto load_one = [&](const fs::path& p) {
    ImageU8 img = resize_bilinear(center_crop_square(decode_image(p)), 16, 16);
    std::vector<float> v(3 * 16 * 16);
    image_to_float(img, v.data());
    return std::vector<std::vector<float>>{v};
  };
  const double lib_value =
      lpips_emd(load_one(a / "x.png"), load_one(b / "y.png"), 16, PerceptualDistance::stub(2));
  CHECK(cli_value == doctest::Approx(lib_value).epsilon(1e-7));
  CHECK(r.out.find("lpips-emd = ") != std::string::npos);
}

TEST_CASE("evaluation appends rows to the run's metric log") {
  Fixture& f = fixture();
  const std::string ckpt = (f.run_a / "checkpoints" / "final.ckpt").string();
  const std::string common = " --checkpoint " + ckpt + " --data " + f.corpus.string() +
                             " --out " + f.run_a.string();
  REQUIRE(run_cli("eval fid" + common + " --n-generated 8 --encoder stub:4 --feature-dim 6")
              .code == 0);
  REQUIRE(run_cli("eval intra-lpips" + common + " --n-generated 6 --perceptual stub:2")
              .code == 0);
  const auto rows = lines_of(slurp(f.run_a / "metrics.csv"));
  REQUIRE(rows.size() == 3);
  CHECK(rows[0] == MetricReport::csv_header());
  CHECK(rows[1].rfind("fid,", 0) == 0);
  CHECK(rows[2].rfind("intra-lpips,", 0) == 0);
}

TEST_CASE("precomputed embeddings reproduce the self-computed run") {
  Fixture& f = fixture();
  const fs::path cache = f.root / "embeddings.bin";
  RunResult e = run_cli("embed --data " + f.corpus.string() + " --out " + cache.string() +
                        " --resolution 16 --feature-dim 12");
  REQUIRE(e.code == 0);
  CHECK(e.out.find("class 0: 24 images") != std::string::npos);
  CHECK(e.out.find("class 1: 6 images") != std::string::npos);

  const fs::path run = f.root / "run-cache";
  REQUIRE(run_cli("train --data " + f.corpus.string() + " --out " + run.string() +
                  " --steps 12 --seed 7 " + kTrainKnobs + " --embeddings " + cache.string())
              .code == 0);
  CHECK(slurp(run / "losses.csv") == slurp(f.run_a / "losses.csv"));
}

TEST_CASE("info describes checkpoints and datasets") {
  Fixture& f = fixture();
  RunResult r = run_cli("info --checkpoint " +
                        (f.run_a / "checkpoints" / "final.ckpt").string() + " --data " +
                        f.corpus.string() + " --resolution 16");
  CHECK(r.code == 0);
  CHECK(r.out.find("step: 12") != std::string::npos);
  CHECK(r.out.find("key: 4+8") != std::string::npos);
  CHECK(r.out.find("peer images: 24") != std::string::npos);
  CHECK(r.out.find("target images: 6") != std::string::npos);

  CHECK(run_cli("info").code == 2);
}

TEST_CASE("the runs root honours its environment variable") {
  Fixture& f = fixture();
  const fs::path root = f.root / "env-runs";
  RunResult r = run_cli("train --data " + f.corpus.string() + " --steps 2 --seed 5 " +
                        kTrainKnobs, "PIP_RUNS_DIR=" + root.string());
  CHECK(r.code == 0);
  CHECK(fs::exists(root / "run-seed5" / "losses.csv"));
}

int main(int argc, char** argv) {
  std::vector<char*> rest;
  for (int i = 0; i < argc; ++i) {
    if (std::string(argv[i]) == "--bin" && i + 1 < argc) {
      g_bin = argv[i + 1];
      ++i;
      continue;
    }
    rest.push_back(argv[i]);
  }
  if (g_bin.empty()) {
    std::fprintf(stderr, "usage: test_cli --bin <path-to-pipgan>\n");
    return 1;
  }
  doctest::Context context(static_cast<int>(rest.size()), rest.data());
  const int rc = context.run();
  fs::remove_all(fs::temp_directory_path() / ("pip-cli-" + std::to_string(::getpid())));
  fs::remove_all(fs::temp_directory_path() / "pip-cli-io");
  return rc;
}
