#include "pip/metrics.hpp"

#include <Eigen/Eigenvalues>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "pip/ops.hpp"
#include "pip/serialize.hpp"
#include "pip/tensor.hpp"

namespace pip {

namespace {

constexpr double kEigTolerance = 1e-6;

// Symmetric PSD square root with the shared clamping rule.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m, const char* what) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (m + m.transpose()));
  Eigen::VectorXd ev = eig.eigenvalues();
  double most_negative = 0;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev[i] < most_negative) most_negative = ev[i];
    if (ev[i] < 0) ev[i] = 0;
  }
  if (most_negative < -kEigTolerance) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s is not positive semidefinite: most negative eigenvalue %g",
                  what, most_negative);
    throw std::invalid_argument(buf);
  }
  return eig.eigenvectors() * ev.cwiseSqrt().asDiagonal() * eig.eigenvectors().transpose();
}

std::string format_value(double v) {
  char b[40];
  std::snprintf(b, sizeof b, "%.9g", v);
  return std::string(b);
}

}  // namespace

GaussianStats feature_stats(const Eigen::MatrixXd& features) {
  const Eigen::Index n = features.rows();
  if (n < 2)
    throw std::invalid_argument("feature statistics need at least 2 samples, got " +
                                std::to_string(n));
  GaussianStats s;
  s.sample_count = n;
  s.mean = features.colwise().mean();
  const Eigen::MatrixXd centered = features.rowwise() - s.mean.transpose();
  s.cov = centered.transpose() * centered / static_cast<double>(n - 1);
  return s;
}

Eigen::MatrixXd corpus_feature_matrix(const std::vector<std::vector<float>>& images,
                                      int resolution, const LinearImageEncoder<float>& encoder,
                                      std::int64_t batch_size) {
  if (images.empty()) throw std::invalid_argument("no images to encode");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  NoGradGuard ng;
  const std::int64_t n = static_cast<std::int64_t>(images.size());
  const std::int64_t pixels = 3LL * resolution * resolution;
  const std::int64_t dim = encoder.feature_dim();
  Eigen::MatrixXd out(n, dim);
  for (std::int64_t start = 0; start < n; start += batch_size) {
    const std::int64_t b = std::min(batch_size, n - start);
    FlatArray<float> data(b * pixels);
    for (std::int64_t i = 0; i < b; ++i) {
      const auto& img = images[static_cast<std::size_t>(start + i)];
      if (static_cast<std::int64_t>(img.size()) != pixels)
        throw std::invalid_argument("image " + std::to_string(start + i) +
                                    " does not match the stated resolution");
      std::copy(img.begin(), img.end(), data.data() + i * pixels);
    }
    Tensor<float> feats =
        encoder(Tensor<float>::from_array({b, 3, resolution, resolution}, std::move(data)));
    for (std::int64_t i = 0; i < b; ++i)
      for (std::int64_t d = 0; d < dim; ++d)
        out(start + i, d) = static_cast<double>(feats.at(i * dim + d));
  }
  return out;
}

GaussianStats corpus_stats(const std::vector<std::vector<float>>& images, int resolution,
                           const LinearImageEncoder<float>& encoder, std::int64_t batch_size) {
  return feature_stats(corpus_feature_matrix(images, resolution, encoder, batch_size));
}

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
  if (a.mean.size() != b.mean.size())
    throw std::invalid_argument("Fréchet distance needs equal dimensions, got " +
                                std::to_string(a.mean.size()) + " and " +
                                std::to_string(b.mean.size()));
  const Eigen::MatrixXd sa = psd_sqrt(a.cov, "first covariance");
  // M = sqrt(Sa) Sb sqrt(Sa) shares eigenvalues with Sa Sb but is symmetric.
  const Eigen::MatrixXd m = sa * (0.5 * (b.cov + b.cov.transpose())) * sa;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (m + m.transpose()));
  Eigen::VectorXd ev = eig.eigenvalues();
  double most_negative = 0;
  double trace_sqrt = 0;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev[i] < most_negative) most_negative = ev[i];
    if (ev[i] > 0) trace_sqrt += std::sqrt(ev[i]);
  }
  if (most_negative < -kEigTolerance) {
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "covariance product is not positive semidefinite: most negative eigenvalue %g",
                  most_negative);
    throw std::invalid_argument(buf);
  }
  const double mean_term = (a.mean - b.mean).squaredNorm();
  return mean_term + a.cov.trace() + b.cov.trace() - 2.0 * trace_sqrt;
}

// ---------------------------------------------------------------------------
// Perceptual distance stack

PerceptualDistance PerceptualDistance::stub(std::uint64_t seed) {
  static constexpr std::int64_t kChannels[] = {3, 8, 16, 24};
  PerceptualDistance d;
  d.name_ = "stub-perceptual:" + std::to_string(seed);
  for (int l = 0; l < 3; ++l) {
    Level lv;
    lv.in_ch = kChannels[l];
    lv.out_ch = kChannels[l + 1];
    lv.kernel = 3;
    RandomStream rng(derive_seed(seed, "perceptual-level", static_cast<std::uint64_t>(l)));
    const std::size_t count = static_cast<std::size_t>(lv.out_ch * lv.in_ch * 9);
    lv.weight.resize(count);
    const double scale = 1.0 / std::sqrt(static_cast<double>(lv.in_ch * 9));
    for (auto& w : lv.weight) w = static_cast<float>(rng.normal() * scale);
    d.levels_.push_back(std::move(lv));
  }
  return d;
}

void PerceptualDistance::save(const std::filesystem::path& path) const {
  NamedArrays ar;
  ar.set_meta("format", "perceptual-distance");
  ar.set_meta("name", name_);
  ar.set_meta("levels", std::to_string(levels_.size()));
  for (std::size_t l = 0; l < levels_.size(); ++l) {
    const std::string p = "level." + std::to_string(l);
    ar.set_meta(p + ".in_ch", std::to_string(levels_[l].in_ch));
    ar.set_meta(p + ".out_ch", std::to_string(levels_[l].out_ch));
    ar.set_meta(p + ".kernel", std::to_string(levels_[l].kernel));
    ar.add_array(p + ".weight", levels_[l].weight);
  }
  save_named_arrays(path, ar);
}

PerceptualDistance PerceptualDistance::from_archive(const std::filesystem::path& path) {
  NamedArrays ar = load_named_arrays(path);
  if (ar.meta_required("format") != "perceptual-distance")
    throw ArchiveError(path.string() + " is not a perceptual-distance weight file");
  PerceptualDistance d;
  d.name_ = ar.meta_required("name");
  const int n = std::stoi(ar.meta_required("levels"));
  for (int l = 0; l < n; ++l) {
    const std::string p = "level." + std::to_string(l);
    Level lv;
    lv.in_ch = std::stoll(ar.meta_required(p + ".in_ch"));
    lv.out_ch = std::stoll(ar.meta_required(p + ".out_ch"));
    lv.kernel = std::stoll(ar.meta_required(p + ".kernel"));
    lv.weight = ar.array_required(p + ".weight");
    if (static_cast<std::int64_t>(lv.weight.size()) != lv.out_ch * lv.in_ch * lv.kernel * lv.kernel)
      throw ArchiveError("perceptual level " + std::to_string(l) + " has a mis-sized weight");
    if (l > 0 && lv.in_ch != d.levels_.back().out_ch)
      throw ArchiveError("perceptual level " + std::to_string(l) +
                         " does not chain from the previous level");
    d.levels_.push_back(std::move(lv));
  }
  if (d.levels_.empty() || d.levels_.front().in_ch != 3)
    throw ArchiveError(path.string() + " must start from a 3-channel level");
  return d;
}

PerceptualDistance::Features PerceptualDistance::features(
    const std::vector<std::vector<float>>& images, int resolution) const {
  if (images.empty()) throw std::invalid_argument("no images to featurize");
  if (resolution < 8 || !is_power_of_two(resolution))
    throw std::invalid_argument("perceptual features need a power-of-two resolution >= 8");
  NoGradGuard ng;
  const std::int64_t n = static_cast<std::int64_t>(images.size());
  const std::int64_t pixels = 3LL * resolution * resolution;

  Features out;
  out.count = n;
  out.levels.resize(levels_.size());

  const std::int64_t kBatch = 32;
  for (std::int64_t start = 0; start < n; start += kBatch) {
    const std::int64_t b = std::min(kBatch, n - start);
    FlatArray<float> data(b * pixels);
    for (std::int64_t i = 0; i < b; ++i) {
      const auto& img = images[static_cast<std::size_t>(start + i)];
      if (static_cast<std::int64_t>(img.size()) != pixels)
        throw std::invalid_argument("image " + std::to_string(start + i) +
                                    " does not match the stated resolution");
      std::copy(img.begin(), img.end(), data.data() + i * pixels);
    }
    Tensor<float> x = Tensor<float>::from_array({b, 3, resolution, resolution}, std::move(data));

    for (std::size_t l = 0; l < levels_.size(); ++l) {
      const Level& lv = levels_[l];
      FlatArray<float> w(static_cast<Eigen::Index>(lv.weight.size()));
      std::copy(lv.weight.begin(), lv.weight.end(), w.data());
      Tensor<float> weight = Tensor<float>::from_array(
          {lv.out_ch, lv.in_ch, lv.kernel, lv.kernel}, std::move(w));
      Tensor<float> act = leaky_relu(conv2d(x, weight, lv.kernel / 2), 0.2);

      const std::int64_t C = lv.out_ch;
      const std::int64_t H = act.dim(2), W = act.dim(3);
      const std::int64_t hw = H * W;
      auto& rows = out.levels[l];
      if (rows.rows.size() == 0) {
        rows.rows.resize(n, C * hw);
        rows.spatial = static_cast<double>(hw);
      }
      // channel-unit normalization at each pixel
      for (std::int64_t i = 0; i < b; ++i) {
        const float* base = act.data() + i * C * hw;
        float* dst = rows.rows.row(start + i).data();
        for (std::int64_t p = 0; p < hw; ++p) {
          double sq = 0;
          for (std::int64_t c = 0; c < C; ++c) {
            const float v = base[c * hw + p];
            sq += static_cast<double>(v) * v;
          }
          const float inv = static_cast<float>(1.0 / std::sqrt(sq + 1e-10));
          for (std::int64_t c = 0; c < C; ++c) dst[c * hw + p] = base[c * hw + p] * inv;
        }
      }
      if (l + 1 < levels_.size()) x = avgpool2x(act);
    }
  }
  return out;
}

double PerceptualDistance::pair_distance(const Features& a, std::int64_t i, const Features& b,
                                         std::int64_t j) const {
  if (a.levels.size() != b.levels.size())
    throw std::invalid_argument("feature caches come from different stacks");
  double acc = 0;
  for (std::size_t l = 0; l < a.levels.size(); ++l) {
    const auto& la = a.levels[l];
    const auto& lb = b.levels[l];
    if (la.rows.cols() != lb.rows.cols())
      throw std::invalid_argument("feature caches disagree on level width");
    acc += static_cast<double>((la.rows.row(i) - lb.rows.row(j)).squaredNorm()) / la.spatial;
  }
  return acc / static_cast<double>(a.levels.size());
}

Eigen::MatrixXd PerceptualDistance::distance_matrix(const Features& a, const Features& b) const {
  Eigen::MatrixXd out(a.count, b.count);
  for (std::int64_t i = 0; i < a.count; ++i)
    for (std::int64_t j = 0; j < b.count; ++j) out(i, j) = pair_distance(a, i, b, j);
  return out;
}

double PerceptualDistance::distance(const std::vector<float>& image_a,
                                    const std::vector<float>& image_b, int resolution) const {
  const Features fa = features({image_a}, resolution);
  const Features fb = features({image_b}, resolution);
  return pair_distance(fa, 0, fb, 0);
}

// ---------------------------------------------------------------------------
// Clustered diversity and nearest-neighbour scores

IntraLpipsResult intra_lpips_from_matrices(const Eigen::MatrixXd& gen_to_train,
                                           const Eigen::MatrixXd& gen_to_gen, IntraMode mode) {
  const Eigen::Index g = gen_to_train.rows();
  const Eigen::Index k = gen_to_train.cols();
  if (g < 1) throw std::invalid_argument("intra score needs at least one generated image");
  if (k < 1) throw std::invalid_argument("intra score needs at least one training image");
  if (gen_to_gen.rows() != g || gen_to_gen.cols() != g)
    throw std::invalid_argument("pairwise matrix does not match the generated count");

  IntraLpipsResult res;
  res.assignment.resize(static_cast<std::size_t>(g));
  std::vector<std::vector<Eigen::Index>> clusters(static_cast<std::size_t>(k));
  for (Eigen::Index i = 0; i < g; ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < k; ++j)
      if (gen_to_train(i, j) < gen_to_train(i, best)) best = j;  // ties keep the lowest index
    res.assignment[static_cast<std::size_t>(i)] = best;
    clusters[static_cast<std::size_t>(best)].push_back(i);
  }

  double sum = 0;
  std::int64_t counted = 0;
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    const auto& members = clusters[c];
    if (members.empty()) {
      ++res.empty_clusters;
      continue;
    }
    ++counted;
    if (mode == IntraMode::kToTrainingImage) {
      double acc = 0;
      for (Eigen::Index m : members) acc += gen_to_train(m, static_cast<Eigen::Index>(c));
      sum += acc / static_cast<double>(members.size());
      continue;
    }
    if (members.size() < 2) {
      ++res.small_clusters;  // contributes 0
      continue;
    }
    double acc = 0;
    std::int64_t pairs = 0;
    for (std::size_t a = 0; a < members.size(); ++a)
      for (std::size_t b = a + 1; b < members.size(); ++b) {
        acc += gen_to_gen(members[a], members[b]);
        ++pairs;
      }
    sum += acc / static_cast<double>(pairs);
  }
  res.value = sum / static_cast<double>(counted);
  return res;
}

IntraLpipsResult intra_lpips(const std::vector<std::vector<float>>& generated,
                             const std::vector<std::vector<float>>& training, int resolution,
                             const PerceptualDistance& dist, IntraMode mode) {
  if (generated.empty()) throw std::invalid_argument("no generated images to score");
  if (training.empty()) throw std::invalid_argument("no training images to cluster against");
  const PerceptualDistance::Features fg = dist.features(generated, resolution);
  const PerceptualDistance::Features ft = dist.features(training, resolution);
  return intra_lpips_from_matrices(dist.distance_matrix(fg, ft), dist.distance_matrix(fg, fg),
                                   mode);
}

double emd_from_matrix(const Eigen::MatrixXd& cost) {
  if (cost.rows() < 1 || cost.cols() < 1)
    throw std::invalid_argument("cost matrix must be non-empty");
  const double by_rows = cost.rowwise().minCoeff().mean();
  const double by_cols = cost.colwise().minCoeff().mean();
  return std::max(by_rows, by_cols);
}

double lpips_emd(const std::vector<std::vector<float>>& source,
                 const std::vector<std::vector<float>>& target, int resolution,
                 const PerceptualDistance& dist) {
  if (source.empty() || target.empty())
    throw std::invalid_argument("both image sets must be non-empty");
  const PerceptualDistance::Features fs = dist.features(source, resolution);
  const PerceptualDistance::Features ft = dist.features(target, resolution);
  return emd_from_matrix(dist.distance_matrix(fs, ft));
}

// ---------------------------------------------------------------------------
// Reporting

std::string MetricReport::csv_header() {
  return "metric,value,n_generated,n_reference,encoder,seed";
}

std::string MetricReport::csv_row() const {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s,%s,%" PRId64 ",%" PRId64 ",%s,%" PRIu64, metric.c_str(),
                format_value(value).c_str(), n_generated, n_reference, encoder.c_str(), seed);
  return std::string(buf);
}

std::string MetricReport::text() const {
  std::string out;
  out += metric + " = " + format_value(value) + "\n";
  out += "  generated: " + std::to_string(n_generated) + "\n";
  out += "  reference: " + std::to_string(n_reference) + "\n";
  out += "  encoder:   " + encoder + "\n";
  out += "  seed:      " + std::to_string(seed) + "\n";
  for (const auto& [k, v] : config_echo) out += "  " + k + ": " + v + "\n";
  return out;
}

}  // namespace pip
