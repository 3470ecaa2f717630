#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "pip/encoders.hpp"

// Evaluation metrics over pluggable perceptual encoders: Fréchet feature
// distance, the clustered intra-set perceptual diversity score, and the
// symmetric nearest-neighbour earth-mover proxy. The numeric cores operate on
// plain matrices so they can be pinned against brute-force oracles; image
// wrappers feed them through the encoder stack.

namespace pip {

struct GaussianStats {
  Eigen::VectorXd mean;  // [D]
  Eigen::MatrixXd cov;   // [D,D], unbiased (divisor n-1)
  std::int64_t sample_count = 0;
};

// Mean/covariance of feature rows [n, D]; n >= 2 required.
GaussianStats feature_stats(const Eigen::MatrixXd& features);

// Encode CHW [-1,1] images (3*R*R floats each) into feature rows.
Eigen::MatrixXd corpus_feature_matrix(const std::vector<std::vector<float>>& images,
                                      int resolution, const LinearImageEncoder<float>& encoder,
                                      std::int64_t batch_size = 32);

GaussianStats corpus_stats(const std::vector<std::vector<float>>& images, int resolution,
                           const LinearImageEncoder<float>& encoder,
                           std::int64_t batch_size = 32);

// ||mu_a - mu_b||^2 + Tr(Sa + Sb - 2 (Sa Sb)^{1/2}), with the matrix square
// root taken through a symmetric eigendecomposition of sqrt(Sa) Sb sqrt(Sa).
// Eigenvalues in (-1e-6, 0) are clamped to zero; anything more negative is an
// error naming the most negative eigenvalue.
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

// Multi-level perceptual feature distance: a fixed conv stack (three levels,
// average-pooled between them), channel-unit-normalized at every pixel;
// distance = mean over levels of the spatially averaged squared feature
// difference. The stub stack is fully determined by its seed; externally
// trained stacks load through the same archive interface.
class PerceptualDistance {
 public:
  struct Level {
    std::int64_t in_ch = 0, out_ch = 0, kernel = 3;
    std::vector<float> weight;  // [out, in, k, k] row-major
  };

  static PerceptualDistance stub(std::uint64_t seed = 0);
  static PerceptualDistance from_archive(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  const std::string& name() const { return name_; }

  // Cached normalized features for an image set; rows align with input order.
  using RowMatrixXf =
      Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  struct Features {
    struct LevelRows {
      RowMatrixXf rows;    // [n, C*H*W], one contiguous row per image
      double spatial = 1;  // H*W divisor for the spatial mean
    };
    std::vector<LevelRows> levels;
    std::int64_t count = 0;
  };

  Features features(const std::vector<std::vector<float>>& images, int resolution) const;

  // Distance between cached rows; exactly symmetric, zero on identical rows.
  double pair_distance(const Features& a, std::int64_t i, const Features& b,
                       std::int64_t j) const;

  // [a.count, b.count] matrix of pair distances.
  Eigen::MatrixXd distance_matrix(const Features& a, const Features& b) const;

  double distance(const std::vector<float>& image_a, const std::vector<float>& image_b,
                  int resolution) const;

 private:
  std::vector<Level> levels_;
  std::string name_;
};

// Cluster score over a fixed assignment: kPairwise averages the pairwise
// distances among a cluster's generated members; kToTrainingImage averages
// the members' distances to their cluster's training image.
enum class IntraMode { kPairwise, kToTrainingImage };

struct IntraLpipsResult {
  double value = 0;
  std::vector<std::int64_t> assignment;  // generated index -> training index
  std::int64_t small_clusters = 0;       // clusters with a single member (pairwise mode)
  std::int64_t empty_clusters = 0;
};

// Core on precomputed matrices: gen_to_train is [G,K] (nearest training image
// wins each row; ties -> lowest index), gen_to_gen is [G,G] pairwise.
IntraLpipsResult intra_lpips_from_matrices(const Eigen::MatrixXd& gen_to_train,
                                           const Eigen::MatrixXd& gen_to_gen,
                                           IntraMode mode = IntraMode::kPairwise);

IntraLpipsResult intra_lpips(const std::vector<std::vector<float>>& generated,
                             const std::vector<std::vector<float>>& training, int resolution,
                             const PerceptualDistance& dist,
                             IntraMode mode = IntraMode::kPairwise);

// max( mean over rows of the row minimum, mean over columns of the column
// minimum ) of a pairwise distance matrix.
double emd_from_matrix(const Eigen::MatrixXd& cost);

double lpips_emd(const std::vector<std::vector<float>>& source,
                 const std::vector<std::vector<float>>& target, int resolution,
                 const PerceptualDistance& dist);

struct MetricReport {
  std::string metric;
  double value = 0;
  std::int64_t n_generated = 0;
  std::int64_t n_reference = 0;
  std::string encoder;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> config_echo;

  static std::string csv_header();
  std::string csv_row() const;
  std::string text() const;
};

}  // namespace pip
