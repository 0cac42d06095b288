#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tfem/gmm.hpp"
#include "tfem/linalg.hpp"

namespace tfem {

struct LloydTrace {
  std::vector<Labels> assignments;  // z^(0..T)
  std::vector<Mat> centroids;       // mu^(0..T); mu^(0) is the initialisation
  bool converged = false;
  int iterations_run = 0;
};

// Nearest centroid per column, ties to the lowest index.
Labels nearest_centroid(const Mat& x, const Mat& centroids);
double kmeans_objective(const Mat& x, const Mat& centroids, const Labels& z);

LloydTrace lloyd(const Mat& x, const Mat& init_centroids, int tau);

Mat kmeanspp(const Mat& x, int k, std::uint64_t seed);

struct SpectralInit {
  Labels labels;
  Mat centroids;  // d×k, per-cluster data means
};
SpectralInit spectral_init(const Mat& x, int k, std::uint64_t seed);

struct Deflation {
  std::vector<Vec> vectors;
  Vec values;           // ||A_i v_i||
  Vec start_cosines;    // |<v0_i, v_i>| of each random start against the final estimate
  double min_gap = 0.0; // over the top k+1 eigenvalues of the input
  bool conditioning_warning = false;
  std::string warning;
};
// Power iteration with deflation A_{i+1} = A_i - ||A_i v|| v vᵀ.
Deflation topk_deflation(const Mat& a, int k, int tau, std::uint64_t seed);

// Unit vector uniform on the sphere (normalised Gaussian).
Vec random_unit(std::size_t d, std::uint64_t seed);

// Random d×d factor X with XXᵀ = V diag(lambda) Vᵀ: bulk eigenvalues in U[0,1], the top k stacked above
// them with gaps drawn from U[1,2], V a random orthogonal basis.
Mat gapped_spd_factor(int d, int k, std::uint64_t seed);

}  // namespace tfem
