#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "tfem/linalg.hpp"

namespace tfem {

// Labels are 0-based cluster indices.
using Labels = std::vector<int>;

struct GmmInstance {
  Mat x;      // d×N data, one point per column
  Labels z;   // true labels
  Mat means;  // d×k
  double sigma = 0.0;
  double delta = 0.0;
  double alpha = 0.0;
  std::uint64_t seed = 0;

  int k() const { return static_cast<int>(means.cols()); }
  int d() const { return static_cast<int>(x.rows()); }
  std::size_t n() const { return x.cols(); }
};

GmmInstance generate_instance(int k, int d, std::size_t per_cluster, double delta, double sigma, double alpha,
                              std::uint64_t seed);
// Imbalanced variant: counts[u] points in cluster u.
GmmInstance generate_instance(int d, const std::vector<std::size_t>& counts, double delta, double sigma,
                              double alpha, std::uint64_t seed);

// Smallest pairwise column distance.
double min_pairwise_distance(const Mat& means);

Mat one_hot(const Labels& z, int k);
// Per-column argmax, ties to the lowest row.
Labels argmax_cols(const Mat& a);

// min over label permutations of (1/N)·||P1(pi(z)) - a||_{1,1}.
double perm_loss(const Mat& a, const Mat& p1);
double perm_loss_brute(const Mat& a, const Mat& p1);
double perm_loss_hungarian(const Mat& a, const Mat& p1);

// Minimum-cost assignment: result[row] = column. Square cost matrix.
std::vector<int> hungarian(const std::vector<std::vector<double>>& cost);

double ari(const Labels& z, const Labels& zh);
double nmi(const Labels& z, const Labels& zh);  // arithmetic-mean normalization
double misclass(const Labels& z, const Labels& zh);

void write_instance_csv(std::ostream& os, const GmmInstance& inst);
GmmInstance read_instance_csv(std::istream& is);

}  // namespace tfem
