#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tfem/approx.hpp"
#include "tfem/gmm.hpp"
#include "tfem/transformer.hpp"

namespace tfem {

struct Block {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 0;
};

// Named, contiguous row blocks of a context matrix.
struct ContextLayout {
  std::vector<Block> blocks;
  std::size_t dim = 0;

  void add(const std::string& name, std::size_t size);
  const Block& at(const std::string& name) const;
  std::size_t off(const std::string& name) const { return at(name).offset; }
  bool has(const std::string& name) const;
};

// EM rows: data(d) centroids(d) p1(k) p2(d) ones(1) diff(k·d) dist(k) p1_new(k) aux(k).
ContextLayout em_layout(int k, int d);
// PCA rows: X(d) cov(d) p2(d) init(k·d) vec(d) tmp(d) est(k·d).
ContextLayout pca_layout(int k, int d);

struct Context {
  Mat h;
  ContextLayout layout;
};

Context build_context(const GmmInstance& inst, const Labels& init_labels, const Mat& init_centroids);
Context build_context(const Mat& x, int k, const Labels& init_labels, const Mat& init_centroids);

struct ConstructionReport {
  std::string kind;
  int tau = 0;
  int k = 0;
  int d = 0;
  std::size_t n = 0;
  std::size_t layers = 0;
  std::size_t expected_layers = 0;
  std::vector<std::size_t> heads_per_layer;
  std::vector<std::string> activations;
  std::map<std::string, double> fit_errors;  // measured sup errors of fitted components
  std::map<std::string, double> bounds;      // predicted error terms
  std::map<std::string, double> constants;   // beta, scales, radii
  std::uint64_t seed = 0;
  double param_norm = 0.0;

  std::string to_json() const;
};

struct EmSpec {
  int k = 2;
  int d = 2;
  std::size_t n = 0;
  int tau = 1;
  int m_heads = 2048;     // random features per fitted component
  double beta = 0.0;      // 0 selects 50 ln N
  double data_radius = 1.0;  // max ||x_i|| the network must handle
  std::uint64_t seed = 1;
  double estep_scale = 0.0;  // 0 selects 2 ln N
  double fit_budget = 0.0;   // max tolerated scaled norm-fit error; 0 disables the check
};

struct Construction {
  TransformerParams params;
  ConstructionReport report;
};

Construction build_em_tf(const EmSpec& spec);
Construction build_em_tf_plus(const EmSpec& spec);
Construction build_em_tf(int k, int d, std::size_t n, int tau, int m_heads, double beta, double data_radius,
                         std::uint64_t seed = 1);
Construction build_em_tf_plus(int k, int d, std::size_t n, int tau, int m_heads, double beta, double data_radius,
                              std::uint64_t seed = 1);

// Max column norm of x, the data radius the EM constructions are sized for.
double data_radius(const Mat& x);

struct PcaBuildOptions {
  double lambda_lo = 0.5;   // smallest ||A v|| the normaliser must handle
  double lambda_hi = 10.0;  // largest eigenvalue the construction must handle
  double corr_guard = 0.1;  // minimal |<v0, u>| accepted for a random start
  std::size_t n_tokens = 0; // context columns; 0 means d
};

Context build_pca_context(const Mat& x, int k, std::uint64_t seed, const PcaBuildOptions& opt = {});
Construction build_pca_tf(int d, int k, int tau_power, int m_heads, std::uint64_t seed,
                          const PcaBuildOptions& opt = {});
// Eigenvector estimates from a PCA output (kd×1): k vectors of length d.
std::vector<Vec> split_pca_output(const Mat& out, int k, int d);

// Column argmax, ties to the lowest index.
Labels extract_assignments(const Mat& output);

}  // namespace tfem
