#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "tfem/linalg.hpp"

namespace tfem {

// ---- hardmax ----------------------------------------------------------------

// Uniform mass over the argmax set.
Vec hardmax(const Vec& v);

struct GapBound {
  double gap = 0.0;    // ||softmax(beta v) - hardmax(v)||_2
  double bound = 0.0;  // sqrt((d-m) + (d-m)^2/m^3) * exp(-beta * Delta), m = |argmax set|
  double delta = 0.0;  // max minus the largest non-maximal entry (0 if constant)
  bool holds = true;   // gap <= bound up to 1e-12 relative rounding slack
};
GapBound hardmax_gap_bound(const Vec& v, double beta);

// ---- random-feature approximators -------------------------------------------

enum class Target { inv_norm, sqrt_norm, inv_scalar, coordinate, norm };
enum class FeatureKind { relu, softmax_atom };
// squared_norm: the atoms read s = ||x||^2 instead of x (a 1-D fit of a radial target).
enum class InputMap { vector, squared_norm };

const char* target_name(Target t);
double target_value(Target t, const Vec& x);

struct Atom {
  double coef = 0.0;
  Vec dir;      // length p+1; last entry multiplies the constant 1
  int out = 0;  // output row (softmax atoms)
};

struct FeatureApprox {
  FeatureKind kind = FeatureKind::relu;
  Target target = Target::norm;  // relu fits only
  InputMap input = InputMap::vector;
  int d = 1;       // dimension of the target's argument
  int k_out = 1;   // output dimension (softmax fits)
  double r_lo = 0.0, r_hi = 1.0;
  double input_scale = 1.0;  // atoms see [input_scale * u; 1], u = x or ||x||^2
  double gain = 1.0;         // softmax atoms: score multiplier
  std::vector<Atom> atoms;
  int random_atoms = 0;
  std::size_t samples = 0;
  double ridge = 1e-8;
  double measured_sup_error = 0.0;
  int attempts = 1;
  std::uint64_t seed = 0;

  // Feature-space input: x (vector), or (||x||^2) for squared_norm.
  Vec encode(const Vec& x) const;
  double eval(const Vec& x) const;     // relu
  Vec eval_vec(const Vec& x) const;    // softmax atoms, length k_out
  // Single softmax atom a·softmax(B[x̃;1]) restricted to the first k_out rows.
  Vec atom_softmax(const Atom& a, const Vec& x) const;
};

FeatureApprox fit_relu_features(Target target, int d, double r_lo, double r_hi, int m, std::uint64_t seed,
                                InputMap input = InputMap::vector);

// Memoised fit (process-wide, thread-safe); the fit itself is deterministic.
std::shared_ptr<const FeatureApprox> cached_relu_features(Target target, int d, double r_lo, double r_hi, int m,
                                                          std::uint64_t seed, InputMap input = InputMap::vector);

using VectorMap = std::function<Vec(const Vec&)>;
// Fit on the box [-r, r]^d.
FeatureApprox fit_softmax_features(const VectorMap& f, int d, int k_out, double r, int m, std::uint64_t seed);

}  // namespace tfem
