#include <cmath>
#include <memory>

#include "layer_builder.hpp"
#include "tfem/classical.hpp"
#include "tfem/construct.hpp"

namespace tfem {

using detail::FcBuilder;
using detail::zero_head;

Context build_pca_context(const Mat& x, int k, std::uint64_t seed, const PcaBuildOptions& opt) {
  const std::size_t d = x.rows(), n = x.cols();
  require(k >= 1 && static_cast<std::size_t>(k) < d, Errc::precondition, "build_pca_context: need 1 <= k < d");
  require(n >= d, Errc::shape, "build_pca_context: the identity block needs N >= d");

  const Mat a = matmul(x, transpose(x));
  const Eigh eig = jacobi_eigh(a);
  for (int i = 0; i < k; ++i)
    require(eig.values[i] - eig.values[i + 1] > 1e-8 * std::max(1.0, eig.values[0]), Errc::conditioning,
            "build_pca_context: no spectral gap after eigenvalue " + std::to_string(i + 1));
  require(eig.values[0] * 1.05 <= opt.lambda_hi, Errc::conditioning,
          "build_pca_context: top eigenvalue exceeds the construction's lambda_hi");
  require(eig.values[k - 1] >= opt.lambda_lo, Errc::conditioning,
          "build_pca_context: eigenvalue " + std::to_string(k) + " is below the construction's lambda_lo");

  Context c;
  c.layout = pca_layout(k, static_cast<int>(d));
  c.h = Mat(c.layout.dim, n);
  for (std::size_t r = 0; r < d; ++r) {
    for (std::size_t j = 0; j < n; ++j) c.h(c.layout.off("X") + r, j) = x(r, j);
    c.h(c.layout.off("p2") + r, r) = 1.0;
  }
  // Random starts, redrawn until each correlates with its target eigenvector.
  for (int e = 0; e < k; ++e) {
    const Vec u = eig.vectors.col(e);
    Vec v;
    int attempt = 0;
    for (;; ++attempt) {
      require(attempt < 1000, Errc::conditioning, "build_pca_context: correlation guard never satisfied");
      v = random_unit(d, seed + 1000003ULL * static_cast<std::uint64_t>(e) + attempt);
      if (std::abs(dot(v, u)) >= opt.corr_guard) break;
    }
    for (std::size_t r = 0; r < d; ++r) c.h(c.layout.off("init") + e * d + r, 0) = v[r];
  }
  return c;
}

namespace {

struct PcaPlan {
  int d = 0, k = 0;
  ContextLayout lay;
  std::size_t dim = 0;
  std::shared_ptr<const FeatureApprox> inv, sqrt;
};

LayerPtr share(Layer&& l) { return std::make_shared<const Layer>(std::move(l)); }

// dst col 0 += A·src col 0, with A the covariance block, through a ReLU pair.
void add_matvec_heads(const PcaPlan& p, Layer& layer, std::size_t src, std::size_t dst) {
  for (double s : {1.0, -1.0}) {
    AttnHead h = zero_head(p.dim);
    for (int r = 0; r < p.d; ++r) {
      h.q(r, p.lay.off("cov") + r) = s;
      h.k(r, src + r) = 1.0;
      h.v(dst + r, p.lay.off("p2") + r) = s;
    }
    layer.heads.push_back(std::move(h));
  }
}

// Head whose score is 1 at (0,0) and 0 elsewhere; adds f * block col 0 into dst col 0.
AttnHead corner_head(const PcaPlan& p, std::size_t src, std::size_t dst, double f) {
  AttnHead h = zero_head(p.dim);
  h.q(0, p.lay.off("p2")) = 1.0;
  h.k(0, p.lay.off("p2")) = 1.0;
  for (int r = 0; r < p.d; ++r) h.v(dst + r, src + r) = f;
  return h;
}

// dst := g(||norm_src||^2) * scaled_src, one head per fitted ReLU feature.
void add_radial_heads(const PcaPlan& p, Layer& layer, const FeatureApprox& g, std::size_t norm_src,
                      std::size_t scaled_src, std::size_t dst) {
  for (const Atom& a : g.atoms) {
    AttnHead h = zero_head(p.dim);
    for (int r = 0; r < p.d; ++r) {
      h.q(r, norm_src + r) = a.dir[0] * g.input_scale;
      h.k(r, norm_src + r) = 1.0;
      h.v(dst + r, scaled_src + r) = a.coef;
    }
    h.q(p.d, p.lay.off("p2")) = a.dir[1];
    h.k(p.d, p.lay.off("p2")) = 1.0;
    layer.heads.push_back(std::move(h));
  }
  layer.heads.push_back(corner_head(p, dst, dst, -1.0));
}

LayerPtr covariance_layer(const PcaPlan& p) {
  Layer layer = detail::empty_layer(p.dim, Activation::relu);
  for (double s : {1.0, -1.0}) {
    AttnHead h = zero_head(p.dim);
    for (int r = 0; r < p.d; ++r) {
      h.q(r, p.lay.off("X") + r) = s;
      h.k(r, p.lay.off("p2") + r) = 1.0;
      h.v(p.lay.off("cov") + r, p.lay.off("X") + r) = s;
    }
    layer.heads.push_back(std::move(h));
  }
  return share(std::move(layer));
}

LayerPtr start_layer(const PcaPlan& p, int e) {
  Layer layer = detail::empty_layer(p.dim, Activation::relu);
  add_matvec_heads(p, layer, p.lay.off("init") + static_cast<std::size_t>(e) * p.d, p.lay.off("vec"));
  return share(std::move(layer));
}

LayerPtr power_layer(const PcaPlan& p) {
  Layer layer = detail::empty_layer(p.dim, Activation::relu);
  add_matvec_heads(p, layer, p.lay.off("vec"), p.lay.off("vec"));
  layer.heads.push_back(corner_head(p, p.lay.off("vec"), p.lay.off("vec"), -1.0));
  return share(std::move(layer));
}

LayerPtr normalize_layer(const PcaPlan& p) {
  Layer layer = detail::empty_layer(p.dim, Activation::relu);
  add_radial_heads(p, layer, *p.inv, p.lay.off("vec"), p.lay.off("vec"), p.lay.off("vec"));
  return share(std::move(layer));
}

// Removal of an estimated eigenpair: tmp = A v; tmp = sqrt(||A v||) v; A -= tmp tmpᵀ, store v; clear tmp.
std::vector<LayerPtr> removal_layers(const PcaPlan& p, int e) {
  std::vector<LayerPtr> out;
  const std::size_t vec = p.lay.off("vec"), tmp = p.lay.off("tmp");

  Layer l1 = detail::empty_layer(p.dim, Activation::relu);
  add_matvec_heads(p, l1, vec, tmp);
  out.push_back(share(std::move(l1)));

  Layer l2 = detail::empty_layer(p.dim, Activation::relu);
  add_radial_heads(p, l2, *p.sqrt, tmp, vec, tmp);
  out.push_back(share(std::move(l2)));

  Layer l3 = detail::empty_layer(p.dim, Activation::relu);
  for (double s : {1.0, -1.0}) {
    AttnHead h = zero_head(p.dim);
    for (int r = 0; r < p.d; ++r) {
      h.q(r, tmp + r) = s;
      h.k(r, p.lay.off("p2") + r) = 1.0;
      h.v(p.lay.off("cov") + r, tmp + r) = -s;
    }
    l3.heads.push_back(std::move(h));
  }
  FcBuilder fc(p.dim);
  const std::size_t est = p.lay.off("est") + static_cast<std::size_t>(e) * p.d;
  for (int r = 0; r < p.d; ++r) fc.move(vec + r, est + r);
  fc.finish(l3);
  out.push_back(share(std::move(l3)));

  Layer l4 = detail::empty_layer(p.dim, Activation::relu);
  FcBuilder clear(p.dim);
  for (int r = 0; r < p.d; ++r) clear.clear(tmp + r);
  clear.finish(l4);
  out.push_back(share(std::move(l4)));
  return out;
}

// Worst relative error of a radial fit over radii in [lo, hi].
double relative_error(const FeatureApprox& g, Target t, int d, double lo, double hi) {
  double worst = 0.0;
  for (int i = 0; i <= 2000; ++i) {
    Vec x(d, 0.0);
    x[0] = lo + (hi - lo) * i / 2000.0;
    const double f = target_value(t, x);
    worst = std::max(worst, std::abs(g.eval(x) - f) / f);
  }
  return worst;
}

}  // namespace

Construction build_pca_tf(int d, int k, int tau_power, int m_heads, std::uint64_t seed, const PcaBuildOptions& opt) {
  require(k >= 1 && k < d, Errc::precondition, "build_pca_tf: need 1 <= k < d");
  require(tau_power >= k, Errc::precondition, "build_pca_tf: need at least one power step per eigenvector");
  require(m_heads >= 8, Errc::precondition, "build_pca_tf: m_heads must be at least 8");
  require(opt.lambda_lo > 0.0 && opt.lambda_hi > opt.lambda_lo, Errc::precondition,
          "build_pca_tf: need 0 < lambda_lo < lambda_hi");

  PcaPlan p;
  p.d = d;
  p.k = k;
  p.lay = pca_layout(k, d);
  p.dim = p.lay.dim;
  p.inv = cached_relu_features(Target::inv_norm, d, opt.lambda_lo, opt.lambda_hi, m_heads, seed,
                               InputMap::squared_norm);
  p.sqrt = cached_relu_features(Target::sqrt_norm, d, opt.lambda_lo, opt.lambda_hi, m_heads, seed + 1,
                                InputMap::squared_norm);

  Construction c;
  auto& layers = c.params.layers;
  layers.push_back(covariance_layer(p));
  const LayerPtr power = power_layer(p), norm = normalize_layer(p);
  std::vector<int> steps(k, tau_power / k);
  for (int e = 0; e < tau_power % k; ++e) ++steps[e];
  for (int e = 0; e < k; ++e) {
    for (int t = 0; t < steps[e]; ++t) {
      layers.push_back(t == 0 ? start_layer(p, e) : power);
      layers.push_back(norm);
    }
    for (auto& l : removal_layers(p, e)) layers.push_back(l);
  }
  const std::size_t expected = 2 * static_cast<std::size_t>(tau_power) + 4 * k + 1;
  require(layers.size() == expected, Errc::infeasible_construction, "build_pca_tf: layer count mismatch");

  c.params.readout_left = Mat(static_cast<std::size_t>(k) * d, p.dim);
  for (std::size_t r = 0; r < static_cast<std::size_t>(k) * d; ++r) c.params.readout_left(r, p.lay.off("est") + r) = 1.0;
  const std::size_t n_tokens = opt.n_tokens ? opt.n_tokens : static_cast<std::size_t>(d);
  require(n_tokens >= static_cast<std::size_t>(d), Errc::precondition, "build_pca_tf: need N >= d");
  c.params.readout_right = Mat(n_tokens, 1);
  c.params.readout_right(0, 0) = 1.0;

  ConstructionReport& r = c.report;
  r.kind = "pca_tf";
  r.tau = tau_power;
  r.k = k;
  r.d = d;
  r.n = n_tokens;
  r.layers = layers.size();
  r.expected_layers = expected;
  for (const auto& l : layers) {
    r.heads_per_layer.push_back(l->heads.size());
    r.activations.push_back(activation_name(l->activation));
  }
  r.seed = seed;
  const double eps = relative_error(*p.inv, Target::inv_norm, d, opt.lambda_lo, opt.lambda_hi);
  const double eps0 = relative_error(*p.sqrt, Target::sqrt_norm, d, opt.lambda_lo, opt.lambda_hi);
  r.fit_errors["inv_norm_sup"] = p.inv->measured_sup_error;
  r.fit_errors["inv_norm_relative"] = eps;
  r.fit_errors["sqrt_norm_sup"] = p.sqrt->measured_sup_error;
  r.fit_errors["sqrt_norm_relative"] = eps0;
  r.constants = {{"lambda_lo", opt.lambda_lo},
                 {"lambda_hi", opt.lambda_hi},
                 {"corr_guard", opt.corr_guard},
                 {"m_heads", static_cast<double>(m_heads)}};
  for (int e = 0; e < k; ++e) r.constants["power_steps_" + std::to_string(e + 1)] = steps[e];
  // Head budget lambda_hi^d / eps^2 with unit constant; reported, not enforced.
  r.bounds["head_budget"] = std::pow(opt.lambda_hi, d) / (eps * eps + 1e-300);
  r.bounds["normalization_eps"] = eps;
  r.bounds["eigenvalue_eps"] = eps0;
  r.param_norm = param_norm(c.params);
  return c;
}

}  // namespace tfem
