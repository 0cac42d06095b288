#include <cmath>
#include <limits>
#include <memory>

#include "layer_builder.hpp"
#include "tfem/construct.hpp"

namespace tfem {

using detail::FcBuilder;
using detail::zero_head;

namespace {

struct EmPlan {
  EmSpec spec;
  ContextLayout lay;
  std::size_t dim = 0;
  double n = 0.0;
  double beta = 0.0;
  double estep_scale = 0.0;
  double select_scale = 0.0;
  double radius = 0.0;     // R: bound on ||x - mu||
  double gate_bound = 0.0; // bound on |entries| gated off in the E-step
  double assign_bias = 0.0;
  std::shared_ptr<const FeatureApprox> norm_fit;
};

EmPlan plan_em(const EmSpec& s) {
  require(s.k >= 2, Errc::precondition, "EM construction: need k >= 2");
  require(s.k < s.d, Errc::precondition, "EM construction: need k < d");
  require(s.n > static_cast<std::size_t>(s.d) && s.n > static_cast<std::size_t>(s.k), Errc::precondition,
          "EM construction: need N > d");
  require(s.tau >= 1, Errc::precondition, "EM construction: tau must be at least 1");
  require(s.m_heads >= 8, Errc::precondition, "EM construction: m_heads must be at least 8");
  require(s.beta >= 0.0 && s.estep_scale >= 0.0, Errc::precondition, "EM construction: scales must be positive");
  require(s.data_radius > 0.0 && std::isfinite(s.data_radius), Errc::precondition,
          "EM construction: data radius must be positive");

  EmPlan p;
  p.spec = s;
  p.lay = em_layout(s.k, s.d);
  p.dim = p.lay.dim;
  p.n = static_cast<double>(s.n);
  const double ln_n = std::log(p.n);
  p.beta = s.beta > 0.0 ? s.beta : 50.0 * ln_n;
  p.estep_scale = s.estep_scale > 0.0 ? s.estep_scale : 2.0 * ln_n;
  p.select_scale = 50.0 * ln_n;
  p.radius = 2.0 * s.data_radius;
  p.gate_bound = 2.0 * s.data_radius + 1.0;
  p.assign_bias = p.beta * (1.25 * p.radius + 1.0) + 50.0;
  // ||.|| is 1-homogeneous: one fit on the unit ball serves every radius.
  p.norm_fit = cached_relu_features(Target::norm, s.d, 0.0, 1.0, s.m_heads, s.seed);
  if (s.fit_budget > 0.0 && p.norm_fit->measured_sup_error * p.radius > s.fit_budget)
    fail(Errc::infeasible_construction, "EM construction: norm fit error " +
                                            std::to_string(p.norm_fit->measured_sup_error * p.radius) +
                                            " exceeds the budget " + std::to_string(s.fit_budget));
  return p;
}

std::size_t diff_row(const EmPlan& p, int l, int r) {
  return p.lay.off("diff") + static_cast<std::size_t>(l) * p.spec.d + r;
}

// Softmax head averaging the members of cluster j into column j of the scratch block, then an
// exact gate that zeroes columns j >= k (where the scores are flat).
LayerPtr estep_average(const EmPlan& p) {
  const int k = p.spec.k, d = p.spec.d;
  Layer layer = detail::empty_layer(p.dim, Activation::softmax);
  AttnHead h = zero_head(p.dim);
  for (int l = 0; l < k; ++l) {
    h.q(l, p.lay.off("p1") + l) = p.estep_scale;
    h.k(l, p.lay.off("p2") + l) = 1.0;
  }
  for (int r = 0; r < d; ++r) h.v(diff_row(p, 0, r), p.lay.off("data") + r) = 1.0;
  layer.heads.push_back(std::move(h));

  FcBuilder fc(p.dim);
  const double b = p.gate_bound;
  for (int r = 0; r < d; ++r) {
    const std::size_t s = diff_row(p, 0, r);
    detail::Terms gate_in{{p.lay.off("ones"), -b}};
    for (int l = 0; l < k; ++l) gate_in.push_back({p.lay.off("p2") + l, b});
    detail::Terms up = gate_in, down = gate_in;
    up.push_back({s, 1.0});
    down.push_back({s, -1.0});
    fc.unit(up, {{s, 1.0}});
    fc.unit(down, {{s, -1.0}});
    fc.clear(s);
  }
  fc.finish(layer);
  return std::make_shared<const Layer>(std::move(layer));
}

// centroids := scratch, scratch := 0.
LayerPtr estep_commit(const EmPlan& p) {
  Layer layer = detail::empty_layer(p.dim, Activation::softmax);
  FcBuilder fc(p.dim);
  for (int r = 0; r < p.spec.d; ++r) fc.move(diff_row(p, 0, r), p.lay.off("centroids") + r);
  fc.finish(layer);
  return std::make_shared<const Layer>(std::move(layer));
}

// diff_l := x.
LayerPtr mstep_copy(const EmPlan& p, int l) {
  Layer layer = detail::empty_layer(p.dim, Activation::softmax);
  FcBuilder fc(p.dim);
  for (int r = 0; r < p.spec.d; ++r) fc.add_scaled(p.lay.off("data") + r, diff_row(p, l, r), 1.0);
  fc.finish(layer);
  return std::make_shared<const Layer>(std::move(layer));
}

// diff_l -= mu_l in every column: the score concentrates all mass on token l.
LayerPtr mstep_subtract(const EmPlan& p, int l) {
  Layer layer = detail::empty_layer(p.dim, Activation::softmax);
  AttnHead h = zero_head(p.dim);
  h.q(0, p.lay.off("p2") + l) = p.select_scale;
  h.k(0, p.lay.off("ones")) = 1.0;
  for (int r = 0; r < p.spec.d; ++r) h.v(diff_row(p, l, r), p.lay.off("centroids") + r) = -1.0;
  layer.heads.push_back(std::move(h));
  return std::make_shared<const Layer>(std::move(layer));
}

// dist_l += ||diff_l|| through fitted ReLU features, then diff_l := 0.
LayerPtr mstep_norm(const EmPlan& p, int l) {
  Layer layer = detail::empty_layer(p.dim, Activation::softmax);
  FcBuilder fc(p.dim);
  const int d = p.spec.d;
  const double rad = p.radius;
  for (const Atom& a : p.norm_fit->atoms) {
    detail::Terms in{{p.lay.off("ones"), a.dir[d]}};
    for (int r = 0; r < d; ++r)
      if (a.dir[r] != 0.0) in.push_back({diff_row(p, l, r), a.dir[r] / rad});
    fc.unit(std::move(in), {{p.lay.off("dist") + l, a.coef * rad}});
  }
  for (int r = 0; r < d; ++r) fc.clear(diff_row(p, l, r));
  fc.finish(layer);
  return std::make_shared<const Layer>(std::move(layer));
}

// p1 := softmax over clusters of -beta * dist, evaluated on tokens 0..k-1 as cluster slots.
LayerPtr mstep_assign(const EmPlan& p) {
  const int k = p.spec.k;
  Layer layer = detail::empty_layer(p.dim, Activation::softmax);
  AttnHead h = zero_head(p.dim);
  for (int l = 0; l < k; ++l) {
    h.q(l, p.lay.off("p2") + l) = -p.beta;
    h.k(l, p.lay.off("dist") + l) = 1.0;
    h.q(k, p.lay.off("p2") + l) = p.assign_bias;
    h.v(p.lay.off("p1_new") + l, p.lay.off("p2") + l) = 1.0;
  }
  h.k(k, p.lay.off("ones")) = 1.0;
  layer.heads.push_back(std::move(h));

  FcBuilder fc(p.dim);
  for (int l = 0; l < k; ++l) {
    fc.move(p.lay.off("p1_new") + l, p.lay.off("p1") + l);
    fc.clear(p.lay.off("dist") + l);
  }
  fc.finish(layer);
  return std::make_shared<const Layer>(std::move(layer));
}

std::vector<LayerPtr> mstep_layers(const EmPlan& p) {
  std::vector<LayerPtr> out;
  for (int l = 0; l < p.spec.k; ++l) {
    out.push_back(mstep_copy(p, l));
    out.push_back(mstep_subtract(p, l));
    out.push_back(mstep_norm(p, l));
  }
  out.push_back(mstep_assign(p));
  return out;
}

// ---- TF+ E-step: exact means through un-normalised attention ----

// Broadcast counts n_l to every token, then y0 ~ 1/n_l from fitted features on [1, N].
LayerPtr plus_counts(const EmPlan& p, const FeatureApprox& inv) {
  const int k = p.spec.k;
  Layer layer = detail::empty_layer(p.dim, Activation::none);
  AttnHead h = zero_head(p.dim);
  h.q(0, p.lay.off("ones")) = 1.0;
  h.k(0, p.lay.off("ones")) = 1.0;
  for (int l = 0; l < k; ++l) h.v(p.lay.off("aux") + l, p.lay.off("p1") + l) = 1.0;
  layer.heads.push_back(std::move(h));

  FcBuilder fc(p.dim);
  for (int l = 0; l < k; ++l)
    for (const Atom& a : inv.atoms)
      fc.unit({{p.lay.off("aux") + l, a.dir[0] * inv.input_scale}, {p.lay.off("ones"), a.dir[1]}},
              {{p.lay.off("dist") + l, a.coef}});
  fc.finish(layer);
  return std::make_shared<const Layer>(std::move(layer));
}

// One Newton step y <- 2y - n y^2 on the broadcast inverses.
Layer plus_newton(const EmPlan& p) {
  const int k = p.spec.k;
  Layer layer = detail::empty_layer(p.dim, Activation::none);
  AttnHead avg = zero_head(p.dim);
  avg.q(0, p.lay.off("ones")) = 1.0;
  avg.k(0, p.lay.off("ones")) = 1.0;
  for (int l = 0; l < k; ++l) avg.v(p.lay.off("dist") + l, p.lay.off("dist") + l) = 1.0 / p.n;
  layer.heads.push_back(std::move(avg));
  for (int l = 0; l < k; ++l) {
    AttnHead sq = zero_head(p.dim);
    sq.q(0, p.lay.off("dist") + l) = 1.0;
    sq.k(0, p.lay.off("aux") + l) = 1.0;
    sq.v(p.lay.off("dist") + l, p.lay.off("dist") + l) = -1.0 / p.n;
    layer.heads.push_back(std::move(sq));
  }
  return layer;
}

// Newton step, then per-token weights p1_l / n_l (members get y, others 0).
LayerPtr plus_newton_weights(const EmPlan& p) {
  Layer layer = plus_newton(p);
  FcBuilder fc(p.dim);
  for (int l = 0; l < p.spec.k; ++l)
    fc.unit({{p.lay.off("dist") + l, 1.0}, {p.lay.off("p1") + l, 2.0}, {p.lay.off("ones"), -2.0}},
            {{p.lay.off("p1_new") + l, 1.0}});
  fc.finish(layer);
  return std::make_shared<const Layer>(std::move(layer));
}

// scratch column j = sum_i x_i w_j(i): the exact cluster mean for j < k, zero elsewhere.
LayerPtr plus_means(const EmPlan& p) {
  const int k = p.spec.k;
  Layer layer = detail::empty_layer(p.dim, Activation::none);
  AttnHead h = zero_head(p.dim);
  for (int l = 0; l < k; ++l) {
    h.q(l, p.lay.off("p1_new") + l) = 1.0;
    h.k(l, p.lay.off("p2") + l) = 1.0;
  }
  for (int r = 0; r < p.spec.d; ++r) h.v(diff_row(p, 0, r), p.lay.off("data") + r) = 1.0;
  layer.heads.push_back(std::move(h));

  FcBuilder fc(p.dim);
  for (int l = 0; l < k; ++l) {
    fc.clear(p.lay.off("p1_new") + l);
    fc.clear(p.lay.off("dist") + l);
    fc.clear(p.lay.off("aux") + l);
  }
  fc.finish(layer);
  return std::make_shared<const Layer>(std::move(layer));
}

TransformerParams assemble(const EmPlan& p, const std::vector<LayerPtr>& round) {
  TransformerParams tp;
  for (int t = 0; t < p.spec.tau; ++t) tp.layers.insert(tp.layers.end(), round.begin(), round.end());
  tp.readout_left = Mat(p.spec.k, p.dim);
  for (int l = 0; l < p.spec.k; ++l) tp.readout_left(l, p.lay.off("p1") + l) = 1.0;
  tp.readout_right = Mat::identity(p.spec.n);
  return tp;
}

ConstructionReport base_report(const EmPlan& p, const TransformerParams& tp, const std::string& kind,
                               std::size_t expected) {
  ConstructionReport r;
  r.kind = kind;
  r.tau = p.spec.tau;
  r.k = p.spec.k;
  r.d = p.spec.d;
  r.n = p.spec.n;
  r.layers = tp.layers.size();
  r.expected_layers = expected;
  for (const auto& l : tp.layers) {
    r.heads_per_layer.push_back(l->heads.size());
    r.activations.push_back(activation_name(l->activation));
  }
  r.seed = p.spec.seed;
  r.constants = {{"beta", p.beta},
                 {"estep_scale", p.estep_scale},
                 {"select_scale", p.select_scale},
                 {"norm_radius", p.radius},
                 {"gate_bound", p.gate_bound},
                 {"assign_bias", p.assign_bias},
                 {"m_heads", static_cast<double>(p.spec.m_heads)}};
  r.fit_errors["norm_unit_ball"] = p.norm_fit->measured_sup_error;
  r.fit_errors["norm_scaled"] = p.norm_fit->measured_sup_error * p.radius;
  const double m = p.spec.m_heads;
  const double kk = p.spec.k - 1.0;
  r.bounds["select_residual"] = (p.n - 1.0) * std::exp(-p.select_scale) * p.radius;
  r.bounds["hardmax_factor"] = std::sqrt(kk + kk * kk);
  r.bounds["loss_shape"] = p.spec.tau * (std::sqrt(std::log(m) / m) + 1.0 / p.n);
  r.param_norm = param_norm(tp);
  return r;
}

}  // namespace

Construction build_em_tf(const EmSpec& spec) {
  EmPlan p = plan_em(spec);
  std::vector<LayerPtr> round{estep_average(p), estep_commit(p)};
  for (auto& l : mstep_layers(p)) round.push_back(l);
  Construction c;
  c.params = assemble(p, round);
  const std::size_t expected = static_cast<std::size_t>(spec.tau) * (3 + 3 * spec.k);
  require(c.params.layers.size() == expected, Errc::infeasible_construction, "build_em_tf: layer count mismatch");
  c.report = base_report(p, c.params, "em_tf", expected);
  // Non-member tokens keep weight exp(-s) each against at least one member.
  c.report.bounds["estep_residual"] = p.n * std::exp(-p.estep_scale) * 2.0 * spec.data_radius;
  return c;
}

Construction build_em_tf_plus(const EmSpec& spec) {
  EmPlan p = plan_em(spec);
  auto inv = cached_relu_features(Target::inv_scalar, 1, 1.0, p.n, spec.m_heads, spec.seed);
  auto newton = std::make_shared<const Layer>(plus_newton(p));
  std::vector<LayerPtr> round{plus_counts(p, *inv), newton, newton, plus_newton_weights(p), plus_means(p),
                              estep_commit(p)};
  for (auto& l : mstep_layers(p)) round.push_back(l);
  Construction c;
  c.params = assemble(p, round);
  const std::size_t expected = static_cast<std::size_t>(spec.tau) * (7 + 3 * spec.k);
  require(c.params.layers.size() == expected, Errc::infeasible_construction,
          "build_em_tf_plus: layer count mismatch");
  c.report = base_report(p, c.params, "em_tf_plus", expected);

  // Relative error of the fitted inverse over every possible count; three Newton steps square it thrice.
  double rel = 0.0;
  for (std::size_t cnt = 1; cnt <= spec.n; ++cnt) {
    const double nc = static_cast<double>(cnt);
    rel = std::max(rel, std::abs(1.0 - nc * inv->eval({nc})));
  }
  c.report.fit_errors["inverse_count"] = inv->measured_sup_error;
  c.report.fit_errors["inverse_count_relative"] = rel;
  c.report.bounds["estep_residual"] = rel < 1.0 ? std::pow(rel, 8.0) * spec.data_radius
                                                : std::numeric_limits<double>::infinity();
  c.report.bounds["estep_target"] = std::pow(p.n, -5.0);
  c.report.constants["exponent_stated"] = 100.0;
  c.report.constants["exponent_target"] = 5.0;
  return c;
}

Construction build_em_tf(int k, int d, std::size_t n, int tau, int m_heads, double beta, double radius,
                         std::uint64_t seed) {
  EmSpec s;
  s.k = k;
  s.d = d;
  s.n = n;
  s.tau = tau;
  s.m_heads = m_heads;
  s.beta = beta;
  s.data_radius = radius;
  s.seed = seed;
  return build_em_tf(s);
}

Construction build_em_tf_plus(int k, int d, std::size_t n, int tau, int m_heads, double beta, double radius,
                              std::uint64_t seed) {
  EmSpec s;
  s.k = k;
  s.d = d;
  s.n = n;
  s.tau = tau;
  s.m_heads = m_heads;
  s.beta = beta;
  s.data_radius = radius;
  s.seed = seed;
  return build_em_tf_plus(s);
}

}  // namespace tfem
