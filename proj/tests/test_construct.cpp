#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "tfem/classical.hpp"
#include "tfem/construct.hpp"

using namespace tfem;

namespace {

TransformerParams prefix(const TransformerParams& p, std::size_t layers) {
  TransformerParams q = p;
  q.layers.resize(layers);
  return q;
}

Vec block_col(const Mat& h, std::size_t off, std::size_t size, std::size_t col) {
  Vec v(size);
  for (std::size_t r = 0; r < size; ++r) v[r] = h(off + r, col);
  return v;
}

double abs_cos(const Vec& a, const Vec& b) { return std::abs(dot(a, b)) / (l2(a) * l2(b)); }

struct EmCase {
  GmmInstance inst;
  LloydTrace trace;
  Mat init_centroids;
};

EmCase em_case(int k, int d, std::size_t per_cluster, double delta, double sigma, std::uint64_t seed) {
  EmCase c;
  c.inst = generate_instance(k, d, per_cluster, delta, sigma, 1.0 / k, seed);
  SpectralInit init = spectral_init(c.inst.x, k, seed);
  c.init_centroids = init.centroids;
  c.trace = lloyd(c.inst.x, init.centroids, 1);
  return c;
}

EmSpec spec_for(const EmCase& c, int m) {
  EmSpec s;
  s.k = c.inst.k();
  s.d = c.inst.d();
  s.n = c.inst.n();
  s.tau = 1;
  s.m_heads = m;
  s.data_radius = data_radius(c.inst.x);
  return s;
}

}  // namespace

TEST(Layout, BlocksAreContiguous) {
  ContextLayout l = em_layout(3, 5);
  std::size_t next = 0;
  for (const Block& b : l.blocks) {
    EXPECT_EQ(b.offset, next);
    next += b.size;
  }
  EXPECT_EQ(next, l.dim);
  EXPECT_EQ(l.dim, static_cast<std::size_t>(3 * 5 + 3 * 3 + 1 + 3 * 5 + 3));
  EXPECT_THROW(l.at("missing"), Error);
}

TEST(BuildContext, RowsFollowTheAugmentedLayout) {
  GmmInstance inst = generate_instance(2, 4, 6, 5.0, 1.0, 0.5, 3);
  SpectralInit init = spectral_init(inst.x, 2, 3);
  Context c = build_context(inst, init.labels, init.centroids);
  const ContextLayout& l = c.layout;
  for (std::size_t j = 0; j < inst.n(); ++j) {
    EXPECT_EQ(c.h(l.off("ones"), j), 1.0);
    double s = 0.0;
    for (int u = 0; u < 2; ++u) s += c.h(l.off("p1") + u, j);
    EXPECT_EQ(s, 1.0);
    EXPECT_EQ(c.h(l.off("p1") + init.labels[j], j), 1.0);
    for (int r = 0; r < 4; ++r) EXPECT_EQ(c.h(l.off("data") + r, j), inst.x(r, j));
  }
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) EXPECT_EQ(c.h(l.off("p2") + i, j), i == j ? 1.0 : 0.0);
  for (int u = 0; u < 2; ++u)
    for (int r = 0; r < 4; ++r) EXPECT_EQ(c.h(l.off("centroids") + r, u), init.centroids(r, u));
  EXPECT_EQ(c.h(l.off("diff"), 0), 0.0);
}

TEST(BuildContext, RejectsBadShapes) {
  Mat x(3, 2);
  EXPECT_THROW(build_context(x, 2, {0, 1}, Mat(3, 2)), Error);
  Mat y(3, 10);
  EXPECT_THROW(build_context(y, 2, {0, 1}, Mat(3, 2)), Error);
}

TEST(LayerCounts, MatchClosedForms) {
  EXPECT_EQ(build_em_tf(2, 5, 40, 1, 16, 0.0, 1.0).params.layers.size(), 9u);
  EXPECT_EQ(build_em_tf(4, 5, 40, 2, 16, 0.0, 1.0).params.layers.size(), 30u);
  EXPECT_EQ(build_em_tf_plus(2, 5, 40, 1, 16, 0.0, 1.0).params.layers.size(), 13u);
  EXPECT_EQ(build_pca_tf(4, 2, 10, 16, 1).params.layers.size(), 29u);
  for (int tau = 1; tau <= 3; ++tau)
    for (int k = 2; k <= 4; ++k) {
      Construction c = build_em_tf(k, 5, 40, tau, 16, 0.0, 1.0);
      EXPECT_EQ(c.report.layers, c.report.expected_layers);
      EXPECT_EQ(build_em_tf_plus(k, 5, 40, tau, 16, 0.0, 1.0).params.layers.size(),
                static_cast<std::size_t>(tau * (7 + 3 * k)));
    }
}

TEST(BuildEm, Preconditions) {
  EXPECT_THROW(build_em_tf(3, 3, 40, 1, 16, 0.0, 1.0), Error);
  EXPECT_THROW(build_em_tf(1, 3, 40, 1, 16, 0.0, 1.0), Error);
  EXPECT_THROW(build_em_tf(2, 3, 40, 1, 4, 0.0, 1.0), Error);
}

TEST(BuildEm, SpaceMembershipOfSmallestConstruction) {
  Construction c = build_em_tf(2, 5, 40, 1, 16, 0.0, 1.0);
  EXPECT_TRUE(space_check(c.params, c.report.param_norm, c.params.max_heads(), 9).member);
  SpaceVerdict v = space_check(c.params, c.report.param_norm, c.params.max_heads() - 1, 9);
  EXPECT_EQ(v.reason, "heads");
}

TEST(BuildEm, ReportJsonHasCounts) {
  Construction c = build_em_tf(2, 5, 40, 1, 16, 0.0, 1.0);
  const std::string js = c.report.to_json();
  EXPECT_NE(js.find("\"layers\": 9"), std::string::npos);
  EXPECT_NE(js.find("beta"), std::string::npos);
}

TEST(BuildEm, NoiselessOracleBothVariants) {
  EmCase c = em_case(2, 3, 50, 10.0, 0.0, 11);
  Context ctx = build_context(c.inst, c.trace.assignments[0], c.init_centroids);
  EmSpec s = spec_for(c, 2048);
  for (bool plus : {false, true}) {
    Construction tf = plus ? build_em_tf_plus(s) : build_em_tf(s);
    Labels z = extract_assignments(tf_forward(tf.params, ctx.h));
    EXPECT_EQ(z, c.trace.assignments[1]) << (plus ? "tf_plus" : "tf");
  }
}

TEST(BuildEm, NoisyOracleAndPermLoss) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    EmCase c = em_case(3, 5, 40, 8.0, 1.0, seed);
    Context ctx = build_context(c.inst, c.trace.assignments[0], c.init_centroids);
    Construction tf = build_em_tf(spec_for(c, 512));
    Mat out = tf_forward(tf.params, ctx.h);
    EXPECT_EQ(extract_assignments(out), c.trace.assignments[1]);
    EXPECT_LE(perm_loss(out, one_hot(c.trace.assignments[1], 3)), 0.05);
  }
}

TEST(BuildEm, EstepCentroidFidelity) {
  EmCase c = em_case(2, 4, 60, 6.0, 1.0, 5);
  Context ctx = build_context(c.inst, c.trace.assignments[0], c.init_centroids);
  const Mat& mu = c.trace.centroids[1];
  EmSpec s = spec_for(c, 256);
  const double n = static_cast<double>(c.inst.n());

  auto centroid_error = [&](const Construction& tf, std::size_t estep_layers) {
    Mat h = run_layers(prefix(tf.params, estep_layers), ctx.h);
    double err = 0.0;
    for (int u = 0; u < 2; ++u)
      for (int r = 0; r < 4; ++r) err = std::max(err, std::abs(h(ctx.layout.off("centroids") + r, u) - mu(r, u)));
    return err;
  };
  const double tf_err = centroid_error(build_em_tf(s), 2);
  const double plus_err = centroid_error(build_em_tf_plus(s), 6);
  EXPECT_LE(tf_err, s.data_radius / n);
  EXPECT_LE(plus_err, s.data_radius * std::pow(n, -5.0));
  EXPECT_LE(plus_err, tf_err);
}

TEST(BuildEm, PlusNoWorseThanPlainOnPanelMean) {
  // Per instance the two differ only through M-step fit noise; the sharper E-step shows in the panel mean.
  double plain = 0.0, plus = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    EmCase c = em_case(2, 5, 30, 4.0, 1.0, 100 + seed);
    Context ctx = build_context(c.inst, c.trace.assignments[0], c.init_centroids);
    EmSpec s = spec_for(c, 128);
    const Mat truth = one_hot(c.trace.assignments[1], 2);
    plain += perm_loss(tf_forward(build_em_tf(s).params, ctx.h), truth);
    plus += perm_loss(tf_forward(build_em_tf_plus(s).params, ctx.h), truth);
  }
  EXPECT_LE(plus, plain);
}

TEST(BuildEm, MarginImpliesLloydAgreement) {
  int checked = 0;
  for (std::uint64_t seed = 1; seed <= 12; ++seed) {
    EmCase c = em_case(3, 5, 20, 2.0 + static_cast<double>(seed), 1.0, 300 + seed);
    Context ctx = build_context(c.inst, c.trace.assignments[0], c.init_centroids);
    Construction tf = build_em_tf(spec_for(c, 512));
    const double beta = tf.report.constants.at("beta");
    const double fit = tf.report.fit_errors.at("norm_scaled");
    const Mat& mu = c.trace.centroids[1];
    double gamma = 1e300;
    for (std::size_t j = 0; j < c.inst.n(); ++j) {
      std::vector<double> dist;
      for (int u = 0; u < 3; ++u) {
        double s = 0.0;
        for (int r = 0; r < 5; ++r) s += (c.inst.x(r, j) - mu(r, u)) * (c.inst.x(r, j) - mu(r, u));
        dist.push_back(std::sqrt(s));
      }
      std::sort(dist.begin(), dist.end());
      gamma = std::min(gamma, dist[1] - dist[0]);
    }
    const double n = static_cast<double>(c.inst.n());
    if (beta * gamma < std::log(n * 3 / 0.01) || gamma <= 2.0 * fit) continue;
    ++checked;
    EXPECT_EQ(extract_assignments(tf_forward(tf.params, ctx.h)), c.trace.assignments[1]) << seed;
  }
  EXPECT_GT(checked, 3);
}

TEST(BuildEm, PermLossWithinLossShape) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    EmCase c = em_case(2, 4, 30, 6.0, 1.0, 400 + seed);
    LloydTrace tr = lloyd(c.inst.x, c.init_centroids, 2);
    Context ctx = build_context(c.inst, tr.assignments[0], c.init_centroids);
    EmSpec s = spec_for(c, 256);
    s.tau = 2;
    Construction tf = build_em_tf(s);
    const double loss = perm_loss(tf_forward(tf.params, ctx.h), one_hot(tr.assignments.back(), 2));
    EXPECT_LE(loss, tf.report.bounds.at("loss_shape"));
  }
}

TEST(ExtractAssignments, Examples) {
  EXPECT_EQ(extract_assignments(one_hot({1, 0, 2}, 3)), (Labels{1, 0, 2}));
  EXPECT_EQ(extract_assignments(Mat(3, 2, 1.0 / 3)), (Labels{0, 0}));
  Mat dist = Mat::from_rows({{2.0, 0.1}, {0.5, 3.0}});
  for (double beta : {0.01, 1.0, 100.0}) {
    Mat s(2, 2);
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 2; ++j) s(i, j) = -beta * dist(i, j);
    EXPECT_EQ(extract_assignments(softmax_cols(s)), (Labels{1, 0}));
  }
  EXPECT_THROW(extract_assignments(Mat(1, 3)), Error);
}

TEST(BuildPca, DiagonalLeadingVector) {
  Mat x(4, 4);
  x(0, 0) = std::sqrt(3.0);
  x(1, 1) = 1.0;
  x(2, 2) = 0.5;
  Context ctx = build_pca_context(x, 1, 7);
  Construction tf = build_pca_tf(4, 1, 40, 256, 7);
  std::vector<Vec> v = split_pca_output(tf_forward(tf.params, ctx.h), 1, 4);
  EXPECT_GE(abs_cos(v[0], {1, 0, 0, 0}), 0.99);
}

TEST(BuildPca, ErrorWithinInstantiatedBound) {
  Mat x = gapped_spd_factor(6, 2, 21);
  PcaBuildOptions opt;
  opt.lambda_hi = 8.0;
  const int tau = 40;
  Context ctx = build_pca_context(x, 2, 21, opt);
  Construction tf = build_pca_tf(6, 2, tau, 256, 21, opt);
  std::vector<Vec> v = split_pca_output(tf_forward(tf.params, ctx.h), 2, 6);

  const Eigh eig = jacobi_eigh(matmul(x, transpose(x)));
  const double l1 = eig.values[0], l2v = eig.values[1], gap = l1 - l2v;
  // Exact power iteration from the same start measures the eps0 term.
  const Vec v0 = block_col(ctx.h, ctx.layout.off("init") + 6, 6, 0);
  Mat a2 = matmul(x, transpose(x)) - l1 * outer(eig.vectors.col(0), eig.vectors.col(0));
  const Vec exact = power_method_ref(a2, v0, tau / 2);
  const double eps0 = std::max(1e-16, 1.0 - abs_cos(exact, eig.vectors.col(1)));
  const double eps = tf.report.bounds.at("normalization_eps");
  const double bound = tau * eps * l1 * l1 + l1 * std::sqrt(eps0) / gap * 5.0 * l2v / gap;

  Vec u = eig.vectors.col(1);
  if (dot(u, v[1]) < 0) for (double& c : u) c = -c;
  double err = 0.0;
  for (int i = 0; i < 6; ++i) err += (v[1][i] - u[i]) * (v[1][i] - u[i]);
  EXPECT_LE(std::sqrt(err), bound);
  EXPECT_GE(abs_cos(v[0], eig.vectors.col(0)), 0.99);
}

TEST(BuildPca, PowerLayerPairTracksExactStep) {
  Mat x = gapped_spd_factor(5, 1, 4);
  Context ctx = build_pca_context(x, 1, 4);
  Construction tf = build_pca_tf(5, 1, 6, 512, 4);
  const Mat a = matmul(x, transpose(x));
  const Vec v0 = block_col(ctx.h, ctx.layout.off("init"), 5, 0);
  const double eps = tf.report.bounds.at("normalization_eps");
  // Layers: covariance, then (matvec, normalise) pairs.
  for (int steps = 1; steps <= 3; ++steps) {
    Mat h = run_layers(prefix(tf.params, 1 + 2 * steps), ctx.h);
    Vec got = block_col(h, ctx.layout.off("vec"), 5, 0);
    Vec want = power_method_ref(a, v0, steps);
    EXPECT_GE(abs_cos(got, want), 1.0 - 1e-9) << steps;
    EXPECT_NEAR(l2(got), 1.0, 2.0 * eps * steps);
  }
}

TEST(BuildPca, Preconditions) {
  EXPECT_THROW(build_pca_tf(3, 3, 10, 16, 1), Error);
  EXPECT_THROW(build_pca_tf(3, 2, 1, 16, 1), Error);
  Mat flat = Mat::identity(3);
  try {
    build_pca_context(flat, 1, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::conditioning);
  }
  Mat big(3, 3);
  big(0, 0) = 10.0;
  big(1, 1) = 1.0;
  try {
    build_pca_context(big, 1, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::conditioning);
  }
}
