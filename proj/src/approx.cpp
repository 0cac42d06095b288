#include "tfem/approx.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>
#include <random>
#include <tuple>

namespace tfem {

Vec hardmax(const Vec& v) {
  require(!v.empty(), Errc::shape, "hardmax: empty vector");
  double mx = *std::max_element(v.begin(), v.end());
  double m = static_cast<double>(std::count(v.begin(), v.end(), mx));
  Vec h(v.size(), 0.0);
  for (std::size_t i = 0; i < v.size(); ++i)
    if (v[i] == mx) h[i] = 1.0 / m;
  return h;
}

GapBound hardmax_gap_bound(const Vec& v, double beta) {
  require(v.size() >= 2, Errc::shape, "hardmax_gap_bound: need at least two entries");
  require(beta > 0.0, Errc::precondition, "hardmax_gap_bound: beta must be positive");
  const double mx = *std::max_element(v.begin(), v.end());
  const double m = static_cast<double>(std::count(v.begin(), v.end(), mx));
  const double d = static_cast<double>(v.size());
  GapBound g;
  if (m == d) return g;  // constant vector: softmax and hardmax are both uniform

  // Tail mass written without 1 - p cancellation.
  double s = 0.0, second = -std::numeric_limits<double>::infinity();
  for (double x : v)
    if (x != mx) {
      s += std::exp(beta * (x - mx));
      second = std::max(second, x);
    }
  const double z = m + s;
  double sq = m * std::pow(s / (m * z), 2.0);
  for (double x : v)
    if (x != mx) sq += std::pow(std::exp(beta * (x - mx)) / z, 2.0);
  g.gap = std::sqrt(sq);
  g.delta = mx - second;
  g.bound = std::sqrt((d - m) + (d - m) * (d - m) / (m * m * m)) * std::exp(-beta * g.delta);
  g.holds = g.gap <= g.bound * (1.0 + 1e-12);
  return g;
}

const char* target_name(Target t) {
  switch (t) {
    case Target::inv_norm: return "inv_norm";
    case Target::sqrt_norm: return "sqrt_norm";
    case Target::inv_scalar: return "inv_scalar";
    case Target::coordinate: return "coordinate";
    case Target::norm: return "norm";
  }
  return "unknown";
}

double target_value(Target t, const Vec& x) {
  switch (t) {
    case Target::inv_norm: return 1.0 / l2(x);
    case Target::sqrt_norm: return std::sqrt(l2(x));
    case Target::inv_scalar: return 1.0 / x.at(0);
    case Target::coordinate: return x.at(0);
    case Target::norm: return l2(x);
  }
  return 0.0;
}

Vec FeatureApprox::encode(const Vec& x) const {
  if (input == InputMap::squared_norm) return {input_scale * dot(x, x)};
  Vec u(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) u[i] = input_scale * x[i];
  return u;
}

namespace {

double score(const Vec& dir, const Vec& u) {
  double s = dir.back();
  for (std::size_t i = 0; i < u.size(); ++i) s += dir[i] * u[i];
  return s;
}

double sigmoid(double u) { return u >= 0 ? 1.0 / (1.0 + std::exp(-u)) : std::exp(u) / (1.0 + std::exp(u)); }

}  // namespace

double FeatureApprox::eval(const Vec& x) const {
  Vec u = encode(x);
  double f = 0.0;
  for (const auto& a : atoms) f += a.coef * std::max(0.0, score(a.dir, u));
  return f;
}

Vec FeatureApprox::atom_softmax(const Atom& a, const Vec& x) const {
  // B has k_out+1 rows; only row `out` is non-zero and carries the log(k_out) shift.
  Vec u = encode(x);
  Mat b(static_cast<std::size_t>(k_out) + 1, 1, 0.0);
  b(a.out, 0) = gain * score(a.dir, u) + std::log(static_cast<double>(k_out));
  Mat p = softmax_cols(b);
  Vec r(k_out);
  for (int l = 0; l < k_out; ++l) r[l] = a.coef * p(l, 0);
  return r;
}

Vec FeatureApprox::eval_vec(const Vec& x) const {
  Vec f(k_out, 0.0);
  for (const auto& a : atoms) {
    Vec r = atom_softmax(a, x);
    for (int l = 0; l < k_out; ++l) f[l] += r[l];
  }
  return f;
}

namespace {

bool scalar_domain(Target t, int d) { return t == Target::inv_scalar || (t == Target::coordinate && d == 1); }

// Annulus or interval sample; stratum in [0,1) picks the radius.
Vec domain_point(Target t, int d, double r_lo, double r_hi, double stratum, std::mt19937_64& rng) {
  double r = r_lo + stratum * (r_hi - r_lo);
  if (scalar_domain(t, d)) return {r};
  std::normal_distribution<double> g;
  Vec x(d);
  double n = 0.0;
  while (n == 0.0) {
    for (double& v : x) v = g(rng);
    n = l2(x);
  }
  for (double& v : x) v *= r / n;
  return x;
}

std::vector<Vec> probe_set(Target t, int d, double r_lo, double r_hi, std::uint64_t seed) {
  constexpr int n = 10000;
  std::mt19937_64 rng(seed ^ 0x70be5eedULL);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Vec> pts;
  pts.reserve(n);
  for (int i = 0; i < n; ++i) {
    double stratum = i == 0 ? 0.0 : i == n - 1 ? 1.0 : (i + u(rng)) / n;
    pts.push_back(domain_point(t, d, r_lo, r_hi, stratum, rng));
  }
  return pts;
}

struct Solve {
  Eigen::VectorXd coef;
  bool ok = false;
};

Solve ridge_solve(Eigen::MatrixXd& g, const Eigen::VectorXd& b, double ridge) {
  const Eigen::Index m = g.rows();
  g.triangularView<Eigen::StrictlyUpper>() = g.transpose().triangularView<Eigen::StrictlyUpper>();
  double mean_diag = g.diagonal().mean();
  if (!(mean_diag > 0.0)) return {};
  g.diagonal().array() += ridge * mean_diag;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(g);
  Solve s;
  if (ldlt.info() != Eigen::Success) return s;
  s.coef = ldlt.solve(b);
  s.ok = s.coef.allFinite() && s.coef.size() == m;
  return s;
}

// Gram system for features sigma(alpha t + beta) on scalar samples, via prefix sums.
void scalar_gram(const std::vector<Atom>& atoms, std::vector<std::pair<double, double>> ty, Eigen::MatrixXd& g,
                 Eigen::VectorXd& b) {
  std::sort(ty.begin(), ty.end());
  const std::size_t n = ty.size(), m = atoms.size();
  std::vector<long double> p0(n + 1, 0), p1(n + 1, 0), p2(n + 1, 0), y0(n + 1, 0), y1(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    long double t = ty[i].first, y = ty[i].second;
    p0[i + 1] = p0[i] + 1;
    p1[i + 1] = p1[i] + t;
    p2[i + 1] = p2[i] + t * t;
    y0[i + 1] = y0[i] + y;
    y1[i + 1] = y1[i] + t * y;
  }
  // Active index range [lo, hi) of each feature.
  std::vector<std::size_t> lo(m), hi(m);
  for (std::size_t a = 0; a < m; ++a) {
    double al = atoms[a].dir[0], be = atoms[a].dir[1];
    auto active = [&](std::size_t i) { return al * ty[i].first + be > 0.0; };
    if (al > 0) {
      std::size_t l = 0, h = n;
      while (l < h) {
        std::size_t mid = (l + h) / 2;
        if (active(mid)) h = mid; else l = mid + 1;
      }
      lo[a] = l;
      hi[a] = n;
    } else if (al < 0) {
      std::size_t l = 0, h = n;
      while (l < h) {
        std::size_t mid = (l + h) / 2;
        if (!active(mid)) h = mid; else l = mid + 1;
      }
      lo[a] = 0;
      hi[a] = l;
    } else {
      lo[a] = 0;
      hi[a] = be > 0 ? n : 0;
    }
  }
  g.setZero(m, m);
  b.setZero(m);
  for (std::size_t a = 0; a < m; ++a) {
    long double aa = atoms[a].dir[0], ba = atoms[a].dir[1];
    if (lo[a] < hi[a])
      b(a) = static_cast<double>(aa * (y1[hi[a]] - y1[lo[a]]) + ba * (y0[hi[a]] - y0[lo[a]]));
    for (std::size_t c = 0; c <= a; ++c) {
      std::size_t l = std::max(lo[a], lo[c]), h = std::min(hi[a], hi[c]);
      if (l >= h) continue;
      long double ac = atoms[c].dir[0], bc = atoms[c].dir[1];
      long double v = aa * ac * (p2[h] - p2[l]) + (aa * bc + ac * ba) * (p1[h] - p1[l]) + ba * bc * (p0[h] - p0[l]);
      g(a, c) = static_cast<double>(v);
    }
  }
}

std::vector<Atom> relu_atoms(int p, int m, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss;
  std::vector<Atom> atoms;
  for (int i = 0; i < m; ++i) {
    Atom a;
    a.dir.resize(p + 1);
    double n = 0.0;
    while (n == 0.0) {
      for (double& v : a.dir) v = gauss(rng);
      n = l2(a.dir);
    }
    for (double& v : a.dir) v /= n;
    atoms.push_back(std::move(a));
  }
  // Signed coordinates and the constant make linear maps exactly representable.
  for (int i = 0; i < p; ++i)
    for (double s : {1.0, -1.0}) {
      Atom a;
      a.dir.assign(p + 1, 0.0);
      a.dir[i] = s;
      atoms.push_back(std::move(a));
    }
  Atom bias;
  bias.dir.assign(p + 1, 0.0);
  bias.dir[p] = 1.0;
  atoms.push_back(std::move(bias));
  return atoms;
}

}  // namespace

FeatureApprox fit_relu_features(Target target, int d, double r_lo, double r_hi, int m, std::uint64_t seed,
                                InputMap input) {
  require(d >= 1, Errc::precondition, "fit_relu_features: d must be positive");
  require(m >= 8, Errc::precondition, "fit_relu_features: m must be at least 8");
  const bool zero_ok = target == Target::norm || target == Target::coordinate;
  require(r_lo < r_hi && (r_lo > 0.0 || (zero_ok && r_lo == 0.0)), Errc::precondition,
          "fit_relu_features: need 0 < r_lo < r_hi");
  require(target != Target::inv_scalar || d == 1, Errc::precondition, "fit_relu_features: inv_scalar needs d = 1");
  require(input == InputMap::vector || target == Target::inv_norm || target == Target::sqrt_norm ||
              target == Target::norm,
          Errc::precondition, "fit_relu_features: squared-norm input needs a radial target");

  FeatureApprox fa;
  fa.kind = FeatureKind::relu;
  fa.target = target;
  fa.input = input;
  fa.d = d;
  fa.r_lo = r_lo;
  fa.r_hi = r_hi;
  fa.input_scale = input == InputMap::squared_norm ? 1.0 / (r_hi * r_hi) : 1.0 / r_hi;
  fa.random_atoms = m;
  const int p = input == InputMap::squared_norm ? 1 : d;

  for (int attempt = 0; attempt <= 5; ++attempt) {
    const std::uint64_t s = seed + static_cast<std::uint64_t>(attempt) * 0x9E3779B97F4A7C15ULL;
    std::mt19937_64 rng(s);
    std::vector<Atom> atoms = relu_atoms(p, m, rng);
    const std::size_t total = atoms.size();
    const std::size_t n_samples = 50 * total;
    std::uniform_real_distribution<double> u01(0.0, 1.0);

    Eigen::MatrixXd g;
    Eigen::VectorXd b;
    fa.atoms = atoms;
    if (p == 1) {
      std::vector<std::pair<double, double>> ty(n_samples);
      for (auto& e : ty) {
        Vec x = domain_point(target, d, r_lo, r_hi, u01(rng), rng);
        e = {fa.encode(x)[0], target_value(target, x)};
      }
      scalar_gram(atoms, std::move(ty), g, b);
    } else {
      Eigen::MatrixXd dirs(p + 1, total);
      for (std::size_t a = 0; a < total; ++a)
        for (int i = 0; i <= p; ++i) dirs(i, a) = atoms[a].dir[i];
      g.setZero(total, total);
      b.setZero(total);
      const std::size_t chunk = 2048;
      for (std::size_t start = 0; start < n_samples; start += chunk) {
        const std::size_t rows = std::min(chunk, n_samples - start);
        Eigen::MatrixXd xin(rows, p + 1);
        Eigen::VectorXd y(rows);
        for (std::size_t r = 0; r < rows; ++r) {
          Vec x = domain_point(target, d, r_lo, r_hi, u01(rng), rng);
          Vec uu = fa.encode(x);
          for (int i = 0; i < p; ++i) xin(r, i) = uu[i];
          xin(r, p) = 1.0;
          y(r) = target_value(target, x);
        }
        Eigen::MatrixXd phi = (xin * dirs).cwiseMax(0.0);
        g.selfadjointView<Eigen::Lower>().rankUpdate(phi.transpose());
        b.noalias() += phi.transpose() * y;
      }
    }
    Solve sol = ridge_solve(g, b, fa.ridge);
    if (!sol.ok) continue;
    for (std::size_t a = 0; a < total; ++a) fa.atoms[a].coef = sol.coef(a);
    fa.samples = n_samples;
    fa.attempts = attempt + 1;
    fa.seed = s;

    double sup = 0.0;
    for (const Vec& x : probe_set(target, d, r_lo, r_hi, seed))
      sup = std::max(sup, std::abs(fa.eval(x) - target_value(target, x)));
    fa.measured_sup_error = sup;
    return fa;
  }
  fail(Errc::fit_failure, "fit_relu_features: normal equations singular after 5 reseeds");
}

std::shared_ptr<const FeatureApprox> cached_relu_features(Target target, int d, double r_lo, double r_hi, int m,
                                                          std::uint64_t seed, InputMap input) {
  using Key = std::tuple<int, int, double, double, int, std::uint64_t, int>;
  static std::mutex mu;
  static std::map<Key, std::shared_ptr<const FeatureApprox>> cache;
  Key key{static_cast<int>(target), d, r_lo, r_hi, m, seed, static_cast<int>(input)};
  {
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
  }
  auto fit = std::make_shared<const FeatureApprox>(fit_relu_features(target, d, r_lo, r_hi, m, seed, input));
  std::lock_guard<std::mutex> lock(mu);
  return cache.emplace(key, fit).first->second;
}

FeatureApprox fit_softmax_features(const VectorMap& f, int d, int k_out, double r, int m, std::uint64_t seed) {
  require(d >= 1 && k_out >= 1, Errc::precondition, "fit_softmax_features: bad dimensions");
  require(m >= 8, Errc::precondition, "fit_softmax_features: m must be at least 8");
  require(r > 0.0, Errc::precondition, "fit_softmax_features: r must be positive");

  FeatureApprox fa;
  fa.kind = FeatureKind::softmax_atom;
  fa.d = d;
  fa.k_out = k_out;
  fa.r_lo = 0.0;
  fa.r_hi = r;
  fa.input_scale = 1.0 / r;
  fa.gain = 4.0;
  fa.random_atoms = m;

  auto box_point = [&](std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-r, r);
    Vec x(d);
    for (double& v : x) v = u(rng);
    return x;
  };

  for (int attempt = 0; attempt <= 5; ++attempt) {
    const std::uint64_t s = seed + static_cast<std::uint64_t>(attempt) * 0x9E3779B97F4A7C15ULL;
    std::mt19937_64 rng(s);
    std::normal_distribution<double> gauss;
    std::vector<Atom> atoms;
    for (int i = 0; i < m; ++i) {
      Atom a;
      a.dir.resize(d + 1);
      double n = 0.0;
      while (n == 0.0) {
        for (double& v : a.dir) v = gauss(rng);
        n = l2(a.dir);
      }
      for (double& v : a.dir) v /= n;
      a.out = i % k_out;
      atoms.push_back(std::move(a));
    }
    for (int l = 0; l < k_out; ++l) {
      Atom a;
      a.dir.assign(d + 1, 0.0);
      a.dir[d] = 1.0;
      a.out = l;
      atoms.push_back(std::move(a));
    }
    const std::size_t total = atoms.size();
    const std::size_t n_samples = 50 * total;

    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(total, total);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(total);
    const std::size_t chunk = 1024;
    std::vector<double> sig(total);
    for (std::size_t start = 0; start < n_samples; start += chunk) {
      const std::size_t rows = std::min(chunk, n_samples - start);
      Eigen::MatrixXd phi(rows * k_out, total);
      Eigen::VectorXd y(rows * k_out);
      for (std::size_t r0 = 0; r0 < rows; ++r0) {
        Vec x = box_point(rng);
        Vec fx = f(x);
        require(fx.size() == static_cast<std::size_t>(k_out), Errc::shape, "fit_softmax_features: target arity");
        Vec uu = fa.encode(x);
        for (std::size_t a = 0; a < total; ++a) sig[a] = sigmoid(fa.gain * score(atoms[a].dir, uu));
        for (int l = 0; l < k_out; ++l) {
          const std::size_t row = r0 * k_out + l;
          y(row) = fx[l];
          for (std::size_t a = 0; a < total; ++a)
            phi(row, a) = atoms[a].out == l ? sig[a] : (1.0 - sig[a]) / k_out;
        }
      }
      g.selfadjointView<Eigen::Lower>().rankUpdate(phi.transpose());
      b.noalias() += phi.transpose() * y;
    }
    Solve sol = ridge_solve(g, b, fa.ridge);
    if (!sol.ok) continue;
    for (std::size_t a = 0; a < total; ++a) atoms[a].coef = sol.coef(a);
    fa.atoms = std::move(atoms);
    fa.samples = n_samples;
    fa.attempts = attempt + 1;
    fa.seed = s;

    // Stratified probes: independent jittered strata per coordinate.
    constexpr int n_probe = 10000;
    std::mt19937_64 prng(seed ^ 0x70be5eedULL);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::vector<std::vector<int>> strata(d, std::vector<int>(n_probe));
    for (auto& st : strata) {
      std::iota(st.begin(), st.end(), 0);
      std::shuffle(st.begin(), st.end(), prng);
    }
    double sup = 0.0;
    for (int i = 0; i < n_probe; ++i) {
      Vec x(d);
      for (int c = 0; c < d; ++c) x[c] = -r + 2.0 * r * (strata[c][i] + u01(prng)) / n_probe;
      Vec fx = f(x), gx = fa.eval_vec(x);
      for (int l = 0; l < k_out; ++l) sup = std::max(sup, std::abs(fx[l] - gx[l]));
    }
    fa.measured_sup_error = sup;
    return fa;
  }
  fail(Errc::fit_failure, "fit_softmax_features: normal equations singular after 5 reseeds");
}

}  // namespace tfem
