#include "tfem/classical.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace tfem {

namespace {

double sq_dist(const Mat& x, std::size_t j, const Mat& c, std::size_t l) {
  double s = 0.0;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double t = x(r, j) - c(r, l);
    s += t * t;
  }
  return s;
}

}  // namespace

Labels nearest_centroid(const Mat& x, const Mat& centroids) {
  require(x.rows() == centroids.rows(), Errc::shape, "nearest_centroid: dimension mismatch");
  Labels z(x.cols(), 0);
  for (std::size_t j = 0; j < x.cols(); ++j) {
    double best = sq_dist(x, j, centroids, 0);
    for (std::size_t l = 1; l < centroids.cols(); ++l) {
      double dd = sq_dist(x, j, centroids, l);
      if (dd < best) {
        best = dd;
        z[j] = static_cast<int>(l);
      }
    }
  }
  return z;
}

double kmeans_objective(const Mat& x, const Mat& centroids, const Labels& z) {
  double s = 0.0;
  for (std::size_t j = 0; j < x.cols(); ++j) s += sq_dist(x, j, centroids, z[j]);
  return s;
}

LloydTrace lloyd(const Mat& x, const Mat& init_centroids, int tau) {
  require(tau >= 1, Errc::precondition, "lloyd: tau must be at least 1");
  require(init_centroids.rows() == x.rows(), Errc::shape, "lloyd: centroids must be d×k");
  require(init_centroids.cols() >= 1, Errc::shape, "lloyd: need at least one centroid");
  const std::size_t d = x.rows(), n = x.cols(), k = init_centroids.cols();

  LloydTrace tr;
  tr.centroids.push_back(init_centroids);
  tr.assignments.push_back(nearest_centroid(x, init_centroids));

  for (int t = 1; t <= tau; ++t) {
    const Labels& z = tr.assignments.back();
    const Mat& prev = tr.centroids.back();
    Mat mu(d, k);
    std::vector<std::size_t> count(k, 0);
    for (std::size_t j = 0; j < n; ++j) {
      ++count[z[j]];
      for (std::size_t r = 0; r < d; ++r) mu(r, z[j]) += x(r, j);
    }
    std::vector<char> taken(n, 0);
    for (std::size_t l = 0; l < k; ++l) {
      if (count[l] > 0) {
        for (std::size_t r = 0; r < d; ++r) mu(r, l) /= static_cast<double>(count[l]);
        continue;
      }
      // Empty cluster: re-seed with the point farthest from its own centroid.
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (taken[j]) continue;
        double dd = sq_dist(x, j, prev, z[j]);
        if (dd > far_d) {
          far_d = dd;
          far = j;
        }
      }
      taken[far] = 1;
      for (std::size_t r = 0; r < d; ++r) mu(r, l) = x(r, far);
    }
    Labels next = nearest_centroid(x, mu);
    bool same = next == z;
    tr.centroids.push_back(std::move(mu));
    tr.assignments.push_back(std::move(next));
    tr.iterations_run = t;
    if (same) {
      tr.converged = true;
      break;
    }
  }
  return tr;
}

Mat kmeanspp(const Mat& x, int k, std::uint64_t seed) {
  require(k >= 1, Errc::precondition, "kmeanspp: k must be positive");
  require(static_cast<std::size_t>(k) <= x.cols(), Errc::precondition, "kmeanspp: k exceeds number of points");
  const std::size_t n = x.cols();
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> chosen;
  std::vector<char> used(n, 0);
  chosen.push_back(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
  used[chosen[0]] = 1;

  std::vector<double> d2(n);
  for (std::size_t j = 0; j < n; ++j) d2[j] = sq_dist(x, j, x, chosen[0]);
  while (chosen.size() < static_cast<std::size_t>(k)) {
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += used[j] ? 0.0 : d2[j];
    std::size_t pick = n;
    if (total > 0.0) {
      double u = std::uniform_real_distribution<double>(0.0, total)(rng);
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (used[j] || d2[j] == 0.0) continue;
        acc += d2[j];
        pick = j;
        if (acc > u) break;
      }
    } else {
      // All remaining points coincide with a center: draw uniformly among unused columns.
      std::vector<std::size_t> rest;
      for (std::size_t j = 0; j < n; ++j)
        if (!used[j]) rest.push_back(j);
      pick = rest[std::uniform_int_distribution<std::size_t>(0, rest.size() - 1)(rng)];
    }
    chosen.push_back(pick);
    used[pick] = 1;
    for (std::size_t j = 0; j < n; ++j) d2[j] = std::min(d2[j], sq_dist(x, j, x, pick));
  }

  Mat c(x.rows(), k);
  for (int l = 0; l < k; ++l)
    for (std::size_t r = 0; r < x.rows(); ++r) c(r, l) = x(r, chosen[l]);
  return c;
}

constexpr int kSpectralRestarts = 10;

SpectralInit spectral_init(const Mat& x, int k, std::uint64_t seed) {
  const std::size_t d = x.rows(), n = x.cols();
  require(k >= 1 && static_cast<std::size_t>(k) <= std::min(d, n), Errc::precondition,
          "spectral_init: need k <= min(d, N)");
  Eigh e = jacobi_eigh(matmul_tn(transpose(x), transpose(x)));
  require(e.values[k - 1] > 1e-12 * std::max(e.values[0], 1e-300), Errc::degenerate,
          "spectral_init: rank(XXᵀ) < k");

  Mat proj(k, n);
  for (int l = 0; l < k; ++l)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t r = 0; r < d; ++r) s += e.vectors(r, l) * x(r, j);
      proj(l, j) = s;
    }

  // The init step asks for the k-means minimiser; keep the best of several seeded k-means++ runs.
  LloydTrace tr;
  double best = 0.0;
  for (int r = 0; r < kSpectralRestarts; ++r) {
    LloydTrace cand = lloyd(proj, kmeanspp(proj, k, seed + 0x9E3779B97F4A7C15ULL * r), 100);
    const double obj = kmeans_objective(proj, cand.centroids.back(), cand.assignments.back());
    if (r == 0 || obj < best) {
      best = obj;
      tr = std::move(cand);
    }
  }
  SpectralInit out;
  out.labels = tr.assignments.back();
  out.centroids = Mat(d, k);
  std::vector<std::size_t> count(k, 0);
  for (std::size_t j = 0; j < n; ++j) {
    ++count[out.labels[j]];
    for (std::size_t r = 0; r < d; ++r) out.centroids(r, out.labels[j]) += x(r, j);
  }
  for (int l = 0; l < k; ++l) {
    if (count[l] == 0) {
      // Lift the projected centre itself when a cluster ends empty.
      for (std::size_t r = 0; r < d; ++r) {
        double s = 0.0;
        for (int q = 0; q < k; ++q) s += e.vectors(r, q) * tr.centroids.back()(q, l);
        out.centroids(r, l) = s;
      }
      continue;
    }
    for (std::size_t r = 0; r < d; ++r) out.centroids(r, l) /= static_cast<double>(count[l]);
  }
  return out;
}

Vec random_unit(std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Vec v(d);
  double nv = 0.0;
  while (nv == 0.0) {
    for (double& t : v) t = g(rng);
    nv = l2(v);
  }
  for (double& t : v) t /= nv;
  return v;
}

Mat gapped_spd_factor(int d, int k, std::uint64_t seed) {
  require(d >= 1 && k >= 0 && k <= d, Errc::precondition, "gapped_spd_factor: need 0 <= k <= d");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vec lam(d);
  for (double& l : lam) l = u(rng);
  std::sort(lam.begin(), lam.end());
  double top = d > k ? lam[d - k - 1] : 0.0;
  for (int i = d - k; i < d; ++i) lam[i] = top += 1.0 + u(rng);

  // Orthonormal basis by modified Gram-Schmidt on a Gaussian matrix.
  std::normal_distribution<double> g;
  std::vector<Vec> basis;
  while (basis.size() < static_cast<std::size_t>(d)) {
    Vec v(d);
    for (double& t : v) t = g(rng);
    for (const Vec& b : basis) {
      double c = dot(v, b);
      for (int r = 0; r < d; ++r) v[r] -= c * b[r];
    }
    double nv = l2(v);
    if (nv < 1e-8) continue;
    for (double& t : v) t /= nv;
    basis.push_back(std::move(v));
  }
  Mat x(d, d);
  for (int c = 0; c < d; ++c)
    for (int r = 0; r < d; ++r) x(r, c) = basis[c][r] * std::sqrt(lam[c]);
  return x;
}

Deflation topk_deflation(const Mat& a, int k, int tau, std::uint64_t seed) {
  require(a.rows() == a.cols(), Errc::shape, "topk_deflation: matrix not square");
  require(k >= 1 && static_cast<std::size_t>(k) <= a.rows(), Errc::precondition, "topk_deflation: bad k");
  Deflation out;
  Eigh e = jacobi_eigh(a);
  out.min_gap = std::numeric_limits<double>::infinity();
  for (int i = 0; i < k; ++i) {
    double next = static_cast<std::size_t>(i + 1) < a.rows() ? e.values[i + 1] : 0.0;
    out.min_gap = std::min(out.min_gap, e.values[i] - next);
  }
  if (out.min_gap < 1e-8) {
    out.conditioning_warning = true;
    out.warning = "spectral gap among the top k+1 eigenvalues is below 1e-8";
  }

  std::mt19937_64 seeder(seed);
  Mat ai = a;
  for (int i = 0; i < k; ++i) {
    Vec v0 = random_unit(a.rows(), seeder());
    Vec v = power_method_ref(ai, v0, tau);
    double lam = l2(matvec(ai, v));
    out.start_cosines.push_back(std::abs(dot(v0, v)));
    out.vectors.push_back(v);
    out.values.push_back(lam);
    ai = ai - lam * outer(v, v);
  }
  return out;
}

}  // namespace tfem
