#include "tfem/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <string>

namespace tfem {

double min_pairwise_distance(const Mat& means) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < means.cols(); ++a)
    for (std::size_t b = a + 1; b < means.cols(); ++b) {
      double s = 0.0;
      for (std::size_t r = 0; r < means.rows(); ++r) {
        double t = means(r, a) - means(r, b);
        s += t * t;
      }
      best = std::min(best, std::sqrt(s));
    }
  return best;
}

GmmInstance generate_instance(int k, int d, std::size_t per_cluster, double delta, double sigma, double alpha,
                              std::uint64_t seed) {
  require(k >= 1, Errc::parameter, "generate_instance: k must be positive");
  return generate_instance(d, std::vector<std::size_t>(static_cast<std::size_t>(k), per_cluster), delta, sigma,
                           alpha, seed);
}

GmmInstance generate_instance(int d, const std::vector<std::size_t>& counts, double delta, double sigma,
                              double alpha, std::uint64_t seed) {
  const int k = static_cast<int>(counts.size());
  require(k >= 2, Errc::parameter, "generate_instance: k must be at least 2");
  require(d >= 1, Errc::parameter, "generate_instance: d must be at least 1");
  require(delta > 0.0, Errc::parameter, "generate_instance: delta must be positive");
  require(sigma >= 0.0, Errc::parameter, "generate_instance: sigma must be non-negative");
  require(alpha > 0.0, Errc::parameter, "generate_instance: alpha must be positive");
  require(alpha * k <= 1.0 + 1e-12, Errc::parameter, "generate_instance: alpha*k exceeds 1");

  const std::size_t n = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  const auto need = static_cast<std::size_t>(std::ceil(alpha * static_cast<double>(n) - 1e-9));
  for (int u = 0; u < k; ++u)
    require(counts[u] >= need && counts[u] > 0, Errc::parameter,
            "generate_instance: cluster " + std::to_string(u) + " has fewer than ceil(alpha*N) points");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  // Reject near-coincident configurations so the rescaled spread stays bounded.
  const double floor_dist = 0.25 * 2.0 / std::pow(static_cast<double>(k), 1.0 / d);
  Mat means(d, k);
  bool ok = false;
  for (int attempt = 0; attempt < 100000 && !ok; ++attempt) {
    for (int u = 0; u < k; ++u)
      for (int r = 0; r < d; ++r) means(r, u) = unif(rng);
    ok = min_pairwise_distance(means) >= floor_dist;
  }
  require(ok, Errc::feasibility, "generate_instance: mean placement exceeded 1e5 rejection tries");
  const double scale = delta / min_pairwise_distance(means);
  for (std::size_t i = 0; i < means.size(); ++i) means.data()[i] *= scale;

  Labels z;
  z.reserve(n);
  for (int u = 0; u < k; ++u) z.insert(z.end(), counts[u], u);
  std::shuffle(z.begin(), z.end(), rng);

  GmmInstance inst;
  inst.x = Mat(d, n);
  for (std::size_t j = 0; j < n; ++j)
    for (int r = 0; r < d; ++r) inst.x(r, j) = means(r, z[j]) + (sigma > 0.0 ? sigma * gauss(rng) : 0.0);
  inst.z = std::move(z);
  inst.means = std::move(means);
  inst.sigma = sigma;
  inst.delta = delta;
  inst.alpha = alpha;
  inst.seed = seed;
  return inst;
}

Mat one_hot(const Labels& z, int k) {
  require(k >= 1, Errc::parameter, "one_hot: k must be positive");
  Mat p(k, z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    require(z[i] >= 0 && z[i] < k, Errc::precondition, "one_hot: label out of range at " + std::to_string(i));
    p(z[i], i) = 1.0;
  }
  return p;
}

Labels argmax_cols(const Mat& a) {
  Labels out(a.cols(), 0);
  for (std::size_t j = 0; j < a.cols(); ++j) {
    int best = 0;
    for (std::size_t i = 1; i < a.rows(); ++i)
      if (a(i, j) > a(best, j)) best = static_cast<int>(i);
    out[j] = best;
  }
  return out;
}

namespace {

// cost[l][u] = sum_j |a[l][j] - p1[u][j]|: output row l serves true label u.
std::vector<std::vector<double>> l1_costs(const Mat& a, const Mat& p1) {
  require(a.rows() == p1.rows() && a.cols() == p1.cols(), Errc::shape, "perm_loss: shape mismatch");
  require(a.cols() > 0, Errc::shape, "perm_loss: empty input");
  const std::size_t k = a.rows();
  std::vector<std::vector<double>> cost(k, std::vector<double>(k, 0.0));
  for (std::size_t l = 0; l < k; ++l)
    for (std::size_t u = 0; u < k; ++u) {
      double s = 0.0;
      for (std::size_t j = 0; j < a.cols(); ++j) s += std::abs(a(l, j) - p1(u, j));
      cost[l][u] = s;
    }
  return cost;
}

double assignment_value(const std::vector<std::vector<double>>& cost, const std::vector<int>& perm, std::size_t n) {
  double s = 0.0;
  for (std::size_t l = 0; l < cost.size(); ++l) s += cost[l][perm[l]];
  return s / static_cast<double>(n);
}

}  // namespace

double perm_loss_brute(const Mat& a, const Mat& p1) {
  auto cost = l1_costs(a, p1);
  std::vector<int> perm(cost.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do best = std::min(best, assignment_value(cost, perm, a.cols()));
  while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

double perm_loss_hungarian(const Mat& a, const Mat& p1) {
  auto cost = l1_costs(a, p1);
  return assignment_value(cost, hungarian(cost), a.cols());
}

double perm_loss(const Mat& a, const Mat& p1) {
  return a.rows() <= 8 ? perm_loss_brute(a, p1) : perm_loss_hungarian(a, p1);
}

// Shortest augmenting path (Kuhn–Munkres with potentials), O(n^3).
std::vector<int> hungarian(const std::vector<std::vector<double>>& cost) {
  const std::size_t n = cost.size();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    require(cost[i - 1].size() == n, Errc::shape, "hungarian: cost matrix not square");
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      std::size_t i0 = p[j0], j1 = 0;
      double delta = inf;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> result(n, 0);
  for (std::size_t j = 1; j <= n; ++j)
    if (p[j] != 0) result[p[j] - 1] = static_cast<int>(j - 1);
  return result;
}

namespace {

struct Contingency {
  std::vector<std::vector<double>> table;  // rows: classes of z, cols: classes of zh
  std::vector<double> a, b;               // marginals
  double n = 0.0;
};

Contingency contingency(const Labels& z, const Labels& zh) {
  require(z.size() == zh.size(), Errc::shape, "metrics: label sequences differ in length");
  require(!z.empty(), Errc::shape, "metrics: empty label sequence");
  std::map<int, std::size_t> rz, rzh;
  for (int l : z) rz.emplace(l, 0);
  for (int l : zh) rzh.emplace(l, 0);
  std::size_t i = 0;
  for (auto& kv : rz) kv.second = i++;
  i = 0;
  for (auto& kv : rzh) kv.second = i++;
  Contingency c;
  c.table.assign(rz.size(), std::vector<double>(rzh.size(), 0.0));
  for (std::size_t t = 0; t < z.size(); ++t) c.table[rz[z[t]]][rzh[zh[t]]] += 1.0;
  c.a.assign(rz.size(), 0.0);
  c.b.assign(rzh.size(), 0.0);
  for (std::size_t r = 0; r < rz.size(); ++r)
    for (std::size_t s = 0; s < rzh.size(); ++s) {
      c.a[r] += c.table[r][s];
      c.b[s] += c.table[r][s];
    }
  c.n = static_cast<double>(z.size());
  return c;
}

double comb2(double x) { return x * (x - 1.0) / 2.0; }

}  // namespace

double ari(const Labels& z, const Labels& zh) {
  Contingency c = contingency(z, zh);
  double sum_ij = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (const auto& row : c.table)
    for (double v : row) sum_ij += comb2(v);
  for (double v : c.a) sum_a += comb2(v);
  for (double v : c.b) sum_b += comb2(v);
  double expected = sum_a * sum_b / comb2(c.n);
  double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;  // both partitions trivial in the same way
  return (sum_ij - expected) / (max_index - expected);
}

double nmi(const Labels& z, const Labels& zh) {
  Contingency c = contingency(z, zh);
  auto entropy = [&](const std::vector<double>& m) {
    double h = 0.0;
    for (double v : m)
      if (v > 0) h -= (v / c.n) * std::log(v / c.n);
    return h;
  };
  double hz = entropy(c.a), hzh = entropy(c.b);
  double mi = 0.0;
  for (std::size_t r = 0; r < c.a.size(); ++r)
    for (std::size_t s = 0; s < c.b.size(); ++s) {
      double v = c.table[r][s];
      if (v > 0) mi += (v / c.n) * std::log(v * c.n / (c.a[r] * c.b[s]));
    }
  double denom = 0.5 * (hz + hzh);
  if (denom <= 0.0) return 1.0;  // both partitions are single clusters
  return std::clamp(mi / denom, 0.0, 1.0);
}

double misclass(const Labels& z, const Labels& zh) {
  Contingency c = contingency(z, zh);
  const std::size_t m = std::max(c.a.size(), c.b.size());
  // Maximise matches = minimise negated overlaps on a padded square table.
  std::vector<std::vector<double>> cost(m, std::vector<double>(m, 0.0));
  for (std::size_t r = 0; r < c.a.size(); ++r)
    for (std::size_t s = 0; s < c.b.size(); ++s) cost[r][s] = -c.table[r][s];
  std::vector<int> assign = hungarian(cost);
  double matched = 0.0;
  for (std::size_t r = 0; r < m; ++r) matched -= cost[r][assign[r]];
  return 1.0 - matched / c.n;
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(tok);
  return out;
}

bool next_line(std::istream& is, std::string& line) {
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) return true;
  }
  return false;
}

double parse_double(const std::string& s) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    fail(Errc::io, "instance csv: bad number '" + s + "'");
  }
}

void expect_tag(std::istream& is, const char* tag) {
  std::string line;
  require(next_line(is, line) && line == tag, Errc::io, std::string("instance csv: expected '") + tag + "'");
}

}  // namespace

void write_instance_csv(std::ostream& os, const GmmInstance& inst) {
  os << "#k,d,N,sigma,delta,alpha,seed\n";
  os << inst.k() << ',' << inst.d() << ',' << inst.n() << ',' << fmt(inst.sigma) << ',' << fmt(inst.delta) << ','
     << fmt(inst.alpha) << ',' << inst.seed << '\n';
  os << "means\n";
  for (int u = 0; u < inst.k(); ++u) {
    for (int r = 0; r < inst.d(); ++r) os << (r ? "," : "") << fmt(inst.means(r, u));
    os << '\n';
  }
  os << "labels\n";
  for (std::size_t j = 0; j < inst.n(); ++j) os << (j ? "," : "") << inst.z[j];
  os << '\n';
  os << "data\n";
  for (std::size_t j = 0; j < inst.n(); ++j) {
    for (int r = 0; r < inst.d(); ++r) os << (r ? "," : "") << fmt(inst.x(r, j));
    os << '\n';
  }
}

GmmInstance read_instance_csv(std::istream& is) {
  std::string line;
  require(next_line(is, line) && line == "#k,d,N,sigma,delta,alpha,seed", Errc::io, "instance csv: bad header");
  require(next_line(is, line), Errc::io, "instance csv: missing parameter row");
  auto f = split_csv(line);
  require(f.size() == 7, Errc::io, "instance csv: parameter row needs 7 fields");
  const int k = static_cast<int>(parse_double(f[0]));
  const int d = static_cast<int>(parse_double(f[1]));
  const auto n = static_cast<std::size_t>(parse_double(f[2]));
  require(k >= 1 && d >= 1 && n >= 1, Errc::io, "instance csv: non-positive dimension");

  GmmInstance inst;
  inst.sigma = parse_double(f[3]);
  inst.delta = parse_double(f[4]);
  inst.alpha = parse_double(f[5]);
  inst.seed = std::stoull(f[6]);

  expect_tag(is, "means");
  inst.means = Mat(d, k);
  for (int u = 0; u < k; ++u) {
    require(next_line(is, line), Errc::io, "instance csv: truncated means");
    auto v = split_csv(line);
    require(v.size() == static_cast<std::size_t>(d), Errc::io, "instance csv: mean row length");
    for (int r = 0; r < d; ++r) inst.means(r, u) = parse_double(v[r]);
  }
  expect_tag(is, "labels");
  require(next_line(is, line), Errc::io, "instance csv: missing labels");
  auto lab = split_csv(line);
  require(lab.size() == n, Errc::io, "instance csv: label count");
  inst.z.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    inst.z[j] = static_cast<int>(parse_double(lab[j]));
    require(inst.z[j] >= 0 && inst.z[j] < k, Errc::io, "instance csv: label out of range");
  }
  expect_tag(is, "data");
  inst.x = Mat(d, n);
  for (std::size_t j = 0; j < n; ++j) {
    require(next_line(is, line), Errc::io, "instance csv: truncated data");
    auto v = split_csv(line);
    require(v.size() == static_cast<std::size_t>(d), Errc::io, "instance csv: data row length");
    for (int r = 0; r < d; ++r) inst.x(r, j) = parse_double(v[r]);
  }
  return inst;
}

}  // namespace tfem
