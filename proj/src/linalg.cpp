#include "tfem/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace tfem {

const char* errc_name(Errc c) {
  switch (c) {
    case Errc::shape: return "shape";
    case Errc::precondition: return "precondition";
    case Errc::degenerate: return "degenerate";
    case Errc::parameter: return "parameter";
    case Errc::feasibility: return "feasibility";
    case Errc::fit_failure: return "fit_failure";
    case Errc::conditioning: return "conditioning";
    case Errc::infeasible_construction: return "infeasible_construction";
    case Errc::config: return "config";
    case Errc::io: return "io";
  }
  return "unknown";
}

Mat Mat::identity(std::size_t n) {
  Mat m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Mat Mat::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  std::size_t r = rows.size();
  std::size_t c = r ? rows.begin()->size() : 0;
  Mat m(r, c);
  std::size_t i = 0;
  for (const auto& row : rows) {
    require(row.size() == c, Errc::shape, "from_rows: ragged rows");
    std::size_t j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

Mat Mat::column(const Vec& v) {
  Mat m(v.size(), 1);
  for (std::size_t i = 0; i < v.size(); ++i) m(i, 0) = v[i];
  return m;
}

Vec Mat::col(std::size_t c) const {
  Vec v(rows_);
  for (std::size_t i = 0; i < rows_; ++i) v[i] = (*this)(i, c);
  return v;
}

void Mat::set_col(std::size_t c, const Vec& v) {
  require(v.size() == rows_, Errc::shape, "set_col: length mismatch");
  for (std::size_t i = 0; i < rows_; ++i) (*this)(i, c) = v[i];
}

bool Mat::all_finite() const {
  return std::all_of(a_.begin(), a_.end(), [](double x) { return std::isfinite(x); });
}

bool Mat::is_zero() const {
  return std::all_of(a_.begin(), a_.end(), [](double x) { return x == 0.0; });
}

static void check_same(const Mat& x, const Mat& y, const char* op) {
  if (x.rows() != y.rows() || x.cols() != y.cols())
    fail(Errc::shape, std::string(op) + ": shape mismatch " + std::to_string(x.rows()) + "x" +
                          std::to_string(x.cols()) + " vs " + std::to_string(y.rows()) + "x" +
                          std::to_string(y.cols()));
}

Mat operator+(const Mat& x, const Mat& y) {
  Mat r = x;
  r += y;
  return r;
}

Mat& operator+=(Mat& x, const Mat& y) {
  check_same(x, y, "add");
  double* a = x.data();
  const double* b = y.data();
  for (std::size_t i = 0; i < x.size(); ++i) a[i] += b[i];
  return x;
}

Mat operator-(const Mat& x, const Mat& y) {
  check_same(x, y, "sub");
  Mat r = x;
  double* a = r.data();
  const double* b = y.data();
  for (std::size_t i = 0; i < r.size(); ++i) a[i] -= b[i];
  return r;
}

Mat operator*(double s, const Mat& x) {
  Mat r = x;
  double* a = r.data();
  for (std::size_t i = 0; i < r.size(); ++i) a[i] *= s;
  return r;
}

Mat matmul(const Mat& x, const Mat& y) {
  require(x.cols() == y.rows(), Errc::shape, "matmul: inner dimension mismatch");
  Mat r(x.rows(), y.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double* ri = r.row(i);
    const double* xi = x.row(i);
    for (std::size_t k = 0; k < x.cols(); ++k) {
      double a = xi[k];
      if (a == 0.0) continue;
      const double* yk = y.row(k);
      for (std::size_t j = 0; j < y.cols(); ++j) ri[j] += a * yk[j];
    }
  }
  return r;
}

Mat matmul_tn(const Mat& x, const Mat& y) {
  require(x.rows() == y.rows(), Errc::shape, "matmul_tn: row count mismatch");
  Mat r(x.cols(), y.cols());
  for (std::size_t k = 0; k < x.rows(); ++k) {
    const double* xk = x.row(k);
    const double* yk = y.row(k);
    for (std::size_t i = 0; i < x.cols(); ++i) {
      double a = xk[i];
      if (a == 0.0) continue;
      double* ri = r.row(i);
      for (std::size_t j = 0; j < y.cols(); ++j) ri[j] += a * yk[j];
    }
  }
  return r;
}

Mat transpose(const Mat& x) {
  Mat r(x.cols(), x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) r(j, i) = x(i, j);
  return r;
}

Vec matvec(const Mat& x, const Vec& v) {
  require(x.cols() == v.size(), Errc::shape, "matvec: length mismatch");
  Vec r(x.rows(), 0.0);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double* xi = x.row(i);
    double s = 0.0;
    for (std::size_t j = 0; j < v.size(); ++j) s += xi[j] * v[j];
    r[i] = s;
  }
  return r;
}

Mat outer(const Vec& u, const Vec& v) {
  Mat r(u.size(), v.size());
  for (std::size_t i = 0; i < u.size(); ++i)
    for (std::size_t j = 0; j < v.size(); ++j) r(i, j) = u[i] * v[j];
  return r;
}

double dot(const Vec& u, const Vec& v) {
  require(u.size() == v.size(), Errc::shape, "dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
  return s;
}

double l2(const Vec& v) { return std::sqrt(dot(v, v)); }

double fro(const Mat& m) {
  double s = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) s += m.data()[i] * m.data()[i];
  return std::sqrt(s);
}

double max_abs_diff(const Mat& x, const Mat& y) {
  check_same(x, y, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::abs(x.data()[i] - y.data()[i]));
  return m;
}

Mat softmax_cols(const Mat& m) {
  require(!m.empty(), Errc::shape, "softmax_cols: empty matrix");
  Mat r(m.rows(), m.cols());
  for (std::size_t j = 0; j < m.cols(); ++j) {
    double mx = m(0, j);
    for (std::size_t i = 1; i < m.rows(); ++i) mx = std::max(mx, m(i, j));
    double s = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i) {
      double e = std::exp(m(i, j) - mx);
      r(i, j) = e;
      s += e;
    }
    for (std::size_t i = 0; i < m.rows(); ++i) r(i, j) /= s;
  }
  return r;
}

Mat relu(const Mat& m) {
  Mat r = m;
  for (std::size_t i = 0; i < r.size(); ++i) r.data()[i] = std::max(r.data()[i], 0.0);
  return r;
}

Eigh jacobi_eigh(const Mat& input) {
  require(input.rows() == input.cols(), Errc::shape, "jacobi_eigh: matrix not square");
  const std::size_t n = input.rows();
  double scale = 0.0;
  for (std::size_t i = 0; i < input.size(); ++i) scale = std::max(scale, std::abs(input.data()[i]));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      require(std::abs(input(i, j) - input(j, i)) <= 1e-10 * std::max(1.0, scale), Errc::precondition,
              "jacobi_eigh: matrix not symmetric");

  Mat a = input;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) a(i, j) = a(j, i) = 0.5 * (a(i, j) + a(j, i));
  Mat v = Mat::identity(n);
  const double total = fro(a);

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (std::sqrt(off) <= 1e-15 * total || off == 0.0) break;

    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double apq = a(p, q);
        if (std::abs(apq) <= 1e-300) continue;
        double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        double c = 1.0 / std::sqrt(t * t + 1.0);
        double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = a(q, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });

  Eigh out;
  out.values.resize(n);
  out.vectors = Mat(n, n);
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t src = order[c];
    out.values[c] = a(src, src);
    // Sign convention: largest-magnitude component positive.
    std::size_t arg = 0;
    for (std::size_t k = 1; k < n; ++k)
      if (std::abs(v(k, src)) > std::abs(v(arg, src)) + 1e-14) arg = k;
    double sgn = v(arg, src) < 0 ? -1.0 : 1.0;
    for (std::size_t k = 0; k < n; ++k) out.vectors(k, c) = sgn * v(k, src);
  }
  return out;
}

Vec power_method_ref(const Mat& a, const Vec& v0, int steps) {
  require(a.rows() == a.cols() && a.cols() == v0.size(), Errc::shape, "power_method_ref: shape mismatch");
  require(steps >= 0, Errc::precondition, "power_method_ref: negative step count");
  double n0 = l2(v0);
  require(n0 > 0.0, Errc::precondition, "power_method_ref: zero start vector");
  Vec v = v0;
  for (double& x : v) x /= n0;
  for (int t = 0; t < steps; ++t) {
    Vec w = matvec(a, v);
    double nw = l2(w);
    require(nw > 0.0, Errc::degenerate, "power_method_ref: Av = 0 at step " + std::to_string(t));
    for (std::size_t i = 0; i < w.size(); ++i) v[i] = w[i] / nw;
  }
  return v;
}

double op_norm(const Mat& m) {
  // Restrict to the non-zero rows and columns; the norm is unchanged.
  std::vector<std::size_t> rs, cs;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double* r = m.row(i);
    if (std::any_of(r, r + m.cols(), [](double x) { return x != 0.0; })) rs.push_back(i);
  }
  if (rs.empty()) return 0.0;
  for (std::size_t j = 0; j < m.cols(); ++j)
    for (std::size_t i : rs)
      if (m(i, j) != 0.0) {
        cs.push_back(j);
        break;
      }
  Mat s(rs.size(), cs.size());
  for (std::size_t i = 0; i < rs.size(); ++i)
    for (std::size_t j = 0; j < cs.size(); ++j) s(i, j) = m(rs[i], cs[j]);

  Mat g = s.rows() >= s.cols() ? matmul_tn(s, s) : matmul_tn(transpose(s), transpose(s));
  const std::size_t n = g.rows();
  if (n == 1) return std::sqrt(g(0, 0));

  std::mt19937_64 rng(0x5eedULL);
  std::normal_distribution<double> gauss;
  Vec v(n);
  for (double& x : v) x = 1.0 + 0.25 * gauss(rng);
  double nv = l2(v);
  for (double& x : v) x /= nv;

  double lam = 0.0;
  for (int it = 0; it < 200000; ++it) {
    Vec w = matvec(g, v);
    double rq = dot(v, w);
    double nw = l2(w);
    if (nw == 0.0) return 0.0;
    for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / nw;
    if (it > 2 && std::abs(rq - lam) <= 1e-15 * rq) {
      lam = rq;
      break;
    }
    lam = rq;
  }
  return std::sqrt(std::max(lam, 0.0));
}

}  // namespace tfem
