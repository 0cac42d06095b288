#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

#include "tfem/error.hpp"

namespace tfem {

using Vec = std::vector<double>;

// Dense row-major matrix of doubles.
class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), a_(rows * cols, fill) {}

  static Mat identity(std::size_t n);
  static Mat from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Mat column(const Vec& v);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return a_.size(); }
  bool empty() const { return a_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return a_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return a_[r * cols_ + c]; }

  double* row(std::size_t r) { return a_.data() + r * cols_; }
  const double* row(std::size_t r) const { return a_.data() + r * cols_; }
  double* data() { return a_.data(); }
  const double* data() const { return a_.data(); }

  Vec col(std::size_t c) const;
  void set_col(std::size_t c, const Vec& v);
  bool all_finite() const;
  bool is_zero() const;

  friend bool operator==(const Mat& x, const Mat& y) {
    return x.rows_ == y.rows_ && x.cols_ == y.cols_ && x.a_ == y.a_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> a_;
};

Mat operator+(const Mat& x, const Mat& y);
Mat operator-(const Mat& x, const Mat& y);
Mat operator*(double s, const Mat& x);
Mat& operator+=(Mat& x, const Mat& y);

Mat matmul(const Mat& x, const Mat& y);
// xᵀ·y without forming the transpose.
Mat matmul_tn(const Mat& x, const Mat& y);
Mat transpose(const Mat& x);
Vec matvec(const Mat& x, const Vec& v);
Mat outer(const Vec& u, const Vec& v);

double dot(const Vec& u, const Vec& v);
double l2(const Vec& v);
double fro(const Mat& m);
double max_abs_diff(const Mat& x, const Mat& y);

// Column-wise softmax with per-column max shift.
Mat softmax_cols(const Mat& m);
Mat relu(const Mat& m);

struct Eigh {
  Vec values;  // descending
  Mat vectors; // column i pairs with values[i]
};

// Cyclic Jacobi eigensolver for symmetric matrices.
Eigh jacobi_eigh(const Mat& a);

// Reference power iteration: `steps` rounds of v <- Av/||Av||.
Vec power_method_ref(const Mat& a, const Vec& v0, int steps);

// Largest singular value via power iteration on the smaller Gram matrix.
double op_norm(const Mat& m);

}  // namespace tfem
