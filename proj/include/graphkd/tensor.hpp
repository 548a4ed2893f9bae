#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "graphkd/error.hpp"

namespace graphkd {

// Dense row-major double tensor, rank 1..3. Small and deliberately simple:
// everything in this codebase fits comfortably in memory, so clarity wins
// over cleverness.
class Tensor {
public:
  Tensor() = default;

  explicit Tensor(std::vector<int> dims, double fill = 0.0)
      : dims_(std::move(dims)),
        data_(static_cast<std::size_t>(count_(dims_)), fill) {}

  static Tensor vector(int n, double fill = 0.0) { return Tensor({n}, fill); }
  static Tensor matrix(int r, int c, double fill = 0.0) {
    return Tensor({r, c}, fill);
  }
  static Tensor chw(int c, int h, int w, double fill = 0.0) {
    return Tensor({c, h, w}, fill);
  }

  static Tensor from(std::initializer_list<double> xs) {
    Tensor t({static_cast<int>(xs.size())});
    std::copy(xs.begin(), xs.end(), t.data_.begin());
    return t;
  }

  static Tensor from_vec(const std::vector<double>& xs) {
    Tensor t({static_cast<int>(xs.size())});
    t.data_ = xs;
    return t;
  }

  int rank() const { return static_cast<int>(dims_.size()); }
  const std::vector<int>& dims() const { return dims_; }
  int dim(int i) const { return dims_[static_cast<std::size_t>(i)]; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& raw() { return data_; }
  const std::vector<double>& raw() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& operator()(int i) { return data_[static_cast<std::size_t>(i)]; }
  double operator()(int i) const { return data_[static_cast<std::size_t>(i)]; }

  double& operator()(int i, int j) {
    return data_[static_cast<std::size_t>(i) * dims_[1] + j];
  }
  double operator()(int i, int j) const {
    return data_[static_cast<std::size_t>(i) * dims_[1] + j];
  }

  double& operator()(int c, int y, int x) {
    return data_[(static_cast<std::size_t>(c) * dims_[1] + y) * dims_[2] + x];
  }
  double operator()(int c, int y, int x) const {
    return data_[(static_cast<std::size_t>(c) * dims_[1] + y) * dims_[2] + x];
  }

  double& operator()(int a, int b, int c, int d) {
    return data_[((static_cast<std::size_t>(a) * dims_[1] + b) * dims_[2] + c) *
                     dims_[3] +
                 d];
  }
  double operator()(int a, int b, int c, int d) const {
    return data_[((static_cast<std::size_t>(a) * dims_[1] + b) * dims_[2] + c) *
                     dims_[3] +
                 d];
  }

  bool same_shape(const Tensor& o) const { return dims_ == o.dims_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  void add_inplace(const Tensor& o) {
    require(same_shape(o), errkind::kDimensionMismatch,
            "tensor add shape mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  }

  void scale_inplace(double s) {
    for (double& v : data_) v *= s;
  }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  double sum() const {
    return std::accumulate(data_.begin(), data_.end(), 0.0);
  }

  double norm2() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return std::sqrt(s);
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::fabs(v));
    return m;
  }

private:
  static long long count_(const std::vector<int>& dims) {
    long long n = 1;
    for (int d : dims) {
      require(d >= 0, errkind::kDimensionMismatch, "negative tensor dim");
      n *= d;
    }
    return n;
  }

  std::vector<int> dims_;
  std::vector<double> data_;
};

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  require(a.size() == b.size(), errkind::kDimensionMismatch,
          "dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(const std::vector<double>& a) {
  double s = 0.0;
  for (double v : a) s += v * v;
  return std::sqrt(s);
}

}  // namespace graphkd
