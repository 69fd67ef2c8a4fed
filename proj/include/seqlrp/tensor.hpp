#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "seqlrp/errors.hpp"

namespace seqlrp {

using Vector = std::vector<double>;

// Dense row-major matrix of 64-bit floats. Inputs at desk scale are a few
// hundred elements long, so there is no sparse or blocked storage.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  Matrix(std::initializer_list<std::initializer_list<double>> init) {
    rows = init.size();
    cols = rows ? init.begin()->size() : 0;
    data.reserve(rows * cols);
    for (const auto& row : init) {
      if (row.size() != cols) throw DimensionError("Matrix: ragged initializer");
      for (double v : row) data.push_back(v);
    }
  }

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  const double* row(std::size_t r) const { return data.data() + r * cols; }
  double* row(std::size_t r) { return data.data() + r * cols; }
};

inline std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows) + "x" + std::to_string(m.cols);
}

inline void ensure_finite(const Vector& v, const char* op) {
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericalError(std::string(op) + ": non-finite value produced");
  }
}

// out[j] = sum_i W[j,i] * x[i] + b[j]
inline Vector affine(const Matrix& W, const Vector& x, const Vector& b) {
  if (W.cols != x.size() || W.rows != b.size()) {
    throw DimensionError("affine: W is " + shape_str(W) + ", x has length " +
                         std::to_string(x.size()) + ", b has length " + std::to_string(b.size()));
  }
  Vector out(W.rows);
  for (std::size_t j = 0; j < W.rows; ++j) {
    const double* wj = W.row(j);
    double acc = b[j];
    for (std::size_t i = 0; i < W.cols; ++i) acc += wj[i] * x[i];
    out[j] = acc;
  }
  ensure_finite(out, "affine");
  return out;
}

enum class Nonlinearity { Sigmoid, Tanh };

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Vector apply_nonlinearity(Nonlinearity kind, const Vector& x) {
  Vector out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = kind == Nonlinearity::Sigmoid ? sigmoid(x[i]) : std::tanh(x[i]);
  }
  ensure_finite(out, "apply_nonlinearity");
  return out;
}

// Max-shifted softmax; safe for large inputs.
inline Vector softmax(const Vector& x) {
  if (x.empty()) return {};
  double mx = x[0];
  for (double v : x) mx = std::max(mx, v);
  Vector out(x.size());
  double denom = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - mx);
    denom += out[i];
  }
  for (double& v : out) v /= denom;
  ensure_finite(out, "softmax");
  return out;
}

// ---- small helpers shared by the model and propagation kernels ----

inline double dot(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) {
    throw DimensionError("dot: lengths " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline Vector hadamard(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) {
    throw DimensionError("hadamard: lengths " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  Vector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

inline void add_into(Vector& acc, const Vector& v) {
  if (acc.size() != v.size()) {
    throw DimensionError("add_into: lengths " + std::to_string(acc.size()) + " vs " + std::to_string(v.size()));
  }
  for (std::size_t i = 0; i < v.size(); ++i) acc[i] += v[i];
}

inline void axpy_into(Vector& acc, double a, const Vector& v) {
  if (acc.size() != v.size()) {
    throw DimensionError("axpy_into: lengths " + std::to_string(acc.size()) + " vs " + std::to_string(v.size()));
  }
  for (std::size_t i = 0; i < v.size(); ++i) acc[i] += a * v[i];
}

inline Vector concat(const Vector& a, const Vector& b) {
  Vector out;
  out.reserve(a.size() + b.size());
  out.insert(out.end(), a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

inline Vector slice(const Vector& v, std::size_t begin, std::size_t end) {
  if (begin > end || end > v.size()) {
    throw DimensionError("slice: [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") out of length " + std::to_string(v.size()));
  }
  return Vector(v.begin() + static_cast<std::ptrdiff_t>(begin), v.begin() + static_cast<std::ptrdiff_t>(end));
}

inline double sum(const Vector& v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc;
}

// y[i] += W^T[i,j] dz[j], i.e. back-transposed matvec.
inline void add_matvec_transposed(Vector& y, const Matrix& W, const Vector& dz) {
  if (W.rows != dz.size() || W.cols != y.size()) {
    throw DimensionError("add_matvec_transposed: W is " + shape_str(W) + ", dz has length " +
                         std::to_string(dz.size()) + ", y has length " + std::to_string(y.size()));
  }
  for (std::size_t j = 0; j < W.rows; ++j) {
    const double* wj = W.row(j);
    const double d = dz[j];
    if (d == 0.0) continue;
    for (std::size_t i = 0; i < W.cols; ++i) y[i] += wj[i] * d;
  }
}

// G[j,i] += dz[j] * x[i]
inline void add_outer(Matrix& G, const Vector& dz, const Vector& x) {
  if (G.rows != dz.size() || G.cols != x.size()) {
    throw DimensionError("add_outer: G is " + shape_str(G) + ", dz has length " +
                         std::to_string(dz.size()) + ", x has length " + std::to_string(x.size()));
  }
  for (std::size_t j = 0; j < G.rows; ++j) {
    double* gj = G.row(j);
    const double d = dz[j];
    if (d == 0.0) continue;
    for (std::size_t i = 0; i < G.cols; ++i) gj[i] += d * x[i];
  }
}

}  // namespace seqlrp
