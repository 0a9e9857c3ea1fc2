#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hl {

/// Error type thrown by every shape/contract violation in the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Dense tensor of doubles, row-major. Rank 1 (vector) and rank 2 (matrix)
/// are the shapes every operation understands; a zero-length tensor stands
/// for an absent block (e.g. a model with no state neurons).
class Tensor {
 public:
  Tensor() : shape_{0} {}
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor scalar(double v);
  static Tensor from_vector(std::vector<double> v);
  static Tensor from_matrix(std::size_t rows, std::size_t cols, std::vector<double> v);
  static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<std::size_t> shape, double v);
  static Tensor one_hot(std::size_t n, std::size_t index);
  static Tensor uniform(std::vector<std::size_t> shape, double lo, double hi, std::mt19937_64& rng);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  std::string shape_str() const;

  double operator()(std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t i) { return data_[i]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  double at(std::size_t i) const;

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  bool all_finite() const;
  /// Throws Error naming `what` if any entry is NaN/Inf.
  const Tensor& checked(const char* what) const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

// Value-level arithmetic (no differentiation). Shape mismatches throw Error.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
double dot(const Tensor& a, const Tensor& b);
Tensor concat(const std::vector<Tensor>& parts);
Tensor slice(const Tensor& a, std::size_t offset, std::size_t len);
Tensor reshape(const Tensor& a, std::vector<std::size_t> shape);
Tensor transpose(const Tensor& a);
Tensor matmul(const Tensor& a, const Tensor& b);

double norm_inf(const Tensor& a);
double norm2(const Tensor& a);
double max_abs_diff(const Tensor& a, const Tensor& b);
std::size_t argmax(const Tensor& a);

/// True when both tensors hold bit-identical doubles (distinguishes -0/+0,
/// unlike operator==).
bool bit_equal(const Tensor& a, const Tensor& b);

}  // namespace hl
