#include "hamlearn/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <sstream>

namespace hl {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  if (shape.empty()) return 0;
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

void require(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_product(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  require(shape_product(shape_) == data_.size(),
          "tensor: shape " + shape_str() + " does not match data length " +
              std::to_string(data_.size()));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::from_vector(std::vector<double> v) {
  std::size_t n = v.size();
  return Tensor({n}, std::move(v));
}

Tensor Tensor::from_matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
  return Tensor({rows, cols}, std::move(v));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double v) {
  Tensor t(std::move(shape));
  std::fill(t.data_.begin(), t.data_.end(), v);
  return t;
}

Tensor Tensor::one_hot(std::size_t n, std::size_t index) {
  require(index < n, "one_hot: index " + std::to_string(index) + " out of range " +
                         std::to_string(n));
  Tensor t({n});
  t.data_[index] = 1.0;
  return t;
}

Tensor Tensor::uniform(std::vector<std::size_t> shape, double lo, double hi,
                       std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& x : t.data_) x = dist(rng);
  return t;
}

double Tensor::at(std::size_t i) const {
  require(i < data_.size(), "tensor: index " + std::to_string(i) + " out of range");
  return data_[i];
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "x" : "") << shape_[i];
  os << "]";
  return os.str();
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

const Tensor& Tensor::checked(const char* what) const {
  if (!all_finite()) throw Error(std::string(what) + ": non-finite value");
  return *this;
}

Tensor add(const Tensor& a, const Tensor& b) {
  // Row-broadcast: matrix + row vector.
  if (a.rank() == 2 && b.rank() == 1 && a.dim(1) == b.dim(0)) {
    Tensor out({a.dim(0), a.dim(1)});
    for (std::size_t i = 0; i < a.dim(0); ++i)
      for (std::size_t j = 0; j < a.dim(1); ++j) out(i, j) = a(i, j) + b(j);
    return out;
  }
  if (!a.same_shape(b))
    throw Error("add: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out(i) = a(i) + b(i);
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    throw Error("sub: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out(i) = a(i) - b(i);
  return out;
}

Tensor scale(const Tensor& a, double s) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out(i) = s * a(i);
  return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    throw Error("hadamard: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out(i) = a(i) * b(i);
  return out;
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

double dot(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size())
    throw Error("dot: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a(i) * b(i);
  return s;
}

Tensor concat(const std::vector<Tensor>& parts) {
  std::size_t n = 0;
  for (const Tensor& p : parts) {
    if (p.rank() > 1) throw Error("concat: only rank-1 parts supported, got " + p.shape_str());
    n += p.size();
  }
  Tensor out({n});
  std::size_t k = 0;
  for (const Tensor& p : parts)
    for (std::size_t i = 0; i < p.size(); ++i) out(k++) = p(i);
  return out;
}

Tensor slice(const Tensor& a, std::size_t offset, std::size_t len) {
  if (offset + len > a.size())
    throw Error("slice: range [" + std::to_string(offset) + ", " +
                std::to_string(offset + len) + ") exceeds size " + std::to_string(a.size()));
  Tensor out({len});
  for (std::size_t i = 0; i < len; ++i) out(i) = a(offset + i);
  return out;
}

Tensor reshape(const Tensor& a, std::vector<std::size_t> shape) {
  Tensor out(std::move(shape));
  if (out.size() != a.size())
    throw Error("reshape: size mismatch " + a.shape_str() + " -> " + out.shape_str());
  std::copy(a.data().begin(), a.data().end(), out.data().begin());
  return out;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw Error("transpose: expected matrix, got " + a.shape_str());
  Tensor out({a.dim(1), a.dim(0)});
  for (std::size_t i = 0; i < a.dim(0); ++i)
    for (std::size_t j = 0; j < a.dim(1); ++j) out(j, i) = a(i, j);
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2)
    throw Error("matmul: left operand must be a matrix, got " + a.shape_str());
  const std::size_t m = a.dim(0), n = a.dim(1);
  if (b.rank() == 1) {
    if (b.dim(0) != n)
      throw Error("matmul: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    Tensor out({m});
    for (std::size_t i = 0; i < m; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += a(i, j) * b(j);
      out(i) = s;
    }
    return out;
  }
  if (b.rank() == 2) {
    if (b.dim(0) != n)
      throw Error("matmul: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    const std::size_t k = b.dim(1);
    Tensor out({m, k});
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < k; ++j) {
        double s = 0.0;
        for (std::size_t l = 0; l < n; ++l) s += a(i, l) * b(l, j);
        out(i, j) = s;
      }
    return out;
  }
  throw Error("matmul: right operand must be vector or matrix, got " + b.shape_str());
}

double norm_inf(const Tensor& a) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a(i)));
  return m;
}

double norm2(const Tensor& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a(i) * a(i);
  return std::sqrt(s);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    throw Error("max_abs_diff: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a(i) - b(i)));
  return m;
}

std::size_t argmax(const Tensor& a) {
  if (a.empty()) throw Error("argmax: empty tensor");
  std::size_t best = 0;
  for (std::size_t i = 1; i < a.size(); ++i)
    if (a(i) > a(best)) best = i;
  return best;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::bit_cast<std::uint64_t>(a(i)) != std::bit_cast<std::uint64_t>(b(i))) return false;
  return true;
}

}  // namespace hl
