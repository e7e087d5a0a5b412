#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "nsnmt/errors.hpp"

namespace nsnmt {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream oss;
  oss << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) oss << 'x';
    oss << shape[i];
  }
  oss << ')';
  return oss.str();
}

// Dense row-major double tensor. Values are immutable once produced by a
// forward op; only grad accumulates, and only leaves with requires_grad
// ever get one.
struct Tensor {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;  // empty until first accumulation

  Tensor() = default;

  explicit Tensor(Shape s, double fill = 0.0) : shape(std::move(s)) {
    for (std::size_t d : shape) {
      if (d == 0) throw DimensionError("tensor dimension must be positive, got shape " + shape_str(shape));
    }
    if (shape.empty()) throw DimensionError("tensor shape must have at least one dimension");
    data.assign(numel(shape), fill);
  }

  std::size_t size() const { return data.size(); }

  std::size_t rows() const {
    if (shape.size() != 2) throw DimensionError("rows() on non-matrix shape " + shape_str(shape));
    return shape[0];
  }
  std::size_t cols() const {
    if (shape.size() != 2) throw DimensionError("cols() on non-matrix shape " + shape_str(shape));
    return shape[1];
  }

  double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
  }
  void zero_grad() {
    ensure_grad();
    std::fill(grad.begin(), grad.end(), 0.0);
  }
};

using TensorPtr = std::shared_ptr<Tensor>;

inline TensorPtr make_tensor(Shape shape, double fill = 0.0) {
  return std::make_shared<Tensor>(std::move(shape), fill);
}

inline TensorPtr make_tensor(Shape shape, std::vector<double> values) {
  auto t = std::make_shared<Tensor>(std::move(shape));
  if (values.size() != t->data.size()) {
    throw DimensionError("value count " + std::to_string(values.size()) +
                         " does not match shape " + shape_str(t->shape));
  }
  t->data = std::move(values);
  return t;
}

inline TensorPtr make_param(Shape shape, double fill = 0.0) {
  auto t = make_tensor(std::move(shape), fill);
  t->requires_grad = true;
  return t;
}

// Deterministic RNG used everywhere seeding matters (init, shuffles,
// bootstrap). mt19937_64 plus explicit mapping, so sequences are identical
// across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // uniform in [0, 1)
  double next_unit() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

  // uniform integer in [0, n)
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(gen_() % n); }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

 private:
  std::mt19937_64 gen_;
};

inline void init_uniform(Tensor& t, Rng& rng, double scale) {
  for (double& x : t.data) x = rng.uniform(-scale, scale);
}

}  // namespace nsnmt
