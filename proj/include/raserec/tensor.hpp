// Dense row-major tensors, named trainable parameters, and Adam.
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace raserec {

template <typename T>
class TensorT {
 public:
  TensorT() = default;
  TensorT(std::vector<std::size_t> shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (numel_of(shape_) != data_.size())
      throw std::invalid_argument("tensor: shape/data size mismatch");
  }

  static TensorT zeros(std::vector<std::size_t> shape) {
    std::size_t n = numel_of(shape);
    return TensorT(std::move(shape), std::vector<T>(n, T(0)));
  }
  static TensorT full(std::vector<std::size_t> shape, T v) {
    std::size_t n = numel_of(shape);
    return TensorT(std::move(shape), std::vector<T>(n, v));
  }
  static TensorT row_vector(std::vector<T> v) {
    std::size_t n = v.size();
    return TensorT({1, n}, std::move(v));
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // 2-D accessors; 1-D tensors count as a single row.
  std::size_t rows() const { return shape_.size() == 2 ? shape_[0] : (shape_.empty() ? 0 : 1); }
  std::size_t cols() const {
    return shape_.size() == 2 ? shape_[1] : (shape_.size() == 1 ? shape_[0] : 0);
  }

  T& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  const T& at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    for (T v : data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  bool same_shape(const TensorT& o) const { return shape_ == o.shape_; }

  static std::size_t numel_of(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t(1),
                           [](std::size_t a, std::size_t b) { return a * b; });
  }

 private:
  std::vector<std::size_t> shape_;
  std::vector<T> data_;
};

// A named tensor with a matching gradient slot. Frozen parameters still
// accumulate gradients; the optimizer is what must not touch them.
template <typename T>
struct ParameterT {
  std::string name;
  TensorT<T> value;
  TensorT<T> grad;
  bool trainable = true;

  ParameterT() = default;
  ParameterT(std::string n, TensorT<T> v)
      : name(std::move(n)), value(std::move(v)), grad(TensorT<T>::zeros(value.shape())) {}

  void zero_grad() { grad.fill(T(0)); }
};

template <typename T>
using ParamRefs = std::vector<ParameterT<T>*>;

template <typename T>
void zero_grads(const ParamRefs<T>& params) {
  for (auto* p : params) p->zero_grad();
}

// Adam with bias correction. Moment slots are allocated per parameter at
// construction; non-trainable parameters are skipped entirely so their
// values stay bitwise unchanged.
template <typename T>
class AdamT {
 public:
  AdamT(ParamRefs<T> params, T lr, T beta1 = T(0.9), T beta2 = T(0.999), T eps = T(1e-8))
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (auto* p : params_) {
      m_.push_back(TensorT<T>::zeros(p->value.shape()));
      v_.push_back(TensorT<T>::zeros(p->value.shape()));
    }
  }

  void step() {
    ++t_;
    double bc1 = 1.0 - std::pow(static_cast<double>(beta1_), static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(static_cast<double>(beta2_), static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      ParameterT<T>* p = params_[i];
      if (!p->trainable) continue;
      T* w = p->value.data();
      const T* g = p->grad.data();
      T* m = m_[i].data();
      T* v = v_[i].data();
      for (std::size_t j = 0; j < p->value.numel(); ++j) {
        m[j] = beta1_ * m[j] + (T(1) - beta1_) * g[j];
        v[j] = beta2_ * v[j] + (T(1) - beta2_) * g[j] * g[j];
        T mhat = static_cast<T>(m[j] / bc1);
        T vhat = static_cast<T>(v[j] / bc2);
        w[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

  std::uint64_t step_count() const { return t_; }
  T learning_rate() const { return lr_; }

 private:
  ParamRefs<T> params_;
  std::vector<TensorT<T>> m_, v_;
  T lr_, beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
};

}  // namespace raserec
