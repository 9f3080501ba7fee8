#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace atr::nn {

// Feature-map extent. Flat vectors use {n, 1, 1}.
struct Dims {
  int channels = 1;
  int height = 1;
  int width = 1;

  [[nodiscard]] std::size_t size() const {
    return static_cast<std::size_t>(channels) * static_cast<std::size_t>(height) *
           static_cast<std::size_t>(width);
  }
  [[nodiscard]] std::string str() const;
  friend bool operator==(const Dims&, const Dims&) = default;
};

template <typename Real>
class BasicTensor {
 public:
  BasicTensor() = default;
  explicit BasicTensor(Dims dims, Real fill = Real(0)) : dims_(dims), values_(dims.size(), fill) {}
  BasicTensor(Dims dims, std::vector<Real> values);

  static BasicTensor flat(std::size_t n, Real fill = Real(0)) {
    return BasicTensor(Dims{static_cast<int>(n), 1, 1}, fill);
  }

  [[nodiscard]] const Dims& dims() const { return dims_; }
  [[nodiscard]] std::size_t size() const { return values_.size(); }
  [[nodiscard]] bool empty() const { return values_.empty(); }

  Real* data() { return values_.data(); }
  [[nodiscard]] const Real* data() const { return values_.data(); }
  std::span<Real> values() { return values_; }
  [[nodiscard]] std::span<const Real> values() const { return values_; }
  std::vector<Real>& storage() { return values_; }
  [[nodiscard]] const std::vector<Real>& storage() const { return values_; }

  Real& operator[](std::size_t i) { return values_[i]; }
  const Real& operator[](std::size_t i) const { return values_[i]; }

  Real& at(int c, int y, int x) {
    return values_[(static_cast<std::size_t>(c) * dims_.height + y) * dims_.width + x];
  }
  [[nodiscard]] const Real& at(int c, int y, int x) const {
    return values_[(static_cast<std::size_t>(c) * dims_.height + y) * dims_.width + x];
  }

  [[nodiscard]] bool all_finite() const {
    for (Real v : values_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  // Reinterprets the same values under new dims of equal size.
  void reshape(Dims dims);

  template <typename Other>
  [[nodiscard]] BasicTensor<Other> cast() const {
    return BasicTensor<Other>(dims_, std::vector<Other>(values_.begin(), values_.end()));
  }

 private:
  Dims dims_{0, 0, 0};
  std::vector<Real> values_;
};

using Tensor = BasicTensor<float>;

// Squared Euclidean distance and its gradient 2(pred - target) with respect to pred.
template <typename Real>
struct LossResult {
  double loss = 0.0;
  BasicTensor<Real> gradient;
};

template <typename Real>
LossResult<Real> l2_loss(const BasicTensor<Real>& pred, const BasicTensor<Real>& target);

}  // namespace atr::nn
