#include "atr/tensor.hpp"

#include "atr/error.hpp"

namespace atr::nn {

std::string Dims::str() const {
  return std::to_string(channels) + "x" + std::to_string(height) + "x" + std::to_string(width);
}

template <typename Real>
BasicTensor<Real>::BasicTensor(Dims dims, std::vector<Real> values)
    : dims_(dims), values_(std::move(values)) {
  if (values_.size() != dims_.size())
    throw ValidationError("tensor value count " + std::to_string(values_.size()) +
                          " does not match dims " + dims_.str());
}

template <typename Real>
void BasicTensor<Real>::reshape(Dims dims) {
  if (dims.size() != values_.size())
    throw ValidationError("cannot reshape " + dims_.str() + " to " + dims.str());
  dims_ = dims;
}

template <typename Real>
LossResult<Real> l2_loss(const BasicTensor<Real>& pred, const BasicTensor<Real>& target) {
  if (pred.size() != target.size())
    throw ValidationError("l2_loss: prediction length " + std::to_string(pred.size()) +
                          " != target length " + std::to_string(target.size()));
  LossResult<Real> out;
  out.gradient = BasicTensor<Real>(pred.dims());
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    sum += d * d;
    out.gradient[i] = static_cast<Real>(2.0 * d);
  }
  out.loss = sum;
  return out;
}

template class BasicTensor<float>;
template class BasicTensor<double>;
template LossResult<float> l2_loss(const BasicTensor<float>&, const BasicTensor<float>&);
template LossResult<double> l2_loss(const BasicTensor<double>&, const BasicTensor<double>&);

}  // namespace atr::nn
