#include "pm/tensor.hpp"

#include <cmath>
#include <sstream>

namespace pm {

int64_t numel_of(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw shape_error("non-positive extent in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

TensorPtr Tensor::create(std::vector<int> shape, bool requires_grad) {
  auto t = std::make_shared<Tensor>();
  int64_t n = numel_of(shape);
  t->shape = std::move(shape);
  t->data.assign(static_cast<std::size_t>(n), 0.f);
  t->requires_grad = requires_grad;
  if (requires_grad) t->grad.assign(static_cast<std::size_t>(n), 0.f);
  return t;
}

TensorPtr Tensor::from(std::vector<int> shape, std::vector<float> values,
                       bool requires_grad) {
  int64_t n = numel_of(shape);
  if (n != static_cast<int64_t>(values.size()))
    throw shape_error("value count " + std::to_string(values.size()) +
                      " does not match shape " + shape_str(shape));
  auto t = std::make_shared<Tensor>();
  t->shape = std::move(shape);
  t->data = std::move(values);
  t->requires_grad = requires_grad;
  if (requires_grad) t->grad.assign(static_cast<std::size_t>(n), 0.f);
  return t;
}

TensorPtr Tensor::scalar(float v) { return from({1}, {v}); }

int Tensor::dim(int i) const {
  if (i < 0 || i >= ndim())
    throw shape_error("dim index " + std::to_string(i) + " out of range for " +
                      shape_str(shape));
  return shape[static_cast<std::size_t>(i)];
}

void Tensor::ensure_grad() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.f);
}

void Tensor::zero_grad() {
  if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.f);
}

float Tensor::item() const {
  if (numel() != 1)
    throw shape_error("item() on non-scalar tensor of shape " + shape_str(shape));
  return data[0];
}

double Tensor::item64() const {
  if (numel() != 1)
    throw shape_error("item64() on non-scalar tensor of shape " + shape_str(shape));
  return has_acc64 ? acc64 : static_cast<double>(data[0]);
}

void check_finite(const float* p, int64_t n, const std::string& node) {
  // Eight deterministic lanes: vectorizable without reassociating a single
  // serial chain, and NaN/Inf anywhere still poisons the total.
  double lane[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (int k = 0; k < 8; ++k) lane[k] += std::fabs(static_cast<double>(p[i + k]));
  for (; i < n; ++i) lane[0] += std::fabs(static_cast<double>(p[i]));
  double total = ((lane[0] + lane[1]) + (lane[2] + lane[3])) +
                 ((lane[4] + lane[5]) + (lane[6] + lane[7]));
  if (!std::isfinite(total)) {
    for (int64_t j = 0; j < n; ++j) {
      if (!std::isfinite(p[j]))
        throw numeric_error("non-finite value at flat index " + std::to_string(j) +
                            " in output of node '" + node + "'");
    }
    throw numeric_error("non-finite total in output of node '" + node + "'");
  }
}

void check_finite(const Tensor& t, const std::string& node) {
  check_finite(t.data.data(), t.numel(), node);
}

}  // namespace pm
