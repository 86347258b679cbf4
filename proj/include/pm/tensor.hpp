#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace pm {

// Error taxonomy: shape_error for structural mismatches, numeric_error for
// non-finite values, config_error for invalid specs/configs, io_error for files.
class shape_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class numeric_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class config_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class io_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

/// Dense row-major float tensor. Activations and parameters are float32;
/// scalar reductions additionally carry a float64 accumulator in `acc64`
/// so losses keep full precision through sums.
struct Tensor {
  std::vector<int> shape;
  std::vector<float> data;
  std::vector<float> grad;  // same length as data when gradients are tracked
  bool requires_grad = false;
  double acc64 = 0.0;
  bool has_acc64 = false;

  static TensorPtr create(std::vector<int> shape, bool requires_grad = false);
  static TensorPtr from(std::vector<int> shape, std::vector<float> values,
                        bool requires_grad = false);
  static TensorPtr scalar(float v);

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int ndim() const { return static_cast<int>(shape.size()); }
  int dim(int i) const;

  void ensure_grad();
  void zero_grad();

  /// Scalar value; throws shape_error unless numel()==1.
  float item() const;
  /// Scalar value at float64 precision when the producing op tracked one.
  double item64() const;
};

int64_t numel_of(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

/// Throws numeric_error naming `node` if any value is NaN/Inf.
void check_finite(const float* p, int64_t n, const std::string& node);
void check_finite(const Tensor& t, const std::string& node);

}  // namespace pm
