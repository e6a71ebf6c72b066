#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace atgan {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

struct TensorData {
  Shape shape;
  std::vector<float> values;
  std::vector<float> grad;  // empty until first accumulation
  // float64 mirror of values, maintained only while an op runs under
  // PreciseScope (the finite-difference oracle); cleared on mutation
  std::vector<double> shadow;
  bool requires_grad = false;
};

/// Dense float32 tensor, row-major. Copying a Tensor copies the handle;
/// clone() copies the storage.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float value, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<float> values, bool requires_grad = false);
  static Tensor scalar(float value, bool requires_grad = false);

  bool valid() const { return static_cast<bool>(d_); }
  const Shape& shape() const { return d_->shape; }
  int ndim() const { return static_cast<int>(d_->shape.size()); }
  int dim(int i) const { return d_->shape[static_cast<std::size_t>(i)]; }
  std::size_t size() const { return d_->values.size(); }
  bool is_scalar() const { return size() == 1; }

  std::vector<float>& values() {
    if (!d_->shadow.empty()) d_->shadow.clear();
    return d_->values;
  }
  const std::vector<float>& values() const { return d_->values; }
  float scalar_value() const;
  /// Pointer to row r of a 2-D tensor.
  float* row(int r) {
    if (!d_->shadow.empty()) d_->shadow.clear();
    return d_->values.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(d_->shape[1]);
  }
  const float* row(int r) const { return d_->values.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(d_->shape[1]); }

  bool has_shadow() const { return !d_->shadow.empty(); }
  const std::vector<double>& shadow() const { return d_->shadow; }
  /// Widens from the float values when absent.
  std::vector<double>& ensure_shadow();
  /// values[i] = float(shadow[i]); keeps the shadow.
  void narrow_from_shadow();
  void clear_shadow() { d_->shadow.clear(); }
  /// shadow[0] when present, else values[0].
  double scalar_value_wide() const;

  bool requires_grad() const { return d_->requires_grad; }
  void set_requires_grad(bool rg) { d_->requires_grad = rg; }

  /// Gradient buffer, allocated (zeroed) on first access.
  std::vector<float>& grad();
  const std::vector<float>& grad() const { return d_->grad; }
  bool grad_allocated() const { return !d_->grad.empty(); }
  void zero_grad();
  void add_to_grad(const std::vector<float>& g);

  /// Deep copy of values and flags; gradient buffer is not copied.
  Tensor clone() const;

  /// Identity of the underlying storage, for aliasing checks.
  const TensorData* id() const { return d_.get(); }

 private:
  explicit Tensor(std::shared_ptr<TensorData> d) : d_(std::move(d)) {}
  std::shared_ptr<TensorData> d_;
};

/// Linear record of executed differentiable ops. Ops append their backward
/// rule during the forward pass; backward() replays the rules in reverse,
/// accumulating into .grad of every requires_grad input. The caller is
/// responsible for zeroing gradients between steps.
/// While alive, forward ops additionally evaluate in float64, carried in the
/// tensors' shadow buffers. Used by the finite-difference oracle only.
class PreciseScope {
 public:
  PreciseScope();
  ~PreciseScope();
  PreciseScope(const PreciseScope&) = delete;
  PreciseScope& operator=(const PreciseScope&) = delete;
};

bool precise_mode();

class Tape {
 public:
  void record(std::function<void()> backward_rule) { ops_.push_back(std::move(backward_rule)); }
  std::size_t size() const { return ops_.size(); }
  void clear() { ops_.clear(); }

  /// Seeds d(loss)/d(loss) = 1 and replays every recorded rule once,
  /// in reverse order. loss must be a single-element tensor.
  void backward(Tensor loss);

 private:
  std::vector<std::function<void()>> ops_;
};

}  // namespace atgan
