#include "atgan/tensor.hpp"

#include <sstream>
#include <stdexcept>

namespace atgan {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << "x";
    os << s[i];
  }
  os << "]";
  return os.str();
}

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) n *= static_cast<std::size_t>(d);
  return n;
}

static void check_shape(const Shape& shape) {
  for (int d : shape) {
    if (d <= 0) {
      throw std::invalid_argument("tensor shape has nonpositive dimension: " + shape_str(shape));
    }
  }
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0f, requires_grad);
}

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
  check_shape(shape);
  auto d = std::make_shared<TensorData>();
  d->values.assign(shape_numel(shape), value);
  d->shape = std::move(shape);
  d->requires_grad = requires_grad;
  return Tensor(std::move(d));
}

Tensor Tensor::from_values(Shape shape, std::vector<float> values, bool requires_grad) {
  check_shape(shape);
  if (values.size() != shape_numel(shape)) {
    throw std::invalid_argument("tensor value count " + std::to_string(values.size()) +
                                " does not match shape " + shape_str(shape));
  }
  auto d = std::make_shared<TensorData>();
  d->shape = std::move(shape);
  d->values = std::move(values);
  d->requires_grad = requires_grad;
  return Tensor(std::move(d));
}

Tensor Tensor::scalar(float value, bool requires_grad) {
  return from_values({1}, {value}, requires_grad);
}

float Tensor::scalar_value() const {
  if (size() != 1) {
    throw std::invalid_argument("scalar_value on tensor of shape " + shape_str(shape()));
  }
  return d_->values[0];
}

std::vector<float>& Tensor::grad() {
  if (d_->grad.empty()) d_->grad.assign(d_->values.size(), 0.0f);
  return d_->grad;
}

void Tensor::zero_grad() {
  if (!d_->grad.empty()) d_->grad.assign(d_->values.size(), 0.0f);
}

void Tensor::add_to_grad(const std::vector<float>& g) {
  if (g.size() != d_->values.size()) {
    throw std::invalid_argument("gradient size " + std::to_string(g.size()) +
                                " does not match tensor of shape " + shape_str(shape()));
  }
  auto& dst = grad();
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

Tensor Tensor::clone() const {
  auto d = std::make_shared<TensorData>();
  d->shape = d_->shape;
  d->values = d_->values;
  d->requires_grad = d_->requires_grad;
  return Tensor(std::move(d));
}

std::vector<double>& Tensor::ensure_shadow() {
  if (d_->shadow.empty()) {
    d_->shadow.assign(d_->values.begin(), d_->values.end());
  }
  return d_->shadow;
}

void Tensor::narrow_from_shadow() {
  for (std::size_t i = 0; i < d_->shadow.size(); ++i) {
    d_->values[i] = static_cast<float>(d_->shadow[i]);
  }
}

double Tensor::scalar_value_wide() const {
  if (size() != 1) {
    throw std::invalid_argument("scalar_value_wide on tensor of shape " + shape_str(shape()));
  }
  return d_->shadow.empty() ? static_cast<double>(d_->values[0]) : d_->shadow[0];
}

namespace {
thread_local int g_precise_depth = 0;
}

PreciseScope::PreciseScope() { ++g_precise_depth; }
PreciseScope::~PreciseScope() { --g_precise_depth; }
bool precise_mode() { return g_precise_depth > 0; }

void Tape::backward(Tensor loss) {
  if (!loss.valid() || loss.size() != 1) {
    throw std::invalid_argument("backward requires a scalar loss, got shape " +
                                (loss.valid() ? shape_str(loss.shape()) : std::string("<null>")));
  }
  loss.grad()[0] += 1.0f;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
}

}  // namespace atgan
