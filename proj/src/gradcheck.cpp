#include "atgan/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace atgan {

double gradient_check(const std::function<Tensor(Tape*, Tensor&)>& f, Tensor x, double h) {
  x.set_requires_grad(true);
  x.zero_grad();
  Tape tape;
  Tensor loss = f(&tape, x);
  if (!loss.valid() || loss.size() != 1) {
    throw std::invalid_argument("gradient_check: f must return a scalar");
  }
  tape.backward(loss);
  const std::vector<float> analytic = x.grad();

  // Numeric side: float64 forward via PreciseScope, exact double steps
  // carried in x's shadow buffer.
  const std::vector<float> original = x.values();
  double worst = 0.0;
  {
    PreciseScope precise;
    for (std::size_t i = 0; i < original.size(); ++i) {
      auto eval_at = [&](double value) {
        auto& shadow = x.ensure_shadow();
        shadow.assign(original.begin(), original.end());
        shadow[i] = value;
        Tensor out = f(nullptr, x);
        return out.scalar_value_wide();
      };
      const double fp = eval_at(static_cast<double>(original[i]) + h);
      const double fm = eval_at(static_cast<double>(original[i]) - h);
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic.empty() ? 0.0 : static_cast<double>(analytic[i]);
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  x.clear_shadow();
  return worst;
}

}  // namespace atgan
