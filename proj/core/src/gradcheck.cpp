#include "voxelview/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace voxelview {

double finite_diff_check(const ScalarFn& f, std::vector<Tensor> inputs, double eps) {
  if (eps <= 0) throw std::invalid_argument("finite_diff_check: eps must be positive");

  for (Tensor& in : inputs) in.zero_grad();
  Tensor loss = f(inputs);
  if (loss.numel() != 1)
    throw std::invalid_argument("finite_diff_check: f must return a single element");
  backward(loss);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(inputs.size());
  for (Tensor& in : inputs)
    analytic.push_back(in.requires_grad() ? in.grad() : std::vector<double>());

  double max_err = 0.0;
  for (size_t t = 0; t < inputs.size(); ++t) {
    if (!inputs[t].requires_grad()) continue;
    double* data = inputs[t].data();
    for (long i = 0; i < inputs[t].numel(); ++i) {
      const double saved = data[i];
      data[i] = saved + eps;
      const double fp = f(inputs).item();
      data[i] = saved - eps;
      const double fm = f(inputs).item();
      data[i] = saved;
      const double central = (fp - fm) / (2.0 * eps);
      const double a = analytic[t][static_cast<size_t>(i)];
      const double denom = std::max({std::fabs(a), std::fabs(central), 1e-8});
      max_err = std::max(max_err, std::fabs(a - central) / denom);
    }
  }
  return max_err;
}

}  // namespace voxelview
