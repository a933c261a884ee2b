// Copyright 2026 CDSE Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef CDSE_GRADCHECK_HPP_
#define CDSE_GRADCHECK_HPP_

#include <functional>
#include <vector>

#include "cdse/autodiff.hpp"
#include "cdse/ops.hpp"

namespace cdse {

// Scalar-valued function of a list of tensors, built on the Var engine.
template <typename T>
using ScalarFn = std::function<Var<T>(std::vector<Var<T>>&)>;

struct GradCheckReport {
  double max_rel_err = 0.0;
  int input_index = -1;
  int64_t coord = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Central-difference comparison per coordinate against the reverse-mode
// gradient; returns the worst relative error
// |g_ad - g_fd| / max(|g_ad|, |g_fd|, 1e-8).
//
// When `reference` is provided it is used for the finite-difference probes
// instead of `f`. Passing the same computation instantiated in double gives
// the float32 checks an oracle whose own noise does not mask genuine
// backward-rule bugs; the analytic side under test is still the T-precision
// tape. Steps are scaled per coordinate as eps * max(1, |x_i|).
template <typename T>
GradCheckReport GradCheckDetail(const ScalarFn<T>& f,
                                const std::vector<Tensor<T>>& inputs,
                                double eps,
                                const ScalarFn<double>* reference = nullptr) {
  CDSE_CHECK(eps >= 1e-6 && eps <= 1e-2, ErrorKind::kParameter,
             "grad_check eps must lie in [1e-6, 1e-2], got ", eps);
  for (const auto& t : inputs) t.CheckFinite("grad_check input");

  // Analytic gradients.
  std::vector<Var<T>> vars;
  vars.reserve(inputs.size());
  for (const auto& t : inputs) vars.emplace_back(t, /*requires_grad=*/true);
  for (auto& v : vars) v.ZeroGrad();
  Var<T> out = f(vars);
  CDSE_CHECK(out.numel() == 1, ErrorKind::kContract,
             "grad_check requires a scalar-valued function, got shape ",
             ShapeStr(out.shape()));
  Backward(out);
  std::vector<Tensor<T>> analytic;
  analytic.reserve(vars.size());
  for (auto& v : vars) analytic.push_back(v.grad());

  // Numeric probes.
  NoGradGuard no_grad;
  auto eval_t = [&](const std::vector<Tensor<T>>& pts) {
    std::vector<Var<T>> args;
    args.reserve(pts.size());
    for (const auto& t : pts) args.emplace_back(t);
    return static_cast<double>(f(args).value()[0]);
  };
  auto eval_ref = [&](const std::vector<Tensor<T>>& pts) {
    std::vector<Var<double>> args;
    args.reserve(pts.size());
    for (const auto& t : pts) args.emplace_back(t.template Cast<double>());
    return (*reference)(args).value()[0];
  };

  GradCheckReport report;
  std::vector<Tensor<T>> probe = inputs;
  for (size_t vi = 0; vi < inputs.size(); ++vi) {
    for (int64_t i = 0; i < inputs[vi].numel(); ++i) {
      const double x0 = static_cast<double>(inputs[vi][i]);
      const double h = eps * std::max(1.0, std::abs(x0));
      probe[vi][i] = static_cast<T>(x0 + h);
      const double fp = reference ? eval_ref(probe) : eval_t(probe);
      probe[vi][i] = static_cast<T>(x0 - h);
      const double fm = reference ? eval_ref(probe) : eval_t(probe);
      probe[vi][i] = inputs[vi][i];
      // Use the steps as actually representable in T.
      const double hp = static_cast<double>(static_cast<T>(x0 + h)) -
                        static_cast<double>(static_cast<T>(x0 - h));
      const double fd = (fp - fm) / hp;
      const double ad = static_cast<double>(analytic[vi][i]);
      const double rel = std::abs(ad - fd) /
                         std::max({std::abs(ad), std::abs(fd), 1e-8});
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.input_index = static_cast<int>(vi);
        report.coord = i;
        report.analytic = ad;
        report.numeric = fd;
      }
    }
  }
  return report;
}

template <typename T>
double GradCheck(const ScalarFn<T>& f, const std::vector<Tensor<T>>& inputs,
                 double eps) {
  return GradCheckDetail(f, inputs, eps).max_rel_err;
}

template <typename T>
double GradCheck(const ScalarFn<T>& f, const ScalarFn<double>& reference,
                 const std::vector<Tensor<T>>& inputs, double eps) {
  return GradCheckDetail(f, inputs, eps, &reference).max_rel_err;
}

}  // namespace cdse

#endif  // CDSE_GRADCHECK_HPP_
