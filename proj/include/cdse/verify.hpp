// Copyright 2026 CDSE Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// End-to-end gradient verification: the loss gradient reaching every model
// parameter is compared coordinate by coordinate against central
// differences. For float32 models the probes run through a double twin of
// the model so that single-precision forward noise does not drown the
// comparison; the gradients under test are still the float32 tape's.

#ifndef CDSE_VERIFY_HPP_
#define CDSE_VERIFY_HPP_

#include <string>
#include <vector>

#include "cdse/gradcheck.hpp"
#include "cdse/metrics.hpp"
#include "cdse/model.hpp"

namespace cdse {

struct ModelGradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  int64_t coord = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

namespace detail_verify {

template <typename T>
double ModelLoss(Model<T>& model, const std::vector<T>& noisy,
                 const Tensor<T>& clean) {
  NoGradGuard no_grad;
  std::vector<Var<T>> est;
  est.push_back(model.Forward(noisy));
  std::vector<Tensor<T>> refs{clean};
  return static_cast<double>(NegSiSnrLoss(est, refs).value()[0]);
}

}  // namespace detail_verify

template <typename T>
ModelGradCheckReport ModelLossGradCheck(Model<T>& model,
                                        const std::vector<T>& noisy,
                                        const std::vector<T>& clean,
                                        double eps) {
  CDSE_CHECK(eps >= 1e-6 && eps <= 1e-2, ErrorKind::kParameter,
             "eps must lie in [1e-6, 1e-2], got ", eps);
  Tensor<T> clean_t(Shape{static_cast<int>(clean.size())}, clean);

  // Analytic gradients through the T-precision tape.
  model.ZeroGrad();
  {
    std::vector<Var<T>> est;
    est.push_back(model.Forward(noisy));
    std::vector<Tensor<T>> refs{clean_t};
    Backward(NegSiSnrLoss(est, refs));
  }
  std::vector<Tensor<T>> analytic;
  analytic.reserve(model.params().size());
  for (auto& p : model.params()) analytic.push_back(p.var.grad());

  // Double twin for the finite-difference probes.
  Model<double> twin(model.config(), /*seed=*/0);
  twin.CopyParamValues(model);
  std::vector<double> noisy_d(noisy.begin(), noisy.end());
  Tensor<double> clean_d = clean_t.template Cast<double>();

  ModelGradCheckReport report;
  for (size_t pi = 0; pi < model.params().size(); ++pi) {
    auto& p = model.params()[pi];
    Tensor<double>& tw = twin.params()[pi].var.value();
    for (int64_t j = 0; j < p.var.numel(); ++j) {
      const double x0 = static_cast<double>(p.var.value()[j]);
      const double h = eps * std::max(1.0, std::abs(x0));
      const T xp = static_cast<T>(x0 + h);
      const T xm = static_cast<T>(x0 - h);
      tw[j] = static_cast<double>(xp);
      const double fp = detail_verify::ModelLoss(twin, noisy_d, clean_d);
      tw[j] = static_cast<double>(xm);
      const double fm = detail_verify::ModelLoss(twin, noisy_d, clean_d);
      tw[j] = x0;
      const double fd =
          (fp - fm) / (static_cast<double>(xp) - static_cast<double>(xm));
      const double ad = static_cast<double>(analytic[pi][j]);
      const double rel = std::abs(ad - fd) /
                         std::max({std::abs(ad), std::abs(fd), 1e-8});
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = p.name;
        report.coord = j;
        report.analytic = ad;
        report.numeric = fd;
      }
    }
  }
  return report;
}

// Deterministic probe signals for the end-to-end checks: a synthetic-ish
// mixture and its clean target, bounded away from ReLU kinks by the random
// init itself.
template <typename T>
void MakeGradCheckSignals(int64_t length, uint64_t seed,
                          std::vector<T>* noisy, std::vector<T>* clean) {
  Rng rng(seed);
  clean->resize(static_cast<size_t>(length));
  noisy->resize(static_cast<size_t>(length));
  for (int64_t i = 0; i < length; ++i) {
    const double c = 0.4 * std::sin(2.0 * M_PI * 0.013 * double(i)) +
                     0.1 * (rng.Uniform() * 2.0 - 1.0);
    const double n = 0.25 * (rng.Uniform() * 2.0 - 1.0);
    (*clean)[static_cast<size_t>(i)] = static_cast<T>(c);
    (*noisy)[static_cast<size_t>(i)] = static_cast<T>(c + n);
  }
}

}  // namespace cdse

#endif  // CDSE_VERIFY_HPP_
