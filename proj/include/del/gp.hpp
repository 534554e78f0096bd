#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "del/tensor.hpp"

namespace del {

// ARD squared-exponential kernel hyper-parameters.
struct GpParams {
  std::vector<double> lengthscales;  // one per input dimension, > 0
  double sigma_f2 = 1.0;             // signal variance, > 0
  double sigma_n2 = 1e-6;            // noise variance, >= 0
};

// sigma_f^2 * exp(-1/2 sum_d (a_d - b_d)^2 / l_d^2)
double se_kernel(std::span<const double> a, std::span<const double> b,
                 const GpParams& p);

// Lower Cholesky factor of a symmetric matrix. When the plain
// factorization fails, an additive diagonal stabilizer escalates from
// 1e-10 by factors of 10 until it succeeds.
Tensor cholesky_stabilized(const Tensor& k, double* stabilizer_used = nullptr);

// Solves (L L^T) x = b.
std::vector<double> chol_solve(const Tensor& l, std::vector<double> b);

// Gaussian-process regressor with mean-centered targets and a cached
// Cholesky factor of K + sigma_n^2 I.
struct GpModel {
  Tensor x;  // [n x d]
  std::vector<double> y;
  double y_mean = 0.0;
  GpParams params;
  Tensor chol;
  std::vector<double> alpha;  // (K + sigma_n^2 I)^-1 (y - y_mean)
  bool fitted = false;

  int points() const { return x.empty() ? 0 : x.dim(0); }
  int dim() const { return x.empty() ? 0 : x.dim(1); }
};

// Conditions on the data under fixed hyper-parameters.
GpModel gp_build(const Tensor& x, const std::vector<double>& y,
                 const GpParams& p);

// Posterior (mean, variance) at a query point; variance clamped >= 0.
std::pair<double, double> gp_posterior(const GpModel& m,
                                       std::span<const double> xq);

// Log marginal likelihood; when grad is non-null it receives d LML /
// d log-theta in the order [log l_1 .. log l_d, log sigma_f2, log sigma_n2].
double gp_lml(const Tensor& x, const std::vector<double>& y,
              const GpParams& p, std::vector<double>* grad = nullptr);

// Maximizes LML by gradient ascent in log-theta from `restarts` random
// starts (plus one fixed start); the best final LML wins. Needs >= 2
// trials. All-equal targets short-circuit to a fixed fallback.
GpModel gp_fit(const Tensor& x, const std::vector<double>& y, int restarts,
               uint64_t seed);

double normal_pdf(double z);
double normal_cdf(double z);

// Maximization convention: z = (mu - f_best - xi) / sigma,
// EI = (mu - f_best - xi) Phi(z) + sigma phi(z); sigma == 0 gives 0.
double expected_improvement(double mu, double sigma, double f_best,
                            double xi = 0.05);

}  // namespace del
