#include "del/gp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "del/optim.hpp"
#include "del/rng.hpp"

namespace del {

double se_kernel(std::span<const double> a, std::span<const double> b,
                 const GpParams& p) {
  if (a.size() != b.size() || a.size() != p.lengthscales.size())
    throw std::invalid_argument("se_kernel: dimension mismatch");
  if (!(p.sigma_f2 > 0.0))
    throw std::invalid_argument("se_kernel: sigma_f2 must be positive");
  double q = 0.0;
  for (size_t d = 0; d < a.size(); ++d) {
    double l = p.lengthscales[d];
    if (!(l > 0.0))
      throw std::invalid_argument("se_kernel: lengthscales must be positive");
    double diff = (a[d] - b[d]) / l;
    q += diff * diff;
  }
  return p.sigma_f2 * std::exp(-0.5 * q);
}

namespace {

bool try_cholesky(Tensor& a) {
  int n = a.dim(0);
  for (int j = 0; j < n; ++j) {
    double d = a(j, j);
    for (int k = 0; k < j; ++k) d -= a(j, k) * a(j, k);
    if (!(d > 0.0) || !std::isfinite(d)) return false;
    double l = std::sqrt(d);
    a(j, j) = l;
    for (int i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (int k = 0; k < j; ++k) s -= a(i, k) * a(j, k);
      a(i, j) = s / l;
    }
  }
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) a(i, j) = 0.0;
  return true;
}

Tensor kernel_matrix(const Tensor& x, const GpParams& p, double diag_add) {
  int n = x.dim(0);
  Tensor k({n, n});
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      double v = se_kernel(x.row(i), x.row(j), p);
      k(i, j) = v;
      k(j, i) = v;
    }
    k(i, i) += diag_add;
  }
  return k;
}

double mean_of(const std::vector<double>& y) {
  double s = 0.0;
  for (double v : y) s += v;
  return s / static_cast<double>(y.size());
}

}  // namespace

Tensor cholesky_stabilized(const Tensor& k, double* stabilizer_used) {
  if (k.ndim() != 2 || k.dim(0) != k.dim(1))
    throw std::invalid_argument("cholesky: matrix must be square");
  double jitter = 0.0;
  while (true) {
    Tensor a = k;
    for (int i = 0; i < a.dim(0); ++i) a(i, i) += jitter;
    if (try_cholesky(a)) {
      if (stabilizer_used) *stabilizer_used = jitter;
      return a;
    }
    jitter = jitter == 0.0 ? 1e-10 : jitter * 10.0;
    if (jitter > 0.1)
      throw std::runtime_error("cholesky failed despite stabilizer");
  }
}

std::vector<double> chol_solve(const Tensor& l, std::vector<double> b) {
  int n = l.dim(0);
  if (static_cast<int>(b.size()) != n)
    throw std::invalid_argument("chol_solve: size mismatch");
  for (int i = 0; i < n; ++i) {
    double s = b[static_cast<size_t>(i)];
    for (int k = 0; k < i; ++k) s -= l(i, k) * b[static_cast<size_t>(k)];
    b[static_cast<size_t>(i)] = s / l(i, i);
  }
  for (int i = n - 1; i >= 0; --i) {
    double s = b[static_cast<size_t>(i)];
    for (int k = i + 1; k < n; ++k) s -= l(k, i) * b[static_cast<size_t>(k)];
    b[static_cast<size_t>(i)] = s / l(i, i);
  }
  return b;
}

GpModel gp_build(const Tensor& x, const std::vector<double>& y,
                 const GpParams& p) {
  if (x.ndim() != 2) throw std::invalid_argument("gp_build: x must be [n x d]");
  int n = x.dim(0);
  if (static_cast<int>(y.size()) != n)
    throw std::invalid_argument("gp_build: x/y size mismatch");
  if (static_cast<int>(p.lengthscales.size()) != x.dim(1))
    throw std::invalid_argument("gp_build: lengthscale dimension mismatch");
  if (p.sigma_n2 < 0.0)
    throw std::invalid_argument("gp_build: negative noise variance");

  GpModel m;
  m.x = x;
  m.y = y;
  m.y_mean = mean_of(y);
  m.params = p;
  Tensor k = kernel_matrix(x, p, p.sigma_n2);
  m.chol = cholesky_stabilized(k);
  std::vector<double> centered(y);
  for (double& v : centered) v -= m.y_mean;
  m.alpha = chol_solve(m.chol, std::move(centered));
  m.fitted = true;
  return m;
}

std::pair<double, double> gp_posterior(const GpModel& m,
                                       std::span<const double> xq) {
  if (!m.fitted) throw std::logic_error("gp_posterior: unfitted model");
  if (static_cast<int>(xq.size()) != m.dim())
    throw std::invalid_argument("gp_posterior: query dimension mismatch");
  int n = m.points();
  std::vector<double> ks(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i)
    ks[static_cast<size_t>(i)] = se_kernel(m.x.row(i), xq, m.params);
  double mu = m.y_mean;
  for (int i = 0; i < n; ++i)
    mu += ks[static_cast<size_t>(i)] * m.alpha[static_cast<size_t>(i)];
  // Forward substitution only: var = k(x,x) - ||L^-1 k*||^2.
  for (int i = 0; i < n; ++i) {
    double s = ks[static_cast<size_t>(i)];
    for (int k = 0; k < i; ++k) s -= m.chol(i, k) * ks[static_cast<size_t>(k)];
    ks[static_cast<size_t>(i)] = s / m.chol(i, i);
  }
  double var = m.params.sigma_f2;
  for (int i = 0; i < n; ++i)
    var -= ks[static_cast<size_t>(i)] * ks[static_cast<size_t>(i)];
  return {mu, std::max(0.0, var)};
}

double gp_lml(const Tensor& x, const std::vector<double>& y, const GpParams& p,
              std::vector<double>* grad) {
  int n = x.dim(0);
  int d = x.dim(1);
  Tensor kse = kernel_matrix(x, p, 0.0);
  Tensor kn = kse;
  for (int i = 0; i < n; ++i) kn(i, i) += p.sigma_n2;
  Tensor l = cholesky_stabilized(kn);

  double ym = mean_of(y);
  std::vector<double> centered(y);
  for (double& v : centered) v -= ym;
  std::vector<double> alpha = chol_solve(l, centered);

  double lml = 0.0;
  for (int i = 0; i < n; ++i)
    lml -= 0.5 * centered[static_cast<size_t>(i)] * alpha[static_cast<size_t>(i)];
  for (int i = 0; i < n; ++i) lml -= std::log(l(i, i));
  lml -= 0.5 * n * std::log(2.0 * 3.14159265358979323846);

  if (grad) {
    // G = alpha alpha^T - K_n^-1; d LML / d theta = 1/2 tr(G dK/dtheta).
    Tensor kinv({n, n});
    std::vector<double> e(static_cast<size_t>(n), 0.0);
    for (int c = 0; c < n; ++c) {
      e[static_cast<size_t>(c)] = 1.0;
      std::vector<double> col = chol_solve(l, e);
      for (int r = 0; r < n; ++r) kinv(r, c) = col[static_cast<size_t>(r)];
      e[static_cast<size_t>(c)] = 0.0;
    }
    Tensor g({n, n});
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        g(i, j) = alpha[static_cast<size_t>(i)] * alpha[static_cast<size_t>(j)] -
                  kinv(i, j);

    grad->assign(static_cast<size_t>(d) + 2, 0.0);
    for (int dd = 0; dd < d; ++dd) {
      double l2 = p.lengthscales[static_cast<size_t>(dd)] *
                  p.lengthscales[static_cast<size_t>(dd)];
      double s = 0.0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          double diff = x(i, dd) - x(j, dd);
          s += g(i, j) * kse(i, j) * diff * diff / l2;
        }
      (*grad)[static_cast<size_t>(dd)] = 0.5 * s;
    }
    double sf = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) sf += g(i, j) * kse(i, j);
    (*grad)[static_cast<size_t>(d)] = 0.5 * sf;
    double sn = 0.0;
    for (int i = 0; i < n; ++i) sn += g(i, i);
    (*grad)[static_cast<size_t>(d) + 1] = 0.5 * sn * p.sigma_n2;
  }
  return lml;
}

namespace {

constexpr double kLogLenLo = -4.6051701859880914;   // log 1e-2
constexpr double kLogLenHi = 2.302585092994046;     // log 10
constexpr double kLogSf2Lo = -13.815510557964274;   // log 1e-6
constexpr double kLogSf2Hi = 4.605170185988092;     // log 1e2
constexpr double kLogSn2Lo = -27.631021115928547;   // log 1e-12
constexpr double kLogSn2Hi = 0.0;                   // log 1

GpParams unpack(const Tensor& logt, int d) {
  GpParams p;
  p.lengthscales.resize(static_cast<size_t>(d));
  for (int i = 0; i < d; ++i)
    p.lengthscales[static_cast<size_t>(i)] = std::exp(logt(i));
  p.sigma_f2 = std::exp(logt(d));
  p.sigma_n2 = std::exp(logt(d + 1));
  return p;
}

void clamp_logt(Tensor& logt, int d) {
  for (int i = 0; i < d; ++i)
    logt(i) = std::clamp(logt(i), kLogLenLo, kLogLenHi);
  logt(d) = std::clamp(logt(d), kLogSf2Lo, kLogSf2Hi);
  logt(d + 1) = std::clamp(logt(d + 1), kLogSn2Lo, kLogSn2Hi);
}

}  // namespace

GpModel gp_fit(const Tensor& x, const std::vector<double>& y, int restarts,
               uint64_t seed) {
  if (x.ndim() != 2 || x.dim(0) < 2)
    throw std::invalid_argument("gp_fit: needs at least 2 trials");
  if (static_cast<int>(y.size()) != x.dim(0))
    throw std::invalid_argument("gp_fit: x/y size mismatch");
  if (restarts < 0) throw std::invalid_argument("gp_fit: negative restarts");
  int d = x.dim(1);

  double lo = y[0], hi = y[0];
  for (double v : y) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hi - lo < 1e-12) {
    // Flat targets carry no signal to fit; fall back to a fixed prior
    // that keeps exploration alive.
    GpParams p;
    p.lengthscales.assign(static_cast<size_t>(d), 0.5);
    p.sigma_f2 = 1.0;
    p.sigma_n2 = 1e-6;
    return gp_build(x, y, p);
  }

  double ym = mean_of(y);
  double var = 0.0;
  for (double v : y) var += (v - ym) * (v - ym);
  var /= static_cast<double>(y.size());

  Rng rng(seed);
  double best_lml = -std::numeric_limits<double>::infinity();
  GpParams best;
  bool have_best = false;

  for (int r = 0; r <= restarts; ++r) {
    Tensor logt({d + 2});
    if (r == 0) {
      for (int i = 0; i < d; ++i) logt(i) = std::log(0.5);
      logt(d) = std::log(std::max(var, 1e-6));
      logt(d + 1) = std::log(std::max(1e-4 * var, 1e-8));
    } else {
      for (int i = 0; i < d; ++i) logt(i) = rng.uniform(std::log(0.05), std::log(2.0));
      logt(d) = std::log(std::max(var, 1e-6)) + rng.uniform(-1.5, 1.5);
      logt(d + 1) = rng.uniform(std::log(1e-7), std::log(1e-2));
    }
    clamp_logt(logt, d);

    AdamState adam = AdamState::for_param(logt);
    Tensor neg_grad({d + 2});
    double lml = -std::numeric_limits<double>::infinity();
    try {
      std::vector<double> grad;
      for (int it = 0; it < 600; ++it) {
        lml = gp_lml(x, y, unpack(logt, d), &grad);
        for (int i = 0; i < d + 2; ++i) neg_grad(i) = -grad[static_cast<size_t>(i)];
        adam_step(logt, neg_grad, adam, it < 500 ? 0.05 : 0.01);
        clamp_logt(logt, d);
      }
      lml = gp_lml(x, y, unpack(logt, d), nullptr);
    } catch (const std::runtime_error&) {
      continue;  // numerically hopeless start
    }
    if (!have_best || lml > best_lml) {
      best_lml = lml;
      best = unpack(logt, d);
      have_best = true;
    }
  }
  if (!have_best)
    throw std::runtime_error("gp_fit: every restart failed numerically");
  return gp_build(x, y, best);
}

double normal_pdf(double z) {
  return std::exp(-0.5 * z * z) * 0.3989422804014327;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z * 0.7071067811865476); }

double expected_improvement(double mu, double sigma, double f_best,
                            double xi) {
  if (sigma < 0.0)
    throw std::invalid_argument("expected_improvement: negative sigma");
  if (sigma == 0.0) return 0.0;
  double gain = mu - f_best - xi;
  double z = gain / sigma;
  double ei = gain * normal_cdf(z) + sigma * normal_pdf(z);
  return std::max(0.0, ei);
}

}  // namespace del
