#include "del/bo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace del {

Dimension Dimension::continuous(const std::string& name, double lo,
                                double hi) {
  Dimension d;
  d.name = name;
  d.lo = lo;
  d.hi = hi;
  return d;
}

Dimension Dimension::grid(const std::string& name,
                          std::vector<double> values) {
  Dimension d;
  d.name = name;
  d.discrete = true;
  d.values = std::move(values);
  return d;
}

void SearchSpace::validate() const {
  if (dims.empty()) throw std::invalid_argument("search space has no dimensions");
  for (const Dimension& d : dims) {
    if (d.discrete) {
      if (d.values.empty())
        throw std::invalid_argument("empty value set for " + d.name);
    } else if (!(d.lo < d.hi)) {
      throw std::invalid_argument("bad bounds for " + d.name);
    }
  }
}

std::vector<double> SearchSpace::encode(
    const std::vector<double>& config) const {
  if (config.size() != dims.size())
    throw std::invalid_argument("encode: wrong config size");
  std::vector<double> x(config.size());
  for (size_t d = 0; d < dims.size(); ++d) {
    const Dimension& dim = dims[d];
    if (dim.discrete) {
      size_t best = 0;
      for (size_t i = 1; i < dim.values.size(); ++i)
        if (std::abs(dim.values[i] - config[d]) <
            std::abs(dim.values[best] - config[d]))
          best = i;
      x[d] = dim.values.size() == 1
                 ? 0.5
                 : double(best) / double(dim.values.size() - 1);
    } else {
      if (config[d] < dim.lo || config[d] > dim.hi)
        throw std::invalid_argument("encode: " + dim.name + " out of range");
      x[d] = (config[d] - dim.lo) / (dim.hi - dim.lo);
    }
  }
  return x;
}

std::vector<double> SearchSpace::decode(const std::vector<double>& x) const {
  if (x.size() != dims.size())
    throw std::invalid_argument("decode: wrong point size");
  std::vector<double> config(x.size());
  for (size_t d = 0; d < dims.size(); ++d) {
    const Dimension& dim = dims[d];
    double xd = std::clamp(x[d], 0.0, 1.0);
    if (dim.discrete) {
      size_t m = dim.values.size();
      size_t idx = m == 1 ? 0
                          : size_t(std::lround(xd * double(m - 1)));
      config[d] = dim.values[std::min(idx, m - 1)];
    } else {
      config[d] = dim.lo + xd * (dim.hi - dim.lo);
    }
  }
  return config;
}

double SearchSpace::snap(int d, double xd) const {
  const Dimension& dim = dims[static_cast<size_t>(d)];
  xd = std::clamp(xd, 0.0, 1.0);
  if (!dim.discrete) return xd;
  size_t m = dim.values.size();
  if (m == 1) return 0.5;
  double idx = std::lround(xd * double(m - 1));
  return idx / double(m - 1);
}

std::vector<double> SearchSpace::sample_encoded(Rng& rng) const {
  std::vector<double> x(dims.size());
  for (size_t d = 0; d < dims.size(); ++d) {
    const Dimension& dim = dims[d];
    if (dim.discrete) {
      size_t m = dim.values.size();
      int idx = rng.uniform_int(static_cast<int>(m));
      x[d] = m == 1 ? 0.5 : double(idx) / double(m - 1);
    } else {
      x[d] = rng.uniform();
    }
  }
  return x;
}

std::vector<std::vector<double>> latin_hypercube(const SearchSpace& space,
                                                 int n, Rng& rng) {
  space.validate();
  if (n < 1) throw std::invalid_argument("latin_hypercube: n must be >= 1");
  std::vector<std::vector<double>> points(
      static_cast<size_t>(n), std::vector<double>(space.dims.size()));
  std::vector<int> perm(static_cast<size_t>(n));
  for (size_t d = 0; d < space.dims.size(); ++d) {
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    for (int i = 0; i < n; ++i) {
      double stratum = (perm[static_cast<size_t>(i)] + rng.uniform()) / n;
      points[static_cast<size_t>(i)][d] = space.snap(static_cast<int>(d), stratum);
    }
  }
  return points;
}

namespace {

double ei_at(const GpModel& model, const std::vector<double>& x,
             double f_best, double xi) {
  auto [mu, var] = gp_posterior(model, x);
  return expected_improvement(mu, std::sqrt(var), f_best, xi);
}

}  // namespace

std::vector<double> propose_next(const GpModel& model,
                                 const SearchSpace& space, Rng& rng,
                                 double xi) {
  space.validate();
  if (!model.fitted) throw std::logic_error("propose_next: unfitted model");
  if (model.dim() != space.size())
    throw std::invalid_argument("propose_next: space/model dimension mismatch");
  double f_best = *std::max_element(model.y.begin(), model.y.end());

  constexpr int kCandidates = 1000;
  constexpr int kRefined = 10;
  std::vector<std::vector<double>> cand;
  cand.reserve(kCandidates);
  std::vector<double> score(kCandidates);
  for (int i = 0; i < kCandidates; ++i) {
    cand.push_back(space.sample_encoded(rng));
    score[static_cast<size_t>(i)] = ei_at(model, cand.back(), f_best, xi);
  }

  std::vector<int> order(kCandidates);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (score[static_cast<size_t>(a)] != score[static_cast<size_t>(b)])
      return score[static_cast<size_t>(a)] > score[static_cast<size_t>(b)];
    return a < b;
  });

  // Greedy coordinate refinement of the best few candidates.
  for (int r = 0; r < std::min(kRefined, kCandidates); ++r) {
    int idx = order[static_cast<size_t>(r)];
    std::vector<double>& x = cand[static_cast<size_t>(idx)];
    double& s = score[static_cast<size_t>(idx)];
    for (int pass = 0; pass < 2; ++pass) {
      for (int d = 0; d < space.size(); ++d) {
        const Dimension& dim = space.dims[static_cast<size_t>(d)];
        std::vector<double> steps;
        if (dim.discrete) {
          size_t m = dim.values.size();
          if (m > 1) steps = {1.0 / double(m - 1), -1.0 / double(m - 1)};
        } else {
          steps = {0.1, -0.1, 0.02, -0.02};
        }
        for (double step : steps) {
          double saved = x[static_cast<size_t>(d)];
          x[static_cast<size_t>(d)] = space.snap(d, saved + step);
          double trial = ei_at(model, x, f_best, xi);
          if (trial > s) {
            s = trial;
          } else {
            x[static_cast<size_t>(d)] = saved;
          }
        }
      }
    }
  }

  int best = 0;
  for (int i = 1; i < kCandidates; ++i)
    if (score[static_cast<size_t>(i)] > score[static_cast<size_t>(best)])
      best = i;
  return cand[static_cast<size_t>(best)];
}

BoResult bo_loop(
    const std::function<double(const std::vector<double>&)>& objective,
    const SearchSpace& space, int n_iter, int n_init, uint64_t seed,
    double xi) {
  space.validate();
  if (n_init < 1) throw std::invalid_argument("bo_loop: n_init must be >= 1");
  if (n_iter < 0) throw std::invalid_argument("bo_loop: negative n_iter");
  if (n_iter > 0 && n_init < 2)
    throw std::invalid_argument("bo_loop: model iterations need n_init >= 2");

  Rng rng(seed);
  BoResult result;
  auto run_trial = [&](std::vector<double> x) {
    Trial t;
    t.x = std::move(x);
    t.config = space.decode(t.x);
    try {
      t.y = objective(t.config);
      if (!std::isfinite(t.y)) {
        t.y = 0.0;
        t.failed = true;
      }
    } catch (const std::exception&) {
      t.y = 0.0;
      t.failed = true;
    }
    result.history.push_back(t);
    if (result.history.size() == 1 || t.y > result.best.y) result.best = t;
    result.best_so_far.push_back(result.best.y);
  };

  for (auto& x : latin_hypercube(space, n_init, rng)) run_trial(std::move(x));

  for (int it = 0; it < n_iter; ++it) {
    int n = static_cast<int>(result.history.size());
    Tensor x({n, space.size()});
    std::vector<double> y(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      const Trial& t = result.history[static_cast<size_t>(i)];
      for (int d = 0; d < space.size(); ++d) x(i, d) = t.x[static_cast<size_t>(d)];
      y[static_cast<size_t>(i)] = t.y;
    }
    GpModel model = gp_fit(x, y, 3, rng.next_u64());
    run_trial(propose_next(model, space, rng, xi));
  }
  return result;
}

}  // namespace del
