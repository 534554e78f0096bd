#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "del/gp.hpp"
#include "del/rng.hpp"

namespace del {

// One search dimension: continuous [lo, hi] or a discrete value set.
// Encoded coordinates live in [0,1]: continuous min-max scaled, discrete
// values on an evenly spaced grid.
struct Dimension {
  std::string name;
  bool discrete = false;
  double lo = 0.0, hi = 1.0;
  std::vector<double> values;

  static Dimension continuous(const std::string& name, double lo, double hi);
  static Dimension grid(const std::string& name, std::vector<double> values);
};

struct SearchSpace {
  std::vector<Dimension> dims;

  int size() const { return static_cast<int>(dims.size()); }
  void validate() const;
  // Decoded config <-> encoded unit-cube point. encode/decode are inverse
  // on representable points; decode snaps discrete coordinates to the
  // nearest grid value.
  std::vector<double> encode(const std::vector<double>& config) const;
  std::vector<double> decode(const std::vector<double>& x) const;
  std::vector<double> sample_encoded(Rng& rng) const;
  // Nearest representable encoded value for dimension d.
  double snap(int d, double xd) const;
};

struct Trial {
  std::vector<double> x;       // encoded
  std::vector<double> config;  // decoded
  double y = 0.0;
  bool failed = false;
};

struct BoResult {
  Trial best;
  std::vector<Trial> history;
  std::vector<double> best_so_far;  // after each evaluation
};

// n stratified points per dimension, independently permuted.
std::vector<std::vector<double>> latin_hypercube(const SearchSpace& space,
                                                 int n, Rng& rng);

// EI argmax over 1000 uniform candidates; the 10 best get local coordinate
// refinement; ties break toward the lowest candidate index.
std::vector<double> propose_next(const GpModel& model,
                                 const SearchSpace& space, Rng& rng,
                                 double xi = 0.05);

// Latin-hypercube init then fit/propose/evaluate rounds. An objective that
// throws (or returns a non-finite value) is recorded as y = 0 with the
// failed flag set. n_iter = 0 returns the best of the initial design.
BoResult bo_loop(const std::function<double(const std::vector<double>&)>& objective,
                 const SearchSpace& space, int n_iter, int n_init,
                 uint64_t seed, double xi = 0.05);

}  // namespace del
