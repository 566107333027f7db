#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "freewalk/group.hpp"
#include "freewalk/product_green.hpp"

namespace freewalk {

// Seeded generator of random normal forms: syllable count uniform in [min, max], factor uniform
// among those different from the previous one, coordinates uniform in [-cap, cap] (nonzero).
class ElementSampler {
 public:
  ElementSampler(FreeProductSpec spec, std::uint64_t seed, int min_syllables = 1, int max_syllables = 6,
                 int coordinate_cap = 1);
  GroupElement next();
  GroupElement next(int syllables);
  // Uniform element of a precomputed list.
  const GroupElement& pick(const std::vector<GroupElement>& list);
  std::uint64_t uniform(std::uint64_t n);

 private:
  FreeProductSpec spec_;
  std::mt19937_64 rng_;
  int min_, max_, cap_;
};

struct TripleSample {
  GroupElement x, y, z;
  double r = 0.0;
  double ratio = 0.0;  // G(x,z) / (G(x,y) G(y,z))
};

struct AnconaLevel {
  double r = 0.0;
  double max_ratio = 0.0;
  double median_ratio = 0.0;
  double p90_ratio = 0.0;
  double prefix_identity_error = 0.0;  // max |ratio G(e,e) - 1| over prefix-point triples
};

struct AnconaReport {
  std::vector<AnconaLevel> levels;
  double C_hat = 0.0;           // sup over samples and r of perturbed-triple ratios
  double uniformity = 0.0;      // max / min of per-r maxima
  std::size_t count = 0;
  std::uint64_t seed = 0;
  std::vector<TripleSample> samples;  // perturbed triples (all r), kept when requested
};

struct AnconaOptions {
  std::size_t count = 200;
  std::uint64_t seed = 1;
  int perturbation_radius = 2;
  int max_syllables = 6;
  int coordinate_cap = 1;
  bool keep_samples = false;
};

// Prefix-point triples x = e, y = prefix(z, j), and perturbed triples with x drawn from a ball.
AnconaReport weak_ancona_scan(const GreenCalculus& g, const std::vector<double>& r_grid,
                              const AnconaOptions& options = {});

struct DecayFit {
  std::vector<int> depths;
  std::vector<double> median_deviation;
  std::vector<double> max_deviation;
  std::vector<int> zero_count;   // samples at rounding level, excluded from the fit
  double C = 0.0;
  double alpha = 0.0;
  double r_squared = 0.0;
  int points_used = 0;
  bool fitted = false;
  std::vector<std::string> notes;
};

// Cross-ratio deviations |G(x,y) G(x',y') / (G(x,y') G(x',y)) - 1| for pairs whose normal-form
// geodesics share n middle syllables: x, x' from a small ball, y = w t, y' = w t' with |w| = n.
// Median deviations are fitted to C alpha^n by log-linear regression.
DecayFit strong_ancona_fit(const GreenCalculus& g, const std::vector<int>& depths, double r,
                           const AnconaOptions& options = {});

}  // namespace freewalk
