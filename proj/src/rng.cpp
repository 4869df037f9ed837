#include "tmeta/rng.hpp"

#include <cmath>

namespace tmeta {

double Rng::normal() {
  if (have_spare_normal_) {
    have_spare_normal_ = false;
    return spare_normal_;
  }
  // Box-Muller; u1 in (0,1] keeps the log finite.
  double u1 = uniform_open();
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double theta = 2.0 * M_PI * u2;
  spare_normal_ = r * std::sin(theta);
  have_spare_normal_ = true;
  return r * std::cos(theta);
}

std::size_t Rng::uniform_int(std::size_t n) {
  if (n <= 1) return 0;
  std::uint64_t limit = ~0ULL - (~0ULL % n + 1) % n;
  std::uint64_t x = bits();
  while (x > limit) x = bits();
  return static_cast<std::size_t>(x % n);
}

std::size_t Rng::categorical(const std::vector<double>& mass) {
  double total = 0.0;
  for (double m : mass) total += m;
  double u = uniform() * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < mass.size(); ++i) {
    acc += mass[i];
    if (u < acc) return i;
  }
  return mass.size() - 1;
}

}  // namespace tmeta
