#pragma once

#include <cmath>

namespace optosq {

/// Classical fixed-step fourth-order Runge-Kutta stepper.
///
/// `State` is any Eigen dense type (or anything with the same arithmetic).
/// The right-hand side is called as `rhs(t, y, dydt)` and must write the
/// derivative into `dydt`. Stage buffers are kept between steps so a long
/// integration does not allocate.
template <class State>
class Rk4 {
 public:
  template <class Rhs>
  void step(Rhs&& rhs, double t, State& y, double dt) {
    if (k1_.size() != y.size()) {
      k1_ = y;
      k2_ = y;
      k3_ = y;
      k4_ = y;
      tmp_ = y;
    }
    const double half = 0.5 * dt;
    rhs(t, y, k1_);
    tmp_ = y + half * k1_;
    rhs(t + half, tmp_, k2_);
    tmp_ = y + half * k2_;
    rhs(t + half, tmp_, k3_);
    tmp_ = y + dt * k3_;
    rhs(t + dt, tmp_, k4_);
    y += (dt / 6.0) * (k1_ + 2.0 * k2_ + 2.0 * k3_ + k4_);
  }

 private:
  State k1_, k2_, k3_, k4_, tmp_;
};

/// Smallest number of equal steps, each no longer than `dt`, covering `span`.
inline long step_count(double span, double dt) {
  const double n = std::ceil(span / dt - 1e-9);
  return n < 1.0 ? 1 : static_cast<long>(n);
}

}  // namespace optosq
