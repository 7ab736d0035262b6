#include "roadalarm/kinematics.hpp"

#include <algorithm>
#include <cmath>

namespace roadalarm {

VehicleKinematics mobility_update(const VehicleKinematics& k, double dt, const std::optional<Obstacle>& ahead,
                                  const KinematicsParams& p) {
  double desired = k.desired;
  if (k.s < p.entry_cap_distance) desired = std::min(desired, p.entry_speed_cap);
  double v = std::min(k.v + p.accel * dt, desired);
  if (ahead) {
    const double room = std::max(0.0, ahead->position - k.s - p.standstill_gap);
    v = std::min(v, std::sqrt(ahead->speed * ahead->speed + 2.0 * p.decel * room));
    v = std::min(v, room / dt);
  }
  v = std::max(0.0, v);
  return VehicleKinematics{k.s + v * dt, v, k.desired};
}

}  // namespace roadalarm
