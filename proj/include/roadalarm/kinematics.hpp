#pragma once

#include <optional>

namespace roadalarm {

struct KinematicsParams {
  double accel = 2.0;           // m/s^2
  double decel = 4.5;           // m/s^2, also assumed for the leader
  double standstill_gap = 2.0;  // m
  double vehicle_length = 5.0;  // m
  double entry_speed_cap = 5.0;     // m/s while within entry_cap_distance of the lane start
  double entry_cap_distance = 7.0;  // m
};

struct VehicleKinematics {
  double s = 0;        // front bumper, meters along the lane
  double v = 0;        // m/s
  double desired = 0;  // m/s
};

/// Nearest thing ahead that the vehicle must not reach. A stop line or an
/// incident is a stopped obstacle; a leader is its rear bumper and speed.
struct Obstacle {
  double position = 0;
  double speed = 0;
};

/// Follow-the-leader step: accelerate toward the desired speed, never exceed
/// the speed from which a stop (or matching a braking leader) is possible,
/// and never close the gap below the standstill gap within one step.
VehicleKinematics mobility_update(const VehicleKinematics& k, double dt, const std::optional<Obstacle>& ahead,
                                  const KinematicsParams& p);

}  // namespace roadalarm
