#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace omniloco {

using Real = double;

inline constexpr Real kPi = 3.14159265358979323846;
inline constexpr Real kTwoPi = 2.0 * kPi;

[[noreturn]] inline void fail(const std::string& msg) {
  throw std::runtime_error(msg);
}

#define OL_REQUIRE(cond, msg)        \
  do {                               \
    if (!(cond)) ::omniloco::fail(msg); \
  } while (0)

inline Real clamp(Real v, Real lo, Real hi) {
  return v < lo ? lo : (v > hi ? hi : v);
}

inline Real wrap_angle(Real a) {
  while (a > kPi) a -= kTwoPi;
  while (a < -kPi) a += kTwoPi;
  return a;
}

struct Vec2 {
  Real x = 0, y = 0;
};

struct Vec3 {
  Real x = 0, y = 0, z = 0;
};

inline Vec2 rotate(Vec2 v, Real yaw) {
  const Real c = std::cos(yaw), s = std::sin(yaw);
  return {c * v.x - s * v.y, s * v.x + c * v.y};
}

}  // namespace omniloco
