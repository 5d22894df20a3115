#pragma once

#include <cmath>
#include <string>

#include "nri/error.hpp"

namespace nri {

// Enclosure centered at the origin. `extent` is the side length for Square
// and the diameter for Circle; unused for Unbounded.
struct Boundary {
  enum class Kind { Unbounded, Square, Circle };

  Kind kind = Kind::Unbounded;
  double extent = 0.0;

  static Boundary unbounded() { return {}; }
  static Boundary square(double side) {
    if (side <= 0) throw ContractError("Boundary: square side must be positive");
    return {Kind::Square, side};
  }
  static Boundary circle(double diameter) {
    if (diameter <= 0) throw ContractError("Boundary: circle diameter must be positive");
    return {Kind::Circle, diameter};
  }

  bool contains(double x, double y) const {
    switch (kind) {
      case Kind::Unbounded: return true;
      case Kind::Square: {
        const double h = extent / 2.0;
        return std::fabs(x) < h && std::fabs(y) < h;
      }
      case Kind::Circle: {
        const double r = extent / 2.0;
        return x * x + y * y < r * r;
      }
    }
    return true;
  }

  std::string str() const {
    switch (kind) {
      case Kind::Unbounded: return "unbounded";
      case Kind::Square: return "square(" + std::to_string(extent) + ")";
      case Kind::Circle: return "circle(" + std::to_string(extent) + ")";
    }
    return "unbounded";
  }

  bool operator==(const Boundary&) const = default;
};

}  // namespace nri
