#pragma once

#include <Eigen/Dense>
#include <limits>
#include <vector>

namespace needle {

// Points live in R^3; coordinates beyond the domain dimension stay zero so
// distances need no dimension dispatch.
using Point = Eigen::Vector3d;
using Matrix3 = Eigen::Matrix3d;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

inline double dist(const Point& a, const Point& b) { return (a - b).norm(); }

}  // namespace needle
