#pragma once

#include <array>
#include <cstdint>

#include "hoi/motion.hpp"
#include "hoi/tensor.hpp"

namespace hoi {

using Pose6 = std::array<double, 6>;  // tx ty tz, axis-angle rx ry rz

// Rodrigues rotation matrix (row-major 3x3) from an axis-angle vector.
std::array<double, 9> rodrigues(const std::array<double, 3>& axis_angle);

// Rotate then translate every point of the cloud by one pose frame.
Tensor<double> transform_points(const ObjectPointCloud& cloud, const Pose6& pose);

inline Pose6 pose_from_row(const MotionSequence& frames, int row) {
    const float* r = frames.row(row);
    return {r[0], r[1], r[2], r[3], r[4], r[5]};
}

// Primitive dimensions derived from a single extent scalar; shared by the
// sampler, the generator, and tests.
struct Vec3BoxHalf {
    double hx, hy, hz;
};
struct CylinderDims {
    double radius, half_height;
};

Vec3BoxHalf box_half_extents(double extent);
CylinderDims cylinder_dims(double extent);
double shape_rest_height(ShapeTag shape, double extent);

// Quasi-uniform surface sampling of a primitive, centroid re-centered.
// `extent` is the characteristic size in meters: sphere radius, box full
// edge lengths (via aspect), cylinder radius (height = 2.4 * radius).
ObjectPointCloud make_pointcloud(ShapeTag shape, int n, std::uint64_t seed, double extent);

}  // namespace hoi
