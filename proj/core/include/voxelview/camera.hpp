#pragma once

#include <string>
#include <vector>

#include "voxelview/geometry.hpp"

namespace voxelview {

// Pinhole camera: world point x maps to K(Rx + t); screen coordinates are the
// perspective-divided (p.x/p.z, p.y/p.z) with d = p.z the camera-space depth.
// Screen origin is the center of the top-left pixel, u along columns, v along
// rows, camera looks down +z.
struct CameraPose {
  Mat3 K = Mat3::identity();
  Mat3 R = Mat3::identity();
  Vec3 t;

  Vec3 center() const { return -(R.transpose() * t); }
  // Optical axis in world space: R^T * (0,0,1).
  Vec3 optical_axis() const { return R.transpose() * Vec3{0, 0, 1}; }
};

struct ScreenPoint {
  double u = 0, v = 0;  // pixels
  double d = 0;         // camera-space depth, world units; > 0 in front
};

// Throws std::domain_error("point on camera plane") when |depth| < 1e-12.
// Points behind the camera return d < 0; callers reject d <= 0.
ScreenPoint project(const CameraPose& pose, const Vec3& x);

// Exact inverse of project; rejects d == 0.
Vec3 unproject(const CameraPose& pose, const ScreenPoint& s);

// Angle in [0, pi] between the two cameras' optical axes.
double view_direction_angle(const CameraPose& a, const CameraPose& b);

// Throws std::invalid_argument unless R is orthonormal with det +1 (tolerance
// 1e-9) and K is upper-triangular with positive focal entries.
void validate_pose(const CameraPose& pose);

// Camera at `center` looking at `target`, world up (0,0,1) with a (0,1,0)
// fallback near the poles.
CameraPose look_at_pose(const Vec3& center, const Vec3& target, const Mat3& K);

// One record of the pose file: image path (relative to the dataset dir),
// image size, camera.
struct ViewRecord {
  std::string image;
  int width = 0, height = 0;
  CameraPose pose;
};

// Text pose file, one block per view with exact field names
// image / width / height / K / R / t; doubles are round-trip exact.
void write_pose_file(const std::string& path, const std::vector<ViewRecord>& views);
std::vector<ViewRecord> read_pose_file(const std::string& path);

}  // namespace voxelview
