#include "voxelview/camera.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace voxelview {

ScreenPoint project(const CameraPose& pose, const Vec3& x) {
  const Vec3 p = pose.K * (pose.R * x + pose.t);
  if (std::fabs(p.z) < 1e-12) throw std::domain_error("point on camera plane");
  return {p.x / p.z, p.y / p.z, p.z};
}

Vec3 unproject(const CameraPose& pose, const ScreenPoint& s) {
  if (s.d == 0.0) throw std::invalid_argument("unproject: depth must be nonzero");
  const Vec3 p{s.u * s.d, s.v * s.d, s.d};
  return pose.R.transpose() * (pose.K.inverse() * p - pose.t);
}

double view_direction_angle(const CameraPose& a, const CameraPose& b) {
  const double c = a.optical_axis().normalized().dot(b.optical_axis().normalized());
  return std::acos(std::clamp(c, -1.0, 1.0));
}

void validate_pose(const CameraPose& pose) {
  const Mat3 rtr = pose.R.transpose() * pose.R;
  const Mat3 eye = Mat3::identity();
  double dev = 0;
  for (int i = 0; i < 9; ++i) dev = std::max(dev, std::fabs(rtr.m[i] - eye.m[i]));
  if (dev >= 1e-9)
    throw std::invalid_argument("pose: R is not orthonormal (max deviation " +
                                std::to_string(dev) + ")");
  if (pose.R.det() <= 0) throw std::invalid_argument("pose: R must have determinant +1");
  const Mat3& K = pose.K;
  if (K(1, 0) != 0 || K(2, 0) != 0 || K(2, 1) != 0)
    throw std::invalid_argument("pose: K must be upper-triangular");
  if (K(0, 0) <= 0 || K(1, 1) <= 0)
    throw std::invalid_argument("pose: K focal entries must be positive");
}

CameraPose look_at_pose(const Vec3& center, const Vec3& target, const Mat3& K) {
  const Vec3 diff = target - center;
  if (diff.norm() < 1e-12)
    throw std::invalid_argument("look_at_pose: camera center coincides with target");
  const Vec3 fwd = diff.normalized();
  Vec3 up{0, 0, 1};
  if (std::fabs(fwd.dot(up)) > 0.999) up = Vec3{0, 1, 0};
  const Vec3 right = fwd.cross(up).normalized();
  const Vec3 down = fwd.cross(right);  // camera y points down in world space
  CameraPose pose;
  pose.K = K;
  pose.R = Mat3::from_rows(right, down, fwd);
  pose.t = -(pose.R * center);
  return pose;
}

// ---------------------------------------------------------------------------
// Pose file.

namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

[[noreturn]] void pose_error(const std::string& path, const std::string& why) {
  throw std::runtime_error("pose file " + path + ": " + why);
}

}  // namespace

void write_pose_file(const std::string& path, const std::vector<ViewRecord>& views) {
  std::ofstream os(path);
  if (!os) pose_error(path, "cannot open for writing");
  for (const ViewRecord& r : views) {
    os << "view\n";
    os << "image " << r.image << "\n";
    os << "width " << r.width << "\n";
    os << "height " << r.height << "\n";
    os << "K";
    for (int i = 0; i < 9; ++i) os << " " << fmt_double(r.pose.K.m[i]);
    os << "\nR";
    for (int i = 0; i < 9; ++i) os << " " << fmt_double(r.pose.R.m[i]);
    os << "\nt " << fmt_double(r.pose.t.x) << " " << fmt_double(r.pose.t.y) << " "
       << fmt_double(r.pose.t.z) << "\n";
    os << "end\n";
  }
  if (!os) pose_error(path, "write failed");
}

std::vector<ViewRecord> read_pose_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) pose_error(path, "missing or unreadable");
  std::vector<ViewRecord> views;
  std::string line;
  int lineno = 0;
  auto next_line = [&](bool required) -> bool {
    while (std::getline(is, line)) {
      ++lineno;
      if (!line.empty()) return true;
    }
    if (required) pose_error(path, "unexpected end of file");
    return false;
  };
  while (next_line(false)) {
    if (line != "view") pose_error(path, "expected 'view' at line " + std::to_string(lineno));
    ViewRecord r;
    bool have[6] = {false, false, false, false, false, false};
    while (true) {
      next_line(true);
      if (line == "end") break;
      std::istringstream ls(line);
      std::string key;
      ls >> key;
      auto want = [&](int n, double* out) {
        for (int i = 0; i < n; ++i)
          if (!(ls >> out[i]))
            pose_error(path, "malformed '" + key + "' at line " + std::to_string(lineno));
      };
      if (key == "image") {
        ls >> r.image;
        have[0] = true;
      } else if (key == "width") {
        ls >> r.width;
        have[1] = true;
      } else if (key == "height") {
        ls >> r.height;
        have[2] = true;
      } else if (key == "K") {
        want(9, r.pose.K.m);
        have[3] = true;
      } else if (key == "R") {
        want(9, r.pose.R.m);
        have[4] = true;
      } else if (key == "t") {
        double v[3];
        want(3, v);
        r.pose.t = {v[0], v[1], v[2]};
        have[5] = true;
      } else {
        pose_error(path, "unknown field '" + key + "' at line " + std::to_string(lineno));
      }
    }
    for (bool h : have)
      if (!h) pose_error(path, "incomplete view record ending at line " + std::to_string(lineno));
    validate_pose(r.pose);
    views.push_back(std::move(r));
  }
  return views;
}

}  // namespace voxelview
