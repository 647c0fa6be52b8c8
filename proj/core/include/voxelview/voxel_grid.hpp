#pragma once

#include <array>
#include <utility>
#include <vector>

#include "voxelview/geometry.hpp"
#include "voxelview/tensor.hpp"

namespace voxelview {

// Axis-aligned cubic grid of per-voxel feature vectors. `features` is
// [channels, w, h, d] with axes following world x, y, z.
struct VoxelGrid {
  Vec3 origin;
  double side = 1.0;
  std::array<int, 3> res{1, 1, 1};
  int channels = 0;
  Tensor features;

  static VoxelGrid create(const Vec3& origin, double side, int res, int channels);
};

struct GridPlacement {
  Vec3 origin;
  double side = 0;
};

// Center = centroid of the points (bbox center for the bbox overload);
// side = largest bbox extent scaled by `margin`, or `min_side` when the
// points are degenerate. Throws on an empty point set.
GridPlacement place_grid(const std::vector<Vec3>& points, double margin = 1.1,
                         double min_side = 1.0);
GridPlacement place_grid(const Vec3& bbox_lo, const Vec3& bbox_hi, double margin = 1.1,
                         double min_side = 1.0);

// World position of the center of voxel (i,j,k); indices are range-checked.
Vec3 voxel_center(const VoxelGrid& grid, int i, int j, int k);

// Continuous grid-index coordinates of a world point: voxel centers land on
// integer coordinates.
Vec3 world_to_grid(const VoxelGrid& grid, const Vec3& p);

// One bilinear/trilinear tap along a single axis.
struct LinearTap {
  int lo = 0;       // floor cell index
  double frac = 0;  // weight of cell lo+1
  bool lo_in = false, hi_in = false;
};
LinearTap linear_tap(double p, int extent);

// Interpolated feature vector [f] at continuous index coords. Queries outside
// the lattice use zero-valued phantom neighbors (fully outside gives zeros).
// Differentiable with respect to the volume / map.
Tensor trilinear_sample(const Tensor& volume, double px, double py, double pz);  // [f,w,h,d]
Tensor bilinear_sample(const Tensor& map, double u, double v);                   // [f,H,W], u=col

}  // namespace voxelview
