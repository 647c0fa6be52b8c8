#include "voxelview/voxel_grid.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace voxelview {

VoxelGrid VoxelGrid::create(const Vec3& origin, double side, int res, int channels) {
  if (side <= 0) throw std::invalid_argument("voxel grid: side must be positive");
  if (res < 1 || channels < 1)
    throw std::invalid_argument("voxel grid: resolution and channels must be >= 1");
  VoxelGrid g;
  g.origin = origin;
  g.side = side;
  g.res = {res, res, res};
  g.channels = channels;
  g.features = Tensor::zeros({channels, res, res, res});
  return g;
}

GridPlacement place_grid(const std::vector<Vec3>& points, double margin, double min_side) {
  if (points.empty()) throw std::invalid_argument("place_grid: empty point set");
  Vec3 lo = points[0], hi = points[0], centroid{0, 0, 0};
  for (const Vec3& p : points) {
    lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
    hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
    centroid = centroid + p;
  }
  centroid = centroid * (1.0 / static_cast<double>(points.size()));
  const double extent = std::max({hi.x - lo.x, hi.y - lo.y, hi.z - lo.z});
  const double side = extent > 1e-12 ? extent * margin : min_side;
  return {centroid - Vec3{side / 2, side / 2, side / 2}, side};
}

GridPlacement place_grid(const Vec3& bbox_lo, const Vec3& bbox_hi, double margin,
                         double min_side) {
  const Vec3 center = (bbox_lo + bbox_hi) * 0.5;
  const double extent =
      std::max({bbox_hi.x - bbox_lo.x, bbox_hi.y - bbox_lo.y, bbox_hi.z - bbox_lo.z});
  const double side = extent > 1e-12 ? extent * margin : min_side;
  return {center - Vec3{side / 2, side / 2, side / 2}, side};
}

Vec3 voxel_center(const VoxelGrid& grid, int i, int j, int k) {
  if (i < 0 || i >= grid.res[0] || j < 0 || j >= grid.res[1] || k < 0 || k >= grid.res[2])
    throw std::invalid_argument("voxel_center: index (" + std::to_string(i) + "," +
                                std::to_string(j) + "," + std::to_string(k) +
                                ") out of range for resolution " + std::to_string(grid.res[0]) +
                                "x" + std::to_string(grid.res[1]) + "x" +
                                std::to_string(grid.res[2]));
  return grid.origin + Vec3{(i + 0.5) / grid.res[0] * grid.side,
                            (j + 0.5) / grid.res[1] * grid.side,
                            (k + 0.5) / grid.res[2] * grid.side};
}

Vec3 world_to_grid(const VoxelGrid& grid, const Vec3& p) {
  const Vec3 rel = p - grid.origin;
  return {rel.x / grid.side * grid.res[0] - 0.5, rel.y / grid.side * grid.res[1] - 0.5,
          rel.z / grid.side * grid.res[2] - 0.5};
}

LinearTap linear_tap(double p, int extent) {
  LinearTap t;
  const double f = std::floor(p);
  t.lo = static_cast<int>(f);
  t.frac = p - f;
  t.lo_in = t.lo >= 0 && t.lo < extent;
  t.hi_in = t.lo + 1 >= 0 && t.lo + 1 < extent;
  return t;
}

Tensor trilinear_sample(const Tensor& volume, double px, double py, double pz) {
  if (volume.rank() != 4)
    throw std::invalid_argument("trilinear_sample: expected [f,w,h,d] volume, got " +
                                shape_str(volume.shape()));
  const int f = volume.dim(0), w = volume.dim(1), h = volume.dim(2), d = volume.dim(3);
  const LinearTap tx = linear_tap(px, w), ty = linear_tap(py, h), tz = linear_tap(pz, d);

  // Up to 8 in-bounds corners with their weights.
  struct Corner {
    long offset;  // within one channel plane
    double weight;
  };
  std::vector<Corner> corners;
  corners.reserve(8);
  for (int dx = 0; dx < 2; ++dx) {
    const bool xin = dx ? tx.hi_in : tx.lo_in;
    const double wx = dx ? tx.frac : 1.0 - tx.frac;
    if (!xin || wx == 0.0) continue;
    for (int dy = 0; dy < 2; ++dy) {
      const bool yin = dy ? ty.hi_in : ty.lo_in;
      const double wy = dy ? ty.frac : 1.0 - ty.frac;
      if (!yin || wy == 0.0) continue;
      for (int dz = 0; dz < 2; ++dz) {
        const bool zin = dz ? tz.hi_in : tz.lo_in;
        const double wz = dz ? tz.frac : 1.0 - tz.frac;
        if (!zin || wz == 0.0) continue;
        const long off = (static_cast<long>(tx.lo + dx) * h + (ty.lo + dy)) * d + (tz.lo + dz);
        corners.push_back({off, wx * wy * wz});
      }
    }
  }

  const long plane = static_cast<long>(w) * h * d;
  Tensor out = Tensor::make_op({f}, {volume}, [corners, plane](TensorNode& self) {
    TensorNode& vol = *self.parents[0];
    if (!vol.requires_grad) return;
    vol.ensure_grad();
    const int ch = self.shape[0];
    for (int c = 0; c < ch; ++c) {
      const double g = self.grad[static_cast<size_t>(c)];
      for (const Corner& cr : corners) vol.grad[static_cast<size_t>(c * plane + cr.offset)] += g * cr.weight;
    }
  });

  const double* vd = volume.data();
  double* od = out.data();
  for (int c = 0; c < f; ++c) {
    double acc = 0;
    for (const Corner& cr : corners) acc += vd[c * plane + cr.offset] * cr.weight;
    od[c] = acc;
  }
  return out;
}

Tensor bilinear_sample(const Tensor& map, double u, double v) {
  if (map.rank() != 3)
    throw std::invalid_argument("bilinear_sample: expected [f,H,W] map, got " +
                                shape_str(map.shape()));
  const int f = map.dim(0), h = map.dim(1), w = map.dim(2);
  const LinearTap tu = linear_tap(u, w), tv = linear_tap(v, h);

  struct Corner {
    long offset;
    double weight;
  };
  std::vector<Corner> corners;
  corners.reserve(4);
  for (int dv = 0; dv < 2; ++dv) {
    const bool vin = dv ? tv.hi_in : tv.lo_in;
    const double wv = dv ? tv.frac : 1.0 - tv.frac;
    if (!vin || wv == 0.0) continue;
    for (int du = 0; du < 2; ++du) {
      const bool uin = du ? tu.hi_in : tu.lo_in;
      const double wu = du ? tu.frac : 1.0 - tu.frac;
      if (!uin || wu == 0.0) continue;
      corners.push_back({static_cast<long>(tv.lo + dv) * w + (tu.lo + du), wv * wu});
    }
  }

  const long plane = static_cast<long>(h) * w;
  Tensor out = Tensor::make_op({f}, {map}, [corners, plane](TensorNode& self) {
    TensorNode& m = *self.parents[0];
    if (!m.requires_grad) return;
    m.ensure_grad();
    const int ch = self.shape[0];
    for (int c = 0; c < ch; ++c) {
      const double g = self.grad[static_cast<size_t>(c)];
      for (const Corner& cr : corners) m.grad[static_cast<size_t>(c * plane + cr.offset)] += g * cr.weight;
    }
  });

  const double* md = map.data();
  double* od = out.data();
  for (int c = 0; c < f; ++c) {
    double acc = 0;
    for (const Corner& cr : corners) acc += md[c * plane + cr.offset] * cr.weight;
    od[c] = acc;
  }
  return out;
}

}  // namespace voxelview
