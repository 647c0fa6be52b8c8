#pragma once

#include <string>
#include <vector>

namespace voxelview {

// 8-bit RGB PNG. Pixel data is channel-major [3,H,W] doubles in [0,1];
// writing quantizes with round(v*255) after clamping.
void write_png_rgb8(const std::string& path, int width, int height,
                    const std::vector<double>& rgb);
std::vector<double> read_png_rgb8(const std::string& path, int& width, int& height);

// 16-bit grayscale PNG; values are mapped linearly from [lo,hi] to [0,65535]
// and clamped. Used for depth map export.
void write_png_gray16(const std::string& path, int width, int height,
                      const std::vector<double>& values, double lo, double hi);

}  // namespace voxelview
