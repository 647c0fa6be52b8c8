#pragma once

#include "voxelview/tensor.hpp"

namespace voxelview {

// 2D convolution: input [Ci,H,W], weight [Co,Ci,k,k], optional bias [Co]
// (pass a default-constructed Tensor for none). Zero padding.
// Output [Co, (H+2p-k)/s+1, (W+2p-k)/s+1].
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
              int padding);

// 3D convolution: input [Ci,D,H,W], weight [Co,Ci,k,k,k], optional bias [Co].
Tensor conv3d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
              int padding);

// Adjoint of conv2d with the same stride/padding: input [Ci,H,W],
// weight [Ci,Co,k,k], optional bias [Co]. Output extent (H-1)*s - 2p + k.
Tensor conv_transpose2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
                        int padding);

// 3D analogue of conv_transpose2d: input [Ci,D,H,W], weight [Ci,Co,k,k,k].
Tensor conv_transpose3d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
                        int padding);

}  // namespace voxelview
