#pragma once

#include <array>
#include <optional>
#include <vector>

#include "oddvox/ops.hpp"
#include "oddvox/tensor.hpp"

namespace oddvox::geometry {

using diffcore::Tensor;

// Row-major 3x4 projection matrix P = K [R | t].
struct Mat34 {
  std::array<double, 12> m{};
};

struct Projection {
  double u = 0, v = 0;
  double depth = 0;      // camera-frame z
  bool in_front = false;  // depth > 1e-9
};

Projection project_point(const Mat34& p, const std::array<double, 3>& x);

struct VoxelGridSpec {
  std::array<int, 3> dims{96, 96, 16};
  double voxel_size = 0.04;  // meters per voxel
  std::array<double, 3> origin{-1.92, -1.92, -0.04};  // world position of the (0,0,0) corner

  std::int64_t voxel_count() const { return std::int64_t(dims[0]) * dims[1] * dims[2]; }
  std::array<double, 3> voxel_center(int ix, int iy, int iz) const {
    return {origin[0] + (ix + 0.5) * voxel_size, origin[1] + (iy + 0.5) * voxel_size,
            origin[2] + (iz + 0.5) * voxel_size};
  }
};

struct ObjectBox3D {
  std::array<double, 3> min{};
  std::array<double, 3> max{};
};

template <typename T>
struct FeatureVolume {
  Tensor<T> data;  // [d, vx, vy, vz]
  VoxelGridSpec grid;
  std::vector<int> valid_count;  // per voxel, number of views that observed it

  int channels() const { return data.dim(0); }
};

// Samples `map` ([d, h, w]) at continuous coordinates with texel centers on
// integers. Out-of-bounds coordinates return nullopt.
template <typename T>
std::optional<std::vector<T>> bilinear_sample(const Tensor<T>& map, double u, double v);

// Projects every voxel center into every view, bilinearly samples the
// feature maps and averages over the views that see the voxel. Feature-map
// coordinates relate to image pixels by `stride`: map texel (a, b) sits at
// image pixel ((a + 0.5) * stride, (b + 0.5) * stride). Differentiable
// w.r.t. the feature maps.
template <typename T>
FeatureVolume<T> lift_features(const std::vector<Tensor<T>>& features,
                               const std::vector<Mat34>& projections, double stride,
                               const VoxelGridSpec& grid);

// Pointwise channel reduction (1x1 convolution) on a [d_in, h, w] map.
template <typename T>
Tensor<T> reduce_channels(const Tensor<T>& fmap, const Tensor<T>& weight, const Tensor<T>& bias);

enum class PoolMode { max, mean };

// Bins the box into out^3 equal sub-volumes in continuous voxel coordinates
// and pools the voxels whose centers fall inside each bin. Empty bins take
// the value of the voxel nearest to the bin center.
template <typename T>
Tensor<T> roi_pool(const Tensor<T>& volume, const VoxelGridSpec& grid, const ObjectBox3D& box,
                   int out = 8, PoolMode mode = PoolMode::max);

// Mean over the spatial cells of a pooled crop: [d, s, s, s] -> [d].
template <typename T>
Tensor<T> squeeze_crop(const Tensor<T>& crop);

extern template struct FeatureVolume<float>;
extern template struct FeatureVolume<double>;

}  // namespace oddvox::geometry
