#pragma once

// Serial reference implementations kept for testing and benchmarking. These
// stay deliberately naive and independent of the optimized kernels they
// check: straight nested loops, no tiling, no OpenMP, no shared helpers.

#include <utility>
#include <vector>

#include "paintdet/detections.hpp"
#include "paintdet/postproc.hpp"
#include "paintdet/tensor.hpp"

namespace paintdet::reference {

// Direct 7-loop cross-correlation (batch, out-channel, y, x, in-channel,
// ky, kx) with explicit zero padding.
Tensor conv2d_serial(const Tensor& in, const Tensor& w, const Tensor& b, int stride, int pad);

// Classic DBSCAN with O(n^2) neighbourhood scans, row-major point order.
std::vector<Cluster> dbscan_serial(const std::vector<PixelCoord>& points, double eps,
                                   int min_pts);

// 101-point interpolated AP evaluated the slow way: greedy matching by
// nested scans, then for each recall point a full pass over all operating
// points. Averaged over classes present in the ground truth; -1 when none.
double average_precision_serial(const std::vector<DetectionSet>& dets,
                                const std::vector<DetectionSet>& gts, double iou_thr);

}  // namespace paintdet::reference
