#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "paintdet/codec.hpp"
#include "paintdet/detections.hpp"
#include "paintdet/tensor.hpp"

namespace paintdet {

// Fixed (non-trainable) convolutional pyramid: 3 stages with channels
// [8, 16, 32] at cumulative strides [1, 2, 4], tanh-squashed, weights drawn
// once from a seeded generator and frozen. Stage 1 uses 1x1 taps so its
// response support is exactly the set of changed pixels; the coarser stages
// add context for sloppier generated images.
class FeatureExtractor {
public:
    explicit FeatureExtractor(uint64_t seed = 17);

    // Returns the three stage feature maps for an image.
    std::vector<Tensor> features(const Image& img) const;

    uint64_t seed() const { return seed_; }

private:
    uint64_t seed_;
    Tensor w1_, b1_, w2_, b2_, w3_, b3_;
};

// Per-stage channelwise L2 distance, nearest-upsampled to input resolution
// and summed with equal weights. Both images must share dimensions.
Tensor feature_diff(const Image& x, const Image& y_hat, const FeatureExtractor& fx);

using PixelCoord = std::pair<int, int>;  // (x, y)

// Keeps pixels with d > mean + 2*std (population std over the whole map).
// Returned in row-major order.
std::vector<PixelCoord> binarize(const Tensor& diff_map);

struct Cluster {
    std::vector<PixelCoord> members;
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // tight pixel bbox, inclusive
    int mass = 0;

    int bbox_area() const { return (x1 - x0 + 1) * (y1 - y0 + 1); }
};

// Classic DBSCAN over pixel coordinates with Euclidean distance. Points are
// scanned row-major; the epsilon-neighbourhood of a point includes the point
// itself. Border points join the first cluster that reaches them. Noise is
// discarded. Grid-bucketed neighbour search; the serial O(n^2) reference
// lives in the reference library.
std::vector<Cluster> dbscan(const std::vector<PixelCoord>& points, double eps = 3.0,
                            int min_pts = 8);

struct ClusterClass {
    bool accepted = false;
    int class_id = -1;
    float score = 0.0f;
};

struct PostprocConfig {
    double eps = 3.0;
    int min_pts = 8;
    double red_guard_dist = 100.0;  // pixels closer than this to pure red do not vote
    double assign_dist = 80.0;      // nearest-palette assignment radius
    float score_floor = 0.3f;
    int min_bbox_area_px = 9;
    // off by default: require a red-ish pixel near the cluster center
    bool verify_center_dot = false;
    bool nms = false;
    double nms_iou = 0.5;
};

// Majority palette-color vote over the cluster bbox of y_hat. score =
// winning votes / bbox pixel count; rejects low-score or tiny clusters.
// Ties go to the lower class id.
ClusterClass classify_cluster(const Cluster& c, const Image& y_hat, const Palette& palette,
                              const PostprocConfig& cfg = {});

// Full decode pipeline: feature_diff -> binarize -> dbscan -> per-cluster
// classify -> unshrink -> clamp.
DetectionSet detect(int image_id, const Image& x, const Image& y_hat,
                    const FeatureExtractor& fx, const Palette& palette,
                    const AnnotationStyle& style, const PostprocConfig& cfg = {});

}  // namespace paintdet
