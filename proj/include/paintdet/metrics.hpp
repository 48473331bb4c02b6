#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "paintdet/detections.hpp"

namespace paintdet {

struct MetricsReport {
    double ap = -1;        // mean over IoU in {.50,.55,...,.95}
    double ap50 = -1;
    double ap75 = -1;
    double ap_s = -1;      // gt pixel area < 32^2 (-1 when the bucket is empty)
    double ap_m = -1;      // [32^2, 96^2]
    double ap_l = -1;      // > 96^2
    double recall50 = 0;   // matched gts / total gts at IoU 0.5
    double mmr = 1;        // log-average miss rate, averaged over classes
};

// image_id -> (width, height) in pixels; used for the size buckets.
using ImageDims = std::map<int, std::pair<int, int>>;

// Intersection over union in normalized coordinates.
double iou(const BBox& a, const BBox& b);

// COCO-style AP at one IoU threshold, averaged over classes present in the
// ground truth (101-point interpolated precision; greedy score-descending
// matching, ties broken by image id then input order). Returns -1 when no
// class has any ground truth.
double average_precision(const std::vector<DetectionSet>& dets,
                         const std::vector<DetectionSet>& gts, double iou_thr);

MetricsReport coco_metrics(const std::vector<DetectionSet>& dets,
                           const std::vector<DetectionSet>& gts, const ImageDims& dims);

// Caltech-style mMR for a single-class evaluation: exp of the mean log miss
// rate sampled at 9 FPPI points log-spaced in [1e-2, 1e0]. Rejects empty
// ground truth.
double log_avg_miss_rate(const std::vector<DetectionSet>& dets,
                         const std::vector<DetectionSet>& gts);

// Detections matched class-agnostically (IoU >= thr) whose class differs from
// the matched ground truth; the shrink-ratio ablation counts these.
int count_class_confusions(const std::vector<DetectionSet>& dets,
                           const std::vector<DetectionSet>& gts, double iou_thr = 0.5);

std::string metrics_json(const MetricsReport& r);
std::string metrics_table_row(const MetricsReport& r);

}  // namespace paintdet
