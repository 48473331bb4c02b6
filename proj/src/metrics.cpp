#include "paintdet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "paintdet/errors.hpp"

namespace paintdet {

double iou(const BBox& a, const BBox& b) {
    const double ax0 = double(a.cx) - double(a.w) / 2, ax1 = double(a.cx) + double(a.w) / 2;
    const double ay0 = double(a.cy) - double(a.h) / 2, ay1 = double(a.cy) + double(a.h) / 2;
    const double bx0 = double(b.cx) - double(b.w) / 2, bx1 = double(b.cx) + double(b.w) / 2;
    const double by0 = double(b.cy) - double(b.h) / 2, by1 = double(b.cy) + double(b.h) / 2;
    const double iw = std::min(ax1, bx1) - std::max(ax0, bx0);
    const double ih = std::min(ay1, by1) - std::max(ay0, by0);
    if (iw <= 0 || ih <= 0) return 0.0;
    const double inter = iw * ih;
    const double uni = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter;
    return uni > 0 ? inter / uni : 0.0;
}

namespace {

struct FlatDet {
    int image_id;
    int order;  // input order, for deterministic tie-breaking
    BBox box;
};

// score desc, then image id asc, then input order asc
void sort_dets(std::vector<FlatDet>& v) {
    std::sort(v.begin(), v.end(), [](const FlatDet& a, const FlatDet& b) {
        if (a.box.score != b.box.score) return a.box.score > b.box.score;
        if (a.image_id != b.image_id) return a.image_id < b.image_id;
        return a.order < b.order;
    });
}

std::set<int> classes_in(const std::vector<DetectionSet>& gts) {
    std::set<int> cs;
    for (const auto& s : gts)
        for (const auto& b : s.detections) cs.insert(b.class_id);
    return cs;
}

// Greedy matching for one class; returns per-detection TP flags in sorted
// order plus the ground-truth count.
struct MatchOutcome {
    std::vector<char> tp;
    int n_gt = 0;
};

MatchOutcome match_class(const std::vector<DetectionSet>& dets,
                         const std::vector<DetectionSet>& gts, int class_id, double thr,
                         bool class_agnostic = false,
                         std::vector<std::pair<int, int>>* confusion_pairs = nullptr) {
    std::map<int, std::vector<BBox>> gt_by_image;
    std::map<int, std::vector<char>> used;
    MatchOutcome out;
    for (const auto& s : gts) {
        for (const auto& b : s.detections) {
            if (!class_agnostic && b.class_id != class_id) continue;
            gt_by_image[s.image_id].push_back(b);
        }
    }
    for (auto& [id, v] : gt_by_image) {
        used[id].assign(v.size(), 0);
        out.n_gt += int(v.size());
    }

    std::vector<FlatDet> flat;
    int order = 0;
    for (const auto& s : dets)
        for (const auto& b : s.detections) {
            if (class_agnostic || b.class_id == class_id) flat.push_back({s.image_id, order, b});
            ++order;
        }
    sort_dets(flat);

    out.tp.assign(flat.size(), 0);
    for (size_t i = 0; i < flat.size(); ++i) {
        auto it = gt_by_image.find(flat[i].image_id);
        if (it == gt_by_image.end()) continue;
        double best = thr;
        int best_j = -1;
        auto& flags = used[flat[i].image_id];
        for (size_t j = 0; j < it->second.size(); ++j) {
            if (flags[j]) continue;
            const double v = iou(flat[i].box, it->second[j]);
            if (v >= best && (best_j < 0 || v > best)) {
                best = v;
                best_j = int(j);
            }
        }
        if (best_j >= 0) {
            flags[size_t(best_j)] = 1;
            out.tp[i] = 1;
            if (confusion_pairs)
                confusion_pairs->push_back(
                    {flat[i].box.class_id, it->second[size_t(best_j)].class_id});
        }
    }
    return out;
}

double ap_from_matches(const MatchOutcome& m) {
    if (m.n_gt == 0) return -1;
    std::vector<double> recall, precision;
    int tp = 0, fp = 0;
    for (char f : m.tp) {
        if (f) ++tp; else ++fp;
        recall.push_back(double(tp) / m.n_gt);
        precision.push_back(double(tp) / (tp + fp));
    }
    // 101-point interpolation: max precision at recall >= r
    double ap = 0.0;
    for (int k = 0; k <= 100; ++k) {
        const double r = double(k) / 100.0;
        double p = 0.0;
        for (size_t i = 0; i < recall.size(); ++i)
            if (recall[i] >= r) p = std::max(p, precision[i]);
        ap += p;
    }
    return ap / 101.0;
}

}  // namespace

double average_precision(const std::vector<DetectionSet>& dets,
                         const std::vector<DetectionSet>& gts, double iou_thr) {
    const std::set<int> classes = classes_in(gts);
    if (classes.empty()) return -1;
    double sum = 0.0;
    for (int c : classes) sum += ap_from_matches(match_class(dets, gts, c, iou_thr));
    return sum / double(classes.size());
}

static std::vector<DetectionSet> filter_by_area(const std::vector<DetectionSet>& sets,
                                                const ImageDims& dims, double lo, double hi) {
    std::vector<DetectionSet> out;
    for (const auto& s : sets) {
        auto it = dims.find(s.image_id);
        if (it == dims.end())
            throw DataError("coco_metrics: no image dims for id " + std::to_string(s.image_id));
        DetectionSet f;
        f.image_id = s.image_id;
        for (const auto& b : s.detections) {
            const double area = double(b.w) * it->second.first * double(b.h) * it->second.second;
            if (area >= lo && area < hi) f.detections.push_back(b);
        }
        out.push_back(std::move(f));
    }
    return out;
}

static double ap_iou_sweep(const std::vector<DetectionSet>& dets,
                           const std::vector<DetectionSet>& gts) {
    double sum = 0.0;
    int n = 0;
    for (int k = 0; k < 10; ++k) {
        const double thr = 0.5 + 0.05 * k;
        const double ap = average_precision(dets, gts, thr);
        if (ap < 0) return -1;
        sum += ap;
        ++n;
    }
    return sum / n;
}

MetricsReport coco_metrics(const std::vector<DetectionSet>& dets,
                           const std::vector<DetectionSet>& gts, const ImageDims& dims) {
    MetricsReport r;
    r.ap = ap_iou_sweep(dets, gts);
    r.ap50 = average_precision(dets, gts, 0.50);
    r.ap75 = average_precision(dets, gts, 0.75);

    const double s2 = 32.0 * 32.0, l2 = 96.0 * 96.0, inf = 1e30;
    r.ap_s = ap_iou_sweep(filter_by_area(dets, dims, 0, s2), filter_by_area(gts, dims, 0, s2));
    r.ap_m = ap_iou_sweep(filter_by_area(dets, dims, s2, l2 + 1e-9),
                          filter_by_area(gts, dims, s2, l2 + 1e-9));
    r.ap_l = ap_iou_sweep(filter_by_area(dets, dims, l2 + 1e-9, inf),
                          filter_by_area(gts, dims, l2 + 1e-9, inf));

    // recall@0.5 aggregated over all classes
    int matched = 0, total = 0;
    for (int c : classes_in(gts)) {
        const MatchOutcome m = match_class(dets, gts, c, 0.5);
        total += m.n_gt;
        for (char f : m.tp) matched += f;
    }
    r.recall50 = total > 0 ? double(matched) / total : 0.0;

    // mMR averaged over classes present
    const std::set<int> classes = classes_in(gts);
    if (!classes.empty()) {
        double sum = 0.0;
        for (int c : classes) {
            std::vector<DetectionSet> dc, gc;
            for (const auto& s : dets) {
                DetectionSet t;
                t.image_id = s.image_id;
                for (const auto& b : s.detections)
                    if (b.class_id == c) t.detections.push_back(b);
                dc.push_back(std::move(t));
            }
            for (const auto& s : gts) {
                DetectionSet t;
                t.image_id = s.image_id;
                for (const auto& b : s.detections)
                    if (b.class_id == c) t.detections.push_back(b);
                gc.push_back(std::move(t));
            }
            sum += log_avg_miss_rate(dc, gc);
        }
        r.mmr = sum / double(classes.size());
    }
    return r;
}

double log_avg_miss_rate(const std::vector<DetectionSet>& dets,
                         const std::vector<DetectionSet>& gts) {
    int n_gt = 0;
    for (const auto& s : gts) n_gt += int(s.detections.size());
    if (n_gt == 0) throw ConfigError("log_avg_miss_rate: no ground-truth boxes");
    const int n_images = int(gts.size());

    std::vector<FlatDet> flat;
    int order = 0;
    for (const auto& s : dets)
        for (const auto& b : s.detections) flat.push_back({s.image_id, order++, b});
    sort_dets(flat);

    // single greedy matching pass at IoU 0.5, then sweep score thresholds as
    // prefixes over distinct scores
    std::map<int, std::vector<BBox>> gt_by_image;
    std::map<int, std::vector<char>> used;
    for (const auto& s : gts) {
        gt_by_image[s.image_id] = s.detections;
        used[s.image_id].assign(s.detections.size(), 0);
    }
    std::vector<char> tp(flat.size(), 0);
    for (size_t i = 0; i < flat.size(); ++i) {
        auto it = gt_by_image.find(flat[i].image_id);
        if (it == gt_by_image.end()) continue;
        double best = 0.5;
        int best_j = -1;
        auto& flags = used[flat[i].image_id];
        for (size_t j = 0; j < it->second.size(); ++j) {
            if (flags[j]) continue;
            const double v = iou(flat[i].box, it->second[j]);
            if (v >= best && (best_j < 0 || v > best)) {
                best = v;
                best_j = int(j);
            }
        }
        if (best_j >= 0) {
            flags[size_t(best_j)] = 1;
            tp[i] = 1;
        }
    }

    // operating points at distinct-score boundaries, plus the implicit
    // zero-detection point (miss 1, fppi 0)
    std::vector<double> miss{1.0}, fppi{0.0};
    int tps = 0, fps = 0;
    for (size_t i = 0; i < flat.size(); ++i) {
        if (tp[i]) ++tps; else ++fps;
        const bool boundary = i + 1 == flat.size() ||
                              flat[i + 1].box.score != flat[i].box.score;
        if (boundary) {
            miss.push_back(1.0 - double(tps) / n_gt);
            fppi.push_back(double(fps) / std::max(1, n_images));
        }
    }

    double log_sum = 0.0;
    for (int j = 0; j <= 8; ++j) {
        const double ref = std::pow(10.0, -2.0 + 0.25 * j);
        double m = miss[0];
        for (size_t i = 0; i < fppi.size(); ++i)
            if (fppi[i] <= ref) m = miss[i];  // last op not exceeding the ref FPPI
        log_sum += std::log(std::max(m, 1e-10));
    }
    return std::exp(log_sum / 9.0);
}

int count_class_confusions(const std::vector<DetectionSet>& dets,
                           const std::vector<DetectionSet>& gts, double iou_thr) {
    std::vector<std::pair<int, int>> pairs;
    match_class(dets, gts, /*class_id=*/-1, iou_thr, /*class_agnostic=*/true, &pairs);
    int n = 0;
    for (const auto& [dc, gc] : pairs)
        if (dc != gc) ++n;
    return n;
}

std::string metrics_json(const MetricsReport& r) {
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "{\"AP\":%.6f,\"AP50\":%.6f,\"AP75\":%.6f,\"APs\":%.6f,\"APm\":%.6f,"
                  "\"APl\":%.6f,\"recall50\":%.6f,\"mMR\":%.6f}",
                  r.ap, r.ap50, r.ap75, r.ap_s, r.ap_m, r.ap_l, r.recall50, r.mmr);
    return buf;
}

std::string metrics_table_row(const MetricsReport& r) {
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "AP %6.3f | AP50 %6.3f | AP75 %6.3f | APs %6.3f | APm %6.3f | APl %6.3f | "
                  "R@.5 %6.3f | mMR %6.3f",
                  r.ap, r.ap50, r.ap75, r.ap_s, r.ap_m, r.ap_l, r.recall50, r.mmr);
    return buf;
}

}  // namespace paintdet
