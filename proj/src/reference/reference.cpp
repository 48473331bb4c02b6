#include "reference.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace paintdet::reference {

Tensor conv2d_serial(const Tensor& in, const Tensor& w, const Tensor& b, int stride, int pad) {
    const int N = in.shape[0], C = in.shape[1], H = in.shape[2], W = in.shape[3];
    const int O = w.shape[0], K = w.shape[2];
    const int OH = (H + 2 * pad - K) / stride + 1;
    const int OW = (W + 2 * pad - K) / stride + 1;
    Tensor out({N, O, OH, OW});
    for (int n = 0; n < N; ++n)
        for (int co = 0; co < O; ++co)
            for (int oy = 0; oy < OH; ++oy)
                for (int ox = 0; ox < OW; ++ox) {
                    float acc = b[size_t(co)];
                    for (int ci = 0; ci < C; ++ci)
                        for (int ky = 0; ky < K; ++ky)
                            for (int kx = 0; kx < K; ++kx) {
                                const int iy = oy * stride + ky - pad;
                                const int ix = ox * stride + kx - pad;
                                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                                acc += w.at4(co, ci, ky, kx) * in.at4(n, ci, iy, ix);
                            }
                    out.at4(n, co, oy, ox) = acc;
                }
    return out;
}

std::vector<Cluster> dbscan_serial(const std::vector<PixelCoord>& points, double eps,
                                   int min_pts) {
    std::vector<PixelCoord> pts = points;
    std::sort(pts.begin(), pts.end(), [](const PixelCoord& a, const PixelCoord& b) {
        return a.second != b.second ? a.second < b.second : a.first < b.first;
    });
    const int n = int(pts.size());
    const double eps2 = eps * eps;

    auto neighbors = [&](int i) {
        std::vector<int> out;
        for (int j = 0; j < n; ++j) {
            const double dx = pts[size_t(i)].first - pts[size_t(j)].first;
            const double dy = pts[size_t(i)].second - pts[size_t(j)].second;
            if (dx * dx + dy * dy <= eps2) out.push_back(j);
        }
        return out;  // already in row-major order
    };

    constexpr int kUnvisited = -2, kNoise = -1;
    std::vector<int> label(size_t(n), kUnvisited);
    int cid = 0;
    for (int i = 0; i < n; ++i) {
        if (label[size_t(i)] != kUnvisited) continue;
        const auto ni = neighbors(i);
        if (int(ni.size()) < min_pts) {
            label[size_t(i)] = kNoise;
            continue;
        }
        label[size_t(i)] = cid;
        std::vector<int> seeds(ni.begin(), ni.end());
        for (size_t s = 0; s < seeds.size(); ++s) {
            const int q = seeds[s];
            if (label[size_t(q)] == kNoise) label[size_t(q)] = cid;
            if (label[size_t(q)] != kUnvisited) continue;
            label[size_t(q)] = cid;
            const auto nq = neighbors(q);
            if (int(nq.size()) >= min_pts) seeds.insert(seeds.end(), nq.begin(), nq.end());
        }
        ++cid;
    }

    std::vector<Cluster> clusters(static_cast<size_t>(cid));
    for (int i = 0; i < n; ++i) {
        const int c = label[size_t(i)];
        if (c < 0) continue;
        Cluster& cl = clusters[size_t(c)];
        if (cl.members.empty()) {
            cl.x0 = cl.x1 = pts[size_t(i)].first;
            cl.y0 = cl.y1 = pts[size_t(i)].second;
        } else {
            cl.x0 = std::min(cl.x0, pts[size_t(i)].first);
            cl.x1 = std::max(cl.x1, pts[size_t(i)].first);
            cl.y0 = std::min(cl.y0, pts[size_t(i)].second);
            cl.y1 = std::max(cl.y1, pts[size_t(i)].second);
        }
        cl.members.push_back(pts[size_t(i)]);
    }
    for (auto& c : clusters) c.mass = int(c.members.size());
    return clusters;
}

namespace {

struct RefDet {
    int image_id;
    int order;
    BBox box;
};

double ref_iou(const BBox& a, const BBox& b) {
    const double ax0 = double(a.cx) - double(a.w) / 2, ax1 = double(a.cx) + double(a.w) / 2;
    const double ay0 = double(a.cy) - double(a.h) / 2, ay1 = double(a.cy) + double(a.h) / 2;
    const double bx0 = double(b.cx) - double(b.w) / 2, bx1 = double(b.cx) + double(b.w) / 2;
    const double by0 = double(b.cy) - double(b.h) / 2, by1 = double(b.cy) + double(b.h) / 2;
    const double iw = std::min(ax1, bx1) - std::max(ax0, bx0);
    const double ih = std::min(ay1, by1) - std::max(ay0, by0);
    if (iw <= 0 || ih <= 0) return 0.0;
    const double inter = iw * ih;
    return inter / ((ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter);
}

double class_ap(const std::vector<DetectionSet>& dets, const std::vector<DetectionSet>& gts,
                int cls, double thr) {
    // flatten and sort detections of this class
    std::vector<RefDet> flat;
    int order = 0;
    for (const auto& s : dets)
        for (const auto& b : s.detections) {
            if (b.class_id == cls) flat.push_back({s.image_id, order, b});
            ++order;
        }
    std::sort(flat.begin(), flat.end(), [](const RefDet& a, const RefDet& b) {
        if (a.box.score != b.box.score) return a.box.score > b.box.score;
        if (a.image_id != b.image_id) return a.image_id < b.image_id;
        return a.order < b.order;
    });

    int n_gt = 0;
    std::vector<std::pair<int, BBox>> gt_flat;  // (image_id, box)
    for (const auto& s : gts)
        for (const auto& b : s.detections)
            if (b.class_id == cls) {
                gt_flat.push_back({s.image_id, b});
                ++n_gt;
            }
    if (n_gt == 0) return -1;

    std::vector<char> used(gt_flat.size(), 0);
    std::vector<char> tp(flat.size(), 0);
    for (size_t i = 0; i < flat.size(); ++i) {
        double best = -1;
        int best_j = -1;
        for (size_t j = 0; j < gt_flat.size(); ++j) {
            if (used[j] || gt_flat[j].first != flat[i].image_id) continue;
            const double v = ref_iou(flat[i].box, gt_flat[j].second);
            if (v >= thr && v > best) {
                best = v;
                best_j = int(j);
            }
        }
        if (best_j >= 0) {
            used[size_t(best_j)] = 1;
            tp[i] = 1;
        }
    }

    double ap = 0.0;
    for (int k = 0; k <= 100; ++k) {
        const double r = double(k) / 100.0;
        double best_p = 0.0;
        int tps = 0, fps = 0;
        for (size_t i = 0; i < flat.size(); ++i) {
            if (tp[i]) ++tps; else ++fps;
            const double recall = double(tps) / n_gt;
            const double precision = double(tps) / double(tps + fps);
            if (recall >= r) best_p = std::max(best_p, precision);
        }
        ap += best_p;
    }
    return ap / 101.0;
}

}  // namespace

double average_precision_serial(const std::vector<DetectionSet>& dets,
                                const std::vector<DetectionSet>& gts, double iou_thr) {
    std::set<int> classes;
    for (const auto& s : gts)
        for (const auto& b : s.detections) classes.insert(b.class_id);
    if (classes.empty()) return -1;
    double sum = 0.0;
    for (int c : classes) sum += class_ap(dets, gts, c, iou_thr);
    return sum / double(classes.size());
}

}  // namespace paintdet::reference
