#include "paintdet/postproc.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <unordered_map>

#include "paintdet/errors.hpp"
#include "paintdet/nn.hpp"
#include "paintdet/rng.hpp"
#include "paintdet/metrics.hpp"

namespace paintdet {

FeatureExtractor::FeatureExtractor(uint64_t seed) : seed_(seed) {
    Rng rng(seed ^ 0xfeedface12345678ull);
    w1_ = Tensor({8, 3, 1, 1});
    b1_ = Tensor({8});
    w2_ = Tensor({16, 8, 3, 3});
    b2_ = Tensor({16});
    w3_ = Tensor({32, 16, 3, 3});
    b3_ = Tensor({32});
    w1_.fill_gaussian(rng, 0.60f);
    w2_.fill_gaussian(rng, 0.008f);
    w3_.fill_gaussian(rng, 0.005f);
}

static Tensor image_to_tensor(const Image& img) {
    Tensor z({1, 3, img.height, img.width});
    const size_t plane = size_t(img.height) * img.width;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const uint8_t* p = img.px(x, y);
            const size_t idx = size_t(y) * img.width + x;
            for (int c = 0; c < 3; ++c)
                z[size_t(c) * plane + idx] = float(p[c]) / 127.5f - 1.0f;
        }
    return z;
}

static void tanh_inplace(Tensor& t) {
    for (auto& v : t.data) v = std::tanh(v);
}

std::vector<Tensor> FeatureExtractor::features(const Image& img) const {
    std::vector<Tensor> out;
    Tensor h = conv2d(image_to_tensor(img), w1_, b1_, 1, 0);
    tanh_inplace(h);
    out.push_back(h);
    h = conv2d(h, w2_, b2_, 2, 1);
    tanh_inplace(h);
    out.push_back(h);
    h = conv2d(h, w3_, b3_, 2, 1);
    tanh_inplace(h);
    out.push_back(h);
    return out;
}

Tensor feature_diff(const Image& x, const Image& y_hat, const FeatureExtractor& fx) {
    if (x.width != y_hat.width || x.height != y_hat.height)
        throw ConfigError("feature_diff: image dimensions differ: " + std::to_string(x.width) +
                          "x" + std::to_string(x.height) + " vs " +
                          std::to_string(y_hat.width) + "x" + std::to_string(y_hat.height));
    const auto fa = fx.features(x);
    const auto fb = fx.features(y_hat);
    const int H = x.height, W = x.width;
    Tensor out({H, W});
    for (size_t s = 0; s < fa.size(); ++s) {
        const int C = fa[s].shape[1], h = fa[s].shape[2], w = fa[s].shape[3];
        const size_t plane = size_t(h) * w;
        // channelwise L2 at stage resolution, then nearest-upsample and add
        for (int y = 0; y < H; ++y) {
            const int sy = y * h / H;
            for (int xx = 0; xx < W; ++xx) {
                const int sx = xx * w / W;
                const size_t idx = size_t(sy) * w + sx;
                float acc = 0.0f;
                for (int c = 0; c < C; ++c) {
                    const float d = fa[s][size_t(c) * plane + idx] - fb[s][size_t(c) * plane + idx];
                    acc += d * d;
                }
                out[size_t(y) * W + xx] += std::sqrt(acc);
            }
        }
    }
    return out;
}

std::vector<PixelCoord> binarize(const Tensor& d) {
    const int H = d.shape[0], W = d.shape[1];
    double sum = 0.0, sq = 0.0;
    for (float v : d.data) {
        sum += v;
        sq += double(v) * v;
    }
    const double n = double(d.numel());
    const double mu = sum / n;
    const double var = std::max(0.0, sq / n - mu * mu);
    const double thr = mu + 2.0 * std::sqrt(var);
    std::vector<PixelCoord> kept;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            if (double(d[size_t(y) * W + x]) > thr) kept.push_back({x, y});
    return kept;
}

std::vector<Cluster> dbscan(const std::vector<PixelCoord>& points, double eps, int min_pts) {
    if (!(eps > 0.0)) throw ConfigError("dbscan: eps must be > 0");
    if (min_pts < 1) throw ConfigError("dbscan: min_pts must be >= 1");

    std::vector<PixelCoord> pts = points;
    std::sort(pts.begin(), pts.end(), [](const PixelCoord& a, const PixelCoord& b) {
        return a.second != b.second ? a.second < b.second : a.first < b.first;
    });
    const int n = int(pts.size());

    // bucket grid with cell size eps: neighbours live in the 3x3 cell block
    const int cell = std::max(1, int(std::floor(eps)));
    auto cell_key = [](int gx, int gy) { return (int64_t(gx) << 32) | uint32_t(gy); };
    std::unordered_map<int64_t, std::vector<int>> grid;
    for (int i = 0; i < n; ++i)
        grid[cell_key(pts[i].first / cell, pts[i].second / cell)].push_back(i);

    const double eps2 = eps * eps;
    auto neighbors = [&](int i) {
        std::vector<int> out;
        const int cx = pts[i].first / cell, cy = pts[i].second / cell;
        for (int gy = cy - 1; gy <= cy + 1; ++gy)
            for (int gx = cx - 1; gx <= cx + 1; ++gx) {
                const auto it = grid.find(cell_key(gx, gy));
                if (it == grid.end()) continue;
                for (int j : it->second) {
                    const double dx = pts[i].first - pts[j].first;
                    const double dy = pts[i].second - pts[j].second;
                    if (dx * dx + dy * dy <= eps2) out.push_back(j);
                }
            }
        std::sort(out.begin(), out.end());  // keep row-major expansion order
        return out;
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
        std::deque<int> seeds(ni.begin(), ni.end());
        while (!seeds.empty()) {
            const int q = seeds.front();
            seeds.pop_front();
            if (label[size_t(q)] == kNoise) label[size_t(q)] = cid;  // border point
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

ClusterClass classify_cluster(const Cluster& c, const Image& y_hat, const Palette& palette,
                              const PostprocConfig& cfg) {
    ClusterClass out;
    if (c.bbox_area() < cfg.min_bbox_area_px) return out;
    if (c.x0 < 0 || c.y0 < 0 || c.x1 >= y_hat.width || c.y1 >= y_hat.height)
        throw ConfigError("classify_cluster: bbox outside image");

    std::vector<int> votes(size_t(palette.size()), 0);
    for (int y = c.y0; y <= c.y1; ++y) {
        for (int x = c.x0; x <= c.x1; ++x) {
            const Rgb px = y_hat.rgb(x, y);
            if (rgb_distance(px, kRed) < cfg.red_guard_dist) continue;  // center-dot guard
            double best = cfg.assign_dist;
            int best_k = -1;
            for (int k = 0; k < palette.size(); ++k) {
                const double d = rgb_distance(px, palette.colors[size_t(k)]);
                if (d < best) {
                    best = d;
                    best_k = k;
                }
            }
            if (best_k >= 0) ++votes[size_t(best_k)];
        }
    }
    int win = 0;
    for (int k = 1; k < palette.size(); ++k)
        if (votes[size_t(k)] > votes[size_t(win)]) win = k;  // ties keep the lower id
    const float score = float(votes[size_t(win)]) / float(c.bbox_area());
    if (score < cfg.score_floor) return out;
    out.accepted = true;
    out.class_id = win;
    out.score = std::min(1.0f, score);
    return out;
}

static void greedy_nms(std::vector<BBox>& dets, double thr) {
    std::stable_sort(dets.begin(), dets.end(),
                     [](const BBox& a, const BBox& b) { return a.score > b.score; });
    std::vector<BBox> kept;
    for (const BBox& d : dets) {
        bool drop = false;
        for (const BBox& k : kept)
            if (k.class_id == d.class_id && iou(k, d) >= thr) {
                drop = true;
                break;
            }
        if (!drop) kept.push_back(d);
    }
    dets = std::move(kept);
}

DetectionSet detect(int image_id, const Image& x, const Image& y_hat,
                    const FeatureExtractor& fx, const Palette& palette,
                    const AnnotationStyle& style, const PostprocConfig& cfg) {
    DetectionSet out;
    out.image_id = image_id;

    const Tensor diff = feature_diff(x, y_hat, fx);
    const auto kept = binarize(diff);
    const auto clusters = dbscan(kept, cfg.eps, cfg.min_pts);

    const int W = x.width, H = x.height;
    for (const Cluster& c : clusters) {
        const ClusterClass cc = classify_cluster(c, y_hat, palette, cfg);
        if (!cc.accepted) continue;
        if (cfg.verify_center_dot) {
            const int cx = (c.x0 + c.x1) / 2, cy = (c.y0 + c.y1) / 2;
            bool dot = false;
            for (int dy = -2; dy <= 2 && !dot; ++dy)
                for (int dx = -2; dx <= 2 && !dot; ++dx) {
                    const int px = cx + dx, py = cy + dy;
                    if (px < 0 || px >= W || py < 0 || py >= H) continue;
                    dot = rgb_distance(y_hat.rgb(px, py), kRed) < cfg.red_guard_dist;
                }
            if (!dot) continue;
        }
        BBox b;
        b.class_id = cc.class_id;
        b.score = cc.score;
        b.cx = float((c.x0 + c.x1 + 1) / 2.0 / W);
        b.cy = float((c.y0 + c.y1 + 1) / 2.0 / H);
        b.w = float(double(c.x1 + 1 - c.x0) / W);
        b.h = float(double(c.y1 + 1 - c.y0) / H);
        out.detections.push_back(unshrink_box(b, style.shrink_ratio));
    }
    if (cfg.nms) greedy_nms(out.detections, cfg.nms_iou);
    return out;
}

}  // namespace paintdet
