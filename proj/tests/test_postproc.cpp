#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <set>

#include "doctest.h"
#include "paintdet/data.hpp"
#include "paintdet/errors.hpp"
#include "paintdet/metrics.hpp"
#include "paintdet/postproc.hpp"
#include "reference/reference.hpp"

using namespace paintdet;

TEST_CASE("feature extractor is deterministic per seed") {
    Image img(32, 32);
    Rng rng(4);
    for (auto& p : img.pixels) p = uint8_t(rng.uniform_int(0, 255));
    FeatureExtractor a(17), b(17), c(18);
    const auto fa = a.features(img), fb = b.features(img), fc = c.features(img);
    for (size_t s = 0; s < fa.size(); ++s) CHECK(fa[s].data == fb[s].data);
    CHECK(fa[0].data != fc[0].data);
    CHECK(fa[0].shape[1] == 8);
    CHECK(fa[1].shape[1] == 16);
    CHECK(fa[2].shape[1] == 32);
    CHECK(fa[1].shape[2] == 16);  // stride 2
    CHECK(fa[2].shape[2] == 8);   // cumulative stride 4
}

TEST_CASE("feature_diff: zero at identity, symmetric, localized") {
    SceneSpec spec;
    Rng rng(8);
    const Scene sc = generate_scene(spec, rng);
    FeatureExtractor fx;

    const Tensor self = feature_diff(sc.image, sc.image, fx);
    for (float v : self.data) CHECK(v == 0.0f);

    const Palette pal = make_palette(5);
    const Image yhat = render_annotation(sc.image, sc.boxes, {}, pal);
    const Tensor d1 = feature_diff(sc.image, yhat, fx);
    const Tensor d2 = feature_diff(yhat, sc.image, fx);
    for (size_t i = 0; i < d1.numel(); ++i) CHECK(d1[i] == doctest::Approx(d2[i]));

    // support radius: nonzero diffs stay within 8 px of some painted pixel
    std::vector<std::pair<int, int>> painted;
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x)
            if (sc.image.rgb(x, y) != yhat.rgb(x, y)) painted.push_back({x, y});
    REQUIRE(!painted.empty());
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) {
            if (d1[size_t(y) * 64 + x] <= 1e-6f) continue;
            int best = 1 << 20;
            for (auto& [px, py] : painted)
                best = std::min(best, std::max(std::abs(px - x), std::abs(py - y)));
            CHECK(best <= 8);
        }

    Image small(16, 16);
    CHECK_THROWS_AS(feature_diff(sc.image, small, fx), ConfigError);
}

TEST_CASE("binarize: constant map keeps nothing, outliers kept exactly") {
    Tensor flat({8, 8}, 3.0f);
    CHECK(binarize(flat).empty());

    // 4 strong outliers in a 20x20 map: mu ~ 0.1, sigma ~ 0.99 -> thr ~ 2.1
    Tensor d({20, 20});
    d[size_t(3) * 20 + 4] = 10.0f;
    d[size_t(7) * 20 + 9] = 10.0f;
    d[size_t(12) * 20 + 1] = 10.0f;
    d[size_t(18) * 20 + 18] = 10.0f;
    const auto kept = binarize(d);
    REQUIRE(kept.size() == 4);
    CHECK(kept[0] == PixelCoord{4, 3});  // row-major order
    CHECK(kept[3] == PixelCoord{18, 18});

    for (auto& [x, y] : kept) CHECK(d[size_t(y) * 20 + x] > 0.0f);
}

TEST_CASE("dbscan: two solid 5x5 blobs 20 px apart") {
    std::vector<PixelCoord> pts;
    for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 5; ++x) {
            pts.push_back({x, y});
            pts.push_back({x + 20, y});
        }
    const auto clusters = dbscan(pts, 3.0, 8);
    REQUIRE(clusters.size() == 2);
    CHECK(clusters[0].mass == 25);
    CHECK(clusters[1].mass == 25);
    CHECK(clusters[0].bbox_area() == 25);
}

TEST_CASE("dbscan: fewer than min_pts isolated points form no cluster") {
    std::vector<PixelCoord> pts{{0, 0}, {10, 10}, {20, 20}, {30, 30}};
    CHECK(dbscan(pts, 3.0, 8).empty());
}

static std::set<std::vector<PixelCoord>> canonical(const std::vector<Cluster>& cs) {
    std::set<std::vector<PixelCoord>> out;
    for (const auto& c : cs) {
        auto m = c.members;
        std::sort(m.begin(), m.end());
        out.insert(m);
    }
    return out;
}

TEST_CASE("dbscan matches the O(n^2) reference on random point sets") {
    Rng rng(31);
    for (int trial = 0; trial < 60; ++trial) {
        std::vector<PixelCoord> pts;
        const int blobs = rng.uniform_int(1, 5);
        for (int b = 0; b < blobs; ++b) {
            const int cx = rng.uniform_int(5, 58), cy = rng.uniform_int(5, 58);
            const int n = rng.uniform_int(3, 50);
            for (int i = 0; i < n; ++i)
                pts.push_back({cx + int(std::lround(rng.gaussian() * 3)),
                               cy + int(std::lround(rng.gaussian() * 3))});
        }
        const int scatter = rng.uniform_int(0, 60);
        for (int i = 0; i < scatter; ++i)
            pts.push_back({rng.uniform_int(0, 63), rng.uniform_int(0, 63)});

        const auto fast = dbscan(pts, 3.0, 8);
        const auto ref = reference::dbscan_serial(pts, 3.0, 8);
        CHECK(canonical(fast) == canonical(ref));
        for (const auto& c : fast) {
            CHECK(c.mass == int(c.members.size()));
            for (const auto& [x, y] : c.members) {
                CHECK(x >= c.x0);
                CHECK(x <= c.x1);
                CHECK(y >= c.y0);
                CHECK(y <= c.y1);
            }
        }
    }
}

TEST_CASE("dbscan is order-invariant as a partition") {
    Rng rng(5);
    std::vector<PixelCoord> pts;
    for (int i = 0; i < 120; ++i) pts.push_back({rng.uniform_int(0, 30), rng.uniform_int(0, 30)});
    auto shuffled = pts;
    for (size_t i = shuffled.size(); i > 1; --i)
        std::swap(shuffled[i - 1], shuffled[size_t(rng.uniform_int(0, int(i) - 1))]);
    CHECK(canonical(dbscan(pts, 3.0, 8)) == canonical(dbscan(shuffled, 3.0, 8)));
}

TEST_CASE("classify_cluster: clean render, background, and tie-break cases") {
    const Palette pal = make_palette(5);
    Image img(64, 64);
    for (auto& p : img.pixels) p = 128;

    // paint a 12x12 class-2 rect with a red dot at its center
    AnnotationStyle style;
    const BBox b{2, 0.5f, 0.5f, 36.0f / 64, 36.0f / 64, 1.0f};
    const Image yhat = render_annotation(img, {b}, style, pal);

    Cluster c;
    c.x0 = 26;
    c.x1 = 37;
    c.y0 = 26;
    c.y1 = 37;
    c.mass = 144;
    const ClusterClass cc = classify_cluster(c, yhat, pal);
    CHECK(cc.accepted);
    CHECK(cc.class_id == 2);
    CHECK(cc.score >= 0.8f);

    Cluster bg;
    bg.x0 = 0;
    bg.x1 = 9;
    bg.y0 = 0;
    bg.y1 = 9;
    bg.mass = 100;
    CHECK_FALSE(classify_cluster(bg, yhat, pal).accepted);

    Cluster tiny;
    tiny.x0 = tiny.y0 = 0;
    tiny.x1 = tiny.y1 = 1;  // 4 px < 9 px floor
    CHECK_FALSE(classify_cluster(tiny, yhat, pal).accepted);

    // tie: half class 1, half class 3 -> lower id wins
    Image tie(8, 8);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) tie.set(x, y, x < 4 ? pal.colors[1] : pal.colors[3]);
    Cluster tc;
    tc.x0 = tc.y0 = 0;
    tc.x1 = tc.y1 = 7;
    const ClusterClass tcc = classify_cluster(tc, tie, pal);
    CHECK(tcc.accepted);
    CHECK(tcc.class_id == 1);
}

TEST_CASE("detect: clean codec renders decode to the ground truth") {
    SceneSpec spec;
    spec.min_size_px = 15;
    spec.max_size_px = 33;
    spec.size_multiple = 3;  // pixel-exact round trip at shrink 1/3
    spec.max_pairwise_iou = 0.0f;
    spec.max_objects = 4;
    spec.seed = 77;
    const Palette pal = make_palette(5);
    AnnotationStyle style;
    FeatureExtractor fx;
    Rng rng(1);

    int gt_count = 0, hit = 0;
    for (int i = 0; i < 15; ++i) {
        Rng r = rng.fork(uint64_t(i));
        const Scene sc = generate_scene(spec, r);
        const Image yhat = render_annotation(sc.image, sc.boxes, style, pal);
        const DetectionSet det = detect(i, sc.image, yhat, fx, pal, style);
        CHECK(det.detections.size() == sc.boxes.size());
        for (const BBox& g : sc.boxes) {
            ++gt_count;
            for (const BBox& d : det.detections)
                if (d.class_id == g.class_id && iou(d, g) >= 0.9) {
                    ++hit;
                    break;
                }
        }
    }
    CHECK(hit == gt_count);
}

TEST_CASE("detect: identical images produce an empty DetectionSet") {
    SceneSpec spec;
    Rng rng(2);
    const Scene sc = generate_scene(spec, rng);
    FeatureExtractor fx;
    const DetectionSet det = detect(0, sc.image, sc.image, fx, make_palette(5), {});
    CHECK(det.detections.empty());
}

TEST_CASE("detect: adjacent same-class clusters, with and without NMS") {
    Image img(64, 64);
    for (auto& p : img.pixels) p = 128;
    const Palette pal = make_palette(5);
    AnnotationStyle style;
    // two same-class boxes whose shrunk rects sit 5 px apart: separate
    // clusters, heavily overlapping unshrunk boxes
    const BBox a{1, 24.5f / 64, 0.5f, 27.0f / 64, 27.0f / 64, 1.0f};
    const BBox b{1, 38.5f / 64, 0.5f, 27.0f / 64, 27.0f / 64, 1.0f};
    const Image yhat = render_annotation(img, {a, b}, style, pal);
    FeatureExtractor fx;

    PostprocConfig plain;
    const DetectionSet two = detect(0, img, yhat, fx, pal, style, plain);
    CHECK(two.detections.size() == 2);
    CHECK(iou(two.detections[0], two.detections[1]) > 0.3);

    // disjoint clusters cap near IoU 0.35 once unshrunk by 3x, so exercise
    // the suppression path at a threshold below that
    PostprocConfig with_nms = plain;
    with_nms.nms = true;
    with_nms.nms_iou = 0.3;
    const DetectionSet one = detect(0, img, yhat, fx, pal, style, with_nms);
    CHECK(one.detections.size() == 1);
    CHECK(one.detections[0].score ==
          doctest::Approx(std::max(two.detections[0].score, two.detections[1].score)));
}

TEST_CASE("detect is deterministic") {
    SceneSpec spec;
    spec.seed = 5;
    Rng rng(5);
    const Scene sc = generate_scene(spec, rng);
    const Palette pal = make_palette(5);
    const Image yhat = render_annotation(sc.image, sc.boxes, {}, pal);
    FeatureExtractor fx;
    const DetectionSet d1 = detect(0, sc.image, yhat, fx, pal, {});
    const DetectionSet d2 = detect(0, sc.image, yhat, fx, pal, {});
    CHECK(detections_json({d1}) == detections_json({d2}));
}

TEST_CASE("score monotonicity: purer clusters never score lower") {
    const Palette pal = make_palette(3);
    Image noisy(12, 12), pure(12, 12);
    Rng rng(6);
    for (int y = 0; y < 12; ++y)
        for (int x = 0; x < 12; ++x) {
            pure.set(x, y, pal.colors[0]);
            noisy.set(x, y, rng.uniform() < 0.5 ? pal.colors[0] : Rgb{128, 128, 128});
        }
    Cluster c;
    c.x0 = c.y0 = 0;
    c.x1 = c.y1 = 11;
    const ClusterClass lo = classify_cluster(c, noisy, pal);
    const ClusterClass hi = classify_cluster(c, pure, pal);
    CHECK(hi.score >= lo.score);
    CHECK(hi.class_id == 0);
}

TEST_CASE("center-dot verification drops dotless clusters when enabled") {
    Image img(64, 64);
    for (auto& p : img.pixels) p = 128;
    const Palette pal = make_palette(5);
    AnnotationStyle with_dots;           // variant d
    AnnotationStyle no_dots = with_dots;
    const BBox b{1, 0.5f, 0.5f, 30.0f / 64, 30.0f / 64, 1.0f};
    const Image y_dots = render_annotation(img, {b}, with_dots, pal);
    const Image y_plain = render_annotation(img, {b}, no_dots, pal, RenderVariant::Shrunk);
    FeatureExtractor fx;

    PostprocConfig strict;
    strict.verify_center_dot = true;
    CHECK(detect(0, img, y_dots, fx, pal, with_dots, strict).detections.size() == 1);
    CHECK(detect(0, img, y_plain, fx, pal, with_dots, strict).detections.empty());
    // default-off keeps the dotless detection
    CHECK(detect(0, img, y_plain, fx, pal, with_dots, {}).detections.size() == 1);
}
