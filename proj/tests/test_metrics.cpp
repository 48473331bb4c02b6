#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "paintdet/errors.hpp"
#include "paintdet/metrics.hpp"
#include "paintdet/rng.hpp"
#include "reference/reference.hpp"

using namespace paintdet;

static BBox box(int cls, float cx, float cy, float w, float h, float score = 1.0f) {
    return BBox{cls, cx, cy, w, h, score};
}

TEST_CASE("iou: identity, disjoint, half-overlap arithmetic") {
    const BBox a = box(0, 0.3f, 0.3f, 0.2f, 0.2f);
    CHECK(iou(a, a) == doctest::Approx(1.0));
    CHECK(iou(a, box(0, 0.8f, 0.8f, 0.2f, 0.2f)) == 0.0);
    // two 0.2x0.2 boxes offset by 0.1 horizontally: I = 0.02, U = 0.06
    CHECK(iou(a, box(0, 0.4f, 0.3f, 0.2f, 0.2f)) == doctest::Approx(1.0 / 3.0).epsilon(1e-6));
}

TEST_CASE("AP: perfect detections give 1.0") {
    std::vector<DetectionSet> gts{{0, {box(0, 0.3f, 0.3f, 0.2f, 0.2f),
                                       box(1, 0.7f, 0.7f, 0.2f, 0.2f)}},
                                  {1, {box(0, 0.5f, 0.5f, 0.3f, 0.3f)}}};
    std::vector<DetectionSet> dets = gts;
    dets[0].detections[0].score = 0.4f;
    dets[0].detections[1].score = 0.9f;
    dets[1].detections[0].score = 0.7f;
    CHECK(average_precision(dets, gts, 0.5) == doctest::Approx(1.0));
}

TEST_CASE("AP: hand-computed two-detection case is 0.5") {
    std::vector<DetectionSet> gts{{0, {box(0, 0.5f, 0.5f, 0.2f, 0.2f)}}};
    std::vector<DetectionSet> dets{{0,
                                    {box(0, 0.1f, 0.1f, 0.1f, 0.1f, 0.9f),     // false
                                     box(0, 0.5f, 0.5f, 0.2f, 0.2f, 0.5f)}}};  // true
    CHECK(average_precision(dets, gts, 0.5) == doctest::Approx(0.5).epsilon(1e-2));
}

static void random_instance(Rng& rng, std::vector<DetectionSet>& dets,
                            std::vector<DetectionSet>& gts) {
    dets.clear();
    gts.clear();
    const int n_images = rng.uniform_int(1, 3);
    int budget = rng.uniform_int(1, 10);
    for (int i = 0; i < n_images; ++i) {
        DetectionSet g, d;
        g.image_id = d.image_id = i;
        const int n_gt = rng.uniform_int(0, budget);
        budget -= n_gt;
        for (int k = 0; k < n_gt; ++k) {
            const float w = 0.05f + float(rng.uniform()) * 0.25f;
            const float h = 0.05f + float(rng.uniform()) * 0.25f;
            const float cx = w / 2 + float(rng.uniform()) * (1 - w);
            const float cy = h / 2 + float(rng.uniform()) * (1 - h);
            g.detections.push_back(box(rng.uniform_int(0, 2), cx, cy, w, h));
            // usually drop a matching or perturbed detection
            if (rng.uniform() < 0.75) {
                BBox det = g.detections.back();
                det.cx += float(rng.gaussian()) * 0.05f;
                det.cy += float(rng.gaussian()) * 0.05f;
                det.score = float(rng.uniform());
                if (rng.uniform() < 0.2) det.class_id = rng.uniform_int(0, 2);
                d.detections.push_back(det);
            }
        }
        const int extra = rng.uniform_int(0, 3);
        for (int k = 0; k < extra; ++k) {
            const float w = 0.05f + float(rng.uniform()) * 0.25f;
            d.detections.push_back(box(rng.uniform_int(0, 2), 0.5f, 0.5f, w, w,
                                       float(rng.uniform())));
        }
        gts.push_back(std::move(g));
        dets.push_back(std::move(d));
    }
}

TEST_CASE("AP equals the exhaustive reference on 500 random instances") {
    Rng rng(2024);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<DetectionSet> dets, gts;
        random_instance(rng, dets, gts);
        const double thr = 0.5 + 0.05 * rng.uniform_int(0, 9);
        const double fast = average_precision(dets, gts, thr);
        const double ref = reference::average_precision_serial(dets, gts, thr);
        CHECK(std::fabs(fast - ref) < 1e-9);
    }
}

TEST_CASE("AP is invariant under monotone score transforms") {
    Rng rng(5);
    std::vector<DetectionSet> dets, gts;
    random_instance(rng, dets, gts);
    const double before = average_precision(dets, gts, 0.5);
    for (auto& s : dets)
        for (auto& b : s.detections) b.score = b.score * b.score * 0.5f + 0.1f;
    CHECK(average_precision(dets, gts, 0.5) == doctest::Approx(before).epsilon(1e-12));
}

TEST_CASE("a lowest-score false positive never increases AP") {
    Rng rng(6);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<DetectionSet> dets, gts;
        random_instance(rng, dets, gts);
        if (gts.empty()) continue;
        const double before = average_precision(dets, gts, 0.5);
        dets[0].detections.push_back(box(0, 0.93f, 0.93f, 0.05f, 0.05f, 1e-5f));
        const double after = average_precision(dets, gts, 0.5);
        if (before >= 0) CHECK(after <= before + 1e-12);
    }
}

TEST_CASE("coco_metrics: exact detections max every field") {
    std::vector<DetectionSet> gts{
        {0, {box(0, 0.3f, 0.3f, 0.25f, 0.25f), box(1, 0.72f, 0.72f, 0.3f, 0.3f)}},
        {1, {box(2, 0.5f, 0.5f, 0.4f, 0.4f)}}};
    std::vector<DetectionSet> dets = gts;
    ImageDims dims{{0, {640, 640}}, {1, {640, 640}}};
    const MetricsReport r = coco_metrics(dets, gts, dims);
    CHECK(r.ap == doctest::Approx(1.0));
    CHECK(r.ap50 == doctest::Approx(1.0));
    CHECK(r.ap75 == doctest::Approx(1.0));
    CHECK(r.recall50 == doctest::Approx(1.0));
    CHECK(r.mmr < 1e-9);
    CHECK(r.ap <= r.ap50 + 1e-12);
}

TEST_CASE("coco_metrics: empty size buckets report -1") {
    // 0.4 * 64 ~ 26 px boxes on a 64x64 image: area < 32^2 -> small bucket only
    std::vector<DetectionSet> gts{{0, {box(0, 0.5f, 0.5f, 0.4f, 0.4f)}}};
    ImageDims dims{{0, {64, 64}}};
    const MetricsReport r = coco_metrics(gts, gts, dims);
    CHECK(r.ap_s == doctest::Approx(1.0));
    CHECK(r.ap_m == -1.0);
    CHECK(r.ap_l == -1.0);
}

TEST_CASE("mMR: perfect detector clamps to ~0, silent detector is 1") {
    std::vector<DetectionSet> gts{{0, {box(0, 0.5f, 0.5f, 0.2f, 0.2f)}},
                                  {1, {box(0, 0.4f, 0.4f, 0.2f, 0.2f)}}};
    std::vector<DetectionSet> perfect = gts;
    CHECK(log_avg_miss_rate(perfect, gts) <= 1e-9);

    std::vector<DetectionSet> none{{0, {}}, {1, {}}};
    CHECK(log_avg_miss_rate(none, gts) == doctest::Approx(1.0));
}

TEST_CASE("mMR: constructed 3-image case matches the hand-stepped sweep") {
    std::vector<DetectionSet> gts{
        {0, {box(0, 0.3f, 0.3f, 0.2f, 0.2f), box(0, 0.7f, 0.7f, 0.2f, 0.2f)}},
        {1, {box(0, 0.5f, 0.5f, 0.2f, 0.2f)}},
        {2, {box(0, 0.5f, 0.5f, 0.2f, 0.2f)}}};
    std::vector<DetectionSet> dets{
        {0, {box(0, 0.3f, 0.3f, 0.2f, 0.2f, 0.9f), box(0, 0.7f, 0.7f, 0.2f, 0.2f, 0.6f)}},
        {1, {box(0, 0.05f, 0.05f, 0.08f, 0.08f, 0.8f)}},
        {2, {box(0, 0.5f, 0.5f, 0.2f, 0.2f, 0.7f)}}};
    // sweep: miss 0.75 at fppi 0 (7 ref points below 1/3), miss 0.25 at
    // fppi 1/3 (2 ref points at or above 1/3)
    const double expect = std::exp((7.0 * std::log(0.75) + 2.0 * std::log(0.25)) / 9.0);
    CHECK(log_avg_miss_rate(dets, gts) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("mMR rejects empty ground truth") {
    std::vector<DetectionSet> gts{{0, {}}};
    CHECK_THROWS_AS(log_avg_miss_rate(gts, gts), ConfigError);
}

TEST_CASE("class confusions: counted on class-agnostic matches") {
    std::vector<DetectionSet> gts{{0, {box(0, 0.3f, 0.3f, 0.2f, 0.2f),
                                       box(1, 0.7f, 0.7f, 0.2f, 0.2f)}}};
    std::vector<DetectionSet> dets{{0, {box(1, 0.3f, 0.3f, 0.2f, 0.2f, 0.9f),     // wrong class
                                        box(1, 0.7f, 0.7f, 0.2f, 0.2f, 0.8f)}}};  // right class
    CHECK(count_class_confusions(dets, gts) == 1);
}

TEST_CASE("metrics JSON and table row carry every field") {
    MetricsReport r;
    r.ap = 0.5;
    r.ap50 = 0.75;
    const std::string js = metrics_json(r);
    CHECK(js.find("\"AP50\":0.750000") != std::string::npos);
    CHECK(metrics_table_row(r).find("AP50") != std::string::npos);
}
