#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "paintdet/data.hpp"
#include "paintdet/errors.hpp"
#include "paintdet/metrics.hpp"

using namespace paintdet;
namespace fs = std::filesystem;

TEST_CASE("generate_scene is deterministic under a fixed seed") {
    SceneSpec spec;
    spec.seed = 42;
    Rng a(9), b(9);
    const Scene s1 = generate_scene(spec, a);
    const Scene s2 = generate_scene(spec, b);
    CHECK(s1.image.pixels == s2.image.pixels);
    REQUIRE(s1.boxes.size() == s2.boxes.size());
    for (size_t i = 0; i < s1.boxes.size(); ++i) {
        CHECK(s1.boxes[i].cx == s2.boxes[i].cx);
        CHECK(s1.boxes[i].w == s2.boxes[i].w);
    }
}

TEST_CASE("generated boxes satisfy the pairwise IoU constraint and size floor") {
    SceneSpec spec;
    spec.max_objects = 6;
    Rng rng(17);
    for (int trial = 0; trial < 40; ++trial) {
        const Scene s = generate_scene(spec, rng);
        REQUIRE(!s.boxes.empty());
        for (size_t i = 0; i < s.boxes.size(); ++i) {
            CHECK(s.boxes[i].w * spec.image_size >= 6.0f - 1e-4f);
            CHECK(s.boxes[i].h * spec.image_size >= 6.0f - 1e-4f);
            CHECK(s.boxes[i].cx - s.boxes[i].w / 2 >= -1e-6f);
            CHECK(s.boxes[i].cx + s.boxes[i].w / 2 <= 1.0f + 1e-6f);
            for (size_t j = i + 1; j < s.boxes.size(); ++j)
                CHECK(iou(s.boxes[i], s.boxes[j]) <= double(spec.max_pairwise_iou) + 1e-9);
        }
    }
}

TEST_CASE("a circle-only scene yields tight odd raster bounds") {
    SceneSpec spec;
    spec.num_classes = 1;  // circles only
    spec.min_size_px = 21;
    spec.max_size_px = 21;
    spec.min_objects = 1;
    spec.max_objects = 1;
    Rng rng(5);
    const Scene s = generate_scene(spec, rng);
    REQUIRE(s.boxes.size() == 1);
    // radius-10 circle: raster bound is 21 px inclusive
    CHECK(s.boxes[0].w * spec.image_size == doctest::Approx(21.0f));
    CHECK(s.boxes[0].h * spec.image_size == doctest::Approx(21.0f));
    CHECK(s.boxes[0].class_id == 0);
}

TEST_CASE("content pixels stay far from palette colors and red") {
    SceneSpec spec;
    Rng rng(23);
    const Palette pal = make_palette(5);
    for (int trial = 0; trial < 10; ++trial) {
        const Scene s = generate_scene(spec, rng);
        for (int y = 0; y < s.image.height; ++y)
            for (int x = 0; x < s.image.width; ++x) {
                const Rgb px = s.image.rgb(x, y);
                CHECK(rgb_distance(px, kRed) >= 80.0);
                for (const Rgb& c : pal.colors) CHECK(rgb_distance(px, c) >= 80.0);
            }
    }
}

TEST_CASE("class frequencies are uniform within 3 sigma over 1000 images") {
    SceneSpec spec;
    spec.seed = 7;
    Rng base(spec.seed);
    std::vector<int> counts(5, 0);
    int total = 0;
    for (int i = 0; i < 1000; ++i) {
        Rng rng = base.fork(uint64_t(i));
        const Scene s = generate_scene(spec, rng);
        for (const BBox& b : s.boxes) {
            ++counts[size_t(b.class_id)];
            ++total;
        }
    }
    const double expect = double(total) / 5.0;
    const double sigma = std::sqrt(double(total) * 0.2 * 0.8);
    for (int c = 0; c < 5; ++c) CHECK(std::fabs(counts[size_t(c)] - expect) <= 3.0 * sigma);
}

TEST_CASE("dataset write/read round trip") {
    const std::string dir = (fs::temp_directory_path() / "pd_ds_roundtrip").string();
    fs::remove_all(dir);
    SceneSpec spec;
    spec.seed = 3;
    const Dataset ds = generate_dataset(spec, 10, dir);
    CHECK(ds.items.size() == 10);
    CHECK(ds.class_names.size() == 5);

    const Dataset back = read_dataset(dir);
    REQUIRE(back.items.size() == ds.items.size());
    for (size_t i = 0; i < ds.items.size(); ++i) {
        CHECK(back.items[i].id == ds.items[i].id);
        CHECK(back.items[i].file == ds.items[i].file);
        REQUIRE(back.items[i].boxes.size() == ds.items[i].boxes.size());
        for (size_t k = 0; k < ds.items[i].boxes.size(); ++k) {
            CHECK(back.items[i].boxes[k].cx == doctest::Approx(ds.items[i].boxes[k].cx));
            CHECK(back.items[i].boxes[k].class_id == ds.items[i].boxes[k].class_id);
        }
        const Image img = load_image(back, back.items[i]);
        CHECK(img.width == back.items[i].width);
    }

    // byte-identical regeneration under the same seed
    const std::string dir2 = (fs::temp_directory_path() / "pd_ds_roundtrip2").string();
    fs::remove_all(dir2);
    generate_dataset(spec, 10, dir2);
    for (const auto& item : ds.items) {
        std::ifstream a(dir + "/" + item.file, std::ios::binary);
        std::ifstream b(dir2 + "/" + item.file, std::ios::binary);
        const std::string da((std::istreambuf_iterator<char>(a)), {});
        const std::string db((std::istreambuf_iterator<char>(b)), {});
        CHECK(da == db);
    }
    fs::remove_all(dir);
    fs::remove_all(dir2);
}

TEST_CASE("read_dataset errors are distinct and name the culprit") {
    const std::string dir = (fs::temp_directory_path() / "pd_ds_errors").string();
    fs::remove_all(dir);
    SceneSpec spec;
    generate_dataset(spec, 3, dir);

    SUBCASE("missing image file") {
        fs::remove(dir + "/000001.ppm");
        CHECK_THROWS_WITH_AS(read_dataset(dir), doctest::Contains("000001.ppm"), DataError);
    }
    SUBCASE("malformed index JSON") {
        std::ofstream f(dir + "/index.json");
        f << "{ nope";
        f.close();
        CHECK_THROWS_WITH_AS(read_dataset(dir), doctest::Contains("malformed"), DataError);
    }
    SUBCASE("box outside [0,1] names the image id") {
        std::ifstream in(dir + "/index.json");
        std::string text((std::istreambuf_iterator<char>(in)), {});
        in.close();
        const auto pos = text.find("\"cx\":");
        text.replace(pos, 5, "\"cx\":9.0,\"_\":");
        std::ofstream f(dir + "/index.json");
        f << text;
        f.close();
        CHECK_THROWS_AS(read_dataset(dir), DataError);
    }
    SUBCASE("dimension mismatch names the file") {
        Image wrong(8, 8);
        write_ppm(wrong, dir + "/000002.ppm");
        CHECK_THROWS_WITH_AS(read_dataset(dir), doctest::Contains("dimension mismatch"),
                             DataError);
    }
    fs::remove_all(dir);
}

TEST_CASE("scene spec validation") {
    SceneSpec spec;
    spec.min_size_px = 2;
    CHECK_THROWS_AS(spec.validate(), ConfigError);
    SceneSpec bad2;
    bad2.num_classes = 9;
    CHECK_THROWS_AS(bad2.validate(), ConfigError);
}
