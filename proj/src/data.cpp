#include "paintdet/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "paintdet/errors.hpp"
#include "paintdet/metrics.hpp"

namespace paintdet {

const char* const kShapeNames[5] = {"circle", "square", "triangle", "ellipse", "cross"};

void SceneSpec::validate() const {
    if (image_size < 16) throw ConfigError("SceneSpec: image_size must be >= 16");
    if (num_classes < 1 || num_classes > 5)
        throw ConfigError("SceneSpec: num_classes must be in [1,5]");
    if (min_objects < 1 || max_objects < min_objects)
        throw ConfigError("SceneSpec: invalid object count range");
    if (min_size_px < 6) throw ConfigError("SceneSpec: min_size_px must be >= 6");
    if (max_size_px < min_size_px || max_size_px > image_size - 2)
        throw ConfigError("SceneSpec: invalid size range");
    if (size_multiple < 1) throw ConfigError("SceneSpec: size_multiple must be >= 1");
    if (max_pairwise_iou < 0.0f || max_pairwise_iou > 1.0f)
        throw ConfigError("SceneSpec: max_pairwise_iou must be in [0,1]");
}

namespace {

struct PixelMask {
    int x0 = 1 << 30, y0 = 1 << 30, x1 = -1, y1 = -1;
    std::vector<std::pair<int, int>> pixels;

    void add(int x, int y) {
        pixels.push_back({x, y});
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        x1 = std::max(x1, x);
        y1 = std::max(y1, y);
    }
};

// candidate raster sizes for a shape axis
std::vector<int> size_candidates(const SceneSpec& s, bool odd_only) {
    std::vector<int> out;
    for (int v = s.min_size_px; v <= s.max_size_px; ++v) {
        if (v % s.size_multiple != 0) continue;
        if (odd_only && v % 2 == 0) continue;
        out.push_back(v);
    }
    return out;
}

int pick(const std::vector<int>& v, Rng& rng) {
    return v[size_t(rng.uniform_int(0, int(v.size()) - 1))];
}

PixelMask raster_shape(int kind, int bw, int bh, int ox, int oy) {
    PixelMask m;
    switch (kind) {
        case 0: {  // circle: bw == bh == 2r+1
            const int r = (bw - 1) / 2;
            const int cx = ox + r, cy = oy + r;
            for (int y = -r; y <= r; ++y)
                for (int x = -r; x <= r; ++x)
                    if (x * x + y * y <= r * r) m.add(cx + x, cy + y);
            break;
        }
        case 1: {  // square
            for (int y = 0; y < bh; ++y)
                for (int x = 0; x < bw; ++x) m.add(ox + x, oy + y);
            break;
        }
        case 2: {  // triangle, apex up
            for (int y = 0; y < bh; ++y) {
                const int width =
                    bh == 1 ? bw : 1 + int(std::lround(double(bw - 1) * y / double(bh - 1)));
                const int left = ox + (bw - width) / 2;
                for (int x = 0; x < width; ++x) m.add(left + x, oy + y);
            }
            break;
        }
        case 3: {  // ellipse: bw == 2a+1, bh == 2b+1
            const int a = (bw - 1) / 2, b = (bh - 1) / 2;
            const int cx = ox + a, cy = oy + b;
            for (int y = -b; y <= b; ++y)
                for (int x = -a; x <= a; ++x) {
                    const double fx = double(x) / a, fy = double(y) / b;
                    if (fx * fx + fy * fy <= 1.0) m.add(cx + x, cy + y);
                }
            break;
        }
        default: {  // cross: two centered arms spanning the full extents
            const int tw = std::max(3, bw / 3);
            const int th = std::max(3, bh / 3);
            const int vx = ox + (bw - tw) / 2;
            const int hy = oy + (bh - th) / 2;
            for (int y = 0; y < bh; ++y)
                for (int x = 0; x < tw; ++x) m.add(vx + x, oy + y);
            for (int y = 0; y < th; ++y)
                for (int x = 0; x < bw; ++x) m.add(ox + x, hy + y);
            break;
        }
    }
    return m;
}

BBox bounds_to_bbox(const PixelMask& m, int kind, int W, int H) {
    BBox b;
    b.class_id = kind;
    b.cx = float((m.x0 + m.x1 + 1) / 2.0 / W);
    b.cy = float((m.y0 + m.y1 + 1) / 2.0 / H);
    b.w = float(double(m.x1 + 1 - m.x0) / W);
    b.h = float(double(m.y1 + 1 - m.y0) / H);
    b.score = 1.0f;
    return b;
}

}  // namespace

Scene generate_scene(const SceneSpec& spec, Rng& rng) {
    spec.validate();
    const int N = spec.image_size;
    Scene scene;
    scene.image = Image(N, N);

    // smooth gray gradient + per-image tint + luminance texture
    const double g0 = 160.0 + rng.uniform() * 45.0;
    const double g1 = 160.0 + rng.uniform() * 45.0;
    const double theta = rng.uniform() * 2.0 * M_PI;
    const double dx = std::cos(theta), dy = std::sin(theta);
    double pmin = 1e30, pmax = -1e30;
    for (int y = 0; y < N; ++y)
        for (int x = 0; x < N; ++x) {
            const double p = x * dx + y * dy;
            pmin = std::min(pmin, p);
            pmax = std::max(pmax, p);
        }
    int tint[3];
    for (auto& t : tint) t = rng.uniform_int(-10, 10);
    for (int y = 0; y < N; ++y) {
        for (int x = 0; x < N; ++x) {
            const double p = (x * dx + y * dy - pmin) / std::max(1e-9, pmax - pmin);
            const double base = g0 + (g1 - g0) * p + rng.gaussian() * 4.0;
            uint8_t* px = scene.image.px(x, y);
            for (int c = 0; c < 3; ++c)
                px[c] = uint8_t(std::clamp(int(std::lround(base)) + tint[c], 0, 255));
        }
    }

    const std::vector<int> any_sizes = size_candidates(spec, false);
    const std::vector<int> odd_sizes = size_candidates(spec, true);
    if (any_sizes.empty())
        throw ConfigError("generate_scene: no raster sizes satisfy the size constraints");
    if (odd_sizes.empty() && spec.num_classes > 0)
        throw ConfigError("generate_scene: circles/ellipses need an odd size candidate");

    const int want = rng.uniform_int(spec.min_objects, spec.max_objects);
    for (int obj = 0; obj < want; ++obj) {
        for (int attempt = 0; attempt < 100; ++attempt) {
            const int kind = rng.uniform_int(0, spec.num_classes - 1);
            const bool odd = kind == 0 || kind == 3;
            const auto& sizes = odd ? odd_sizes : any_sizes;
            const int bw = pick(sizes, rng);
            // circles and squares are isotropic; ellipses keep an aspect
            // ratio of at least 1.4 so they stay distinguishable from circles
            int bh = (kind == 0 || kind == 1) ? bw : pick(sizes, rng);
            if (kind == 3) {
                for (int tries = 0; tries < 50; ++tries) {
                    const double ratio = bw > bh ? double(bw) / bh : double(bh) / bw;
                    if (ratio >= 1.4) break;
                    bh = pick(sizes, rng);
                }
            }
            const int ox = rng.uniform_int(1, N - 1 - bw);
            const int oy = rng.uniform_int(1, N - 1 - bh);

            PixelMask m = raster_shape(kind, bw, bh, ox, oy);
            const BBox cand = bounds_to_bbox(m, kind, N, N);
            bool ok = true;
            for (const BBox& prev : scene.boxes)
                if (iou(cand, prev) > spec.max_pairwise_iou) {
                    ok = false;
                    break;
                }
            if (!ok) continue;

            const int fill = rng.uniform_int(40, 140);
            for (const auto& [px, py] : m.pixels) {
                const int v = std::clamp(fill + int(std::lround(rng.gaussian() * 2.0)), 0, 255);
                scene.image.set(px, py, {uint8_t(v), uint8_t(v), uint8_t(v)});
            }
            scene.boxes.push_back(cand);
            break;
        }
    }
    return scene;
}

void write_dataset(const std::string& dir, const std::vector<std::string>& class_names,
                   const std::vector<Scene>& scenes) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    nlohmann::json index;
    index["classes"] = class_names;
    index["images"] = nlohmann::json::array();
    for (size_t i = 0; i < scenes.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "%06zu.ppm", i);
        write_ppm(scenes[i].image, dir + "/" + name);
        nlohmann::json boxes = nlohmann::json::array();
        for (const BBox& b : scenes[i].boxes)
            boxes.push_back({{"class", b.class_id},
                             {"cx", b.cx},
                             {"cy", b.cy},
                             {"w", b.w},
                             {"h", b.h}});
        index["images"].push_back({{"id", int(i)},
                                   {"file", std::string(name)},
                                   {"width", scenes[i].image.width},
                                   {"height", scenes[i].image.height},
                                   {"boxes", boxes}});
    }
    std::ofstream f(dir + "/index.json");
    if (!f) throw DataError("write_dataset: cannot open " + dir + "/index.json");
    f << index.dump(1) << "\n";
}

Dataset read_dataset(const std::string& dir) {
    std::ifstream f(dir + "/index.json");
    if (!f) throw DataError("read_dataset: cannot open " + dir + "/index.json");
    nlohmann::json index;
    try {
        f >> index;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("read_dataset: malformed JSON in " + dir + "/index.json: " + e.what());
    }
    Dataset ds;
    ds.root = dir;
    try {
        ds.class_names = index.at("classes").get<std::vector<std::string>>();
        for (const auto& j : index.at("images")) {
            DatasetItem item;
            item.id = j.at("id");
            item.file = j.at("file");
            item.width = j.at("width");
            item.height = j.at("height");
            for (const auto& bj : j.at("boxes")) {
                BBox b;
                b.class_id = bj.at("class");
                b.cx = bj.at("cx");
                b.cy = bj.at("cy");
                b.w = bj.at("w");
                b.h = bj.at("h");
                b.score = 1.0f;
                const float x0 = b.cx - b.w / 2, x1 = b.cx + b.w / 2;
                const float y0 = b.cy - b.h / 2, y1 = b.cy + b.h / 2;
                if (b.w <= 0 || b.h <= 0 || x0 < -1e-6f || y0 < -1e-6f || x1 > 1.0f + 1e-6f ||
                    y1 > 1.0f + 1e-6f)
                    throw DataError("read_dataset: box outside [0,1] in image id " +
                                    std::to_string(item.id));
                if (b.class_id < 0 || b.class_id >= int(ds.class_names.size()))
                    throw DataError("read_dataset: class out of range in image id " +
                                    std::to_string(item.id));
                item.boxes.push_back(b);
            }
            ds.items.push_back(std::move(item));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError("read_dataset: bad index entry: " + std::string(e.what()));
    }
    // validate files and dimensions up front
    for (const auto& item : ds.items) {
        const std::string path = dir + "/" + item.file;
        Image img;
        try {
            img = read_ppm(path);
        } catch (const DataError&) {
            throw DataError("read_dataset: image file missing or unreadable: " + path);
        }
        if (img.width != item.width || img.height != item.height)
            throw DataError("read_dataset: dimension mismatch for " + path + ": index says " +
                            std::to_string(item.width) + "x" + std::to_string(item.height) +
                            ", file is " + std::to_string(img.width) + "x" +
                            std::to_string(img.height));
    }
    return ds;
}

Image load_image(const Dataset& ds, const DatasetItem& item) {
    return read_ppm(ds.root + "/" + item.file);
}

Dataset generate_dataset(const SceneSpec& spec, int count, const std::string& dir) {
    spec.validate();
    if (count < 1) throw ConfigError("generate_dataset: count must be >= 1");
    std::vector<Scene> scenes(static_cast<size_t>(count));
    Rng base(spec.seed);
    std::exception_ptr first;
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < count; ++i) {
        try {
            Rng rng = base.fork(uint64_t(i));
            scenes[size_t(i)] = generate_scene(spec, rng);
        } catch (...) {
#pragma omp critical
            if (!first) first = std::current_exception();
        }
    }
    if (first) std::rethrow_exception(first);
    std::vector<std::string> names(kShapeNames, kShapeNames + spec.num_classes);
    write_dataset(dir, names, scenes);
    return read_dataset(dir);
}

}  // namespace paintdet
