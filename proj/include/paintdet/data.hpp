#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "paintdet/codec.hpp"
#include "paintdet/rng.hpp"

namespace paintdet {

// Synthetic shapes scene: gray shapes on a smooth textured gradient. Object
// and background pixels stay near-gray, so no content pixel comes close to
// the saturated palette colors or to pure red.
struct SceneSpec {
    int image_size = 64;
    int num_classes = 5;  // shape kinds: circle, square, triangle, ellipse, cross
    int min_objects = 1;
    int max_objects = 6;
    float max_pairwise_iou = 0.3f;
    int min_size_px = 6;
    int max_size_px = 28;
    // Raster bounds are snapped to this multiple; 3 makes the paint/decode
    // round trip at shrink 1/3 pixel-exact.
    int size_multiple = 1;
    uint64_t seed = 0;

    void validate() const;
};

extern const char* const kShapeNames[5];

struct Scene {
    Image image;
    std::vector<BBox> boxes;
};

// Rejection-samples object placements until the pairwise IoU constraint
// holds (<= 100 attempts per object, else fewer objects). Boxes are the
// exact raster bounds of each drawn shape.
Scene generate_scene(const SceneSpec& spec, Rng& rng);

struct DatasetItem {
    int id = 0;
    std::string file;
    int width = 0, height = 0;
    std::vector<BBox> boxes;
};

struct Dataset {
    std::string root;
    std::vector<std::string> class_names;
    std::vector<DatasetItem> items;
};

// Writes images as PPM plus an index.json:
// {"classes":[names], "images":[{"id","file","width","height","boxes":[...]}]}
//
// Adapting an external detection dataset (COCO/CrowdHuman style) means
// producing the same index: one entry per image with `file` pointing at a
// PPM conversion, and each annotation's [x, y, w, h] pixel box mapped to
// normalized center form (cx = (x + w/2) / width, w' = w / width, category
// remapped to a contiguous [0, K) id). No such loader ships here; only this
// mapping is documented.
void write_dataset(const std::string& dir, const std::vector<std::string>& class_names,
                   const std::vector<Scene>& scenes);

// Loads and validates the index; every referenced file must exist with
// matching dimensions and every box must lie inside [0,1].
Dataset read_dataset(const std::string& dir);

Image load_image(const Dataset& ds, const DatasetItem& item);

// Generates `count` scenes (parallel, per-image derived seeds) and writes the
// dataset directory.
Dataset generate_dataset(const SceneSpec& spec, int count, const std::string& dir);

}  // namespace paintdet
