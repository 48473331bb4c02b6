#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace paintdet {

using Rgb = std::array<uint8_t, 3>;

inline double rgb_distance(const Rgb& a, const Rgb& b) {
    const double dr = double(a[0]) - b[0];
    const double dg = double(a[1]) - b[1];
    const double db = double(a[2]) - b[2];
    return std::sqrt(dr * dr + dg * dg + db * db);
}

constexpr Rgb kRed{255, 0, 0};

// Class-labelled box in normalized [0,1] coordinates relative to the image.
struct BBox {
    int class_id = 0;
    float cx = 0, cy = 0, w = 0, h = 0;
    float score = 1.0f;  // 1.0 for ground truth
};

// K class colors with separation guarantees: pairwise RGB distance >= 60 and
// distance to pure red >= 100 (red is reserved for center dots).
struct Palette {
    std::vector<Rgb> colors;
    std::vector<std::string> class_names;

    int size() const { return int(colors.size()); }
};

// Colors are HSV hues evenly spaced on [30deg, 330deg), S = V = 1. The hue
// construction keeps the stated separation only up to kMaxPaletteClasses
// (checked exhaustively in tests; K = 15 already dips to 59.4); larger K is
// rejected because the color space cannot guarantee separation.
constexpr int kMaxPaletteClasses = 14;

Palette make_palette(int K);
std::string palette_json(const Palette& p);

struct AnnotationStyle {
    float shrink_ratio = 1.0f / 3.0f;
    int dot_radius_px = 2;
    Rgb dot_color = kRed;
};

// Fig-4-style target variants. ShrunkDots is the real codec; the others exist
// for the ablation harness.
enum class RenderVariant {
    WhiteFullBoxes,  // a: full-size boxes on a white background
    FullBoxes,       // b: full-size boxes over the input image
    Shrunk,          // c: shrunk boxes, no dots
    ShrunkDots,      // d: shrunk boxes + red center dots
};

// 8-bit RGB image, row-major, pixels.size() == 3*H*W.
struct Image {
    int width = 0, height = 0;
    std::vector<uint8_t> pixels;

    Image() = default;
    Image(int w, int h) : width(w), height(h), pixels(size_t(w) * h * 3, 0) {}

    uint8_t* px(int x, int y) { return pixels.data() + (size_t(y) * width + x) * 3; }
    const uint8_t* px(int x, int y) const {
        return pixels.data() + (size_t(y) * width + x) * 3;
    }
    Rgb rgb(int x, int y) const {
        const uint8_t* p = px(x, y);
        return {p[0], p[1], p[2]};
    }
    void set(int x, int y, const Rgb& c) {
        uint8_t* p = px(x, y);
        p[0] = c[0];
        p[1] = c[1];
        p[2] = c[2];
    }
};

BBox shrink_box(const BBox& b, float r);
// Inverse of shrink_box, clamped to the [0,1] extent (the center may shift
// when the grown box sticks out of the image).
BBox unshrink_box(const BBox& b, float r);

// Paints boxes largest-area-first as solid filled rectangles of the class
// color over the shrunk extent, then a red disc at each box center. A pixel
// column j is covered iff floor(x0*W) <= j < ceil(x1*W); degenerate extents
// snap to the single pixel containing the center.
Image render_annotation(const Image& image, const std::vector<BBox>& boxes,
                        const AnnotationStyle& style, const Palette& palette,
                        RenderVariant variant = RenderVariant::ShrunkDots);

// Binary PPM (P6, maxval 255).
void write_ppm(const Image& img, const std::string& path);
Image read_ppm(const std::string& path);

}  // namespace paintdet
