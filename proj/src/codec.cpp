#include "paintdet/codec.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "json.hpp"
#include "paintdet/errors.hpp"

namespace paintdet {

static Rgb hsv_to_rgb8(double hue_deg, double s, double v) {
    const double c = v * s;
    const double hp = hue_deg / 60.0;
    const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    if (hp < 1) {
        r = c, g = x;
    } else if (hp < 2) {
        r = x, g = c;
    } else if (hp < 3) {
        g = c, b = x;
    } else if (hp < 4) {
        g = x, b = c;
    } else if (hp < 5) {
        r = x, b = c;
    } else {
        r = c, b = x;
    }
    const double m = v - c;
    auto to8 = [](double f) { return uint8_t(std::lround(f * 255.0)); };
    return {to8(r + m), to8(g + m), to8(b + m)};
}

Palette make_palette(int K) {
    if (K < 1 || K > kMaxPaletteClasses)
        throw ConfigError("make_palette: K must be in [1, " +
                          std::to_string(kMaxPaletteClasses) + "], got " + std::to_string(K) +
                          " (hue spacing cannot guarantee color separation)");
    Palette p;
    for (int i = 0; i < K; ++i) {
        const double hue = 30.0 + double(i) * 300.0 / double(K);
        p.colors.push_back(hsv_to_rgb8(hue, 1.0, 1.0));
        p.class_names.push_back("class" + std::to_string(i));
    }
    return p;
}

std::string palette_json(const Palette& p) {
    nlohmann::json j;
    j["classes"] = nlohmann::json::array();
    for (int i = 0; i < p.size(); ++i) {
        j["classes"].push_back({{"id", i},
                                {"name", p.class_names[size_t(i)]},
                                {"rgb", {p.colors[size_t(i)][0], p.colors[size_t(i)][1],
                                         p.colors[size_t(i)][2]}}});
    }
    return j.dump(2);
}

BBox shrink_box(const BBox& b, float r) {
    if (!(r > 0.0f && r <= 1.0f))
        throw ConfigError("shrink_box: ratio must be in (0,1], got " + std::to_string(r));
    BBox out = b;
    out.w = b.w * r;
    out.h = b.h * r;
    return out;
}

BBox unshrink_box(const BBox& b, float r) {
    if (!(r > 0.0f && r <= 1.0f))
        throw ConfigError("unshrink_box: ratio must be in (0,1], got " + std::to_string(r));
    BBox out = b;
    float x0 = b.cx - 0.5f * b.w / r;
    float x1 = b.cx + 0.5f * b.w / r;
    float y0 = b.cy - 0.5f * b.h / r;
    float y1 = b.cy + 0.5f * b.h / r;
    x0 = std::max(0.0f, x0);
    y0 = std::max(0.0f, y0);
    x1 = std::min(1.0f, x1);
    y1 = std::min(1.0f, y1);
    out.cx = 0.5f * (x0 + x1);
    out.cy = 0.5f * (y0 + y1);
    out.w = x1 - x0;
    out.h = y1 - y0;
    return out;
}

// Pixel span of a normalized extent [a0, a1] over n pixels: floor(a0*n) to
// ceil(a1*n). Coordinates within 1e-4 px of a pixel boundary snap to it,
// absorbing float32 representation noise in box fields. Degenerate spans
// collapse to the single pixel containing the center.
static void pixel_span(double a0, double a1, double center, int n, int& lo, int& hi) {
    constexpr double kSnap = 1e-4;
    lo = int(std::floor(a0 * n + kSnap));
    hi = int(std::ceil(a1 * n - kSnap));
    lo = std::max(lo, 0);
    hi = std::min(hi, n);
    if (lo >= hi) {
        lo = std::clamp(int(std::floor(center * n)), 0, n - 1);
        hi = lo + 1;
    }
}

Image render_annotation(const Image& image, const std::vector<BBox>& boxes,
                        const AnnotationStyle& style, const Palette& palette,
                        RenderVariant variant) {
    for (const BBox& b : boxes)
        if (b.class_id < 0 || b.class_id >= palette.size())
            throw ConfigError("render_annotation: class_id " + std::to_string(b.class_id) +
                              " outside palette of size " + std::to_string(palette.size()));

    Image out = image;
    if (variant == RenderVariant::WhiteFullBoxes)
        std::fill(out.pixels.begin(), out.pixels.end(), uint8_t(255));

    const bool shrink = variant == RenderVariant::Shrunk || variant == RenderVariant::ShrunkDots;
    const bool dots = variant == RenderVariant::ShrunkDots;
    const float r = shrink ? style.shrink_ratio : 1.0f;

    // z-order: largest first so small objects stay visible on top
    std::vector<BBox> order = boxes;
    std::stable_sort(order.begin(), order.end(), [](const BBox& a, const BBox& b) {
        const float aa = a.w * a.h, ab = b.w * b.h;
        if (aa != ab) return aa > ab;
        if (a.class_id != b.class_id) return a.class_id < b.class_id;
        if (a.cx != b.cx) return a.cx < b.cx;
        return a.cy < b.cy;
    });

    const int W = out.width, H = out.height;
    for (const BBox& b : order) {
        // shrunk extent in double so painted spans do not wobble on float32
        // representation noise
        const double hw = 0.5 * double(b.w) * r, hh = 0.5 * double(b.h) * r;
        int x0, x1, y0, y1;
        pixel_span(double(b.cx) - hw, double(b.cx) + hw, b.cx, W, x0, x1);
        pixel_span(double(b.cy) - hh, double(b.cy) + hh, b.cy, H, y0, y1);
        const Rgb c = palette.colors[size_t(b.class_id)];
        for (int y = y0; y < y1; ++y)
            for (int x = x0; x < x1; ++x) out.set(x, y, c);
    }

    if (dots) {
        const int rad = style.dot_radius_px;
        for (const BBox& b : order) {
            const int cx = std::clamp(int(std::floor(double(b.cx) * W)), 0, W - 1);
            const int cy = std::clamp(int(std::floor(double(b.cy) * H)), 0, H - 1);
            for (int dy = -rad; dy <= rad; ++dy) {
                for (int dx = -rad; dx <= rad; ++dx) {
                    if (dx * dx + dy * dy > rad * rad) continue;
                    const int x = cx + dx, y = cy + dy;
                    if (x < 0 || x >= W || y < 0 || y >= H) continue;
                    out.set(x, y, style.dot_color);
                }
            }
        }
    }
    return out;
}

void write_ppm(const Image& img, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("write_ppm: cannot open " + path);
    f << "P6\n" << img.width << " " << img.height << "\n255\n";
    f.write(reinterpret_cast<const char*>(img.pixels.data()),
            std::streamsize(img.pixels.size()));
    if (!f) throw DataError("write_ppm: write failed for " + path);
}

Image read_ppm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("read_ppm: cannot open " + path);
    std::string magic;
    f >> magic;
    if (magic != "P6") throw DataError("read_ppm: " + path + " is not a P6 PPM");
    auto next_int = [&]() {
        int v;
        // skip whitespace and '#' comments
        while (true) {
            const int c = f.peek();
            if (c == '#') {
                std::string line;
                std::getline(f, line);
            } else if (std::isspace(c)) {
                f.get();
            } else {
                break;
            }
        }
        if (!(f >> v)) throw DataError("read_ppm: malformed header in " + path);
        return v;
    };
    const int w = next_int();
    const int h = next_int();
    const int maxval = next_int();
    if (maxval != 255) throw DataError("read_ppm: " + path + " maxval must be 255");
    f.get();  // single whitespace after header
    Image img(w, h);
    f.read(reinterpret_cast<char*>(img.pixels.data()), std::streamsize(img.pixels.size()));
    if (f.gcount() != std::streamsize(img.pixels.size()))
        throw DataError("read_ppm: truncated pixel data in " + path);
    return img;
}

}  // namespace paintdet
