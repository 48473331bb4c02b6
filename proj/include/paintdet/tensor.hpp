#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "paintdet/errors.hpp"
#include "paintdet/rng.hpp"

namespace paintdet {

// Dense row-major float32 array. Value type: copies copy the data.
struct Tensor {
    std::vector<int> shape;
    std::vector<float> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s, float fill = 0.0f) : shape(std::move(s)) {
        data.assign(numel_of(shape), fill);
    }

    static size_t numel_of(const std::vector<int>& s) {
        size_t n = 1;
        for (int d : s) n *= size_t(d);
        return n;
    }

    size_t numel() const { return data.size(); }
    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    float& operator[](size_t i) { return data[i]; }
    float operator[](size_t i) const { return data[i]; }

    // NCHW accessors for the 4-d case.
    int dim(int i) const { return shape[size_t(i)]; }
    float& at4(int n, int c, int h, int w) {
        return data[((size_t(n) * shape[1] + c) * shape[2] + h) * shape[3] + w];
    }
    float at4(int n, int c, int h, int w) const {
        return data[((size_t(n) * shape[1] + c) * shape[2] + h) * shape[3] + w];
    }

    void fill(float v) { std::fill(data.begin(), data.end(), v); }

    void fill_gaussian(Rng& rng, float stddev = 1.0f) {
        for (auto& v : data) v = rng.gaussian() * stddev;
    }

    bool all_finite() const {
        for (float v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    static std::string shape_str(const std::vector<int>& s) {
        std::string out = "[";
        for (size_t i = 0; i < s.size(); ++i) {
            if (i) out += ",";
            out += std::to_string(s[i]);
        }
        return out + "]";
    }
    std::string shape_str() const { return shape_str(shape); }
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b))
        throw ConfigError(std::string(what) + ": shape mismatch " + a.shape_str() +
                          " vs " + b.shape_str());
}

}  // namespace paintdet
