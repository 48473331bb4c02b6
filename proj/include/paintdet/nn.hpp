#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "paintdet/rng.hpp"
#include "paintdet/tensor.hpp"

namespace paintdet {

struct AdamConfig {
    float lr = 3e-5f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;

    void validate() const;
};

// Trainable tensor with its gradient and Adam moments. Moments start at zero.
struct Param {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor adam_m;
    Tensor adam_v;
    int64_t step_count = 0;

    Param() = default;
    Param(std::string n, std::vector<int> shape)
        : name(std::move(n)), value(shape), grad(shape), adam_m(shape), adam_v(shape) {}

    void zero_grad() { grad.fill(0.0f); }
};

// Standard Adam with bias correction. Leaves grad untouched; the caller
// zeroes it. Rejects non-finite gradients.
void adam_step(Param& p, const AdamConfig& cfg);

// Positional encoding: [sin(v*w_0..w_{d/2-1}), cos(v*w_0..w_{d/2-1})] with
// w_i = exp(-ln(10000) * i / (d/2)). dim must be even and >= 2.
Tensor sinusoidal_embedding(float value, int dim);

// Cross-correlation on NCHW input with OIKK weights. Output spatial size is
// floor((H + 2*pad - K) / stride) + 1. Parallel over output planes; each
// output element is accumulated by exactly one thread, so results do not
// depend on the thread count.
Tensor conv2d(const Tensor& in, const Tensor& w, const Tensor& b, int stride, int pad);

// Backward pass for conv2d. din is overwritten; dw and db are accumulated.
void conv2d_backward(const Tensor& in, const Tensor& w, int stride, int pad,
                     const Tensor& dout, Tensor& din, Tensor& dw, Tensor& db);

// --- layers with cached activations and hand-derived backward rules ---

class Conv2d {
public:
    Conv2d() = default;
    Conv2d(const std::string& name, int in_ch, int out_ch, int k, int stride, int pad);

    void init_gaussian(Rng& rng, float stddev);
    Tensor forward(const Tensor& x);
    // Returns dL/dx and accumulates dL/dw, dL/db into the Param grads.
    Tensor backward(const Tensor& dy);

    Param w, b;
    int stride = 1, pad = 0;

private:
    Tensor cached_x_;
};

class Linear {
public:
    Linear() = default;
    Linear(const std::string& name, int in_dim, int out_dim);

    void init_gaussian(Rng& rng, float stddev);
    Tensor forward(const Tensor& x);  // x: [in] -> [out]
    Tensor backward(const Tensor& dy);

    Param w, b;  // w: [out, in]

private:
    Tensor cached_x_;
};

class GroupNorm {
public:
    GroupNorm() = default;
    GroupNorm(const std::string& name, int channels, int groups);

    Tensor forward(const Tensor& x);  // NCHW
    Tensor backward(const Tensor& dy);

    Param gamma, beta;
    int groups = 1;

private:
    Tensor cached_x_;
    std::vector<float> mean_, inv_std_;
};

class SiLU {
public:
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy);

private:
    Tensor cached_x_;
};

// Nearest-neighbour 2x upsample of NCHW.
Tensor upsample2x(const Tensor& x);
Tensor upsample2x_backward(const Tensor& dy);

float silu_scalar(float x);

}  // namespace paintdet
