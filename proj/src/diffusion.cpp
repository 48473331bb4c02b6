#include "paintdet/diffusion.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "paintdet/errors.hpp"

namespace paintdet {

NoiseSchedule make_schedule(int T) {
    if (T < 2) throw ConfigError("make_schedule: T must be >= 2, got " + std::to_string(T));
    NoiseSchedule s;
    s.T = T;
    s.betas.resize(size_t(T));
    s.alpha_bars.resize(size_t(T) + 1);
    const double b0 = std::sqrt(0.00085);
    const double b1 = std::sqrt(0.012);
    double prod = 1.0;
    s.alpha_bars[0] = 1.0f;
    for (int t = 1; t <= T; ++t) {
        const double sb = b0 + (b1 - b0) * double(t - 1) / double(T - 1);
        const double beta = sb * sb;
        s.betas[size_t(t - 1)] = float(beta);
        prod *= 1.0 - beta;
        s.alpha_bars[size_t(t)] = float(prod);
    }
    return s;
}

DdimPlan make_ddim_plan(int T, int S, float eta) {
    if (S < 1) throw ConfigError("make_ddim_plan: S must be >= 1");
    if (eta < 0.0f) throw ConfigError("make_ddim_plan: eta must be >= 0");
    DdimPlan p;
    p.eta = eta;
    for (int i = 1; i <= S; ++i) {
        const int tau = int(std::lround(double(i) * T / double(S)));
        if (tau >= 1 && (p.taus.empty() || tau > p.taus.back())) p.taus.push_back(tau);
    }
    if (p.taus.empty() || p.taus.back() != T) p.taus.push_back(T);
    return p;
}

std::string schedule_json(const NoiseSchedule& sched, const DdimPlan& plan) {
    nlohmann::json j;
    j["T"] = sched.T;
    j["beta_start"] = sched.betas.front();
    j["beta_end"] = sched.betas.back();
    j["S"] = plan.taus.size();
    j["eta"] = plan.eta;
    return j.dump();
}

Tensor PixelLatentCodec::encode(const Image& img) const {
    Tensor z({1, 3, img.height, img.width});
    const size_t plane = size_t(img.height) * img.width;
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const uint8_t* p = img.px(x, y);
            const size_t idx = size_t(y) * img.width + x;
            for (int c = 0; c < 3; ++c)
                z[size_t(c) * plane + idx] = float(p[c]) / 127.5f - 1.0f;
        }
    }
    return z;
}

Image PixelLatentCodec::decode(const Tensor& z) const {
    if (z.shape.size() != 4 || z.shape[0] != 1 || z.shape[1] != 3)
        throw ConfigError("PixelLatentCodec::decode: expected [1,3,H,W], got " + z.shape_str());
    const int H = z.shape[2], W = z.shape[3];
    const size_t plane = size_t(H) * W;
    Image img(W, H);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            uint8_t* p = img.px(x, y);
            const size_t idx = size_t(y) * W + x;
            for (int c = 0; c < 3; ++c) {
                const float v = std::clamp(z[size_t(c) * plane + idx], -1.0f, 1.0f);
                p[c] = uint8_t(std::clamp(int(std::lround((v + 1.0f) * 127.5f)), 0, 255));
            }
        }
    }
    return img;
}

static void check_t(int t, const NoiseSchedule& sched, const char* what) {
    if (t < 0 || t > sched.T)
        throw ConfigError(std::string(what) + ": t = " + std::to_string(t) +
                          " outside [0, " + std::to_string(sched.T) + "]");
}

Tensor forward_diffuse(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& sched) {
    check_t(t, sched, "forward_diffuse");
    require_same_shape(z0, eps, "forward_diffuse");
    const float ab = sched.alpha_bar(t);
    const float a = std::sqrt(ab), b = std::sqrt(1.0f - ab);
    Tensor out(z0.shape);
    const size_t n = z0.numel();
#pragma omp simd
    for (size_t i = 0; i < n; ++i) out[i] = a * z0[i] + b * eps[i];
    return out;
}

Tensor v_target(const Tensor& z0, const Tensor& eps, int t, const NoiseSchedule& sched) {
    check_t(t, sched, "v_target");
    require_same_shape(z0, eps, "v_target");
    const float ab = sched.alpha_bar(t);
    const float a = std::sqrt(ab), b = std::sqrt(1.0f - ab);
    Tensor out(z0.shape);
    const size_t n = z0.numel();
#pragma omp simd
    for (size_t i = 0; i < n; ++i) out[i] = a * eps[i] - b * z0[i];
    return out;
}

Tensor predict_z0_from_v(const Tensor& zt, const Tensor& v, int t, const NoiseSchedule& sched) {
    check_t(t, sched, "predict_z0_from_v");
    require_same_shape(zt, v, "predict_z0_from_v");
    const float ab = sched.alpha_bar(t);
    const float a = std::sqrt(ab), b = std::sqrt(1.0f - ab);
    Tensor out(zt.shape);
    const size_t n = zt.numel();
#pragma omp simd
    for (size_t i = 0; i < n; ++i) out[i] = a * zt[i] - b * v[i];
    return out;
}

Tensor predict_eps_from_v(const Tensor& zt, const Tensor& v, int t, const NoiseSchedule& sched) {
    check_t(t, sched, "predict_eps_from_v");
    require_same_shape(zt, v, "predict_eps_from_v");
    const float ab = sched.alpha_bar(t);
    const float a = std::sqrt(ab), b = std::sqrt(1.0f - ab);
    Tensor out(zt.shape);
    const size_t n = zt.numel();
#pragma omp simd
    for (size_t i = 0; i < n; ++i) out[i] = b * zt[i] + a * v[i];
    return out;
}

Tensor ddim_step(const Tensor& z_tau, const Tensor& v_pred, int tau, int tau_prev,
                 const DdimPlan& plan, const NoiseSchedule& sched, Rng& rng) {
    if (!(tau > tau_prev && tau_prev >= 0))
        throw ConfigError("ddim_step: need tau > tau_prev >= 0, got tau=" +
                          std::to_string(tau) + " tau_prev=" + std::to_string(tau_prev));
    require_same_shape(z_tau, v_pred, "ddim_step");

    const Tensor z0_hat = predict_z0_from_v(z_tau, v_pred, tau, sched);
    const Tensor eps_hat = predict_eps_from_v(z_tau, v_pred, tau, sched);

    const float ab_tau = sched.alpha_bar(tau);
    const float ab_prev = sched.alpha_bar(tau_prev);
    const float sigma = plan.eta * std::sqrt((1.0f - ab_prev) / (1.0f - ab_tau)) *
                        std::sqrt(1.0f - ab_tau / ab_prev);
    const float dir_sq = 1.0f - ab_prev - sigma * sigma;
    if (dir_sq < -1e-6f)
        throw NumericError("ddim_step: sigma^2 exceeds 1 - alpha_bar_prev (eta = " +
                           std::to_string(plan.eta) + " too large at tau " +
                           std::to_string(tau) + ")");
    const float a = std::sqrt(ab_prev);
    const float d = std::sqrt(std::max(0.0f, dir_sq));

    Tensor out(z_tau.shape);
    const size_t n = out.numel();
#pragma omp simd
    for (size_t i = 0; i < n; ++i) out[i] = a * z0_hat[i] + d * eps_hat[i];
    if (sigma > 0.0f)
        for (size_t i = 0; i < n; ++i) out[i] += sigma * rng.gaussian();
    return out;
}

Tensor multires_noise(const std::vector<int>& shape, float strength, Rng& rng) {
    if (!(strength >= 0.0f && strength < 1.0f))
        throw ConfigError("multires_noise: strength must be in [0,1), got " +
                          std::to_string(strength));
    if (shape.size() < 2) throw ConfigError("multires_noise: need at least 2 dims");
    const int H = shape[shape.size() - 2];
    const int W = shape[shape.size() - 1];
    size_t channels = 1;
    for (size_t i = 0; i + 2 < shape.size(); ++i) channels *= size_t(shape[i]);

    Tensor out(shape);
    double weight_sq = 0.0;
    float scale = 1.0f;
    int h = H, w = W;
    while (true) {
        weight_sq += double(scale) * scale;
        for (size_t c = 0; c < channels; ++c) {
            float* plane = out.data.data() + c * size_t(H) * W;
            if (h == H && w == W) {
                for (int i = 0; i < H * W; ++i) plane[i] += scale * rng.gaussian();
            } else {
                Tensor coarse({h, w});
                coarse.fill_gaussian(rng);
                for (int y = 0; y < H; ++y) {
                    const int cy = y * h / H;
                    for (int x = 0; x < W; ++x)
                        plane[y * W + x] += scale * coarse[size_t(cy) * w + size_t(x * w / W)];
                }
            }
        }
        if (h == 1 && w == 1) break;
        if (strength == 0.0f) break;  // remaining terms have zero weight
        h = (h + 1) / 2;
        w = (w + 1) / 2;
        scale *= strength;
    }
    const float norm = float(1.0 / std::sqrt(weight_sq));
    for (auto& v : out.data) v *= norm;
    return out;
}

// central/one-sided differences for one channel row or column pair
static inline float diff_at(const float* z, int i, int n, int stride) {
    if (i == 0) return 2.0f * (z[stride] - z[0]);
    if (i == n - 1) return 2.0f * (z[size_t(i) * stride] - z[size_t(i - 1) * stride]);
    return z[size_t(i + 1) * stride] - z[size_t(i - 1) * stride];
}

Tensor grad_map(const Tensor& z) {
    std::vector<int> s = z.shape;
    if (s.size() == 4) {
        if (s[0] != 1) throw ConfigError("grad_map: batch must be 1, got " + z.shape_str());
        s.erase(s.begin());
    }
    if (s.size() != 3) throw ConfigError("grad_map: expected [C,H,W], got " + z.shape_str());
    const int C = s[0], H = s[1], W = s[2];
    if (H < 3 || W < 3)
        throw ConfigError("grad_map: image must be at least 3x3, got " + z.shape_str());

    Tensor g({H, W});
    for (int c = 0; c < C; ++c) {
        const float* plane = z.data.data() + size_t(c) * H * W;
        for (int u = 0; u < H; ++u) {
            for (int v = 0; v < W; ++v) {
                const float zu = diff_at(plane + v, u, H, W);
                const float zv = diff_at(plane + size_t(u) * W, v, W, 1);
                g[size_t(u) * W + v] += zu * zu + zv * zv;
            }
        }
    }
    return g;
}

double gradient_loss(const Tensor& z0_pred, const Tensor& z0_true, int t) {
    require_same_shape(z0_pred, z0_true, "gradient_loss");
    if (t < 1) throw ConfigError("gradient_loss: t must be >= 1");
    const Tensor gp = grad_map(z0_pred);
    const Tensor gt = grad_map(z0_true);
    double sum = 0.0;
    for (size_t i = 0; i < gp.numel(); ++i) sum += std::fabs(double(gp[i]) - double(gt[i]));
    return sum / double(gp.numel()) / double(t);
}

double total_loss(const Tensor& v_pred, const Tensor& v_true, const Tensor& z0_pred,
                  const Tensor& z0_true, int t, float lambda1, float lambda2) {
    require_same_shape(v_pred, v_true, "total_loss");
    if (lambda1 < 0.0f || lambda2 < 0.0f)
        throw ConfigError("total_loss: lambdas must be >= 0");
    double mse = 0.0;
    for (size_t i = 0; i < v_pred.numel(); ++i) {
        const double d = double(v_pred[i]) - double(v_true[i]);
        mse += d * d;
    }
    mse /= double(v_pred.numel());
    double loss = double(lambda1) * mse;
    if (lambda2 > 0.0f) loss += double(lambda2) * gradient_loss(z0_pred, z0_true, t);
    return loss;
}

// scatter dL/dG back through the difference stencil for one channel
static void grad_map_backward_channel(const float* plane, const float* gmap_d, int H, int W,
                                      float* dz) {
    for (int u = 0; u < H; ++u) {
        for (int v = 0; v < W; ++v) {
            const float dg = gmap_d[size_t(u) * W + v];
            if (dg == 0.0f) continue;
            const float zu = diff_at(plane + v, u, H, W);
            const float zv = diff_at(plane + size_t(u) * W, v, W, 1);
            // vertical stencil
            if (u == 0) {
                dz[size_t(1) * W + v] += dg * 2.0f * zu * 2.0f;
                dz[size_t(0) * W + v] -= dg * 2.0f * zu * 2.0f;
            } else if (u == H - 1) {
                dz[size_t(u) * W + v] += dg * 2.0f * zu * 2.0f;
                dz[size_t(u - 1) * W + v] -= dg * 2.0f * zu * 2.0f;
            } else {
                dz[size_t(u + 1) * W + v] += dg * 2.0f * zu;
                dz[size_t(u - 1) * W + v] -= dg * 2.0f * zu;
            }
            // horizontal stencil
            if (v == 0) {
                dz[size_t(u) * W + 1] += dg * 2.0f * zv * 2.0f;
                dz[size_t(u) * W + 0] -= dg * 2.0f * zv * 2.0f;
            } else if (v == W - 1) {
                dz[size_t(u) * W + v] += dg * 2.0f * zv * 2.0f;
                dz[size_t(u) * W + v - 1] -= dg * 2.0f * zv * 2.0f;
            } else {
                dz[size_t(u) * W + v + 1] += dg * 2.0f * zv;
                dz[size_t(u) * W + v - 1] -= dg * 2.0f * zv;
            }
        }
    }
}

TotalLossGrads total_loss_grads(const Tensor& v_pred, const Tensor& v_true,
                                const Tensor& z0_pred, const Tensor& z0_true, int t,
                                float lambda1, float lambda2) {
    require_same_shape(v_pred, v_true, "total_loss_grads");
    TotalLossGrads out;
    out.d_v_pred = Tensor(v_pred.shape);
    out.d_z0_pred = Tensor(z0_pred.shape);

    const size_t n = v_pred.numel();
    double mse = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double d = double(v_pred[i]) - double(v_true[i]);
        mse += d * d;
        out.d_v_pred[i] = float(double(lambda1) * 2.0 * d / double(n));
    }
    out.loss = double(lambda1) * mse / double(n);

    if (lambda2 > 0.0f) {
        const Tensor gp = grad_map(z0_pred);
        const Tensor gt = grad_map(z0_true);
        const int H = gp.shape[0], W = gp.shape[1];
        const float alpha_t = 1.0f / float(t);
        const float scale = lambda2 * alpha_t / float(gp.numel());

        Tensor dG(gp.shape);
        double l1 = 0.0;
        for (size_t i = 0; i < gp.numel(); ++i) {
            const double d = double(gp[i]) - double(gt[i]);
            l1 += std::fabs(d);
            dG[i] = d > 0.0 ? scale : (d < 0.0 ? -scale : 0.0f);
        }
        out.loss += double(lambda2) * (l1 / double(gp.numel())) / double(t);

        std::vector<int> s = z0_pred.shape;
        if (s.size() == 4) s.erase(s.begin());
        const int C = s[0];
        for (int c = 0; c < C; ++c) {
            grad_map_backward_channel(z0_pred.data.data() + size_t(c) * H * W, dG.data.data(),
                                      H, W, out.d_z0_pred.data.data() + size_t(c) * H * W);
        }
    }
    return out;
}

}  // namespace paintdet
