#pragma once

#include <string>
#include <vector>

#include "paintdet/codec.hpp"
#include "paintdet/rng.hpp"
#include "paintdet/tensor.hpp"

namespace paintdet {

// beta_1..beta_T plus the cumulative products abar_0..abar_T (abar_0 = 1).
struct NoiseSchedule {
    int T = 0;
    std::vector<float> betas;       // betas[t-1] = beta_t
    std::vector<float> alpha_bars;  // alpha_bars[t] = prod_{s<=t} (1 - beta_s)

    float alpha_bar(int t) const { return alpha_bars[size_t(t)]; }
};

// Scaled-linear schedule: sqrt(beta_t) linear from sqrt(0.00085) to
// sqrt(0.012), the Stable Diffusion v2 pretraining configuration.
NoiseSchedule make_schedule(int T = 1000);

// Re-spaced DDIM timestep subset: tau_i = round(i*T/S), deduplicated,
// strictly increasing, always ending at T.
struct DdimPlan {
    std::vector<int> taus;
    float eta = 0.0f;
};

DdimPlan make_ddim_plan(int T, int S = 50, float eta = 0.0f);

std::string schedule_json(const NoiseSchedule& sched, const DdimPlan& plan);

// Image <-> latent mapping. The default is pixel space with range mapping
// [0,255] <-> [-1,1]; a VAE could be plugged in behind the same interface.
class LatentCodec {
public:
    virtual ~LatentCodec() = default;
    virtual Tensor encode(const Image& img) const = 0;  // -> [1,3,H,W]
    virtual Image decode(const Tensor& z) const = 0;    // clamps to pixel range
};

class PixelLatentCodec final : public LatentCodec {
public:
    Tensor encode(const Image& img) const override;
    Image decode(const Tensor& z) const override;
};

// z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps
Tensor forward_diffuse(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& sched);

// v = sqrt(abar_t) eps - sqrt(1 - abar_t) z0
Tensor v_target(const Tensor& z0, const Tensor& eps, int t, const NoiseSchedule& sched);

// z0_hat = sqrt(abar_t) z_t - sqrt(1 - abar_t) v
Tensor predict_z0_from_v(const Tensor& zt, const Tensor& v, int t, const NoiseSchedule& sched);

// eps_hat = sqrt(1 - abar_t) z_t + sqrt(abar_t) v
Tensor predict_eps_from_v(const Tensor& zt, const Tensor& v, int t, const NoiseSchedule& sched);

// One re-spaced denoising step tau -> tau_prev (tau_prev may be 0, where
// abar_0 = 1 collapses the step onto z0_hat). rng is only consulted when
// eta > 0 makes the step stochastic.
Tensor ddim_step(const Tensor& z_tau, const Tensor& v_pred, int tau, int tau_prev,
                 const DdimPlan& plan, const NoiseSchedule& sched, Rng& rng);

// Gaussian noise summed over dyadic scales with geometric decay `strength`,
// renormalized to unit per-pixel variance. The last two dims are spatial.
Tensor multires_noise(const std::vector<int>& shape, float strength, Rng& rng);

// Squared gradient magnitude via central differences, summed over channels;
// border pixels use one-sided differences scaled x2. Input [C,H,W] or
// [1,C,H,W]; output [H,W]. Requires H, W >= 3.
Tensor grad_map(const Tensor& z);

// alpha_t * mean |G(pred) - G(true)|_1 with alpha_t = 1/t.
double gradient_loss(const Tensor& z0_pred, const Tensor& z0_true, int t);

// lambda1 * mean((v_pred - v_true)^2) + lambda2 * gradient_loss(z0_pred, z0_true, t)
double total_loss(const Tensor& v_pred, const Tensor& v_true, const Tensor& z0_pred,
                  const Tensor& z0_true, int t, float lambda1 = 1.0f, float lambda2 = 0.1f);

// Loss value plus dL/dv_pred (direct term) and dL/dz0_pred; the caller chains
// dz0/dv = -sqrt(1 - abar_t) when z0_pred was derived from v_pred.
struct TotalLossGrads {
    double loss = 0.0;
    Tensor d_v_pred;
    Tensor d_z0_pred;
};
TotalLossGrads total_loss_grads(const Tensor& v_pred, const Tensor& v_true,
                                const Tensor& z0_pred, const Tensor& z0_true, int t,
                                float lambda1, float lambda2);

}  // namespace paintdet
