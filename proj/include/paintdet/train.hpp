#pragma once

#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "paintdet/codec.hpp"
#include "paintdet/data.hpp"
#include "paintdet/diffusion.hpp"
#include "paintdet/unet.hpp"

namespace paintdet {

struct TrainConfig {
    float lr = 3e-5f;
    int batch_size = 1;
    int steps = 1000;
    float flip_prob = 0.5f;
    float prompt_y_prob = 0.5f;
    float multires_strength = 0.5f;
    float lambda1 = 1.0f;
    float lambda2 = 0.1f;
    uint64_t seed = 0;

    void validate() const;
};

struct TrainSample {
    Image x;  // input image
    Image y;  // rendered annotation image
};

// Single-writer training loop state. Each step: joint horizontal flip with
// prob flip_prob, encode, draw the task prompt and a uniform t in [1,T],
// draw multi-resolution noise, diffuse, forward, total loss, backward, Adam.
class Trainer {
public:
    Trainer(UNet& model, const NoiseSchedule& sched, const TrainConfig& cfg,
            const LatentCodec& codec);

    // Returns the loss; throws NumericError (with step and t) when the loss
    // goes non-finite.
    double train_step(const TrainSample& sample);

    int64_t steps_done() const { return step_; }
    int last_t() const { return last_t_; }
    TaskPrompt last_prompt() const { return last_prompt_; }
    Rng& rng() { return rng_; }

private:
    UNet& model_;
    const NoiseSchedule& sched_;
    TrainConfig cfg_;
    const LatentCodec& codec_;
    AdamConfig adam_;
    Rng rng_;
    int64_t step_ = 0;
    int last_t_ = 0;
    TaskPrompt last_prompt_ = TaskPrompt::GenerateY;
};

// Denoiser interface for the sampler: (z_noisy, z_cond, t, prompt) -> v.
using DenoiseFn = std::function<Tensor(const Tensor&, const Tensor&, int, TaskPrompt)>;

// DDIM generation: encode the condition image, start from Gaussian noise and
// walk the re-spaced steps down to 0, then decode with pixel clamping.
Image generate_annotation(const Image& x, const DenoiseFn& model, int latent_channels,
                          const DdimPlan& plan, const NoiseSchedule& sched,
                          const LatentCodec& codec, Rng& rng,
                          TaskPrompt p = TaskPrompt::GenerateY);

Image generate_annotation(const Image& x, UNet& model, const DdimPlan& plan,
                          const NoiseSchedule& sched, const LatentCodec& codec, Rng& rng,
                          TaskPrompt p = TaskPrompt::GenerateY);

Image hflip(const Image& img);

double psnr(const Image& a, const Image& b);

// Renders the annotation images for a dataset and runs the training loop,
// sampling items uniformly. Writes one JSON line per step to `log` when
// given: {"step","t","prompt","loss","wall_ms"}.
std::vector<double> run_training(UNet& model, const Dataset& ds, const Palette& palette,
                                 const AnnotationStyle& style, const NoiseSchedule& sched,
                                 const TrainConfig& cfg, const LatentCodec& codec,
                                 std::ostream* log = nullptr,
                                 const std::function<void(int64_t, double)>& progress = {});

}  // namespace paintdet
